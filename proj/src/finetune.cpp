#include "modechoice/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>

#include "modechoice/errors.hpp"

namespace modechoice {

std::size_t FinetuneCorpus::count(std::string_view split) const
{
    return static_cast<std::size_t>(
        std::count_if(examples.begin(), examples.end(), [&](const TrainingExample& e) { return e.split == split; }));
}

bool leaks_answer(const TrainingExample& example)
{
    return example.instruction.find(kChoiceMarker) != std::string::npos;
}

FinetuneCorpus build_training_corpus(std::span<const ChoiceInstance> train, const AttributeSchema& schema,
                                     const PromptTemplate& tmpl, std::span<const std::string> test_ids,
                                     std::uint64_t seed, double validation_fraction)
{
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ContractError("validation fraction must lie in [0, 1)");
    }
    if (tmpl.system.empty()) {
        throw ConfigError("fine-tuning template has no system text");
    }
    const std::set<std::string> test(test_ids.begin(), test_ids.end());
    FinetuneCorpus corpus;
    corpus.seed = seed;
    corpus.validation_fraction = validation_fraction;
    corpus.examples.reserve(train.size());
    for (const auto& inst : train) {
        if (test.contains(inst.id)) {
            throw LeakageError(fmt::format("instance '{}' is in both the training corpus and the test split", inst.id));
        }
        if (!inst.is_available(inst.chosen_mode)) {
            throw ContractError(fmt::format("instance '{}': label outside its availability set", inst.id));
        }
        auto bundle = assemble_prompt(inst, {}, PromptStyle::direct, schema, tmpl, 0);
        TrainingExample ex{inst.id, bundle.system + "\n\n" + bundle.user, inst.chosen_mode, "train"};
        if (leaks_answer(ex)) {
            throw LeakageError(fmt::format("instruction for '{}' contains its answer", inst.id));
        }
        corpus.examples.push_back(std::move(ex));
    }

    const auto n = corpus.examples.size();
    const auto n_validation = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_validation; ++i) {
        corpus.examples[order[i]].split = "validation";
    }
    return corpus;
}

MaskedSequence mask_labels(std::vector<std::int32_t> tokens, std::size_t prompt_len)
{
    if (prompt_len == 0) {
        throw ContractError("prompt length must be positive");
    }
    if (prompt_len >= tokens.size()) {
        throw ContractError(
            fmt::format("prompt covers all {} tokens; no answer tokens left to train on", tokens.size()));
    }
    MaskedSequence seq;
    seq.prompt_len = prompt_len;
    seq.labels.assign(tokens.begin(), tokens.end());
    std::fill_n(seq.labels.begin(), prompt_len, kIgnoreIndex);
    seq.tokens = std::move(tokens);
    return seq;
}

nlohmann::json FinetuneConfig::to_json() const
{
    return {
        {"method", "qlora"},
        {"lora",
         {{"rank", lora_rank},
          {"alpha", lora_alpha},
          {"scaling", static_cast<double>(lora_alpha) / static_cast<double>(lora_rank)},
          {"target_modules", {"q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"}},
          {"update", "delta_W = V U with V in R^{m x r}, U in R^{r x n}; h = W0 z + (alpha / r) V U z"}}},
        {"quantization", {{"bits", 4}, {"type", "nf4"}, {"compute_dtype", "float16"}}},
        {"optimizer", {{"name", "paged_adamw"}, {"learning_rate", learning_rate}, {"schedule", "constant"}}},
        {"training",
         {{"max_epochs", max_epochs},
          {"early_stopping_patience", early_stop_patience},
          {"selection_metric", selection_metric},
          {"evaluate_every", "epoch"}}},
        {"split", {{"train", train_fraction}, {"validation", validation_fraction}}},
        {"loss", {{"objective", "causal_lm"}, {"ignore_index", kIgnoreIndex}, {"masked", "prompt tokens"}}},
    };
}

FinetuneConfig FinetuneConfig::from_json(const nlohmann::json& doc)
{
    FinetuneConfig c;
    try {
        c.lora_rank = doc.at("lora").at("rank").get<int>();
        c.lora_alpha = doc.at("lora").at("alpha").get<int>();
        c.learning_rate = doc.at("optimizer").at("learning_rate").get<double>();
        c.max_epochs = doc.at("training").at("max_epochs").get<int>();
        c.early_stop_patience = doc.at("training").at("early_stopping_patience").get<int>();
        c.selection_metric = doc.at("training").at("selection_metric").get<std::string>();
        c.train_fraction = doc.at("split").at("train").get<double>();
        c.validation_fraction = doc.at("split").at("validation").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("malformed fine-tuning config: {}", e.what()));
    }
    return c;
}

std::filesystem::path export_finetune_bundle(const FinetuneCorpus& corpus, const FinetuneConfig& config,
                                             const std::filesystem::path& dir)
{
    if (corpus.examples.empty()) {
        throw ContractError("refusing to export an empty corpus");
    }
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "corpus.jsonl", std::ios::binary | std::ios::trunc);
        for (const auto& ex : corpus.examples) {
            nlohmann::json line{
                {"id", ex.id}, {"instruction", ex.instruction}, {"selected_mode", ex.selected_mode}, {"split", ex.split}};
            out << line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        }
        if (!out) {
            throw PersistenceError(fmt::format("cannot write '{}'", (dir / "corpus.jsonl").string()));
        }
    }
    auto doc = config.to_json();
    doc["corpus"] = {{"file", "corpus.jsonl"},
                     {"examples", corpus.examples.size()},
                     {"train", corpus.count("train")},
                     {"validation", corpus.count("validation")},
                     {"seed", corpus.seed},
                     {"validation_fraction", corpus.validation_fraction}};
    std::ofstream out(dir / "finetune_config.json", std::ios::binary | std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out) {
        throw PersistenceError(fmt::format("cannot write '{}'", (dir / "finetune_config.json").string()));
    }
    return dir;
}

FinetuneBundle load_finetune_bundle(const std::filesystem::path& dir)
{
    FinetuneBundle bundle;
    std::ifstream cfg(dir / "finetune_config.json");
    if (!cfg) {
        throw ConfigError(fmt::format("no finetune_config.json in '{}'", dir.string()));
    }
    auto doc = nlohmann::json::parse(cfg, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("finetune_config.json is not valid JSON");
    }
    bundle.config = FinetuneConfig::from_json(doc);
    bundle.corpus.seed = doc.at("corpus").at("seed").get<std::uint64_t>();
    bundle.corpus.validation_fraction = doc.at("corpus").at("validation_fraction").get<double>();

    std::ifstream in(dir / "corpus.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        auto j = nlohmann::json::parse(line);
        bundle.corpus.examples.push_back({j.at("id").get<std::string>(), j.at("instruction").get<std::string>(),
                                          j.at("selected_mode").get<std::string>(), j.at("split").get<std::string>()});
    }
    return bundle;
}

} // namespace modechoice
