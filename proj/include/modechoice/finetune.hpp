#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modechoice/dataset.hpp"
#include "modechoice/prompt.hpp"

namespace modechoice {

inline constexpr std::int32_t kIgnoreIndex = -100;

struct TrainingExample {
    std::string id;
    std::string instruction;
    std::string selected_mode;
    // "train" or "validation"
    std::string split;

    bool operator==(const TrainingExample&) const = default;
};

struct FinetuneCorpus {
    std::vector<TrainingExample> examples;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;

    [[nodiscard]] std::size_t count(std::string_view split) const;
    bool operator==(const FinetuneCorpus&) const = default;
};

// One example per training instance. The instruction is the direct-style
// system text followed by the instance narrative, without the answer. A fixed
// seed assigns round(validation_fraction * n) examples to validation. Throws
// LeakageError if any instance id is also in test_ids or an instruction holds
// the choice marker.
FinetuneCorpus build_training_corpus(std::span<const ChoiceInstance> train, const AttributeSchema& schema,
                                     const PromptTemplate& tmpl, std::span<const std::string> test_ids,
                                     std::uint64_t seed, double validation_fraction = 0.1);

// True when the instruction carries its own answer in the answer position.
bool leaks_answer(const TrainingExample& example);

struct MaskedSequence {
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> labels;
    std::size_t prompt_len = 0;
};

// labels[j] = kIgnoreIndex for j < prompt_len, tokens[j] after. Needs
// 0 < prompt_len < tokens.size() (ContractError otherwise).
MaskedSequence mask_labels(std::vector<std::int32_t> tokens, std::size_t prompt_len);

// Training hyperparameters handed to the external QLoRA trainer.
struct FinetuneConfig {
    int lora_rank = 32;
    int lora_alpha = 64;
    double learning_rate = 2e-5;
    int max_epochs = 5;
    int early_stop_patience = 2;
    std::string selection_metric = "f1_weighted";
    double train_fraction = 0.9;
    double validation_fraction = 0.1;

    [[nodiscard]] nlohmann::json to_json() const;
    static FinetuneConfig from_json(const nlohmann::json& doc);
};

// Writes corpus.jsonl (instruction, selected_mode, split, id) and
// finetune_config.json into dir. Returns dir.
std::filesystem::path export_finetune_bundle(const FinetuneCorpus& corpus, const FinetuneConfig& config,
                                             const std::filesystem::path& dir);

struct FinetuneBundle {
    FinetuneCorpus corpus;
    FinetuneConfig config;
};

FinetuneBundle load_finetune_bundle(const std::filesystem::path& dir);

} // namespace modechoice
