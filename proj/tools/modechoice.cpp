// Command-line front end: plan, run, report, analyze, finetune, synth.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "modechoice/analysis.hpp"
#include "modechoice/errors.hpp"
#include "modechoice/finetune.hpp"
#include "modechoice/runner.hpp"
#include "modechoice/synthetic.hpp"

namespace fs = std::filesystem;
using namespace modechoice;

namespace {

struct Datasets {
    const RunConfig& config;
    std::map<std::string, PreparedDataset> loaded;

    const PreparedDataset& get(const std::string& name)
    {
        auto it = loaded.find(name);
        if (it == loaded.end()) {
            it = loaded.emplace(name, prepare_dataset(config.dataset(name))).first;
        }
        return it->second;
    }
};

int cmd_plan(const fs::path& config_path, bool verbose)
{
    const auto config = RunConfig::load(config_path);
    const auto manifest = config.manifest();
    std::map<CellStatus, std::size_t> counts;
    for (const auto& e : manifest.entries) {
        const auto status = cell_status(config.output_dir, e);
        ++counts[status];
        if (verbose) {
            fmt::print("{}  {:<60} {}\n", e.config.fingerprint(), e.config.stem(), to_string(status));
        }
    }
    fmt::print("configs: {}\n", manifest.size());
    fmt::print("planned calls: {}\n", manifest.planned_calls());
    fmt::print("pending: {}  partial: {}  complete: {}\n", counts[CellStatus::pending], counts[CellStatus::partial],
               counts[CellStatus::complete]);
    return 0;
}

int cmd_run(const fs::path& config_path, const std::vector<std::string>& only, std::size_t parallel, bool mock,
            std::optional<std::size_t> limit)
{
    const auto config = RunConfig::load(config_path);
    const auto manifest = config.manifest();
    const std::set<std::string> wanted(only.begin(), only.end());
    Datasets datasets{config, {}};
    std::map<std::string, std::unique_ptr<ChatBackend>> http;
    int exit_code = 0;

    RunOptions options;
    options.output_dir = config.output_dir;
    options.parallel = parallel > 0 ? parallel : config.parallel;
    options.max_tokens = config.max_tokens;
    options.epsilon = config.epsilon;

    for (const auto& entry : manifest.entries) {
        const auto& c = entry.config;
        if (!wanted.empty() && !wanted.contains(c.fingerprint())) {
            continue;
        }
        if (limit && *limit == 0) {
            break;
        }
        const auto& data = datasets.get(c.dataset);
        std::unique_ptr<ChatBackend> mock_backend;
        ChatBackend* backend = nullptr;
        if (mock) {
            mock_backend = std::make_unique<MockChatBackend>(c.model, data, config.mock);
            backend = mock_backend.get();
        } else {
            auto& slot = http[c.model];
            if (!slot) {
                slot = std::make_unique<HttpChatBackend>(config.endpoint(c.model));
            }
            backend = slot.get();
        }
        options.max_new_records = limit;
        const auto summary = run_experiment(c, data, *backend, options);
        if (limit) {
            *limit -= std::min(*limit, summary.new_records);
        }
        fmt::print("{}  {:<60} {:<8} +{} ({} invalid)", summary.fingerprint, summary.stem, to_string(summary.status),
                   summary.new_records, summary.invalid_new);
        if (summary.report) {
            fmt::print("  f1_weighted={:.4f}", summary.report->f1_weighted);
        }
        fmt::print("\n");
        if (!summary.error.empty()) {
            fmt::print(stderr, "  endpoint failure, cell left partial: {}\n", summary.error);
            exit_code = 3;
        }
    }
    return exit_code;
}

int cmd_report(const fs::path& config_path)
{
    const auto config = RunConfig::load(config_path);
    const auto manifest = config.manifest();
    Datasets datasets{config, {}};
    for (const auto& d : config.datasets) {
        datasets.get(d.name);
    }
    const auto summary = write_report(config, manifest, datasets.loaded);
    fmt::print("complete cells: {}\nincomplete cells: {}\nreport: {}\n", summary.complete, summary.incomplete.size(),
               summary.dir.string());
    for (const auto& n : summary.notes) {
        fmt::print("note: {}\n", n);
    }
    return 0;
}

int cmd_analyze(const fs::path& table, const fs::path& out, const std::string& replicates,
                const std::vector<std::string>& factors)
{
    AnalysisOptions options;
    options.replicates = replicates == "pooled" ? ReplicateHandling::pooled : ReplicateHandling::cell_means;
    if (!factors.empty()) {
        options.factors.clear();
        for (const auto& f : factors) {
            options.factors.push_back(parse_factor(f));
        }
    }
    const auto cells = read_cells(table);
    const auto notes = write_analysis(cells, out, options);
    fmt::print("{} cells analyzed into {}\n", cells.size(), out.string());
    for (const auto& n : notes) {
        fmt::print("note: {}\n", n);
    }
    return 0;
}

int cmd_finetune(const fs::path& config_path, const std::string& dataset, const fs::path& out, std::uint64_t seed)
{
    const auto config = RunConfig::load(config_path);
    const auto& ds = config.dataset(dataset);
    const auto data = prepare_dataset(ds);
    std::vector<std::string> test_ids;
    for (const auto& inst : data.split.test) {
        test_ids.push_back(inst.id);
    }
    const auto corpus = build_training_corpus(data.split.train, ds.schema, data.templates.at(PromptStyle::direct),
                                              test_ids, seed);
    export_finetune_bundle(corpus, FinetuneConfig{}, out);
    fmt::print("{} examples ({} train, {} validation) written to {}\n", corpus.examples.size(), corpus.count("train"),
               corpus.count("validation"), out.string());
    return 0;
}

int cmd_synth(const fs::path& out, const SyntheticOptions& options)
{
    fs::create_directories(out);
    const auto survey = make_swissmetro_like(options);
    {
        std::ofstream csv(out / "swissmetro_like.csv", std::ios::binary | std::ios::trunc);
        write_dataset(csv, survey.data, survey.schema);
    }
    {
        std::ofstream schema(out / "swissmetro_like.schema.json", std::ios::binary | std::ios::trunc);
        schema << survey.schema.to_json().dump(2) << '\n';
    }
    fmt::print("{} rows from {} respondents written to {}\n", survey.data.size(), options.respondents, out.string());
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Travel mode choice prediction with language models"};
    app.require_subcommand(1);

    fs::path config_path;
    bool verbose = false;
    auto* plan = app.add_subcommand("plan", "Enumerate the experiment matrix and count planned calls");
    plan->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    plan->add_flag("-v,--verbose", verbose, "List every configuration with its status");

    std::vector<std::string> only;
    std::size_t parallel = 0;
    bool mock = false;
    std::optional<std::size_t> limit;
    auto* run = app.add_subcommand("run", "Execute pending cells, resuming partial ones");
    run->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--only", only, "Restrict to these fingerprints");
    run->add_option("--parallel", parallel, "In-flight requests per cell (overrides the config)");
    run->add_flag("--mock", mock, "Use the deterministic mock endpoint instead of HTTP");
    run->add_option("--limit", limit, "Stop after this many new records");

    auto* report = app.add_subcommand("report", "Write run-level tables for complete cells");
    report->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);

    fs::path table;
    fs::path out;
    std::string replicates = "cell_means";
    std::vector<std::string> factors;
    auto* analyze = app.add_subcommand("analyze", "Variance shares, ranks, gains and regime table from a metrics table");
    analyze->add_option("--table", table, "CSV with model, dataset, shot_type, prompt_style, temperature, f1_weighted")
        ->required()
        ->check(CLI::ExistingFile);
    analyze->add_option("--out", out, "Output directory")->required();
    analyze->add_option("--replicates", replicates, "cell_means or pooled")
        ->check(CLI::IsMember({"cell_means", "pooled"}));
    analyze->add_option("--factors", factors, "Subset of model, shot_type, prompt_style, temperature");

    std::string dataset;
    std::uint64_t seed = 0;
    auto* finetune = app.add_subcommand("finetune", "Export a fine-tuning corpus and training config");
    finetune->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    finetune->add_option("--dataset", dataset, "Dataset name from the config")->required();
    finetune->add_option("--out", out, "Output directory")->required();
    finetune->add_option("--seed", seed, "Seed for the train/validation partition");

    SyntheticOptions synth_options;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic survey and its schema");
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--respondents", synth_options.respondents, "Number of respondents");
    synth->add_option("--scenarios", synth_options.scenarios_per_respondent, "Choice scenarios per respondent");
    synth->add_option("--seed", synth_options.seed, "Generator seed");
    synth->add_option("--missing-rate", synth_options.missing_rate, "Share of blanked categorical values");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*plan) {
            return cmd_plan(config_path, verbose);
        }
        if (*run) {
            return cmd_run(config_path, only, parallel, mock, limit);
        }
        if (*report) {
            return cmd_report(config_path);
        }
        if (*analyze) {
            return cmd_analyze(table, out, replicates, factors);
        }
        if (*finetune) {
            return cmd_finetune(config_path, dataset, out, seed);
        }
        if (*synth) {
            return cmd_synth(out, synth_options);
        }
    } catch (const modechoice::Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 0;
}
