#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modechoice/dataset.hpp"
#include "modechoice/gateway.hpp"
#include "modechoice/metrics.hpp"
#include "modechoice/prompt.hpp"
#include "modechoice/reasoning.hpp"
#include "modechoice/shot_type.hpp"
#include "modechoice/similarity.hpp"

namespace modechoice {

struct ExperimentConfig {
    std::string model;
    std::string dataset;
    ShotType shot = ShotType::zeroshot;
    PromptStyle style = PromptStyle::direct;
    double temperature = 0.5;
    std::size_t k = kDefaultShots;
    std::uint64_t seed = 0;
    std::string template_hash;

    // short_hash of the canonical JSON of every field.
    [[nodiscard]] std::string fingerprint() const;
    // {dataset}_{model}_{shot}_{style}_{temperature}, filesystem safe.
    [[nodiscard]] std::string stem() const;
    // "0.5", "1.0"
    [[nodiscard]] std::string temperature_label() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

std::string format_temperature(double t);

enum class CellStatus { pending, partial, complete };
std::string_view to_string(CellStatus status);

struct ManifestEntry {
    ExperimentConfig config;
    std::size_t test_size = 0;
};

struct RunManifest {
    std::vector<ManifestEntry> entries;

    [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
    [[nodiscard]] std::size_t planned_calls() const;
};

struct MatrixOptions {
    std::size_t k = kDefaultShots;
    std::uint64_t seed = 0;
    // (dataset, style) -> template hash; missing pairs use the built-in template.
    std::map<std::pair<std::string, PromptStyle>, std::string> template_hashes;
    // dataset -> number of test instances; missing datasets default to 200.
    std::map<std::string, std::size_t> test_sizes;
};

// Cartesian product in the order dataset, model, shot, style, temperature.
// Empty axes or repeated entries throw ConfigError.
RunManifest enumerate_matrix(std::span<const std::string> models, std::span<const std::string> datasets,
                             std::span<const ShotType> shots, std::span<const PromptStyle> styles,
                             std::span<const double> temperatures, const MatrixOptions& options = {});

struct DatasetConfig {
    std::string name;
    std::filesystem::path path;
    char delimiter = ',';
    AttributeSchema schema;
    SimilarityWeights weights;
    AliasMap aliases;
    std::size_t n_respondents = 100;
    std::size_t n_test = 200;
    std::uint64_t split_seed = 7;
    std::map<PromptStyle, std::filesystem::path> template_paths;

    [[nodiscard]] PromptTemplate template_for(PromptStyle style) const;
};

struct MockSettings {
    // model name -> probability of echoing the truth; unlisted models get a
    // hash-derived value in [0.45, 0.75).
    std::map<std::string, double> accuracy;
    double malformed_rate = 0.02;
    bool echo_truth = false;
};

struct RunConfig {
    std::filesystem::path output_dir = "runs";
    std::uint64_t seed = 42;
    std::size_t k = kDefaultShots;
    std::size_t parallel = 1;
    int max_tokens = 512;
    double epsilon = kDefaultEpsilon;
    std::string api_key_env = "MODECHOICE_API_KEY";
    std::vector<ModelEndpoint> endpoints;
    std::vector<DatasetConfig> datasets;
    std::vector<ShotType> shots{ShotType::zeroshot, ShotType::fewshot_random, ShotType::fewshot_targeted};
    std::vector<PromptStyle> styles{PromptStyle::direct, PromptStyle::cot_react};
    std::vector<double> temperatures{0.5, 1.0};
    FactorLexicon lexicon;
    FactorMatch esi_match = FactorMatch::substring;
    MockSettings mock;

    // Relative paths resolve against base_dir.
    static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = ".");
    static RunConfig load(const std::filesystem::path& path);

    [[nodiscard]] const DatasetConfig& dataset(std::string_view name) const;
    [[nodiscard]] const ModelEndpoint& endpoint(std::string_view name) const;
    [[nodiscard]] RunManifest manifest() const;
};

std::filesystem::path cells_dir(const std::filesystem::path& output_dir);
std::filesystem::path records_path(const std::filesystem::path& output_dir, const ExperimentConfig& config);

// Counts persisted records for the config's fingerprint.
std::size_t persisted_count(const std::filesystem::path& output_dir, const ExperimentConfig& config);
CellStatus cell_status(const std::filesystem::path& output_dir, const ManifestEntry& entry);

// Loaded data, split, normalizer and templates for one dataset. The
// normalizer is fitted on the training pool only.
struct PreparedDataset {
    const DatasetConfig* config = nullptr;
    TrainTestSplit split;
    NumericNormalizer normalizer;
    std::map<PromptStyle, PromptTemplate> templates;
    std::map<std::string, std::string> truths;

    [[nodiscard]] const AttributeSchema& schema() const { return config->schema; }
};

PreparedDataset prepare_dataset(const DatasetConfig& config);
PreparedDataset prepare_dataset(const DatasetConfig& config, std::vector<ChoiceInstance> data);

// Deterministic stand-in for a chat endpoint. Answers depend only on the
// model name and the request, so repeated campaigns are byte-identical.
class MockChatBackend final : public ChatBackend {
public:
    MockChatBackend(std::string model, const PreparedDataset& data, MockSettings settings = {});
    Completion complete(const ChatRequest& request) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::string model_;
    std::map<std::string, const ChoiceInstance*> instances_;
    MockSettings settings_;
    double accuracy_;
    std::atomic<std::size_t> calls_{0};
};

// Returns canned responses in order, cycling when exhausted.
class ScriptedChatBackend final : public ChatBackend {
public:
    explicit ScriptedChatBackend(std::vector<std::string> responses);
    Completion complete(const ChatRequest& request) override;

    [[nodiscard]] std::size_t calls() const noexcept { return calls_.load(); }

private:
    std::vector<std::string> responses_;
    std::atomic<std::size_t> calls_{0};
};

struct RunOptions {
    std::filesystem::path output_dir = "runs";
    std::size_t parallel = 1;
    // Stop after this many new records, as if interrupted.
    std::optional<std::size_t> max_new_records;
    int max_tokens = 512;
    double epsilon = kDefaultEpsilon;
};

struct CellSummary {
    std::string fingerprint;
    std::string stem;
    std::size_t existing = 0;
    std::size_t new_records = 0;
    std::size_t invalid_new = 0;
    std::size_t calls = 0;
    CellStatus status = CellStatus::pending;
    std::optional<MetricsReport> report;
    std::string error;
};

// Runs the cell's remaining test instances. Instance-level failures become
// INVALID records; an endpoint failure stops the cell with partial status.
CellSummary run_experiment(const ExperimentConfig& config, const PreparedDataset& data, ChatBackend& backend,
                           const RunOptions& options = {});

struct ReportSummary {
    std::size_t complete = 0;
    std::vector<std::string> incomplete;
    std::vector<std::string> notes;
    std::filesystem::path dir;
};

// Consolidated metrics table, ESI summary, study analysis and summary.md
// under output_dir/report. Incomplete cells are listed, not scored.
ReportSummary write_report(const RunConfig& config, const RunManifest& manifest,
                           const std::map<std::string, PreparedDataset>& datasets);

// The metrics table row for one complete cell.
nlohmann::json metrics_row(const ExperimentConfig& config, const MetricsReport& report);

} // namespace modechoice
