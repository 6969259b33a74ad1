#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modechoice/shot_type.hpp"

namespace modechoice {

// One completed experiment, as read from the run-level metrics table.
struct ExperimentCell {
    std::string model;
    std::string dataset;
    std::string shot_type;
    std::string prompt_style;
    std::string temperature;
    double f1_weighted = 0.0;
};

enum class Factor { model, shot_type, prompt_style, temperature };

std::string_view to_string(Factor factor);
Factor parse_factor(std::string_view text);
const std::string& level_of(const ExperimentCell& cell, Factor factor);

inline constexpr Factor kAllFactors[] = {Factor::model, Factor::shot_type, Factor::prompt_style, Factor::temperature};

// How repeated observations of one factor-level combination enter the sums of squares.
enum class ReplicateHandling { cell_means, pooled };

struct VarianceShare {
    std::vector<Factor> factors;
    std::vector<double> sum_squares;
    std::vector<double> shares;
};

// Main-effect sums of squares n_level * (level mean - grand mean)^2 per factor,
// normalized to shares. On a balanced design these are the Type II sums of
// squares of the additive OLS model. Cells must come from one dataset and
// cover every level combination equally often (DesignError otherwise).
VarianceShare variance_decomposition(std::span<const ExperimentCell> cells, std::span<const Factor> factors,
                                     ReplicateHandling replicates = ReplicateHandling::cell_means);

struct ModelRank {
    std::string model;
    double mean = 0.0;
    std::size_t cells = 0;
    std::size_t rank = 0;
};

struct RankGroup {
    std::string dataset;
    std::string shot_type;
    std::vector<ModelRank> ranking;
};

// Per (dataset, shot type): models by mean weighted F1, best first. Tied
// means share the better rank and the next rank is skipped.
std::vector<RankGroup> rank_models(std::span<const ExperimentCell> cells);

struct LearningGain {
    std::string model;
    std::string dataset;
    double zeroshot = 0.0;
    double fewshot_random = 0.0;
    double fewshot_targeted = 0.0;
    // Percent changes; empty when the baseline is zero.
    std::optional<double> zero_to_random;
    std::optional<double> random_to_targeted;

    [[nodiscard]] bool negative_zero_to_random() const { return zero_to_random && *zero_to_random < 0.0; }
    [[nodiscard]] bool negative_random_to_targeted() const { return random_to_targeted && *random_to_targeted < 0.0; }
};

// 100 * (b - a) / a on per-shot mean F1, for every (model, dataset).
std::optional<double> percent_gain(double from, double to);
std::vector<LearningGain> learning_style_gain(std::span<const ExperimentCell> cells);

// Best model per (dataset, shot type) by mean, by peak and by tightest IQR
// of its runs.
struct RegimeSummary {
    std::string dataset;
    std::string shot_type;
    std::string top_mean_model;
    double top_mean = 0.0;
    std::string top_peak_model;
    double top_peak = 0.0;
    std::string tightest_iqr_model;
    double tightest_iqr = 0.0;
};

std::vector<RegimeSummary> summarize_regimes(std::span<const ExperimentCell> cells);

// Markdown tables, one per dataset: Regime | Top Mean | Top Peak | Tightest IQR.
std::string regime_table_markdown(std::span<const RegimeSummary> rows);

// Reads any table holding model, dataset, shot_type, prompt_style,
// temperature and f1_weighted columns; other columns are ignored.
std::vector<ExperimentCell> read_cells(const std::filesystem::path& path, char delimiter = ',');

struct AnalysisOptions {
    std::vector<Factor> factors{std::begin(kAllFactors), std::end(kAllFactors)};
    ReplicateHandling replicates = ReplicateHandling::cell_means;
};

// Writes variance_shares.csv, model_ranks.csv, learning_gains.csv,
// regime_summary.md and plots/{variance,ranks,gains}.json under out_dir.
// Returns notes for sections that could not be computed.
std::vector<std::string> write_analysis(std::span<const ExperimentCell> cells, const std::filesystem::path& out_dir,
                                        const AnalysisOptions& options = {});

} // namespace modechoice
