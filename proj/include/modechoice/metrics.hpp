#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "modechoice/gateway.hpp"

namespace modechoice {

inline constexpr double kDefaultEpsilon = 1e-9;

// Counts of (true class, predicted class). Invalid predictions live in a
// separate per-true-class bucket: they are misses for the true class and
// nobody's false positive.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::string> labels);

    // predicted may be kInvalidMode.
    void add(std::string_view truth, std::string_view predicted);

    [[nodiscard]] const std::vector<std::string>& labels() const noexcept { return labels_; }
    [[nodiscard]] std::size_t classes() const noexcept { return labels_.size(); }
    [[nodiscard]] std::size_t at(std::size_t truth, std::size_t predicted) const;
    [[nodiscard]] std::size_t invalid(std::size_t truth) const { return invalid_.at(truth); }
    [[nodiscard]] std::size_t invalid_total() const noexcept;
    [[nodiscard]] std::size_t total() const noexcept { return total_; }
    [[nodiscard]] std::size_t support(std::size_t c) const;      // row sum incl. invalid
    [[nodiscard]] std::size_t predicted(std::size_t c) const;    // column sum
    [[nodiscard]] std::size_t true_positives(std::size_t c) const { return at(c, c); }

    [[nodiscard]] nlohmann::json to_json() const;

private:
    [[nodiscard]] std::size_t index(std::string_view label) const;

    std::vector<std::string> labels_;
    std::vector<std::size_t> counts_; // row-major, truth x predicted
    std::vector<std::size_t> invalid_;
    std::size_t total_ = 0;
};

// Builds the matrix from records aligned to truths by agent id. Every record
// needs a truth and every truth a record, else AlignmentError.
ConfusionMatrix confusion(std::span<const DecisionRecord> records, const std::map<std::string, std::string>& truths,
                          const std::vector<std::string>& labels);

ConfusionMatrix confusion(std::span<const std::string> truths, std::span<const std::string> predictions,
                          const std::vector<std::string>& labels);

struct InstanceMetrics {
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double f1_weighted = 0.0;
};

// Macro averages run over classes that occur in the truth or the valid
// predictions; a 0/0 precision, recall or F1 counts as 0. Weighted F1 uses
// ground-truth supports. Throws UndefinedMetricError on an empty matrix.
InstanceMetrics instance_metrics(const ConfusionMatrix& cm);

struct ShareDistribution {
    std::vector<double> p;
    bool smoothed = false;
    double epsilon = 0.0;

    static ShareDistribution from_counts(std::span<const std::size_t> counts);
};

// (p + eps) / (1 + C eps) per class.
ShareDistribution smooth_distribution(const ShareDistribution& shares, double epsilon = kDefaultEpsilon);

// (1/C) sum |p - q| on the shares as given.
double dist_mae(const ShareDistribution& p, const ShareDistribution& q);

// Jensen-Shannon divergence in nats after smoothing both sides.
double jsd(const ShareDistribution& p, const ShareDistribution& q, double epsilon = kDefaultEpsilon);

// -sum p' ln q' after smoothing both sides.
double cross_entropy(const ShareDistribution& p, const ShareDistribution& q, double epsilon = kDefaultEpsilon);

struct MetricsReport {
    std::size_t n = 0;
    std::size_t invalid_count = 0;
    double accuracy = 0.0;
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    double f1_macro = 0.0;
    double f1_weighted = 0.0;
    // NaN when every record is invalid.
    double dist_mae = 0.0;
    double jsd = 0.0;
    double cross_entropy = 0.0;
    std::vector<std::string> labels;
    std::vector<double> truth_shares;
    std::vector<double> predicted_shares;

    [[nodiscard]] nlohmann::json to_json() const;
};

// Truth shares come from all records, predicted shares from valid records only.
MetricsReport evaluate_run(std::span<const DecisionRecord> records, const std::map<std::string, std::string>& truths,
                           const std::vector<std::string>& labels, double epsilon = kDefaultEpsilon);

} // namespace modechoice
