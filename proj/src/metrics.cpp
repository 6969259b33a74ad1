#include "modechoice/metrics.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "modechoice/errors.hpp"

namespace modechoice {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels))
    , counts_(labels_.size() * labels_.size(), 0)
    , invalid_(labels_.size(), 0)
{
    if (labels_.empty()) {
        throw ContractError("confusion matrix needs at least one class");
    }
}

std::size_t ConfusionMatrix::index(std::string_view label) const
{
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == label) {
            return i;
        }
    }
    throw ContractError(fmt::format("label '{}' is not in the class order", label));
}

void ConfusionMatrix::add(std::string_view truth, std::string_view predicted)
{
    auto t = index(truth);
    if (predicted == kInvalidMode) {
        ++invalid_[t];
    } else {
        ++counts_[t * labels_.size() + index(predicted)];
    }
    ++total_;
}

std::size_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const
{
    if (truth >= labels_.size() || predicted >= labels_.size()) {
        throw ContractError("confusion cell out of range");
    }
    return counts_[truth * labels_.size() + predicted];
}

std::size_t ConfusionMatrix::invalid_total() const noexcept
{
    std::size_t sum = 0;
    for (auto v : invalid_) {
        sum += v;
    }
    return sum;
}

std::size_t ConfusionMatrix::support(std::size_t c) const
{
    std::size_t sum = invalid_.at(c);
    for (std::size_t p = 0; p < labels_.size(); ++p) {
        sum += at(c, p);
    }
    return sum;
}

std::size_t ConfusionMatrix::predicted(std::size_t c) const
{
    std::size_t sum = 0;
    for (std::size_t t = 0; t < labels_.size(); ++t) {
        sum += at(t, c);
    }
    return sum;
}

nlohmann::json ConfusionMatrix::to_json() const
{
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < labels_.size(); ++t) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t p = 0; p < labels_.size(); ++p) {
            row.push_back(at(t, p));
        }
        rows.push_back(std::move(row));
    }
    return {{"labels", labels_}, {"counts", rows}, {"invalid", invalid_}};
}

ConfusionMatrix confusion(std::span<const DecisionRecord> records, const std::map<std::string, std::string>& truths,
                          const std::vector<std::string>& labels)
{
    ConfusionMatrix cm(labels);
    std::set<std::string> seen;
    for (const auto& r : records) {
        auto it = truths.find(r.agent_id);
        if (it == truths.end()) {
            throw AlignmentError(fmt::format("no ground truth for agent '{}'", r.agent_id));
        }
        if (!seen.insert(r.agent_id).second) {
            throw AlignmentError(fmt::format("agent '{}' has more than one record", r.agent_id));
        }
        cm.add(it->second, r.predicted_mode);
    }
    if (seen.size() != truths.size()) {
        throw AlignmentError(fmt::format("{} ground-truth rows have no record", truths.size() - seen.size()));
    }
    return cm;
}

ConfusionMatrix confusion(std::span<const std::string> truths, std::span<const std::string> predictions,
                          const std::vector<std::string>& labels)
{
    if (truths.size() != predictions.size()) {
        throw AlignmentError(fmt::format("{} truths vs {} predictions", truths.size(), predictions.size()));
    }
    ConfusionMatrix cm(labels);
    for (std::size_t i = 0; i < truths.size(); ++i) {
        cm.add(truths[i], predictions[i]);
    }
    return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den)
{
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_same_order(const ShareDistribution& p, const ShareDistribution& q)
{
    if (p.p.size() != q.p.size() || p.p.empty()) {
        throw ContractError(fmt::format("share distributions differ in length ({} vs {})", p.p.size(), q.p.size()));
    }
}

} // namespace

InstanceMetrics instance_metrics(const ConfusionMatrix& cm)
{
    if (cm.total() == 0) {
        throw UndefinedMetricError("no scored records");
    }
    InstanceMetrics m;
    std::size_t correct = 0;
    std::size_t active = 0;
    double precision_sum = 0.0;
    double recall_sum = 0.0;
    double f1_sum = 0.0;
    double weighted_f1 = 0.0;
    for (std::size_t c = 0; c < cm.classes(); ++c) {
        const auto tp = cm.true_positives(c);
        const auto support = cm.support(c);
        const auto predicted = cm.predicted(c);
        correct += tp;
        if (support == 0 && predicted == 0) {
            continue;
        }
        ++active;
        double precision = ratio(tp, predicted);
        double recall = ratio(tp, support);
        double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
        weighted_f1 += static_cast<double>(support) * f1;
    }
    const auto n = static_cast<double>(cm.total());
    m.accuracy = static_cast<double>(correct) / n;
    if (active > 0) {
        m.precision_macro = precision_sum / static_cast<double>(active);
        m.recall_macro = recall_sum / static_cast<double>(active);
        m.f1_macro = f1_sum / static_cast<double>(active);
    }
    m.f1_weighted = weighted_f1 / n;
    return m;
}

ShareDistribution ShareDistribution::from_counts(std::span<const std::size_t> counts)
{
    ShareDistribution d;
    std::size_t total = 0;
    for (auto c : counts) {
        total += c;
    }
    if (total == 0) {
        throw UndefinedMetricError("share distribution of zero observations");
    }
    for (auto c : counts) {
        d.p.push_back(static_cast<double>(c) / static_cast<double>(total));
    }
    return d;
}

ShareDistribution smooth_distribution(const ShareDistribution& shares, double epsilon)
{
    ShareDistribution out;
    out.smoothed = true;
    out.epsilon = epsilon;
    const double denom = 1.0 + static_cast<double>(shares.p.size()) * epsilon;
    out.p.reserve(shares.p.size());
    for (double v : shares.p) {
        out.p.push_back((v + epsilon) / denom);
    }
    return out;
}

double dist_mae(const ShareDistribution& p, const ShareDistribution& q)
{
    check_same_order(p, q);
    double sum = 0.0;
    for (std::size_t c = 0; c < p.p.size(); ++c) {
        sum += std::abs(p.p[c] - q.p[c]);
    }
    return sum / static_cast<double>(p.p.size());
}

double jsd(const ShareDistribution& p, const ShareDistribution& q, double epsilon)
{
    check_same_order(p, q);
    const auto ps = smooth_distribution(p, epsilon);
    const auto qs = smooth_distribution(q, epsilon);
    double sum = 0.0;
    for (std::size_t c = 0; c < ps.p.size(); ++c) {
        const double a = ps.p[c];
        const double b = qs.p[c];
        const double m = 0.5 * (a + b);
        // both terms in one addition keeps jsd(p, q) == jsd(q, p) bit for bit
        sum += a * std::log(a / m) + b * std::log(b / m);
    }
    return std::max(0.0, 0.5 * sum);
}

double cross_entropy(const ShareDistribution& p, const ShareDistribution& q, double epsilon)
{
    check_same_order(p, q);
    const auto ps = smooth_distribution(p, epsilon);
    const auto qs = smooth_distribution(q, epsilon);
    double sum = 0.0;
    for (std::size_t c = 0; c < ps.p.size(); ++c) {
        sum -= ps.p[c] * std::log(qs.p[c]);
    }
    return sum;
}

nlohmann::json MetricsReport::to_json() const
{
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
    return {{"n", n},
            {"invalid_count", invalid_count},
            {"accuracy", accuracy},
            {"precision_macro", precision_macro},
            {"recall_macro", recall_macro},
            {"f1_macro", f1_macro},
            {"f1_weighted", f1_weighted},
            {"dist_mae", num(dist_mae)},
            {"jsd", num(jsd)},
            {"cross_entropy", num(cross_entropy)},
            {"labels", labels},
            {"truth_shares", truth_shares},
            {"predicted_shares", predicted_shares}};
}

MetricsReport evaluate_run(std::span<const DecisionRecord> records, const std::map<std::string, std::string>& truths,
                           const std::vector<std::string>& labels, double epsilon)
{
    if (records.empty()) {
        throw UndefinedMetricError("empty record set");
    }
    const auto cm = confusion(records, truths, labels);
    const auto im = instance_metrics(cm);

    MetricsReport report;
    report.n = cm.total();
    report.invalid_count = cm.invalid_total();
    report.accuracy = im.accuracy;
    report.precision_macro = im.precision_macro;
    report.recall_macro = im.recall_macro;
    report.f1_macro = im.f1_macro;
    report.f1_weighted = im.f1_weighted;
    report.labels = labels;

    std::vector<std::size_t> truth_counts;
    std::vector<std::size_t> predicted_counts;
    for (std::size_t c = 0; c < labels.size(); ++c) {
        truth_counts.push_back(cm.support(c));
        predicted_counts.push_back(cm.predicted(c));
    }
    const auto truth = ShareDistribution::from_counts(truth_counts);
    report.truth_shares = truth.p;
    if (report.invalid_count == report.n) {
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        report.predicted_shares.assign(labels.size(), nan);
        report.dist_mae = report.jsd = report.cross_entropy = nan;
        return report;
    }
    const auto predicted = ShareDistribution::from_counts(predicted_counts);
    report.predicted_shares = predicted.p;
    report.dist_mae = dist_mae(truth, predicted);
    report.jsd = jsd(truth, predicted, epsilon);
    report.cross_entropy = cross_entropy(truth, predicted, epsilon);
    return report;
}

} // namespace modechoice
