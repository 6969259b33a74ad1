#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace modechoice {

// Decision factors a rationale is scanned for.
class FactorLexicon {
public:
    // time, cost, comfort, convenience, frequency
    FactorLexicon();
    // Lower-cases the terms; throws ConfigError on an empty or repeated list.
    explicit FactorLexicon(std::vector<std::string> factors);

    [[nodiscard]] const std::vector<std::string>& factors() const noexcept { return factors_; }
    [[nodiscard]] std::size_t size() const noexcept { return factors_.size(); }

private:
    std::vector<std::string> factors_;
};

enum class FactorMatch {
    substring,    // "costly" counts as "cost"
    word_boundary // whole words only
};

struct EsiScore {
    double value = 0.0;
    std::vector<std::string> hits;
};

// Explanation Strength Index: share of lexicon factors mentioned in the
// lower-cased rationale.
EsiScore esi(std::string_view reasoning, const FactorLexicon& lexicon, FactorMatch match = FactorMatch::substring);

struct EsiGroupKey {
    std::string model;
    std::string shot_type;
    std::string prompt_style;
    std::string temperature;

    auto operator<=>(const EsiGroupKey&) const = default;
};

struct EsiGroup {
    EsiGroupKey key;
    std::vector<double> scores;
    // Records whose prompt never asked for a rationale; they score 0 and stay in the group.
    std::size_t no_reasoning_requested = 0;
};

struct EsiGroupSummary {
    EsiGroupKey key;
    double mean = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    std::size_t count = 0;
    std::size_t no_reasoning_requested = 0;
};

struct EsiAggregate {
    std::vector<EsiGroupSummary> rows;
    std::vector<std::string> warnings;
};

// Mean and interquartile range per group; empty groups are skipped with a warning.
EsiAggregate esi_aggregate(const std::vector<EsiGroup>& groups);

// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile(std::vector<double> sample, double q);

} // namespace modechoice
