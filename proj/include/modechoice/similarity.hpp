#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "modechoice/dataset.hpp"

namespace modechoice {

// Weights of the four similarity groups. Must sum to 1.
struct SimilarityWeights {
    double socio = 0.35;
    double trip_num = 0.30;
    double trip_cat = 0.15;
    double additional = 0.20;

    void validate() const;
    [[nodiscard]] double of(AttributeGroup group) const noexcept;

    static SimilarityWeights from_json(const nlohmann::json& doc);
    [[nodiscard]] nlohmann::json to_json() const;
};

// Per-group similarities of one pair. A group is empty when neither side of
// the pair has a comparable attribute in it; its weight is then shared out
// over the defined groups.
struct SimilarityBreakdown {
    std::optional<double> socio;
    std::optional<double> trip_num;
    std::optional<double> trip_cat;
    std::optional<double> additional;
    double total = 0.0;

    [[nodiscard]] const std::optional<double>& of(AttributeGroup group) const noexcept;
    [[nodiscard]] nlohmann::json to_json() const;
};

// 1 for equal levels, 0.5 for adjacent ones, 0 otherwise.
double ordinal_similarity(std::size_t level_i, std::size_t level_j) noexcept;

// 1 / (1 + ||x_i - x_j||). Throws ContractError on length mismatch.
double numeric_group_similarity(std::span<const double> x_i, std::span<const double> x_j);

// Mean of exact-match (nominal) and ordinal_similarity (ordinal) over the
// group's attributes present in both instances; nullopt when none are.
std::optional<double> categorical_group_similarity(const ChoiceInstance& a, const ChoiceInstance& b,
                                                   const AttributeSchema& schema, AttributeGroup group);

// Inverse Euclidean similarity over the trip_num attributes present in both
// instances, after min-max scaling; nullopt when none are.
std::optional<double> numeric_component(const ChoiceInstance& a, const ChoiceInstance& b, const AttributeSchema& schema,
                                        const NumericNormalizer& normalizer);

// Throws UndefinedMetricError when no group with positive weight is defined.
SimilarityBreakdown total_similarity(const ChoiceInstance& a, const ChoiceInstance& b, const AttributeSchema& schema,
                                     const SimilarityWeights& weights, const NumericNormalizer& normalizer);

struct ScoredExample {
    std::size_t pool_index = 0;
    SimilarityBreakdown similarity;
};

inline constexpr std::size_t kDefaultShots = 5;
inline constexpr double kTieTolerance = 1e-12;

// The k pool members most similar to the subject, best first; totals within
// kTieTolerance of each other keep pool order.
std::vector<ScoredExample> select_targeted(const ChoiceInstance& subject, std::span<const ChoiceInstance> pool,
                                           std::size_t k, const AttributeSchema& schema,
                                           const SimilarityWeights& weights, const NumericNormalizer& normalizer);

// k distinct pool indices drawn uniformly without replacement.
std::vector<std::size_t> select_random(std::size_t pool_size, std::size_t k, std::uint64_t seed);

} // namespace modechoice
