#include "modechoice/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "modechoice/errors.hpp"

namespace modechoice {

namespace {

constexpr std::array kGroups{AttributeGroup::socio, AttributeGroup::trip_num, AttributeGroup::trip_cat,
                             AttributeGroup::additional};

} // namespace

void SimilarityWeights::validate() const
{
    for (auto g : kGroups) {
        double w = of(g);
        if (!(w >= 0.0 && w <= 1.0)) {
            throw ConfigError(fmt::format("similarity weight for {} must lie in [0, 1], got {}", to_string(g), w));
        }
    }
    double sum = socio + trip_num + trip_cat + additional;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError(fmt::format("similarity weights sum to {}, expected 1", sum));
    }
}

double SimilarityWeights::of(AttributeGroup group) const noexcept
{
    switch (group) {
    case AttributeGroup::socio:
        return socio;
    case AttributeGroup::trip_num:
        return trip_num;
    case AttributeGroup::trip_cat:
        return trip_cat;
    case AttributeGroup::additional:
        return additional;
    }
    return 0.0;
}

SimilarityWeights SimilarityWeights::from_json(const nlohmann::json& doc)
{
    SimilarityWeights w;
    w.socio = doc.value("socio", w.socio);
    w.trip_num = doc.value("trip_num", w.trip_num);
    w.trip_cat = doc.value("trip_cat", w.trip_cat);
    w.additional = doc.value("additional", w.additional);
    w.validate();
    return w;
}

nlohmann::json SimilarityWeights::to_json() const
{
    return {{"socio", socio}, {"trip_num", trip_num}, {"trip_cat", trip_cat}, {"additional", additional}};
}

const std::optional<double>& SimilarityBreakdown::of(AttributeGroup group) const noexcept
{
    switch (group) {
    case AttributeGroup::socio:
        return socio;
    case AttributeGroup::trip_num:
        return trip_num;
    case AttributeGroup::trip_cat:
        return trip_cat;
    case AttributeGroup::additional:
        break;
    }
    return additional;
}

nlohmann::json SimilarityBreakdown::to_json() const
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    return {{"socio", opt(socio)},
            {"trip_num", opt(trip_num)},
            {"trip_cat", opt(trip_cat)},
            {"additional", opt(additional)},
            {"total", total}};
}

double ordinal_similarity(std::size_t level_i, std::size_t level_j) noexcept
{
    auto gap = level_i > level_j ? level_i - level_j : level_j - level_i;
    if (gap == 0) {
        return 1.0;
    }
    return gap == 1 ? 0.5 : 0.0;
}

double numeric_group_similarity(std::span<const double> x_i, std::span<const double> x_j)
{
    if (x_i.size() != x_j.size()) {
        throw ContractError(fmt::format("numeric vectors differ in length ({} vs {})", x_i.size(), x_j.size()));
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < x_i.size(); ++i) {
        double d = x_i[i] - x_j[i];
        sq += d * d;
    }
    return 1.0 / (1.0 + std::sqrt(sq));
}

std::optional<double> categorical_group_similarity(const ChoiceInstance& a, const ChoiceInstance& b,
                                                   const AttributeSchema& schema, AttributeGroup group)
{
    if (group == AttributeGroup::trip_num) {
        throw ContractError("trip_num is compared numerically, not categorically");
    }
    double sum = 0.0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
        const auto& attr = schema.attributes[i];
        if (attr.group != group) {
            continue;
        }
        const auto* va = std::get_if<std::size_t>(&a.values.at(i));
        const auto* vb = std::get_if<std::size_t>(&b.values.at(i));
        if (!va || !vb) {
            continue;
        }
        ++present;
        if (attr.kind == AttributeKind::ordinal) {
            sum += ordinal_similarity(*va, *vb);
        } else {
            sum += *va == *vb ? 1.0 : 0.0;
        }
    }
    if (present == 0) {
        return std::nullopt;
    }
    return sum / static_cast<double>(present);
}

std::optional<double> numeric_component(const ChoiceInstance& a, const ChoiceInstance& b, const AttributeSchema& schema,
                                        const NumericNormalizer& normalizer)
{
    std::vector<double> xa;
    std::vector<double> xb;
    for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
        const auto& attr = schema.attributes[i];
        if (attr.group != AttributeGroup::trip_num) {
            continue;
        }
        const auto* va = std::get_if<double>(&a.values.at(i));
        const auto* vb = std::get_if<double>(&b.values.at(i));
        if (!va || !vb) {
            continue;
        }
        xa.push_back(normalizer.scale(attr.name, *va));
        xb.push_back(normalizer.scale(attr.name, *vb));
    }
    if (xa.empty()) {
        return std::nullopt;
    }
    return numeric_group_similarity(xa, xb);
}

SimilarityBreakdown total_similarity(const ChoiceInstance& a, const ChoiceInstance& b, const AttributeSchema& schema,
                                     const SimilarityWeights& weights, const NumericNormalizer& normalizer)
{
    SimilarityBreakdown out;
    out.socio = categorical_group_similarity(a, b, schema, AttributeGroup::socio);
    out.trip_num = numeric_component(a, b, schema, normalizer);
    out.trip_cat = categorical_group_similarity(a, b, schema, AttributeGroup::trip_cat);
    out.additional = categorical_group_similarity(a, b, schema, AttributeGroup::additional);

    double weighted = 0.0;
    double weight_sum = 0.0;
    for (auto g : kGroups) {
        if (const auto& s = out.of(g)) {
            weighted += weights.of(g) * *s;
            weight_sum += weights.of(g);
        }
    }
    if (!(weight_sum > 0.0)) {
        throw UndefinedMetricError(
            fmt::format("no weighted similarity group is defined for instances '{}' and '{}'", a.id, b.id));
    }
    // only renormalize when a group dropped out, so the full case stays a plain weighted sum
    out.total = std::abs(weight_sum - 1.0) <= 1e-12 ? weighted : weighted / weight_sum;
    out.total = std::clamp(out.total, 0.0, 1.0);
    return out;
}

std::vector<ScoredExample> select_targeted(const ChoiceInstance& subject, std::span<const ChoiceInstance> pool,
                                           std::size_t k, const AttributeSchema& schema,
                                           const SimilarityWeights& weights, const NumericNormalizer& normalizer)
{
    if (pool.size() < k) {
        throw SizingError(fmt::format("pool of {} cannot supply {} examples", pool.size(), k));
    }
    std::vector<ScoredExample> scored;
    scored.reserve(pool.size());
    for (std::size_t j = 0; j < pool.size(); ++j) {
        scored.push_back({j, total_similarity(subject, pool[j], schema, weights, normalizer)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredExample& x, const ScoredExample& y) { return x.similarity.total > y.similarity.total; });
    // Totals within kTieTolerance of their neighbour are ties, so rounding in
    // the weighted sum cannot override pool order.
    for (std::size_t lo = 0; lo < scored.size();) {
        std::size_t hi = lo + 1;
        while (hi < scored.size() && scored[hi - 1].similarity.total - scored[hi].similarity.total <= kTieTolerance) {
            ++hi;
        }
        std::sort(scored.begin() + static_cast<std::ptrdiff_t>(lo), scored.begin() + static_cast<std::ptrdiff_t>(hi),
                  [](const ScoredExample& x, const ScoredExample& y) { return x.pool_index < y.pool_index; });
        lo = hi;
    }
    scored.resize(k);
    return scored;
}

std::vector<std::size_t> select_random(std::size_t pool_size, std::size_t k, std::uint64_t seed)
{
    if (pool_size < k) {
        throw SizingError(fmt::format("pool of {} cannot supply {} examples", pool_size, k));
    }
    std::vector<std::size_t> order(pool_size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates: only the first k slots are needed
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool_size - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(k);
    return order;
}

} // namespace modechoice
