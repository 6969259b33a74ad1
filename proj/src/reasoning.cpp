#include "modechoice/reasoning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "modechoice/errors.hpp"

namespace modechoice {

namespace {

std::string to_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_word_char(char c)
{
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool contains_word(std::string_view text, std::string_view word)
{
    for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
        bool left = pos == 0 || !is_word_char(text[pos - 1]);
        auto end = pos + word.size();
        bool right = end == text.size() || !is_word_char(text[end]);
        if (left && right) {
            return true;
        }
    }
    return false;
}

} // namespace

FactorLexicon::FactorLexicon()
    : factors_{"time", "cost", "comfort", "convenience", "frequency"}
{
}

FactorLexicon::FactorLexicon(std::vector<std::string> factors)
{
    std::set<std::string> seen;
    for (auto& f : factors) {
        f = to_lower(f);
        if (f.empty()) {
            throw ConfigError("empty factor in lexicon");
        }
        if (!seen.insert(f).second) {
            throw ConfigError(fmt::format("factor '{}' listed twice", f));
        }
    }
    if (factors.empty()) {
        throw ConfigError("factor lexicon is empty");
    }
    factors_ = std::move(factors);
}

EsiScore esi(std::string_view reasoning, const FactorLexicon& lexicon, FactorMatch match)
{
    const auto text = to_lower(reasoning);
    EsiScore score;
    for (const auto& factor : lexicon.factors()) {
        bool hit = match == FactorMatch::substring ? text.find(factor) != std::string::npos : contains_word(text, factor);
        if (hit) {
            score.hits.push_back(factor);
        }
    }
    score.value = static_cast<double>(score.hits.size()) / static_cast<double>(lexicon.size());
    return score;
}

double quantile(std::vector<double> sample, double q)
{
    if (sample.empty()) {
        throw ContractError("quantile of an empty sample");
    }
    std::sort(sample.begin(), sample.end());
    const double h = q * static_cast<double>(sample.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sample.size() - 1);
    return sample[lo] + (h - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

EsiAggregate esi_aggregate(const std::vector<EsiGroup>& groups)
{
    EsiAggregate out;
    for (const auto& g : groups) {
        if (g.scores.empty()) {
            out.warnings.push_back(fmt::format("skipped empty ESI group ({}, {}, {}, {})", g.key.model, g.key.shot_type,
                                               g.key.prompt_style, g.key.temperature));
            continue;
        }
        EsiGroupSummary s;
        s.key = g.key;
        s.count = g.scores.size();
        s.no_reasoning_requested = g.no_reasoning_requested;
        double sum = 0.0;
        for (double v : g.scores) {
            sum += v;
        }
        s.mean = sum / static_cast<double>(s.count);
        s.q1 = quantile(g.scores, 0.25);
        s.q3 = quantile(g.scores, 0.75);
        s.iqr = s.q3 - s.q1;
        out.rows.push_back(std::move(s));
    }
    std::sort(out.rows.begin(), out.rows.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    return out;
}

} // namespace modechoice
