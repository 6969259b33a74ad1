#include "modechoice/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "modechoice/csv.hpp"
#include "modechoice/errors.hpp"
#include "modechoice/reasoning.hpp"

namespace modechoice {

std::string_view to_string(Factor factor)
{
    switch (factor) {
    case Factor::model:
        return "model";
    case Factor::shot_type:
        return "shot_type";
    case Factor::prompt_style:
        return "prompt_style";
    case Factor::temperature:
        return "temperature";
    }
    return "?";
}

Factor parse_factor(std::string_view text)
{
    for (auto f : kAllFactors) {
        if (to_string(f) == text) {
            return f;
        }
    }
    throw ConfigError(fmt::format("unknown factor '{}'", text));
}

const std::string& level_of(const ExperimentCell& cell, Factor factor)
{
    switch (factor) {
    case Factor::model:
        return cell.model;
    case Factor::shot_type:
        return cell.shot_type;
    case Factor::prompt_style:
        return cell.prompt_style;
    case Factor::temperature:
        break;
    }
    return cell.temperature;
}

VarianceShare variance_decomposition(std::span<const ExperimentCell> cells, std::span<const Factor> factors,
                                     ReplicateHandling replicates)
{
    if (cells.empty() || factors.empty()) {
        throw DesignError("variance decomposition needs cells and at least one factor");
    }
    std::set<Factor> unique_factors(factors.begin(), factors.end());
    if (unique_factors.size() != factors.size()) {
        throw DesignError("factor listed twice");
    }
    for (const auto& c : cells) {
        if (c.dataset != cells.front().dataset) {
            throw DesignError("cells span more than one dataset; decompose each dataset separately");
        }
    }

    // observations per level combination
    std::map<std::vector<std::string>, std::vector<double>> combos;
    std::vector<std::set<std::string>> levels(factors.size());
    for (const auto& c : cells) {
        std::vector<std::string> key;
        for (std::size_t f = 0; f < factors.size(); ++f) {
            key.push_back(level_of(c, factors[f]));
            levels[f].insert(key.back());
        }
        combos[key].push_back(c.f1_weighted);
    }
    std::size_t expected = 1;
    for (const auto& l : levels) {
        expected *= l.size();
    }
    const auto replicate_count = combos.begin()->second.size();
    if (combos.size() != expected) {
        throw DesignError(fmt::format("unbalanced design: {} of {} level combinations present", combos.size(), expected));
    }
    for (const auto& [key, obs] : combos) {
        if (obs.size() != replicate_count) {
            throw DesignError("unbalanced design: level combinations have different replicate counts");
        }
    }

    struct Observation {
        const std::vector<std::string>* key;
        double y;
    };
    std::vector<Observation> data;
    for (const auto& [key, obs] : combos) {
        if (replicates == ReplicateHandling::cell_means) {
            double sum = 0.0;
            for (double y : obs) {
                sum += y;
            }
            data.push_back({&key, sum / static_cast<double>(obs.size())});
        } else {
            for (double y : obs) {
                data.push_back({&key, y});
            }
        }
    }

    double grand = 0.0;
    for (const auto& o : data) {
        grand += o.y;
    }
    grand /= static_cast<double>(data.size());

    VarianceShare out;
    out.factors.assign(factors.begin(), factors.end());
    double total = 0.0;
    for (std::size_t f = 0; f < factors.size(); ++f) {
        std::map<std::string, std::pair<double, std::size_t>> by_level;
        for (const auto& o : data) {
            auto& acc = by_level[(*o.key)[f]];
            acc.first += o.y;
            ++acc.second;
        }
        double ss = 0.0;
        for (const auto& [level, acc] : by_level) {
            const double mean = acc.first / static_cast<double>(acc.second);
            ss += static_cast<double>(acc.second) * (mean - grand) * (mean - grand);
        }
        out.sum_squares.push_back(ss);
        total += ss;
    }
    // rounding noise on a constant response is not variance
    double scale = 0.0;
    for (const auto& o : data) {
        scale = std::max(scale, std::abs(o.y));
    }
    if (!(total > 1e-24 * std::max(1.0, scale * scale) * static_cast<double>(data.size()))) {
        throw UndefinedMetricError("no between-level variance to decompose");
    }
    for (double ss : out.sum_squares) {
        out.shares.push_back(ss / total);
    }
    return out;
}

std::vector<RankGroup> rank_models(std::span<const ExperimentCell> cells)
{
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> groups;
    for (const auto& c : cells) {
        groups[{c.dataset, c.shot_type}][c.model].push_back(c.f1_weighted);
    }
    std::vector<RankGroup> out;
    for (const auto& [key, models] : groups) {
        RankGroup group{key.first, key.second, {}};
        const auto expected = models.begin()->second.size();
        for (const auto& [model, values] : models) {
            if (values.size() != expected) {
                throw DesignError(fmt::format("coverage gap in ({}, {}): model '{}' has {} cells, expected {}", key.first,
                                              key.second, model, values.size(), expected));
            }
            double sum = 0.0;
            for (double v : values) {
                sum += v;
            }
            group.ranking.push_back({model, sum / static_cast<double>(values.size()), values.size(), 0});
        }
        std::stable_sort(group.ranking.begin(), group.ranking.end(),
                         [](const ModelRank& a, const ModelRank& b) { return a.mean > b.mean; });
        for (std::size_t i = 0; i < group.ranking.size(); ++i) {
            bool tied = i > 0 && group.ranking[i].mean == group.ranking[i - 1].mean;
            group.ranking[i].rank = tied ? group.ranking[i - 1].rank : i + 1;
        }
        out.push_back(std::move(group));
    }
    return out;
}

std::optional<double> percent_gain(double from, double to)
{
    if (from == 0.0) {
        return std::nullopt;
    }
    return 100.0 * (to - from) / from;
}

std::vector<LearningGain> learning_style_gain(std::span<const ExperimentCell> cells)
{
    // (model, dataset) -> shot -> values
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> groups;
    for (const auto& c : cells) {
        groups[{c.model, c.dataset}][c.shot_type].push_back(c.f1_weighted);
    }
    auto mean_of = [](const std::map<std::string, std::vector<double>>& shots, ShotType shot, const auto& key) {
        auto it = shots.find(std::string(to_string(shot)));
        if (it == shots.end() || it->second.empty()) {
            throw DesignError(fmt::format("model '{}' on '{}' has no {} cells", key.first, key.second, to_string(shot)));
        }
        double sum = 0.0;
        for (double v : it->second) {
            sum += v;
        }
        return sum / static_cast<double>(it->second.size());
    };
    std::vector<LearningGain> out;
    for (const auto& [key, shots] : groups) {
        LearningGain g;
        g.model = key.first;
        g.dataset = key.second;
        g.zeroshot = mean_of(shots, ShotType::zeroshot, key);
        g.fewshot_random = mean_of(shots, ShotType::fewshot_random, key);
        g.fewshot_targeted = mean_of(shots, ShotType::fewshot_targeted, key);
        g.zero_to_random = percent_gain(g.zeroshot, g.fewshot_random);
        g.random_to_targeted = percent_gain(g.fewshot_random, g.fewshot_targeted);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<RegimeSummary> summarize_regimes(std::span<const ExperimentCell> cells)
{
    std::map<std::pair<std::string, std::string>, std::map<std::string, std::vector<double>>> groups;
    for (const auto& c : cells) {
        groups[{c.dataset, c.shot_type}][c.model].push_back(c.f1_weighted);
    }
    std::vector<RegimeSummary> out;
    for (const auto& [key, models] : groups) {
        RegimeSummary s;
        s.dataset = key.first;
        s.shot_type = key.second;
        bool first = true;
        for (const auto& [model, values] : models) {
            double sum = 0.0;
            for (double v : values) {
                sum += v;
            }
            const double mean = sum / static_cast<double>(values.size());
            const double peak = *std::max_element(values.begin(), values.end());
            const double iqr = quantile(values, 0.75) - quantile(values, 0.25);
            if (first || mean > s.top_mean) {
                s.top_mean = mean;
                s.top_mean_model = model;
            }
            if (first || peak > s.top_peak) {
                s.top_peak = peak;
                s.top_peak_model = model;
            }
            if (first || iqr < s.tightest_iqr) {
                s.tightest_iqr = iqr;
                s.tightest_iqr_model = model;
            }
            first = false;
        }
        out.push_back(std::move(s));
    }
    // canonical regime order within each dataset
    auto rank = [](const std::string& shot) {
        try {
            return static_cast<int>(parse_shot_type(shot));
        } catch (const ConfigError&) {
            return 99;
        }
    };
    std::stable_sort(out.begin(), out.end(), [&](const RegimeSummary& a, const RegimeSummary& b) {
        if (a.dataset != b.dataset) {
            return a.dataset < b.dataset;
        }
        return rank(a.shot_type) < rank(b.shot_type);
    });
    return out;
}

std::string regime_table_markdown(std::span<const RegimeSummary> rows)
{
    std::string out;
    std::string current;
    for (const auto& r : rows) {
        if (r.dataset != current || out.empty()) {
            if (!out.empty()) {
                out += '\n';
            }
            current = r.dataset;
            out += fmt::format("### {}: top model performance per learning style (weighted F1)\n\n", current);
            out += "| Regime | Top Mean (Model) | Top Peak (Model) | Tightest IQR (Model) |\n";
            out += "|---|---|---|---|\n";
        }
        std::string regime = r.shot_type;
        try {
            regime = std::string(display_name(parse_shot_type(r.shot_type)));
        } catch (const ConfigError&) {
        }
        out += fmt::format("| {} | {:.3f} ({}) | {:.3f} ({}) | {:.4f} ({}) |\n", regime, r.top_mean, r.top_mean_model,
                           r.top_peak, r.top_peak_model, r.tightest_iqr, r.tightest_iqr_model);
    }
    return out;
}

std::vector<ExperimentCell> read_cells(const std::filesystem::path& path, char delimiter)
{
    const auto table = csv::read_file(path.string(), delimiter);
    auto col = [&](std::string_view name) {
        auto i = table.column(name);
        if (i == std::string::npos) {
            throw ConfigError(fmt::format("'{}' lacks a '{}' column", path.string(), name));
        }
        return i;
    };
    const auto model = col("model");
    const auto dataset = col("dataset");
    const auto shot = col("shot_type");
    const auto style = col("prompt_style");
    const auto temp = col("temperature");
    const auto f1 = col("f1_weighted");
    std::vector<ExperimentCell> cells;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size()) {
            throw LoadError(r + 1, "", "field count differs from header");
        }
        ExperimentCell c{row[model], row[dataset], row[shot], row[style], row[temp], 0.0};
        try {
            std::size_t used = 0;
            c.f1_weighted = std::stod(row[f1], &used);
            if (used != row[f1].size()) {
                throw std::invalid_argument("trailing characters");
            }
        } catch (const std::exception&) {
            throw LoadError(r + 1, "f1_weighted", fmt::format("unparseable number '{}'", row[f1]));
        }
        cells.push_back(std::move(c));
    }
    return cells;
}

namespace {

std::string number(double v)
{
    return fmt::format("{:.10g}", v);
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw PersistenceError(fmt::format("cannot write '{}'", path.string()));
    }
}

} // namespace

std::vector<std::string> write_analysis(std::span<const ExperimentCell> cells, const std::filesystem::path& out_dir,
                                        const AnalysisOptions& options)
{
    std::vector<std::string> notes;
    std::filesystem::create_directories(out_dir / "plots");

    std::map<std::string, std::vector<ExperimentCell>> by_dataset;
    for (const auto& c : cells) {
        by_dataset[c.dataset].push_back(c);
    }

    // variance shares
    std::string variance_csv = "dataset,factor,sum_squares,share\n";
    nlohmann::json variance_plot = nlohmann::json::array();
    for (const auto& [dataset, group] : by_dataset) {
        // factors with a single level carry no variance and would only add a zero bar
        std::vector<Factor> factors;
        for (auto f : options.factors) {
            std::set<std::string> levels;
            for (const auto& c : group) {
                levels.insert(level_of(c, f));
            }
            if (levels.size() > 1) {
                factors.push_back(f);
            }
        }
        if (factors.empty()) {
            notes.push_back(fmt::format("{}: variance decomposition skipped, every factor has a single level", dataset));
            continue;
        }
        try {
            auto vs = variance_decomposition(group, factors, options.replicates);
            nlohmann::json bars = nlohmann::json::object();
            for (std::size_t i = 0; i < vs.factors.size(); ++i) {
                variance_csv += fmt::format("{},{},{},{}\n", csv::quote(dataset), to_string(vs.factors[i]),
                                            number(vs.sum_squares[i]), number(vs.shares[i]));
                bars[std::string(to_string(vs.factors[i]))] = vs.shares[i];
            }
            variance_plot.push_back({{"dataset", dataset}, {"shares", bars}});
        } catch (const Error& e) {
            notes.push_back(fmt::format("{}: variance decomposition skipped: {}", dataset, e.what()));
        }
    }
    write_text(out_dir / "variance_shares.csv", variance_csv);
    write_text(out_dir / "plots" / "variance.json", variance_plot.dump(2) + "\n");

    // ranks
    std::string ranks_csv = "dataset,shot_type,model,mean_f1_weighted,cells,rank\n";
    nlohmann::json ranks_plot = nlohmann::json::array();
    try {
        for (const auto& g : rank_models(cells)) {
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& r : g.ranking) {
                ranks_csv += fmt::format("{},{},{},{},{},{}\n", csv::quote(g.dataset), g.shot_type, csv::quote(r.model),
                                         number(r.mean), r.cells, r.rank);
                entries.push_back({{"model", r.model}, {"mean", r.mean}, {"rank", r.rank}});
            }
            ranks_plot.push_back({{"dataset", g.dataset}, {"shot_type", g.shot_type}, {"ranking", entries}});
        }
    } catch (const Error& e) {
        notes.push_back(fmt::format("model ranking skipped: {}", e.what()));
    }
    write_text(out_dir / "model_ranks.csv", ranks_csv);
    write_text(out_dir / "plots" / "ranks.json", ranks_plot.dump(2) + "\n");

    // learning-style gains
    std::string gains_csv = "dataset,model,zeroshot,fewshot_random,fewshot_targeted,gain_zero_to_random_pct,"
                            "gain_random_to_targeted_pct,negative_learning\n";
    nlohmann::json gains_plot = nlohmann::json::array();
    try {
        for (const auto& g : learning_style_gain(cells)) {
            auto pct = [](const std::optional<double>& v) { return v ? number(*v) : std::string("undefined"); };
            auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
            std::string negative;
            if (g.negative_zero_to_random()) {
                negative = "zero_to_random";
            }
            if (g.negative_random_to_targeted()) {
                negative += negative.empty() ? "random_to_targeted" : "|random_to_targeted";
            }
            gains_csv += fmt::format("{},{},{},{},{},{},{},{}\n", csv::quote(g.dataset), csv::quote(g.model),
                                     number(g.zeroshot), number(g.fewshot_random), number(g.fewshot_targeted),
                                     pct(g.zero_to_random), pct(g.random_to_targeted), negative);
            gains_plot.push_back({{"dataset", g.dataset},
                                  {"model", g.model},
                                  {"zero_to_random_pct", opt(g.zero_to_random)},
                                  {"random_to_targeted_pct", opt(g.random_to_targeted)}});
        }
    } catch (const Error& e) {
        notes.push_back(fmt::format("learning-style gains skipped: {}", e.what()));
    }
    write_text(out_dir / "learning_gains.csv", gains_csv);
    write_text(out_dir / "plots" / "gains.json", gains_plot.dump(2) + "\n");

    auto regimes = summarize_regimes(cells);
    write_text(out_dir / "regime_summary.md", regimes.empty() ? "No completed cells.\n" : regime_table_markdown(regimes));
    return notes;
}

} // namespace modechoice
