// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "modechoice/analysis.hpp"
#include "modechoice/errors.hpp"
#include "modechoice/finetune.hpp"
#include "modechoice/metrics.hpp"
#include "modechoice/reasoning.hpp"
#include "modechoice/runner.hpp"
#include "modechoice/similarity.hpp"
#include "modechoice/synthetic.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace modechoice;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& why)
    {
        if (!ok && pass) {
            pass = false;
            detail = why;
        }
    }
};

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

ShareDistribution dist(std::vector<double> p)
{
    return ShareDistribution{std::move(p), false, 0.0};
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n, double zero_prob)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    double sum = 0;
    for (auto& v : p) {
        v = u(rng) < zero_prob ? 0.0 : u(rng);
        sum += v;
    }
    if (sum == 0) {
        p[0] = sum = 1.0;
    }
    for (auto& v : p) {
        v /= sum;
    }
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

// Relative path -> bytes for every file under dir.
std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
        }
    }
    return out;
}

Outcome metric_oracle()
{
    Outcome o;
    std::mt19937_64 rng(20240601);
    const auto t0 = Clock::now();
    std::size_t checked = 0;
    for (int cell = 0; cell < 100; ++cell) {
        const int C = 2 + static_cast<int>(rng() % 5);
        const int N = 10 + static_cast<int>(rng() % 191);
        std::vector<std::string> labels;
        for (int c = 0; c < C; ++c) {
            labels.push_back(fmt::format("MODE{}", c));
        }
        // Skewed predictions so empty classes and invalid answers both occur.
        std::vector<int> t(N), p(N);
        std::vector<DecisionRecord> records;
        std::map<std::string, std::string> truths;
        const int favoured = static_cast<int>(rng() % C);
        for (int i = 0; i < N; ++i) {
            t[i] = static_cast<int>(rng() % C);
            const auto r = rng() % 20;
            p[i] = r == 0 ? -1 : r < 8 ? t[i] : r < 12 ? favoured : static_cast<int>(rng() % C);
            DecisionRecord rec;
            rec.agent_id = fmt::format("agent{}", i);
            rec.config_fingerprint = "fp";
            rec.predicted_mode = p[i] < 0 ? std::string(kInvalidMode) : labels[p[i]];
            records.push_back(rec);
            truths[rec.agent_id] = labels[t[i]];
        }
        const auto got = evaluate_run(records, truths, labels);
        const auto want = oracle::metrics(t, p, C);
        const std::pair<double, double> pairs[] = {{got.accuracy, want.accuracy},
                                                   {got.precision_macro, want.precision_macro},
                                                   {got.recall_macro, want.recall_macro},
                                                   {got.f1_macro, want.f1_macro},
                                                   {got.f1_weighted, want.f1_weighted},
                                                   {got.dist_mae, want.dist_mae},
                                                   {got.jsd, want.jsd},
                                                   {got.cross_entropy, want.cross_entropy}};
        for (const auto& [g, w] : pairs) {
            ++checked;
            o.require(oracle::close(g, w, 1e-9), fmt::format("cell {}: {} vs oracle {}", cell, g, w));
        }
    }
    const double secs = seconds_since(t0);
    o.require(secs < 5.0, fmt::format("took {:.2f} s", secs));
    if (o.pass) {
        o.detail = fmt::format("100 cells, {} metric values within 1e-9 relative, {:.3f} s", checked, secs);
    }
    return o;
}

Outcome worked_example()
{
    Outcome o;
    std::vector<double> a{0.81}, b{0.80}, c{0.20};
    const double near = numeric_group_similarity(a, b);
    const double far = numeric_group_similarity(a, c);
    o.require(std::fabs(near - 0.99) <= 0.005, fmt::format("Sim(0.81, 0.80) = {}", near));
    o.require(std::fabs(far - 0.625) <= 0.005, fmt::format("Sim(0.81, 0.20) = {}", far));
    if (o.pass) {
        o.detail = fmt::format("Sim(0.81,0.80) = {:.4f} (0.99), Sim(0.81,0.20) = {:.4f} (0.625)", near, far);
    }
    return o;
}

Outcome matrix_counts()
{
    Outcome o;
    const auto config = RunConfig::load(fs::path(MODECHOICE_TEST_DATA) / "matrix_config.json");
    const auto manifest = config.manifest();
    o.require(config.endpoints.size() == 11 && config.datasets.size() == 3, "config axes are not (11, 3, 3, 2, 2)");
    o.require(manifest.size() == 396, fmt::format("{} configs", manifest.size()));
    o.require(manifest.planned_calls() == 79200, fmt::format("{} planned calls", manifest.planned_calls()));
    if (o.pass) {
        o.detail = "396 configs, 79200 planned calls";
    }
    return o;
}

Outcome jsd_properties()
{
    Outcome o;
    std::mt19937_64 rng(7);
    const double ln2 = std::log(2.0);
    double worst_asym = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + rng() % 6;
        auto p = dist(random_simplex(rng, n, 0.2));
        auto q = dist(random_simplex(rng, n, 0.2));
        const double pq = jsd(p, q, 1e-9);
        const double qp = jsd(q, p, 1e-9);
        worst_asym = std::max(worst_asym, std::fabs(pq - qp));
        o.require(std::fabs(pq - qp) <= 1e-12, fmt::format("asymmetry {}", std::fabs(pq - qp)));
        o.require(jsd(p, p, 1e-9) == 0.0, "jsd(p,p) != 0");
        o.require(pq >= 0.0 && pq <= ln2 + 1e-12, fmt::format("jsd {} outside [0, ln 2]", pq));
    }
    const double disjoint = jsd(dist({1, 0}), dist({0, 1}), 1e-9);
    o.require(std::fabs(disjoint - ln2) <= 1e-6, fmt::format("disjoint pair gives {}", disjoint));
    if (o.pass) {
        o.detail = fmt::format("1000 pairs, max asymmetry {:.1e}, disjoint = ln 2 - {:.2e}", worst_asym, ln2 - disjoint);
    }
    return o;
}

Outcome ce_spike()
{
    Outcome o;
    std::mt19937_64 rng(11);
    const double eps = 1e-9;
    std::size_t heavy = 0;
    double smallest_heavy = 1e300;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 2 + rng() % 5;
        auto p = random_simplex(rng, n, 0.0);
        auto q = random_simplex(rng, n, 0.0);
        const std::size_t dropped = rng() % n;
        q[dropped] = 0.0;
        double sum = 0;
        for (double v : q) {
            sum += v;
        }
        if (sum == 0) {
            continue;
        }
        for (auto& v : q) {
            v /= sum;
        }
        const double ce = cross_entropy(dist(p), dist(q), eps);
        const double q_smoothed = eps / (1.0 + static_cast<double>(n) * eps);
        const double bound = -((p[dropped] + eps) / (1.0 + static_cast<double>(n) * eps)) * std::log(q_smoothed);
        o.require(std::isfinite(ce), "non-finite cross-entropy");
        o.require(ce >= bound, fmt::format("CE {} below -p ln eps bound {}", ce, bound));
        if (p[dropped] >= 0.5) {
            ++heavy;
            smallest_heavy = std::min(smallest_heavy, ce);
            o.require(ce > 9.0, fmt::format("CE {} with a dropped class of share {}", ce, p[dropped]));
        }
    }
    const double half = cross_entropy(dist({0.5, 0.5}), dist({1.0, 0.0}), eps);
    o.require(half > 9.0 && std::isfinite(half), fmt::format("two-class spike {}", half));
    if (o.pass) {
        o.detail = fmt::format("1000 cells finite and above -p ln eps; half-share spike {:.2f}; {} cells with share >= 0.5 "
                               "all > 9 (min {:.2f})",
                               half, heavy, smallest_heavy);
    }
    return o;
}

Outcome sampler_equivalence()
{
    Outcome o;
    std::mt19937_64 rng(31337);
    std::size_t cases = 0;
    while (cases < 1000) {
        const auto schema = oracle::random_schema(rng);
        const std::size_t pool_size = 10 + rng() % 40;
        std::vector<ChoiceInstance> pool;
        for (std::size_t i = 0; i < pool_size; ++i) {
            pool.push_back(oracle::random_instance(schema, rng, fmt::format("p{}", i), 0.15));
        }
        NumericNormalizer norm;
        try {
            norm = fit_normalizer(pool, schema);
        } catch (const FitError&) {
            continue;
        }
        const auto subject = oracle::random_instance(schema, rng, "subject", 0.15);
        std::uniform_real_distribution<double> u(0.05, 1.0);
        SimilarityWeights w{u(rng), u(rng), u(rng), u(rng)};
        const double s = w.socio + w.trip_num + w.trip_cat + w.additional;
        w = {w.socio / s, w.trip_num / s, w.trip_cat / s, 1.0 - (w.socio + w.trip_num + w.trip_cat) / s};
        const std::size_t k = 1 + rng() % 8;
        std::vector<ScoredExample> got;
        try {
            got = select_targeted(subject, pool, k, schema, w, norm);
        } catch (const UndefinedMetricError&) {
            continue;
        }
        oracle::Similarity ref(schema, pool, w);
        const auto want = ref.top_k(subject, pool, k);
        for (std::size_t i = 0; i < k; ++i) {
            o.require(got[i].pool_index == want[i], fmt::format("case {}: rank {} picked {} not {}", cases, i,
                                                                got[i].pool_index, want[i]));
            const double t = ref.total(subject, pool[want[i]]);
            o.require(std::fabs(got[i].similarity.total - t) <= 1e-12,
                      fmt::format("case {}: total {} vs {}", cases, got[i].similarity.total, t));
        }
        ++cases;
    }
    if (o.pass) {
        o.detail = "1000 mixed-schema cases agree with exhaustive sort";
    }
    return o;
}

RunConfig campaign_config(const fs::path& out)
{
    RunConfig c;
    c.output_dir = out;
    c.seed = 42;
    for (const char* name : {"mock-alpha", "mock-beta"}) {
        ModelEndpoint e;
        e.name = name;
        e.model_name = name;
        c.endpoints.push_back(e);
    }
    DatasetConfig d;
    d.name = "synthetic";
    d.schema = swissmetro_like_schema();
    d.n_respondents = 100;
    d.n_test = 200;
    d.split_seed = 7;
    c.datasets = {d};
    return c;
}

// Runs every cell; a limit stops the whole campaign after that many new records.
double run_campaign(const RunConfig& config, const std::vector<ChoiceInstance>& data, std::optional<std::size_t> limit)
{
    const auto t0 = Clock::now();
    auto prepared = prepare_dataset(config.datasets[0], data);
    const auto manifest = config.manifest();
    RunOptions options;
    options.output_dir = config.output_dir;
    for (const auto& entry : manifest.entries) {
        if (limit && *limit == 0) {
            break;
        }
        MockChatBackend backend(entry.config.model, prepared, config.mock);
        options.max_new_records = limit;
        auto s = run_experiment(entry.config, prepared, backend, options);
        if (limit) {
            *limit -= s.new_records;
        }
    }
    if (!limit) {
        std::map<std::string, PreparedDataset> ds;
        ds.emplace(config.datasets[0].name, std::move(prepared));
        write_report(config, manifest, ds);
    }
    return seconds_since(t0);
}

Outcome end_to_end()
{
    Outcome o;
    const auto root = fixture::temp_dir("acceptance_e2e");
    const auto survey = make_swissmetro_like({400, 9, 2024, 0.0});
    const auto a = campaign_config(root / "a");
    const auto b = campaign_config(root / "b");
    const auto c = campaign_config(root / "c");
    o.require(a.manifest().size() == 24 && a.manifest().planned_calls() == 4800, "campaign is not 24 cells x 200");

    const double secs = run_campaign(a, survey.data, std::nullopt);
    run_campaign(b, survey.data, std::nullopt);
    run_campaign(c, survey.data, std::size_t{1234});
    const auto interrupted = snapshot(c.output_dir / "cells");
    run_campaign(c, survey.data, std::nullopt);

    const auto sa = snapshot(a.output_dir);
    const auto sb = snapshot(b.output_dir);
    const auto sc = snapshot(c.output_dir);
    std::size_t records = 0;
    for (const auto& [name, bytes] : sa) {
        if (name.ends_with(".records.jsonl")) {
            records += static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n'));
        }
    }
    o.require(records == 4800, fmt::format("{} records persisted", records));
    o.require(secs < 60.0, fmt::format("campaign took {:.1f} s", secs));
    o.require(sa == sb, "two runs at the same seed differ");
    o.require(interrupted != sa, "interrupt did not cut the campaign short");
    o.require(sa == sc, "resumed campaign differs from the uninterrupted one");
    if (o.pass) {
        o.detail = fmt::format("24 cells, {} records, {:.2f} s; {} files byte-identical across runs and after resume",
                               records, secs, sa.size());
    }
    return o;
}

Outcome anova()
{
    Outcome o;
    auto cell = [](std::string m, std::string s, double f1) {
        return ExperimentCell{std::move(m), "d", std::move(s), "direct", "0.5", f1};
    };
    std::vector<ExperimentCell> cells{cell("a", "x", 0), cell("a", "y", 1), cell("b", "x", 2), cell("b", "y", 3)};
    const std::vector<Factor> f{Factor::model, Factor::shot_type};
    const auto v = variance_decomposition(cells, f);
    o.require(v.sum_squares[0] == 4.0 && v.sum_squares[1] == 1.0,
              fmt::format("SS ({}, {})", v.sum_squares[0], v.sum_squares[1]));
    o.require(v.shares[0] == 0.8 && v.shares[1] == 0.2, fmt::format("shares ({}, {})", v.shares[0], v.shares[1]));

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.2, 0.9);
    double worst = 0;
    for (int t = 0; t < 100; ++t) {
        const std::size_t models = 2 + rng() % 4;
        const std::size_t reps = 1 + rng() % 2;
        std::vector<ExperimentCell> design;
        for (std::size_t m = 0; m < models; ++m) {
            for (auto shot : {"zeroshot", "fewshot_random", "fewshot_targeted"}) {
                for (auto style : {"direct", "cot_react"}) {
                    for (auto temp : {"0.5", "1.0"}) {
                        for (std::size_t r = 0; r < reps; ++r) {
                            design.push_back({fmt::format("m{}", m), "d", shot, style, temp, u(rng)});
                        }
                    }
                }
            }
        }
        const auto mode = t % 2 ? ReplicateHandling::pooled : ReplicateHandling::cell_means;
        const auto s = variance_decomposition(design, kAllFactors, mode);
        double sum = 0;
        for (double x : s.shares) {
            sum += x;
        }
        worst = std::max(worst, std::fabs(sum - 1.0));
    }
    o.require(worst <= 1e-12, fmt::format("share sum off by {}", worst));
    if (o.pass) {
        o.detail = fmt::format("2x2 shares exactly (0.8, 0.2); 100 random designs sum to 1 within {:.1e}", worst);
    }
    return o;
}

Outcome esi_properties()
{
    Outcome o;
    FactorLexicon lex;
    o.require(esi("", lex).value == 0.0, "empty text");
    o.require(std::fabs(esi("The train saves time despite the higher cost", lex).value - 0.4) < 1e-15, "0.4 example");
    o.require(esi("time cost comfort convenience frequency", lex).value == 1.0, "full coverage");

    std::mt19937_64 rng(5);
    const std::vector<std::string> filler{"the", "train", "is", "fine", "and", "i", "would", "go", "today", "via"};
    for (int t = 0; t < 1000; ++t) {
        std::string text;
        for (int w = static_cast<int>(rng() % 12); w > 0; --w) {
            text += filler[rng() % filler.size()] + " ";
        }
        const double before = esi(text, lex).value;
        const auto& factor = lex.factors()[rng() % lex.size()];
        auto pos = text.empty() ? 0 : rng() % text.size();
        while (pos > 0 && text[pos - 1] != ' ') {
            --pos;
        }
        std::string grown = text;
        grown.insert(pos, factor + " ");
        const double after = esi(grown, lex).value;
        o.require(after >= before, fmt::format("inserting '{}' lowered ESI", factor));
        o.require(after > 0.0, "inserted factor not found");
        std::string flipped = grown;
        for (auto& ch : flipped) {
            if (rng() % 2) {
                ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            }
        }
        o.require(esi(flipped, lex).value == after, "case changed the score");
    }
    if (o.pass) {
        o.detail = "forced 0 / 0.4 / 1.0; 1000 random insertions monotone and case-invariant";
    }
    return o;
}

Outcome masking()
{
    Outcome o;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    const int vocab = 16;
    // Reference masked loss: mean -ln P(label) over unmasked positions.
    auto loss = [&](const MaskedSequence& m, const std::vector<std::vector<double>>& probs) {
        double total = 0;
        int n = 0;
        for (std::size_t j = 0; j < m.labels.size(); ++j) {
            if (m.labels[j] == kIgnoreIndex) {
                continue;
            }
            total -= std::log(probs[j][static_cast<std::size_t>(m.labels[j])]);
            ++n;
        }
        return total / n;
    };
    for (int t = 0; t < 1000; ++t) {
        const std::size_t len = 2 + rng() % 30;
        std::vector<std::int32_t> tokens(len);
        for (auto& tok : tokens) {
            tok = static_cast<std::int32_t>(rng() % vocab);
        }
        const std::size_t prompt_len = 1 + rng() % (len - 1);
        const auto m = mask_labels(tokens, prompt_len);
        o.require(std::count(m.labels.begin(), m.labels.end(), kIgnoreIndex) == static_cast<long>(prompt_len),
                  "wrong number of masked labels");
        std::vector<std::vector<double>> probs(len, std::vector<double>(vocab));
        for (auto& row : probs) {
            for (auto& p : row) {
                p = u(rng);
            }
        }
        const double base = loss(m, probs);
        for (std::size_t j = 0; j < prompt_len; ++j) {
            for (auto& p : probs[j]) {
                p = u(rng);
            }
        }
        o.require(loss(m, probs) == base, "masked positions changed the loss");
    }

    const auto survey = make_swissmetro_like({200, 9, 77, 0.05});
    const auto split = split_train_test(survey.data, 100, 200, 7);
    std::vector<std::string> test_ids;
    for (const auto& i : split.test) {
        test_ids.push_back(i.id);
    }
    const auto corpus = build_training_corpus(split.train, survey.schema, PromptTemplate::builtin(PromptStyle::direct),
                                              test_ids, 0);
    std::size_t hits = 0;
    for (const auto& ex : corpus.examples) {
        if (leaks_answer(ex) || ex.instruction.find(std::string(kChoiceMarker) + " " + ex.selected_mode) != std::string::npos) {
            ++hits;
        }
    }
    o.require(hits == 0, fmt::format("{} leaking instructions", hits));
    if (o.pass) {
        o.detail = fmt::format("1000 random sequences; corpus of {} examples has 0 answer-position labels",
                               corpus.examples.size());
    }
    return o;
}

Outcome comparison_table()
{
    Outcome o;
    const auto dir = fixture::temp_dir("acceptance_table");
    {
        std::ofstream t(dir / "runs.csv");
        t << "model,dataset,shot_type,prompt_style,temperature,f1_weighted\n";
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> u(0.3, 0.8);
        for (auto m : {"model-x", "model-y", "model-z"}) {
            for (auto s : {"zeroshot", "fewshot_random", "fewshot_targeted"}) {
                for (auto p : {"direct", "cot_react"}) {
                    for (auto temp : {"0.5", "1.0"}) {
                        t << m << ",user-data," << s << ',' << p << ',' << temp << ',' << u(rng) << '\n';
                    }
                }
            }
        }
    }
    write_analysis(read_cells(dir / "runs.csv"), dir / "out");
    const auto md = slurp(dir / "out" / "regime_summary.md");
    o.require(md.find("| Regime | Top Mean (Model) | Top Peak (Model) | Tightest IQR (Model) |") != std::string::npos,
              "header row missing");
    for (auto regime : {"| Zero-Shot |", "| Random Few-Shot |", "| Targeted Few-Shot |"}) {
        o.require(md.find(regime) != std::string::npos, fmt::format("row {} missing", regime));
    }
    if (o.pass) {
        o.detail = "table emitted from user-supplied runs; published headline figures need the original weights and "
                   "private data and are not reproduced here";
    }
    return o;
}

} // namespace

int main()
{
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"metric oracle suite", metric_oracle},
        {"worked similarity example", worked_example},
        {"matrix counts", matrix_counts},
        {"JSD properties", jsd_properties},
        {"smoothing and cross-entropy spike", ce_spike},
        {"targeted sampler equivalence", sampler_equivalence},
        {"end-to-end determinism", end_to_end},
        {"ANOVA oracle", anova},
        {"ESI properties", esi_properties},
        {"mask correctness and leakage", masking},
        {"comparison table emission", comparison_table},
    };
    int failed = 0;
    int index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = fmt::format("exception: {}", e.what());
        }
        failed += o.pass ? 0 : 1;
        fmt::print("{} [{:>2}] {}: {}\n", o.pass ? "PASS" : "FAIL", index, name, o.detail);
    }
    fmt::print("{} of {} criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
