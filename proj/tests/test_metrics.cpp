#include <doctest.h>

#include <cmath>
#include <random>

#include "modechoice/errors.hpp"
#include "modechoice/metrics.hpp"
#include "support/oracles.hpp"

using namespace modechoice;

namespace {

const std::vector<std::string> kAB{"1", "2"};

ShareDistribution dist(std::vector<double> p)
{
    return ShareDistribution{std::move(p), false, 0.0};
}

std::vector<DecisionRecord> records_for(const std::vector<std::string>& preds)
{
    std::vector<DecisionRecord> out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        DecisionRecord r;
        r.agent_id = "a" + std::to_string(i);
        r.config_fingerprint = "fp";
        r.predicted_mode = preds[i];
        out.push_back(r);
    }
    return out;
}

std::map<std::string, std::string> truths_for(const std::vector<std::string>& truth)
{
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        out["a" + std::to_string(i)] = truth[i];
    }
    return out;
}

} // namespace

TEST_CASE("confusion tabulation")
{
    std::vector<std::string> y{"1", "1", "2"}, yhat{"1", "2", "2"};
    auto cm = confusion(y, yhat, kAB);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(1, 0) == 0);

    std::vector<std::string> with_invalid{"1", "INVALID", "2"};
    auto ci = confusion(y, with_invalid, kAB);
    CHECK(ci.total() == 3);
    CHECK(ci.invalid_total() == 1);
    CHECK(ci.invalid(0) == 1);
    CHECK(ci.support(0) == 2);
    CHECK(ci.predicted(0) == 1);

    auto diag = confusion(y, y, kAB);
    CHECK(diag.at(0, 1) == 0);
    CHECK(diag.at(1, 0) == 0);
}

TEST_CASE("alignment errors")
{
    auto recs = records_for({"1", "2"});
    CHECK_THROWS_AS(confusion(recs, truths_for({"1"}), kAB), AlignmentError);
    CHECK_THROWS_AS(confusion(recs, truths_for({"1", "2", "1"}), kAB), AlignmentError);
}

TEST_CASE("instance metrics by hand")
{
    std::vector<std::string> y{"1", "1", "2"}, yhat{"1", "2", "2"};
    auto m = instance_metrics(confusion(y, yhat, kAB));
    CHECK(m.accuracy == doctest::Approx(2.0 / 3));
    CHECK(m.f1_macro == doctest::Approx(2.0 / 3));
    CHECK(m.f1_weighted == doctest::Approx(2.0 / 3));

    auto perfect = instance_metrics(confusion(y, y, kAB));
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision_macro == 1.0);
    CHECK(perfect.recall_macro == 1.0);
    CHECK(perfect.f1_weighted == 1.0);

    std::vector<std::string> one{"1", "1", "1"};
    auto collapse = instance_metrics(confusion(y, one, kAB));
    CHECK(collapse.recall_macro == doctest::Approx(0.5));

    CHECK_THROWS_AS(instance_metrics(ConfusionMatrix(kAB)), UndefinedMetricError);
}

TEST_CASE("smoothing")
{
    auto s = smooth_distribution(dist({1, 0, 0}), 1e-9);
    CHECK(s.p[0] == doctest::Approx(1 - 2e-9).epsilon(1e-15));
    CHECK(s.p[1] == doctest::Approx(1e-9).epsilon(1e-6));
    auto u = smooth_distribution(dist({0.25, 0.25, 0.25, 0.25}));
    for (double v : u.p) {
        CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    }
}

TEST_CASE("distribution distances")
{
    CHECK(dist_mae(dist({0.5, 0.3, 0.2}), dist({0.5, 0.3, 0.2})) == 0.0);
    CHECK(dist_mae(dist({0.5, 0.3, 0.2}), dist({0.4, 0.4, 0.2})) == doctest::Approx(0.2 / 3));
    CHECK(dist_mae(dist({1, 0}), dist({0, 1})) == 1.0);

    CHECK(jsd(dist({0.2, 0.8}), dist({0.2, 0.8})) == 0.0);
    CHECK(jsd(dist({0.5, 0.5, 0}), dist({0.25, 0.25, 0.5})) == doctest::Approx(0.21576).epsilon(1e-4));
    CHECK(std::fabs(jsd(dist({1, 0}), dist({0, 1})) - std::log(2.0)) < 1e-6);

    CHECK(cross_entropy(dist({0.5, 0.5}), dist({0.5, 0.5})) == doctest::Approx(std::log(2.0)));
    CHECK(std::fabs(cross_entropy(dist({1, 0, 0}), dist({0.5, 0.5, 0})) - std::log(2.0)) < 1e-7);
    double spike = cross_entropy(dist({0.5, 0.5}), dist({1.0, 0.0}), 1e-9);
    CHECK(std::isfinite(spike));
    CHECK(spike > 9.0);
}

TEST_CASE("evaluate_run closed forms")
{
    std::vector<std::string> truth{"A", "A", "A", "B", "C", "A"};
    std::vector<std::string> labels{"A", "B", "C"};
    auto perfect = evaluate_run(records_for(truth), truths_for(truth), labels);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.jsd == 0.0);
    CHECK(perfect.dist_mae == 0.0);

    auto collapse = evaluate_run(records_for({"A", "A", "A", "A", "A", "A"}), truths_for(truth), labels);
    // weighted F1 of predicting the majority: (4/6) * F1_A, F1_A = 2*(4/6)/(1+4/6)
    double f1a = 2 * (4.0 / 6) / (1 + 4.0 / 6);
    CHECK(collapse.f1_weighted == doctest::Approx(4.0 / 6 * f1a));
    // two missing classes of share 1/6 each: about (1/3) * ln(1e9)
    CHECK(collapse.cross_entropy > 6.0);
    CHECK(collapse.jsd > 0.1);

    auto invalid = evaluate_run(records_for({"INVALID", "INVALID", "INVALID", "INVALID", "INVALID", "INVALID"}),
                                truths_for(truth), labels);
    CHECK(invalid.invalid_count == 6);
    CHECK(invalid.accuracy == 0.0);
    CHECK(std::isnan(invalid.jsd));
    CHECK(invalid.to_json()["jsd"].is_null());
}

TEST_CASE("evaluate_run against the brute-force oracle")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 2 + static_cast<int>(rng() % 5);
        const int N = 10 + static_cast<int>(rng() % 191);
        std::vector<std::string> labels;
        for (int c = 0; c < C; ++c) {
            labels.push_back("M" + std::to_string(c));
        }
        std::vector<int> t(N), p(N);
        std::vector<std::string> ts, ps;
        for (int i = 0; i < N; ++i) {
            t[i] = static_cast<int>(rng() % C);
            p[i] = rng() % 10 == 0 ? -1 : static_cast<int>(rng() % C);
            ts.push_back(labels[t[i]]);
            ps.push_back(p[i] < 0 ? "INVALID" : labels[p[i]]);
        }
        auto got = evaluate_run(records_for(ps), truths_for(ts), labels);
        auto want = oracle::metrics(t, p, C);
        CHECK(oracle::close(got.accuracy, want.accuracy));
        CHECK(oracle::close(got.precision_macro, want.precision_macro));
        CHECK(oracle::close(got.recall_macro, want.recall_macro));
        CHECK(oracle::close(got.f1_macro, want.f1_macro));
        CHECK(oracle::close(got.f1_weighted, want.f1_weighted));
        CHECK(oracle::close(got.dist_mae, want.dist_mae));
        CHECK(oracle::close(got.jsd, want.jsd));
        CHECK(oracle::close(got.cross_entropy, want.cross_entropy));
    }
}
