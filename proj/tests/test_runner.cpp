#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "modechoice/csv.hpp"
#include "modechoice/errors.hpp"
#include "modechoice/runner.hpp"
#include "modechoice/synthetic.hpp"
#include "support/fixtures.hpp"

using namespace modechoice;

namespace {

std::vector<std::string> names(std::size_t n, const char* prefix)
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(prefix + std::to_string(i));
    }
    return out;
}

struct Campaign {
    std::filesystem::path dir;
    RunConfig config;
    SyntheticSurvey survey;

    explicit Campaign(const std::string& name)
        : dir(fixture::temp_dir(name))
        , survey(make_swissmetro_like({160, 5, 21, 0.05}))
    {
        config.output_dir = dir / "out";
        ModelEndpoint e;
        e.name = "mock-a";
        e.model_name = "mock-a";
        config.endpoints = {e};
        DatasetConfig d;
        d.name = "sm";
        d.schema = survey.schema;
        d.n_respondents = 100;
        d.n_test = 200;
        config.datasets = {d};
        config.shots = {ShotType::zeroshot, ShotType::fewshot_targeted};
        config.styles = {PromptStyle::cot_react};
        config.temperatures = {0.5};
    }

    PreparedDataset data() const { return prepare_dataset(config.datasets[0], survey.data); }

    RunOptions options() const
    {
        RunOptions o;
        o.output_dir = config.output_dir;
        return o;
    }
};

// Fails every call after the first `healthy` ones.
class FlakyBackend final : public ChatBackend {
public:
    FlakyBackend(ChatBackend& inner, std::size_t healthy)
        : inner_(inner)
        , healthy_(healthy)
    {
    }
    Completion complete(const ChatRequest& r) override
    {
        if (calls_++ >= healthy_) {
            throw GatewayError("connection refused", 0, 4);
        }
        return inner_.complete(r);
    }

private:
    ChatBackend& inner_;
    std::size_t healthy_;
    std::size_t calls_ = 0;
};

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_CASE("matrix enumeration")
{
    auto models = names(11, "m");
    auto datasets = names(3, "d");
    std::vector<ShotType> shots{ShotType::zeroshot, ShotType::fewshot_random, ShotType::fewshot_targeted};
    std::vector<PromptStyle> styles{PromptStyle::direct, PromptStyle::cot_react};
    std::vector<double> temps{0.5, 1.0};
    auto m = enumerate_matrix(models, datasets, shots, styles, temps);
    CHECK(m.size() == 396);
    CHECK(m.planned_calls() == 79200);
    std::set<std::string> fps;
    for (const auto& e : m.entries) {
        fps.insert(e.config.fingerprint());
    }
    CHECK(fps.size() == 396);
    CHECK(enumerate_matrix(models, datasets, shots, styles, temps).entries[17].config.fingerprint()
          == m.entries[17].config.fingerprint());

    std::vector<std::string> one_model{"m"}, one_data{"d"};
    std::vector<ShotType> one_shot{ShotType::zeroshot};
    std::vector<PromptStyle> one_style{PromptStyle::direct};
    std::vector<double> one_temp{0.5};
    CHECK(enumerate_matrix(one_model, one_data, one_shot, one_style, one_temp).size() == 1);

    std::vector<std::string> dup{"m", "m"};
    CHECK_THROWS_AS(enumerate_matrix(dup, one_data, one_shot, one_style, one_temp), ConfigError);
    std::vector<double> none;
    CHECK_THROWS_AS(enumerate_matrix(one_model, one_data, one_shot, one_style, none), ConfigError);
}

TEST_CASE("fingerprint and stem")
{
    ExperimentConfig c{"llama/3", "sm", ShotType::fewshot_random, PromptStyle::direct, 1.0, 5, 42, "abc"};
    CHECK(c.stem() == "sm_llama-3_fewshot_random_direct_1.0");
    auto d = c;
    d.template_hash = "abd";
    CHECK(c.fingerprint() != d.fingerprint());
    CHECK(c.fingerprint().size() == 16);
    CHECK(format_temperature(0.5) == "0.5");
}

TEST_CASE("fresh cell, interrupt, resume and rerun")
{
    Campaign camp("runner_resume");
    auto data = camp.data();
    auto manifest = camp.config.manifest();
    const auto& cfg = manifest.entries[1].config;
    REQUIRE(cfg.shot == ShotType::fewshot_targeted);

    MockChatBackend mock("mock-a", data);
    auto opts = camp.options();
    opts.max_new_records = 50;
    auto first = run_experiment(cfg, data, mock, opts);
    CHECK(first.new_records == 50);
    CHECK(first.status == CellStatus::partial);
    CHECK(cell_status(camp.config.output_dir, manifest.entries[1]) == CellStatus::partial);

    const auto before = mock.calls();
    opts.max_new_records.reset();
    auto second = run_experiment(cfg, data, mock, opts);
    CHECK(second.existing == 50);
    CHECK(second.new_records == 150);
    CHECK(second.status == CellStatus::complete);
    REQUIRE(second.report.has_value());
    CHECK(second.report->n == 200);
    CHECK(mock.calls() - before == second.calls);

    auto stored = RecordStore::load(records_path(camp.config.output_dir, cfg));
    CHECK(stored.size() == 200);
    std::set<std::string> ids;
    for (const auto& r : stored) {
        ids.insert(r.agent_id);
    }
    CHECK(ids.size() == 200);

    const auto calls = mock.calls();
    auto third = run_experiment(cfg, data, mock, opts);
    CHECK(third.new_records == 0);
    CHECK(mock.calls() == calls);
    CHECK(third.status == CellStatus::complete);

    // Same cell, separate directory, no interruption: identical bytes.
    Campaign fresh("runner_fresh");
    auto data2 = fresh.data();
    MockChatBackend mock2("mock-a", data2);
    run_experiment(cfg, data2, mock2, fresh.options());
    CHECK(slurp(records_path(camp.config.output_dir, cfg)) == slurp(records_path(fresh.config.output_dir, cfg)));
    auto audit = cells_dir(camp.config.output_dir) / (cfg.stem() + ".audit.jsonl");
    CHECK(slurp(audit) == slurp(cells_dir(fresh.config.output_dir) / (cfg.stem() + ".audit.jsonl")));
}

TEST_CASE("endpoint failure leaves a resumable partial cell")
{
    Campaign camp("runner_flaky");
    auto data = camp.data();
    const auto cfg = camp.config.manifest().entries[0].config;
    MockChatBackend mock("mock-a", data);
    FlakyBackend flaky(mock, 30);
    auto s = run_experiment(cfg, data, flaky, camp.options());
    CHECK(s.status == CellStatus::partial);
    CHECK_FALSE(s.error.empty());
    CHECK(s.new_records >= 29);
    auto done = run_experiment(cfg, data, mock, camp.options());
    CHECK(done.status == CellStatus::complete);
    CHECK(RecordStore::load(records_path(camp.config.output_dir, cfg)).size() == 200);
}

TEST_CASE("unusable answers become invalid records")
{
    Campaign camp("runner_invalid");
    auto data = camp.data();
    const auto cfg = camp.config.manifest().entries[0].config;
    ScriptedChatBackend script({"no json here", "still nothing", R"({"choice": "hovercraft"})",
                                R"({"choice": "train", "reasoning": "time"})"});
    auto s = run_experiment(cfg, data, script, camp.options());
    CHECK(s.status == CellStatus::complete);
    auto recs = RecordStore::load(records_path(camp.config.output_dir, cfg));
    REQUIRE(recs.size() == 200);
    CHECK(recs[0].status == DecisionStatus::parse_error);
    CHECK(recs[0].predicted_mode == kInvalidMode);
    CHECK(recs[0].attempt_count == 2);
    CHECK(recs[1].status == DecisionStatus::invalid_choice);
    CHECK(recs[2].predicted_mode == "TRAIN");
    CHECK(s.report->invalid_count > 0);
}

TEST_CASE("parallel batches persist the same store")
{
    Campaign a("runner_serial");
    Campaign b("runner_parallel");
    auto da = a.data();
    auto db = b.data();
    const auto cfg = a.config.manifest().entries[1].config;
    MockChatBackend ma("mock-a", da), mb("mock-a", db);
    run_experiment(cfg, da, ma, a.options());
    auto opts = b.options();
    opts.parallel = 4;
    run_experiment(cfg, db, mb, opts);
    CHECK(slurp(records_path(a.config.output_dir, cfg)) == slurp(records_path(b.config.output_dir, cfg)));
}

TEST_CASE("report lists incomplete cells and matches evaluate_run")
{
    Campaign camp("runner_report");
    camp.config.shots = {ShotType::zeroshot, ShotType::fewshot_random, ShotType::fewshot_targeted};
    camp.config.styles = {PromptStyle::direct, PromptStyle::cot_react};
    auto data = camp.data();
    auto manifest = camp.config.manifest();
    REQUIRE(manifest.size() == 6);
    MockChatBackend mock("mock-a", data);
    std::map<std::string, MetricsReport> reports;
    for (std::size_t i = 0; i < 4; ++i) {
        auto s = run_experiment(manifest.entries[i].config, data, mock, camp.options());
        reports.emplace(s.fingerprint, *s.report);
    }
    auto opts = camp.options();
    opts.max_new_records = 10;
    run_experiment(manifest.entries[4].config, data, mock, opts);

    std::map<std::string, PreparedDataset> ds;
    ds.emplace("sm", std::move(data));
    auto summary = write_report(camp.config, manifest, ds);
    CHECK(summary.complete == 4);
    CHECK(summary.incomplete.size() == 2);

    auto table = csv::read_file((summary.dir / "metrics_table.csv").string());
    REQUIRE(table.rows.size() == 4);
    for (const auto& row : table.rows) {
        const auto& rep = reports.at(row[table.column("fingerprint")]);
        CHECK(std::stod(row[table.column("f1_weighted")]) == rep.f1_weighted);
        CHECK(std::stod(row[table.column("jsd")]) == rep.jsd);
        CHECK(std::stod(row[table.column("cross_entropy")]) == rep.cross_entropy);
    }
    auto incomplete = slurp(summary.dir / "incomplete_cells.txt");
    CHECK(incomplete.find("partial 10/200") != std::string::npos);
    CHECK(incomplete.find("pending 0/200") != std::string::npos);
    CHECK(std::filesystem::exists(summary.dir / "esi_summary.csv"));
    CHECK(std::filesystem::exists(summary.dir / "summary.md"));
}

TEST_CASE("records of another configuration are refused")
{
    Campaign camp("runner_foreign");
    auto data = camp.data();
    auto cfg = camp.config.manifest().entries[0].config;
    MockChatBackend mock("mock-a", data);
    auto opts = camp.options();
    opts.max_new_records = 3;
    run_experiment(cfg, data, mock, opts);
    cfg.k = 3;
    CHECK_THROWS_AS(run_experiment(cfg, data, mock, opts), PersistenceError);
}

TEST_CASE("run config parsing")
{
    auto dir = fixture::temp_dir("runner_config");
    auto schema = swissmetro_like_schema();
    nlohmann::json doc{
        {"output_dir", "out"},
        {"seed", 9},
        {"endpoints", {{{"name", "a"}, {"base_url", "http://localhost:1"}, {"model", "org/a"}}}},
        {"datasets",
         {{{"name", "sm"},
           {"path", "sm.csv"},
           {"schema", schema.to_json()},
           {"aliases", {{"Swissmetro", "sm"}}},
           {"n_test", 150}}}},
        {"matrix", {{"shots", {"zeroshot"}}, {"styles", {"direct"}}, {"temperatures", {0.5, 1.0}}}},
        {"lexicon", {{"factors", {"time", "cost"}}, {"match", "word_boundary"}}}};
    auto c = RunConfig::from_json(doc, dir);
    CHECK(c.output_dir == dir / "out");
    CHECK(c.datasets[0].path == dir / "sm.csv");
    CHECK(c.datasets[0].aliases.at("swissmetro") == "SM");
    CHECK(c.endpoints[0].model_name == "org/a");
    CHECK(c.lexicon.size() == 2);
    auto m = c.manifest();
    CHECK(m.size() == 2);
    CHECK(m.planned_calls() == 300);

    doc["endpoints"] = nlohmann::json::array();
    CHECK_THROWS_AS(RunConfig::from_json(doc, dir), ConfigError);
}
