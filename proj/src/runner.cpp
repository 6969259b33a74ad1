#include "modechoice/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <future>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "modechoice/analysis.hpp"
#include "modechoice/csv.hpp"
#include "modechoice/errors.hpp"
#include "modechoice/hashing.hpp"

namespace modechoice {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string sanitize(std::string_view name)
{
    std::string out(name);
    for (auto& c : out) {
        const auto u = static_cast<unsigned char>(c);
        if (!(std::isalnum(u) || c == '.' || c == '-')) {
            c = '-';
        }
    }
    return out;
}

template <typename T>
void require_unique(std::span<const T> axis, std::string_view name)
{
    if (axis.empty()) {
        throw ConfigError(fmt::format("matrix axis '{}' is empty", name));
    }
    for (std::size_t i = 0; i < axis.size(); ++i) {
        for (std::size_t j = i + 1; j < axis.size(); ++j) {
            if (axis[i] == axis[j]) {
                throw ConfigError(fmt::format("matrix axis '{}' lists an entry twice", name));
            }
        }
    }
}

std::string number(double v)
{
    return std::isfinite(v) ? fmt::format("{}", v) : std::string("NA");
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        throw PersistenceError(fmt::format("cannot write '{}'", path.string()));
    }
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open '{}'", path.string()));
    }
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError(fmt::format("'{}' is not valid JSON", path.string()));
    }
    return doc;
}

char parse_delimiter(const json& d)
{
    const auto s = d.get<std::string>();
    if (s == "\\t" || s == "tab") {
        return '\t';
    }
    if (s.size() != 1) {
        throw ConfigError(fmt::format("delimiter must be one character, got '{}'", s));
    }
    return s[0];
}

// Audit trail of the examples shown to each agent. Keyed by agent id so a
// resumed cell never writes the same line twice.
class AuditLog {
public:
    explicit AuditLog(fs::path path)
        : path_(std::move(path))
    {
        std::string kept;
        bool changed = false;
        if (fs::exists(path_)) {
            std::ifstream in(path_, std::ios::binary);
            std::stringstream buf;
            buf << in.rdbuf();
            const auto text = buf.str();
            std::size_t pos = 0;
            while (pos < text.size()) {
                auto nl = text.find('\n', pos);
                const bool terminated = nl != std::string::npos;
                auto line = text.substr(pos, terminated ? nl - pos : std::string::npos);
                pos = terminated ? nl + 1 : text.size();
                auto doc = json::parse(line, nullptr, false);
                if (doc.is_discarded() || !doc.contains("agent_id")) {
                    changed = true;
                    continue;
                }
                ids_.insert(doc["agent_id"].get<std::string>());
                kept += line + '\n';
                changed = changed || !terminated;
            }
        }
        if (changed) {
            write_text(path_, kept);
        }
        out_.open(path_, std::ios::binary | std::ios::app);
    }

    void append(const std::string& agent_id, const json& entry)
    {
        if (!ids_.insert(agent_id).second) {
            return;
        }
        out_ << entry.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
        out_.flush();
    }

private:
    fs::path path_;
    std::set<std::string> ids_;
    std::ofstream out_;
};

struct Outcome {
    DecisionRecord record;
    json audit;
    std::size_t calls = 0;
    std::optional<std::string> gateway_error;
};

Outcome decide(const ExperimentConfig& config, const std::string& fingerprint, const PreparedDataset& data,
               const PromptTemplate& tmpl, const ChoiceInstance& subject, ChatBackend& backend,
               const RunOptions& options)
{
    Outcome out;
    const auto& schema = data.schema();
    const auto& pool = data.split.train;
    std::vector<ChoiceInstance> examples;
    json shown = json::array();
    if (config.shot == ShotType::fewshot_random) {
        const auto seed = derive_seed(config.seed, {fingerprint, subject.id});
        for (auto i : select_random(pool.size(), config.k, seed)) {
            examples.push_back(pool[i]);
            shown.push_back({{"id", pool[i].id}});
        }
    } else if (config.shot == ShotType::fewshot_targeted) {
        for (const auto& s :
             select_targeted(subject, pool, config.k, schema, data.config->weights, data.normalizer)) {
            examples.push_back(pool[s.pool_index]);
            shown.push_back({{"id", pool[s.pool_index].id}, {"similarity", s.similarity.to_json()}});
        }
    }
    out.audit = {{"agent_id", subject.id}, {"fingerprint", fingerprint}, {"examples", shown}};

    const auto bundle = assemble_prompt(subject, examples, config.style, schema, tmpl, config.k);
    ChatRequest request{bundle.messages(), {config.temperature, options.max_tokens, std::nullopt}, subject.id,
                        config.style};

    auto& rec = out.record;
    rec.agent_id = subject.id;
    rec.config_fingerprint = fingerprint;
    rec.template_hash = bundle.template_hash;
    try {
        auto first = backend.complete(request);
        out.calls = 1;
        rec.attempt_count = first.attempts;
        rec.latency_ms = first.latency.count();
        rec.raw_response = first.text;
        std::optional<ParsedDecision> parsed;
        try {
            parsed = parse_response(first.text);
        } catch (const ParseError&) {
            auto second = backend.complete(request);
            out.calls = 2;
            rec.attempt_count += second.attempts;
            rec.latency_ms += second.latency.count();
            rec.raw_response = second.text;
            try {
                parsed = parse_response(second.text);
            } catch (const ParseError&) {
                rec.predicted_mode = kInvalidMode;
                rec.status = DecisionStatus::parse_error;
                return out;
            }
        }
        rec.reasoning = parsed->reasoning;
        try {
            rec.predicted_mode = extract_choice(*parsed, subject.available_modes, data.config->aliases);
            rec.status = DecisionStatus::ok;
        } catch (const InvalidChoiceError&) {
            rec.predicted_mode = kInvalidMode;
            rec.status = DecisionStatus::invalid_choice;
        }
    } catch (const GatewayError& e) {
        out.gateway_error = e.what();
    }
    return out;
}

std::vector<DecisionRecord> cell_records(const fs::path& output_dir, const ExperimentConfig& config)
{
    const auto fp = config.fingerprint();
    auto all = RecordStore::load(records_path(output_dir, config));
    std::erase_if(all, [&](const DecisionRecord& r) { return r.config_fingerprint != fp; });
    return all;
}

std::map<std::string, std::string> test_truths(const PreparedDataset& data)
{
    std::map<std::string, std::string> truths;
    for (const auto& inst : data.split.test) {
        truths.emplace(inst.id, inst.chosen_mode);
    }
    return truths;
}

} // namespace

std::string format_temperature(double t)
{
    auto s = fmt::format("{}", t);
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

std::string ExperimentConfig::temperature_label() const
{
    return format_temperature(temperature);
}

json ExperimentConfig::to_json() const
{
    return {{"model", model},
            {"dataset", dataset},
            {"shot_type", to_string(shot)},
            {"prompt_style", to_string(style)},
            {"temperature", temperature},
            {"k", k},
            {"seed", seed},
            {"template_hash", template_hash}};
}

std::string ExperimentConfig::fingerprint() const
{
    return short_hash(to_json().dump());
}

std::string ExperimentConfig::stem() const
{
    return fmt::format("{}_{}_{}_{}_{}", sanitize(dataset), sanitize(model), to_string(shot), to_string(style),
                       temperature_label());
}

std::string_view to_string(CellStatus status)
{
    switch (status) {
    case CellStatus::pending:
        return "pending";
    case CellStatus::partial:
        return "partial";
    case CellStatus::complete:
        return "complete";
    }
    return "pending";
}

std::size_t RunManifest::planned_calls() const
{
    std::size_t total = 0;
    for (const auto& e : entries) {
        total += e.test_size;
    }
    return total;
}

RunManifest enumerate_matrix(std::span<const std::string> models, std::span<const std::string> datasets,
                             std::span<const ShotType> shots, std::span<const PromptStyle> styles,
                             std::span<const double> temperatures, const MatrixOptions& options)
{
    require_unique(models, "models");
    require_unique(datasets, "datasets");
    require_unique(shots, "shots");
    require_unique(styles, "styles");
    require_unique(temperatures, "temperatures");

    RunManifest manifest;
    manifest.entries.reserve(models.size() * datasets.size() * shots.size() * styles.size() * temperatures.size());
    std::set<std::string> fingerprints;
    std::set<std::string> stems;
    for (const auto& dataset : datasets) {
        auto size_it = options.test_sizes.find(dataset);
        const std::size_t test_size = size_it == options.test_sizes.end() ? 200 : size_it->second;
        for (const auto& model : models) {
            for (auto shot : shots) {
                for (auto style : styles) {
                    auto hash_it = options.template_hashes.find({dataset, style});
                    const auto hash = hash_it == options.template_hashes.end() ? PromptTemplate::builtin(style).hash()
                                                                               : hash_it->second;
                    for (double t : temperatures) {
                        ExperimentConfig c{model, dataset, shot, style, t, options.k, options.seed, hash};
                        if (!fingerprints.insert(c.fingerprint()).second || !stems.insert(c.stem()).second) {
                            throw ConfigError(fmt::format("configuration '{}' collides with another", c.stem()));
                        }
                        manifest.entries.push_back({std::move(c), test_size});
                    }
                }
            }
        }
    }
    return manifest;
}

PromptTemplate DatasetConfig::template_for(PromptStyle style) const
{
    auto it = template_paths.find(style);
    return it == template_paths.end() ? PromptTemplate::builtin(style) : PromptTemplate::load(it->second, style);
}

RunConfig RunConfig::from_json(const json& doc, const fs::path& base_dir)
{
    RunConfig c;
    try {
        c.output_dir = resolve(base_dir, doc.value("output_dir", std::string("runs")));
        c.seed = doc.value("seed", c.seed);
        c.k = doc.value("k", c.k);
        c.parallel = std::max<std::size_t>(1, doc.value("parallel", c.parallel));
        c.max_tokens = doc.value("max_tokens", c.max_tokens);
        c.epsilon = doc.value("epsilon", c.epsilon);
        c.api_key_env = doc.value("api_key_env", c.api_key_env);

        std::set<std::string> names;
        for (const auto& e : doc.at("endpoints")) {
            ModelEndpoint ep;
            ep.name = e.at("name").get<std::string>();
            ep.base_url = e.value("base_url", std::string());
            ep.model_name = e.value("model", ep.name);
            ep.timeout = std::chrono::milliseconds(
                static_cast<std::int64_t>(std::llround(e.value("timeout_s", 120.0) * 1000.0)));
            ep.max_retries = e.value("max_retries", ep.max_retries);
            ep.backoff = std::chrono::milliseconds(e.value("backoff_ms", std::int64_t{500}));
            const auto env = e.value("api_key_env", c.api_key_env);
            if (const char* key = std::getenv(env.c_str()); key != nullptr && *key != '\0') {
                ep.api_key = key;
            }
            ep.validate();
            if (!names.insert(ep.name).second) {
                throw ConfigError(fmt::format("endpoint '{}' declared twice", ep.name));
            }
            c.endpoints.push_back(std::move(ep));
        }

        names.clear();
        for (const auto& d : doc.at("datasets")) {
            DatasetConfig ds;
            ds.name = d.at("name").get<std::string>();
            ds.path = resolve(base_dir, d.at("path").get<std::string>());
            if (d.contains("delimiter")) {
                ds.delimiter = parse_delimiter(d.at("delimiter"));
            }
            if (d.contains("schema")) {
                ds.schema = AttributeSchema::from_json(d.at("schema"));
            } else if (d.contains("schema_path")) {
                ds.schema = AttributeSchema::from_json(
                    read_json_file(resolve(base_dir, d.at("schema_path").get<std::string>())));
            } else {
                throw ConfigError(fmt::format("dataset '{}' has neither schema nor schema_path", ds.name));
            }
            if (d.contains("weights")) {
                ds.weights = SimilarityWeights::from_json(d.at("weights"));
            }
            const auto aliases = d.value("aliases", json::object());
            for (const auto& [alias, mode] : aliases.items()) {
                std::string key = alias;
                std::transform(key.begin(), key.end(), key.begin(),
                               [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
                ds.aliases[key] = canonical_mode(mode.get<std::string>());
            }
            ds.n_respondents = d.value("n_respondents", ds.n_respondents);
            ds.n_test = d.value("n_test", ds.n_test);
            ds.split_seed = d.value("split_seed", ds.split_seed);
            const auto templates = d.value("templates", json::object());
            for (const auto& [style, path] : templates.items()) {
                ds.template_paths[parse_style(style)] = resolve(base_dir, path.get<std::string>());
            }
            if (!names.insert(ds.name).second) {
                throw ConfigError(fmt::format("dataset '{}' declared twice", ds.name));
            }
            c.datasets.push_back(std::move(ds));
        }

        if (doc.contains("matrix")) {
            const auto& m = doc.at("matrix");
            if (m.contains("shots")) {
                c.shots.clear();
                for (const auto& s : m.at("shots")) {
                    c.shots.push_back(parse_shot_type(s.get<std::string>()));
                }
            }
            if (m.contains("styles")) {
                c.styles.clear();
                for (const auto& s : m.at("styles")) {
                    c.styles.push_back(parse_style(s.get<std::string>()));
                }
            }
            if (m.contains("temperatures")) {
                c.temperatures = m.at("temperatures").get<std::vector<double>>();
            }
        }
        if (doc.contains("lexicon")) {
            const auto& l = doc.at("lexicon");
            if (l.contains("factors")) {
                c.lexicon = FactorLexicon(l.at("factors").get<std::vector<std::string>>());
            }
            const auto match = l.value("match", std::string("substring"));
            if (match == "substring") {
                c.esi_match = FactorMatch::substring;
            } else if (match == "word_boundary") {
                c.esi_match = FactorMatch::word_boundary;
            } else {
                throw ConfigError(fmt::format("unknown lexicon match '{}'", match));
            }
        }
        if (doc.contains("mock")) {
            const auto& m = doc.at("mock");
            c.mock.accuracy = m.value("accuracy", std::map<std::string, double>{});
            c.mock.malformed_rate = m.value("malformed_rate", c.mock.malformed_rate);
            c.mock.echo_truth = m.value("echo_truth", false);
        }
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("malformed run config: {}", e.what()));
    }
    if (c.endpoints.empty() || c.datasets.empty()) {
        throw ConfigError("run config needs at least one endpoint and one dataset");
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path)
{
    return from_json(read_json_file(path), path.parent_path());
}

const DatasetConfig& RunConfig::dataset(std::string_view name) const
{
    for (const auto& d : datasets) {
        if (d.name == name) {
            return d;
        }
    }
    throw ConfigError(fmt::format("unknown dataset '{}'", name));
}

const ModelEndpoint& RunConfig::endpoint(std::string_view name) const
{
    for (const auto& e : endpoints) {
        if (e.name == name) {
            return e;
        }
    }
    throw ConfigError(fmt::format("unknown endpoint '{}'", name));
}

RunManifest RunConfig::manifest() const
{
    std::vector<std::string> models;
    std::vector<std::string> names;
    MatrixOptions options;
    options.k = k;
    options.seed = seed;
    for (const auto& e : endpoints) {
        models.push_back(e.name);
    }
    for (const auto& d : datasets) {
        names.push_back(d.name);
        options.test_sizes[d.name] = d.n_test;
        for (auto style : styles) {
            options.template_hashes[{d.name, style}] = d.template_for(style).hash();
        }
    }
    return enumerate_matrix(models, names, shots, styles, temperatures, options);
}

fs::path cells_dir(const fs::path& output_dir)
{
    return output_dir / "cells";
}

fs::path records_path(const fs::path& output_dir, const ExperimentConfig& config)
{
    return cells_dir(output_dir) / (config.stem() + ".records.jsonl");
}

std::size_t persisted_count(const fs::path& output_dir, const ExperimentConfig& config)
{
    return cell_records(output_dir, config).size();
}

CellStatus cell_status(const fs::path& output_dir, const ManifestEntry& entry)
{
    const auto n = persisted_count(output_dir, entry.config);
    if (n == 0) {
        return CellStatus::pending;
    }
    return n >= entry.test_size ? CellStatus::complete : CellStatus::partial;
}

PreparedDataset prepare_dataset(const DatasetConfig& config)
{
    return prepare_dataset(config, load_dataset(config.path, config.schema, LoadOptions{config.delimiter}));
}

PreparedDataset prepare_dataset(const DatasetConfig& config, std::vector<ChoiceInstance> data)
{
    PreparedDataset p;
    p.config = &config;
    p.split = split_train_test(data, config.n_respondents, config.n_test, config.split_seed);
    p.normalizer = fit_normalizer(p.split.train, config.schema);
    for (auto style : {PromptStyle::direct, PromptStyle::cot_react}) {
        p.templates.emplace(style, config.template_for(style));
    }
    p.truths = test_truths(p);
    return p;
}

// ---------------------------------------------------------------------------
// Mock endpoints

MockChatBackend::MockChatBackend(std::string model, const PreparedDataset& data, MockSettings settings)
    : model_(std::move(model))
    , settings_(std::move(settings))
{
    for (const auto& inst : data.split.test) {
        instances_.emplace(inst.id, &inst);
    }
    if (auto it = settings_.accuracy.find(model_); it != settings_.accuracy.end()) {
        accuracy_ = it->second;
    } else {
        accuracy_ = 0.45 + 0.30 * static_cast<double>(derive_seed(0, {model_}) >> 11) * 0x1.0p-53;
    }
}

Completion MockChatBackend::complete(const ChatRequest& request)
{
    ++calls_;
    auto it = instances_.find(request.agent_id);
    if (it == instances_.end()) {
        throw GatewayError(fmt::format("mock endpoint has no instance '{}'", request.agent_id), 404, 1);
    }
    const auto& inst = *it->second;
    std::string content;
    for (const auto& m : request.messages) {
        content += m.role;
        content += '\n';
        content += m.content;
    }
    std::mt19937_64 rng(derive_seed(0, {model_, request.agent_id, format_temperature(request.params.temperature),
                                        to_string(request.style), short_hash(content)}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto& modes = inst.available_modes;
    std::string mode = inst.chosen_mode;
    if (!settings_.echo_truth) {
        const double u = unit(rng);
        if (u < settings_.malformed_rate / 2) {
            return {fmt::format("I would probably go with the {} for this one.", mode), 1, {}};
        }
        if (u < settings_.malformed_rate) {
            return {R"({"reasoning": "none of these suit me", "choice": "BICYCLE"})", 1, {}};
        }
        double accuracy = accuracy_ - 0.1 * (request.params.temperature - 0.5);
        if (content.find(kChoiceMarker) != std::string::npos) {
            accuracy += 0.05;
        }
        if (unit(rng) >= accuracy) {
            std::vector<std::string> others;
            for (const auto& m : modes) {
                if (m != inst.chosen_mode) {
                    others.push_back(m);
                }
            }
            if (!others.empty()) {
                mode = others[static_cast<std::size_t>(unit(rng) * static_cast<double>(others.size())) % others.size()];
            }
        }
    }

    if (request.style == PromptStyle::direct) {
        return {json{{"choice", mode}}.dump(), 1, {}};
    }
    static const char* const kPhrases[] = {"the travel time is short",  "the cost is reasonable",
                                           "comfort matters on this trip", "it offers convenience",
                                           "service frequency is good",  "the trip purpose fits"};
    std::string reasoning;
    for (const auto* phrase : kPhrases) {
        if (unit(rng) < 0.5) {
            reasoning += reasoning.empty() ? "" : ", ";
            reasoning += phrase;
        }
    }
    if (reasoning.empty()) {
        reasoning = "it seems the natural option";
    }
    reasoning = fmt::format("I pick {} because {}.", mode, reasoning);
    json obj{{"reasoning", reasoning}, {"choice", mode}};
    return {fmt::format("Thought: weighing the options.\n```json\n{}\n```", obj.dump()), 1, {}};
}

ScriptedChatBackend::ScriptedChatBackend(std::vector<std::string> responses)
    : responses_(std::move(responses))
{
    if (responses_.empty()) {
        throw ConfigError("scripted backend needs at least one response");
    }
}

Completion ScriptedChatBackend::complete(const ChatRequest&)
{
    const auto i = calls_++;
    return {responses_[i % responses_.size()], 1, {}};
}

// ---------------------------------------------------------------------------

CellSummary run_experiment(const ExperimentConfig& config, const PreparedDataset& data, ChatBackend& backend,
                           const RunOptions& options)
{
    const auto fingerprint = config.fingerprint();
    const auto& tmpl = data.templates.at(config.style);
    if (tmpl.hash() != config.template_hash) {
        throw ConfigError(fmt::format("cell '{}' expects template {}, dataset provides {}", config.stem(),
                                      config.template_hash, tmpl.hash()));
    }
    fs::create_directories(cells_dir(options.output_dir));
    RecordStore store(records_path(options.output_dir, config));
    for (const auto& r : store.records()) {
        if (r.config_fingerprint != fingerprint) {
            throw PersistenceError(fmt::format("'{}' holds records of configuration {}, not {}",
                                               store.path().string(), r.config_fingerprint, fingerprint));
        }
    }
    AuditLog audit(cells_dir(options.output_dir) / (config.stem() + ".audit.jsonl"));

    CellSummary summary;
    summary.fingerprint = fingerprint;
    summary.stem = config.stem();
    summary.existing = store.records().size();

    std::vector<const ChoiceInstance*> pending;
    for (const auto& inst : data.split.test) {
        if (!store.contains(inst.id, fingerprint)) {
            pending.push_back(&inst);
        }
    }
    std::size_t budget = options.max_new_records.value_or(pending.size());
    const std::size_t batch = std::max<std::size_t>(1, options.parallel);

    for (std::size_t i = 0; i < pending.size() && budget > 0 && summary.error.empty();) {
        const auto n = std::min({batch, budget, pending.size() - i});
        std::vector<Outcome> outcomes;
        if (n == 1) {
            outcomes.push_back(decide(config, fingerprint, data, tmpl, *pending[i], backend, options));
        } else {
            std::vector<std::future<Outcome>> futures;
            for (std::size_t j = 0; j < n; ++j) {
                futures.push_back(std::async(std::launch::async, decide, std::cref(config), std::cref(fingerprint),
                                             std::cref(data), std::cref(tmpl), std::cref(*pending[i + j]),
                                             std::ref(backend), std::cref(options)));
            }
            for (auto& f : futures) {
                outcomes.push_back(f.get());
            }
        }
        for (auto& o : outcomes) {
            summary.calls += o.calls;
            if (o.gateway_error) {
                summary.error = *o.gateway_error;
                break;
            }
            audit.append(o.record.agent_id, o.audit);
            persist_record(o.record, store);
            ++summary.new_records;
            if (!o.record.valid()) {
                ++summary.invalid_new;
            }
            --budget;
        }
        i += n;
    }

    const auto count = store.records().size();
    if (count >= data.split.test.size()) {
        summary.status = CellStatus::complete;
        auto report = evaluate_run(store.records(), data.truths, data.schema().mode_labels, options.epsilon);
        json doc{{"config", config.to_json()}, {"fingerprint", fingerprint}, {"metrics", report.to_json()}};
        write_text(cells_dir(options.output_dir) / (config.stem() + ".report.json"), doc.dump(2) + "\n");
        summary.report = std::move(report);
    } else {
        summary.status = count == 0 ? CellStatus::pending : CellStatus::partial;
    }
    return summary;
}

json metrics_row(const ExperimentConfig& config, const MetricsReport& r)
{
    return {{"fingerprint", config.fingerprint()},
            {"dataset", config.dataset},
            {"model", config.model},
            {"shot_type", to_string(config.shot)},
            {"prompt_style", to_string(config.style)},
            {"temperature", config.temperature_label()},
            {"n", r.n},
            {"invalid_count", r.invalid_count},
            {"accuracy", r.accuracy},
            {"precision_macro", r.precision_macro},
            {"recall_macro", r.recall_macro},
            {"f1_macro", r.f1_macro},
            {"f1_weighted", r.f1_weighted},
            {"dist_mae", r.dist_mae},
            {"jsd", r.jsd},
            {"cross_entropy", r.cross_entropy}};
}

ReportSummary write_report(const RunConfig& config, const RunManifest& manifest,
                           const std::map<std::string, PreparedDataset>& datasets)
{
    static const std::vector<std::string> kColumns{
        "fingerprint", "dataset",      "model",    "shot_type",       "prompt_style", "temperature",
        "n",           "invalid_count", "accuracy", "precision_macro", "recall_macro", "f1_macro",
        "f1_weighted", "dist_mae",     "jsd",      "cross_entropy"};

    ReportSummary summary;
    summary.dir = config.output_dir / "report";
    fs::create_directories(summary.dir);

    std::string table = csv::join(kColumns) + "\n";
    std::vector<ExperimentCell> cells;
    std::map<EsiGroupKey, EsiGroup> esi_groups;

    for (const auto& entry : manifest.entries) {
        const auto& c = entry.config;
        auto records = cell_records(config.output_dir, c);
        if (records.size() < entry.test_size) {
            summary.incomplete.push_back(fmt::format("{} {} {} {}/{}", c.fingerprint(), c.stem(),
                                                     to_string(records.empty() ? CellStatus::pending
                                                                               : CellStatus::partial),
                                                     records.size(), entry.test_size));
            continue;
        }
        const auto& data = datasets.at(c.dataset);
        auto report = evaluate_run(records, data.truths, data.schema().mode_labels, config.epsilon);
        auto row = metrics_row(c, report);
        std::vector<std::string> fields;
        for (const auto& col : kColumns) {
            const auto& v = row.at(col);
            fields.push_back(v.is_string() ? v.get<std::string>()
                             : v.is_number_unsigned() ? std::to_string(v.get<std::size_t>())
                                                      : number(v.get<double>()));
        }
        table += csv::join(fields) + "\n";
        if (std::isfinite(report.f1_weighted)) {
            cells.push_back({c.model, c.dataset, std::string(to_string(c.shot)), std::string(to_string(c.style)),
                             c.temperature_label(), report.f1_weighted});
        }
        ++summary.complete;

        EsiGroupKey key{c.model, std::string(to_string(c.shot)), std::string(to_string(c.style)),
                        c.temperature_label()};
        auto& group = esi_groups[key];
        group.key = key;
        for (const auto& r : records) {
            group.scores.push_back(esi(r.reasoning, config.lexicon, config.esi_match).value);
            if (c.style == PromptStyle::direct) {
                ++group.no_reasoning_requested;
            }
        }
    }
    write_text(summary.dir / "metrics_table.csv", table);

    std::vector<EsiGroup> groups;
    for (auto& [key, g] : esi_groups) {
        groups.push_back(std::move(g));
    }
    auto agg = esi_aggregate(groups);
    std::string esi_csv = "model,shot_type,prompt_style,temperature,count,mean,q1,q3,iqr,no_reasoning_requested\n";
    for (const auto& r : agg.rows) {
        esi_csv += csv::join({r.key.model, r.key.shot_type, r.key.prompt_style, r.key.temperature,
                              std::to_string(r.count), number(r.mean), number(r.q1), number(r.q3), number(r.iqr),
                              std::to_string(r.no_reasoning_requested)})
            + "\n";
    }
    write_text(summary.dir / "esi_summary.csv", esi_csv);
    summary.notes.insert(summary.notes.end(), agg.warnings.begin(), agg.warnings.end());

    std::string incomplete;
    for (const auto& line : summary.incomplete) {
        incomplete += line + "\n";
    }
    write_text(summary.dir / "incomplete_cells.txt", incomplete);

    std::string regimes;
    if (cells.empty()) {
        summary.notes.push_back("no complete cells; study analysis skipped");
    } else {
        auto notes = write_analysis(cells, summary.dir / "analysis");
        summary.notes.insert(summary.notes.end(), notes.begin(), notes.end());
        try {
            regimes = regime_table_markdown(summarize_regimes(cells));
        } catch (const Error& e) {
            summary.notes.push_back(fmt::format("regime table: {}", e.what()));
        }
    }

    std::string md = "# Run report\n\n";
    md += fmt::format("- configurations: {}\n- planned calls: {}\n- complete cells: {}\n- incomplete cells: {}\n\n",
                      manifest.size(), manifest.planned_calls(), summary.complete, summary.incomplete.size());
    md += "Files: metrics_table.csv, esi_summary.csv, incomplete_cells.txt, analysis/.\n\n";
    if (!regimes.empty()) {
        md += regimes + "\n";
    }
    if (!summary.incomplete.empty()) {
        md += "## Incomplete cells (not scored)\n\n";
        for (const auto& line : summary.incomplete) {
            md += "- " + line + "\n";
        }
        md += "\n";
    }
    if (!summary.notes.empty()) {
        md += "## Notes\n\n";
        for (const auto& n : summary.notes) {
            md += "- " + n + "\n";
        }
    }
    write_text(summary.dir / "summary.md", md);
    return summary;
}

} // namespace modechoice
