#include "modechoice/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "modechoice/errors.hpp"

namespace modechoice {

namespace {

std::string lower_trimmed(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string dump_line(const nlohmann::json& doc)
{
    // raw model output is not guaranteed to be valid UTF-8
    return doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

bool retryable_status(int status)
{
    return status == 408 || status == 429 || status >= 500;
}

// Position one past the '}' matching the '{' at open, or npos.
std::size_t match_brace(std::string_view text, std::size_t open)
{
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) {
                return i + 1;
            }
        }
    }
    return std::string_view::npos;
}

} // namespace

void ModelEndpoint::validate() const
{
    if (max_retries < 0) {
        throw ConfigError(fmt::format("endpoint '{}': max_retries must be >= 0", name));
    }
    if (timeout.count() <= 0) {
        throw ConfigError(fmt::format("endpoint '{}': timeout must be positive", name));
    }
    if (model_name.empty()) {
        throw ConfigError(fmt::format("endpoint '{}': model name is empty", name));
    }
}

nlohmann::json chat_request_body(const std::string& model, const ChatRequest& request)
{
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::json body{{"model", model},
                        {"messages", std::move(messages)},
                        {"temperature", request.params.temperature},
                        {"max_tokens", request.params.max_tokens}};
    if (request.params.seed) {
        body["seed"] = *request.params.seed;
    }
    return body;
}

std::string completion_text(const nlohmann::json& body)
{
    try {
        const auto& content = body.at("choices").at(0).at("message").at("content");
        if (content.is_null()) {
            return {};
        }
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("not a chat-completion response: {}", e.what()));
    }
}

HttpChatBackend::HttpChatBackend(ModelEndpoint endpoint)
    : endpoint_(std::move(endpoint))
{
    endpoint_.validate();
    auto url = endpoint_.base_url;
    while (!url.empty() && url.back() == '/') {
        url.pop_back();
    }
    auto scheme = url.find("://");
    auto slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    host_ = url.substr(0, slash);
    path_prefix_ = slash == std::string::npos ? "" : url.substr(slash);
    if (host_.empty()) {
        throw ConfigError(fmt::format("endpoint '{}': empty base_url", endpoint_.name));
    }
}

Completion HttpChatBackend::complete(const ChatRequest& request)
{
    const auto body = dump_line(chat_request_body(endpoint_.model_name, request));
    const auto path = path_prefix_ + "/v1/chat/completions";
    httplib::Headers headers;
    if (endpoint_.api_key && !endpoint_.api_key->empty()) {
        headers.emplace("Authorization", "Bearer " + *endpoint_.api_key);
    }

    const auto started = std::chrono::steady_clock::now();
    int last_status = 0;
    std::string last_error = "no attempt made";
    const int budget = endpoint_.max_retries + 1;
    for (int attempt = 1; attempt <= budget; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(endpoint_.backoff * (1LL << std::min(attempt - 2, 20)));
        }
        httplib::Client client(host_);
        client.set_connection_timeout(endpoint_.timeout);
        client.set_read_timeout(endpoint_.timeout);
        client.set_write_timeout(endpoint_.timeout);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_status = 0;
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        last_status = res->status;
        if (res->status >= 200 && res->status < 300) {
            try {
                auto text = completion_text(nlohmann::json::parse(res->body));
                auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
                return {std::move(text), attempt, elapsed};
            } catch (const std::exception& e) {
                last_error = fmt::format("unreadable response body: {}", e.what());
                continue;
            }
        }
        last_error = fmt::format("endpoint returned HTTP {}", res->status);
        if (!retryable_status(res->status)) {
            throw GatewayError(last_error, res->status, attempt);
        }
    }
    throw GatewayError(last_error, last_status, budget);
}

Completion query_model(const ModelEndpoint& endpoint, const PromptBundle& bundle, const GenerationParams& params)
{
    HttpChatBackend backend(endpoint);
    ChatRequest request;
    request.messages = bundle.messages();
    request.params = params;
    request.style = bundle.style;
    return backend.complete(request);
}

ParsedDecision parse_response(std::string_view raw)
{
    bool saw_object = false;
    std::size_t pos = 0;
    while ((pos = raw.find('{', pos)) != std::string_view::npos) {
        auto end = match_brace(raw, pos);
        if (end == std::string_view::npos) {
            ++pos;
            continue;
        }
        auto candidate = nlohmann::json::parse(raw.substr(pos, end - pos), nullptr, false);
        if (candidate.is_discarded() || !candidate.is_object()) {
            // prose braces such as "{time}"; look inside them too
            ++pos;
            continue;
        }
        saw_object = true;
        auto it = candidate.find("choice");
        if (it != candidate.end() && it->is_string()) {
            ParsedDecision out;
            out.choice = it->get<std::string>();
            if (auto r = candidate.find("reasoning"); r != candidate.end() && r->is_string()) {
                out.reasoning = r->get<std::string>();
            }
            out.object = std::move(candidate);
            return out;
        }
        pos = end;
    }
    throw ParseError(saw_object ? "response object has no string \"choice\" field" : "no JSON object in response");
}

std::string extract_choice(const ParsedDecision& parsed, std::span<const std::string> available_modes,
                           const AliasMap& aliases)
{
    auto key = lower_trimmed(parsed.choice);
    std::string candidate;
    if (auto it = aliases.find(key); it != aliases.end()) {
        candidate = canonical_mode(it->second);
    } else {
        candidate = canonical_mode(key);
    }
    for (const auto& mode : available_modes) {
        if (mode == candidate) {
            return mode;
        }
    }
    throw InvalidChoiceError(fmt::format("choice '{}' is not one of the available modes", parsed.choice));
}

std::string_view to_string(DecisionStatus status)
{
    switch (status) {
    case DecisionStatus::ok:
        return "ok";
    case DecisionStatus::parse_error:
        return "parse_error";
    case DecisionStatus::invalid_choice:
        return "invalid_choice";
    }
    return "?";
}

DecisionStatus parse_decision_status(std::string_view text)
{
    for (auto s : {DecisionStatus::ok, DecisionStatus::parse_error, DecisionStatus::invalid_choice}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw ParseError(fmt::format("unknown decision status '{}'", text));
}

nlohmann::json DecisionRecord::to_json() const
{
    return {{"agent_id", agent_id},
            {"config_fingerprint", config_fingerprint},
            {"template_hash", template_hash},
            {"predicted_mode", predicted_mode},
            {"reasoning", reasoning},
            {"raw_response", raw_response},
            {"status", std::string(to_string(status))},
            {"latency_ms", latency_ms},
            {"attempt_count", attempt_count}};
}

DecisionRecord DecisionRecord::from_json(const nlohmann::json& doc)
{
    DecisionRecord r;
    r.agent_id = doc.at("agent_id").get<std::string>();
    r.config_fingerprint = doc.at("config_fingerprint").get<std::string>();
    r.template_hash = doc.value("template_hash", "");
    r.predicted_mode = doc.at("predicted_mode").get<std::string>();
    r.reasoning = doc.value("reasoning", "");
    r.raw_response = doc.at("raw_response").get<std::string>();
    r.status = parse_decision_status(doc.value("status", "ok"));
    r.latency_ms = doc.value("latency_ms", std::int64_t{0});
    r.attempt_count = doc.value("attempt_count", 0);
    return r;
}

RecordStore::RecordStore(std::filesystem::path path)
    : path_(std::move(path))
{
    if (std::filesystem::exists(path_)) {
        std::ifstream in(path_, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t good_end = 0;
        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos < content.size()) {
            auto nl = content.find('\n', pos);
            bool complete = nl != std::string::npos;
            auto line = std::string_view(content).substr(pos, (complete ? nl : content.size()) - pos);
            ++line_no;
            auto doc = nlohmann::json::parse(line, nullptr, false);
            if (doc.is_discarded()) {
                if (!complete) {
                    break; // torn tail
                }
                throw PersistenceError(fmt::format("{}:{}: corrupt record", path_.string(), line_no));
            }
            DecisionRecord record;
            try {
                record = DecisionRecord::from_json(doc);
            } catch (const std::exception& e) {
                throw PersistenceError(fmt::format("{}:{}: {}", path_.string(), line_no, e.what()));
            }
            if (!keys_.emplace(record.agent_id, record.config_fingerprint).second) {
                throw PersistenceError(fmt::format("{}:{}: duplicate record for agent '{}'", path_.string(), line_no,
                                                   record.agent_id));
            }
            records_.push_back(std::move(record));
            if (!complete) {
                // valid record missing its newline: keep it and terminate the line
                std::ofstream fix(path_, std::ios::binary | std::ios::app);
                fix << '\n';
                good_end = content.size() + 1;
                break;
            }
            pos = nl + 1;
            good_end = pos;
        }
        if (good_end < content.size()) {
            std::filesystem::resize_file(path_, good_end);
        }
    } else if (path_.has_parent_path()) {
        std::filesystem::create_directories(path_.parent_path());
    }
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) {
        throw PersistenceError(fmt::format("cannot open '{}' for appending", path_.string()));
    }
}

bool RecordStore::contains(const std::string& agent_id, const std::string& fingerprint) const
{
    return keys_.contains({agent_id, fingerprint});
}

void RecordStore::append(const DecisionRecord& record)
{
    if (contains(record.agent_id, record.config_fingerprint)) {
        throw DuplicateRecordError(
            fmt::format("record for agent '{}' under config {} already stored", record.agent_id, record.config_fingerprint));
    }
    out_ << dump_line(record.to_json()) << '\n';
    out_.flush();
    if (!out_) {
        throw PersistenceError(fmt::format("write to '{}' failed", path_.string()));
    }
    keys_.emplace(record.agent_id, record.config_fingerprint);
    records_.push_back(record);
}

std::vector<DecisionRecord> RecordStore::load(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) {
        return {};
    }
    return RecordStore(path).records();
}

void persist_record(const DecisionRecord& record, RecordStore& sink)
{
    sink.append(record);
}

} // namespace modechoice
