#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modechoice/prompt.hpp"

namespace modechoice {

inline constexpr std::string_view kInvalidMode = "INVALID";

struct ModelEndpoint {
    std::string name;
    std::string base_url;
    std::string model_name;
    std::optional<std::string> api_key;
    std::chrono::milliseconds timeout{120000};
    int max_retries = 3;
    // Delay before retry n is backoff * 2^(n-1).
    std::chrono::milliseconds backoff{500};

    void validate() const;
};

struct GenerationParams {
    double temperature = 0.5;
    int max_tokens = 512;
    std::optional<std::int64_t> seed;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    GenerationParams params;
    // Bookkeeping only; never sent over the wire.
    std::string agent_id;
    PromptStyle style = PromptStyle::direct;
};

struct Completion {
    std::string text;
    int attempts = 1;
    std::chrono::milliseconds latency{0};
};

// Anything that turns a chat request into assistant text. Implementations must
// tolerate concurrent complete() calls.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual Completion complete(const ChatRequest& request) = 0;
};

// Client for {base_url}/v1/chat/completions. Retries transport failures, 408,
// 429, 5xx and unreadable bodies with exponential backoff; other statuses fail
// at once.
class HttpChatBackend final : public ChatBackend {
public:
    explicit HttpChatBackend(ModelEndpoint endpoint);
    Completion complete(const ChatRequest& request) override;

    [[nodiscard]] const ModelEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    ModelEndpoint endpoint_;
    std::string host_;
    std::string path_prefix_;
};

// Request body sent to the chat-completion endpoint.
nlohmann::json chat_request_body(const std::string& model, const ChatRequest& request);

// Assistant text from a chat-completion response body; throws ParseError.
std::string completion_text(const nlohmann::json& body);

Completion query_model(const ModelEndpoint& endpoint, const PromptBundle& bundle, const GenerationParams& params);

struct ParsedDecision {
    std::string choice;
    std::string reasoning;
    nlohmann::json object;
};

// Finds the first balanced top-level {...} in raw that parses as a JSON object
// with a string "choice". Code fences and surrounding prose are ignored.
ParsedDecision parse_response(std::string_view raw);

// Lower-case alias -> canonical mode label.
using AliasMap = std::map<std::string, std::string, std::less<>>;

// Trimmed, case-insensitive match against the available modes after alias
// lookup. Throws InvalidChoiceError when nothing matches.
std::string extract_choice(const ParsedDecision& parsed, std::span<const std::string> available_modes,
                           const AliasMap& aliases = {});

enum class DecisionStatus { ok, parse_error, invalid_choice };

std::string_view to_string(DecisionStatus status);
DecisionStatus parse_decision_status(std::string_view text);

struct DecisionRecord {
    std::string agent_id;
    std::string config_fingerprint;
    std::string template_hash;
    std::string predicted_mode;
    std::string reasoning;
    std::string raw_response;
    DecisionStatus status = DecisionStatus::ok;
    std::int64_t latency_ms = 0;
    int attempt_count = 0;

    [[nodiscard]] bool valid() const noexcept { return predicted_mode != kInvalidMode; }
    [[nodiscard]] nlohmann::json to_json() const;
    static DecisionRecord from_json(const nlohmann::json& doc);

    bool operator==(const DecisionRecord&) const = default;
};

// Append-only JSONL store of decision records, one per line. Keys are
// (agent_id, config_fingerprint); a repeated key is rejected. Each append is
// flushed before it returns. A torn final line left by an interrupted writer
// is discarded when the store is opened.
class RecordStore {
public:
    explicit RecordStore(std::filesystem::path path);

    void append(const DecisionRecord& record);
    [[nodiscard]] bool contains(const std::string& agent_id, const std::string& fingerprint) const;
    [[nodiscard]] const std::vector<DecisionRecord>& records() const noexcept { return records_; }
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

    static std::vector<DecisionRecord> load(const std::filesystem::path& path);

private:
    std::filesystem::path path_;
    std::vector<DecisionRecord> records_;
    std::set<std::pair<std::string, std::string>> keys_;
    std::ofstream out_;
};

void persist_record(const DecisionRecord& record, RecordStore& sink);

} // namespace modechoice
