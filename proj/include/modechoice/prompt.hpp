#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "modechoice/dataset.hpp"

namespace modechoice {

enum class PromptStyle { direct, cot_react };

std::string_view to_string(PromptStyle style);
PromptStyle parse_style(std::string_view text);

// Line that carries the answer in exemplar narratives. Never present in a subject.
inline constexpr std::string_view kChoiceMarker = "Chosen mode:";
inline constexpr std::string_view kNotReported = "not reported";

// Prompt text with {{name}} placeholders.
//
//   system          {{choices}} {{output_format}}
//   user_zero_shot  {{subject}}
//   user_few_shot   {{examples}} {{subject}}
//   example         {{index}} {{narrative}}
//
// Any change to the text changes hash(), and with it every config fingerprint
// that uses the template.
struct PromptTemplate {
    std::string version;
    std::string system;
    std::string user_zero_shot;
    std::string user_few_shot;
    std::string example;
    std::string example_separator = "\n\n";

    [[nodiscard]] std::string hash() const;
    [[nodiscard]] nlohmann::json to_json() const;

    static PromptTemplate builtin(PromptStyle style);
    // Keys missing from the document fall back to builtin(style).
    static PromptTemplate from_json(const nlohmann::json& doc, PromptStyle style);
    static PromptTemplate load(const std::filesystem::path& path, PromptStyle style);
};

// Replaces every {{name}}. Unknown or unterminated placeholders throw ConfigError.
std::string fill_placeholders(std::string_view text, const std::map<std::string, std::string, std::less<>>& values);

// Narrative of one instance: traveller profile, trip context, then one option
// block per available mode. Adds the choice marker line only when include_choice is set.
std::string render_instance(const ChoiceInstance& instance, const AttributeSchema& schema, bool include_choice);

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct RenderedExample {
    std::string id;
    std::string narrative;
    std::string chosen_mode;
};

struct PromptBundle {
    std::string system;
    std::vector<RenderedExample> examples;
    std::string subject;
    // Full user turn: examples (if any) followed by the subject.
    std::string user;
    PromptStyle style = PromptStyle::direct;
    std::vector<std::string> output_fields;
    std::vector<std::string> permitted_modes;
    std::string template_hash;

    [[nodiscard]] std::vector<ChatMessage> messages() const;
};

// Output object the model is asked to produce.
std::string output_format(PromptStyle style, std::span<const std::string> permitted_modes);

// Zero-shot when examples is empty; otherwise exactly k examples are required.
PromptBundle assemble_prompt(const ChoiceInstance& subject, std::span<const ChoiceInstance> examples, PromptStyle style,
                             const AttributeSchema& schema, const PromptTemplate& tmpl, std::size_t k);

} // namespace modechoice
