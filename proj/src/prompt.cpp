#include "modechoice/prompt.hpp"

#include <fstream>

#include <fmt/format.h>

#include "modechoice/errors.hpp"
#include "modechoice/hashing.hpp"

namespace modechoice {

std::string_view to_string(PromptStyle style)
{
    return style == PromptStyle::direct ? "direct" : "cot_react";
}

PromptStyle parse_style(std::string_view text)
{
    if (text == "direct") {
        return PromptStyle::direct;
    }
    if (text == "cot_react") {
        return PromptStyle::cot_react;
    }
    throw ConfigError(fmt::format("unknown prompt style '{}'", text));
}

namespace {

constexpr std::string_view kCotSystem =
    "You are a commuter taking part in a travel survey. The traveller profile, trip context and the "
    "transport options open to you are described in the user message; answer as that person would.\n"
    "Before deciding, reason step by step about the trade-offs and contextual factors that matter for "
    "this trip, such as time, cost, and purpose, as well as comfort, convenience and service frequency. "
    "Articulate your rationale first, then state the mode you select.\n"
    "Permitted answers: {{choices}}.\n"
    "Reply with a single JSON object and nothing else:\n"
    "{{output_format}}";

constexpr std::string_view kDirectSystem =
    "You are a commuter taking part in a travel survey. The traveller profile, trip context and the "
    "transport options open to you are described in the user message; answer as that person would.\n"
    "Output only the selected mode, without any explanation.\n"
    "Permitted answers: {{choices}}.\n"
    "Reply with a single JSON object and nothing else:\n"
    "{{output_format}}";

constexpr std::string_view kUserZeroShot = "{{subject}}";

constexpr std::string_view kUserFewShot =
    "Here are decisions made by other travellers who answered the same survey:\n\n"
    "{{examples}}\n\n"
    "Now make the decision for the following traveller.\n\n"
    "{{subject}}";

constexpr std::string_view kExample = "Example {{index}}:\n{{narrative}}";

std::string format_number(double v)
{
    return fmt::format("{}", v);
}

std::string render_value(const Attribute& attr, const Value& value)
{
    if (is_missing(value)) {
        return std::string(kNotReported);
    }
    std::string text;
    if (const auto* num = std::get_if<double>(&value)) {
        text = format_number(*num);
    } else {
        text = attr.level_text(std::get<std::size_t>(value));
    }
    if (!attr.unit.empty()) {
        text += ' ';
        text += attr.unit;
    }
    return text;
}

void append_line(std::string& out, const Attribute& attr, const Value& value)
{
    out += "- ";
    out += attr.display_label();
    out += ": ";
    out += render_value(attr, value);
    out += '\n';
}

std::string join_modes(std::span<const std::string> modes)
{
    std::string out;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (i > 0) {
            out += ", ";
        }
        out += modes[i];
    }
    return out;
}

} // namespace

PromptTemplate PromptTemplate::builtin(PromptStyle style)
{
    PromptTemplate t;
    t.version = style == PromptStyle::direct ? "builtin-direct-v1" : "builtin-cot_react-v1";
    t.system = std::string(style == PromptStyle::direct ? kDirectSystem : kCotSystem);
    t.user_zero_shot = std::string(kUserZeroShot);
    t.user_few_shot = std::string(kUserFewShot);
    t.example = std::string(kExample);
    return t;
}

nlohmann::json PromptTemplate::to_json() const
{
    return {{"version", version},
            {"system", system},
            {"user_zero_shot", user_zero_shot},
            {"user_few_shot", user_few_shot},
            {"example", example},
            {"example_separator", example_separator}};
}

std::string PromptTemplate::hash() const
{
    return short_hash(to_json().dump());
}

PromptTemplate PromptTemplate::from_json(const nlohmann::json& doc, PromptStyle style)
{
    auto t = builtin(style);
    try {
        t.version = doc.value("version", t.version);
        t.system = doc.value("system", t.system);
        t.user_zero_shot = doc.value("user_zero_shot", t.user_zero_shot);
        t.user_few_shot = doc.value("user_few_shot", t.user_few_shot);
        t.example = doc.value("example", t.example);
        t.example_separator = doc.value("example_separator", t.example_separator);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("malformed template: {}", e.what()));
    }
    return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path, PromptStyle style)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(fmt::format("cannot open template '{}'", path.string()));
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("template '{}': {}", path.string(), e.what()));
    }
    return from_json(doc, style);
}

std::string fill_placeholders(std::string_view text, const std::map<std::string, std::string, std::less<>>& values)
{
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw ConfigError("unterminated placeholder in template");
        }
        auto name = text.substr(open + 2, close - open - 2);
        auto it = values.find(name);
        if (it == values.end()) {
            throw ConfigError(fmt::format("unknown placeholder '{{{{{}}}}}'", name));
        }
        out += it->second;
        pos = close + 2;
    }
    return out;
}

std::string render_instance(const ChoiceInstance& instance, const AttributeSchema& schema, bool include_choice)
{
    auto section = [&](std::string_view title, auto&& wanted) {
        std::string body;
        for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
            const auto& attr = schema.attributes[i];
            if (attr.mode.empty() && wanted(attr)) {
                append_line(body, attr, instance.values.at(i));
            }
        }
        return body.empty() ? body : fmt::format("{}:\n{}", title, body);
    };

    std::string out;
    out += section("Traveller profile", [](const Attribute& a) { return a.group == AttributeGroup::socio; });
    out += section("Trip context", [](const Attribute& a) {
        return a.group == AttributeGroup::trip_cat || a.group == AttributeGroup::trip_num;
    });
    out += section("Additional information", [](const Attribute& a) { return a.group == AttributeGroup::additional; });

    out += "Available options:\n";
    for (const auto& mode : instance.available_modes) {
        out += "Option ";
        out += mode;
        if (auto it = schema.mode_descriptions.find(mode); it != schema.mode_descriptions.end()) {
            out += fmt::format(" ({})", it->second);
        }
        out += ":\n";
        for (std::size_t i = 0; i < schema.attributes.size(); ++i) {
            if (schema.attributes[i].mode == mode) {
                append_line(out, schema.attributes[i], instance.values.at(i));
            }
        }
    }
    if (include_choice) {
        out += fmt::format("{} {}\n", kChoiceMarker, instance.chosen_mode);
    }
    // no trailing newline, so templates control spacing
    if (!out.empty() && out.back() == '\n') {
        out.pop_back();
    }
    return out;
}

std::vector<ChatMessage> PromptBundle::messages() const
{
    return {{"system", system}, {"user", user}};
}

std::string output_format(PromptStyle style, std::span<const std::string> permitted_modes)
{
    auto choices = join_modes(permitted_modes);
    if (style == PromptStyle::cot_react) {
        return fmt::format(R"({{"reasoning": "<your rationale, weighing the trade-offs>", "choice": "<one of: {}>"}})",
                           choices);
    }
    return fmt::format(R"({{"choice": "<one of: {}>"}})", choices);
}

PromptBundle assemble_prompt(const ChoiceInstance& subject, std::span<const ChoiceInstance> examples, PromptStyle style,
                             const AttributeSchema& schema, const PromptTemplate& tmpl, std::size_t k)
{
    if (!examples.empty() && examples.size() != k) {
        throw ContractError(fmt::format("expected 0 or {} examples, got {}", k, examples.size()));
    }
    PromptBundle bundle;
    bundle.style = style;
    bundle.template_hash = tmpl.hash();
    bundle.permitted_modes = subject.available_modes;
    bundle.output_fields = style == PromptStyle::cot_react ? std::vector<std::string>{"reasoning", "choice"}
                                                           : std::vector<std::string>{"choice"};
    bundle.system = fill_placeholders(tmpl.system, {{"choices", join_modes(bundle.permitted_modes)},
                                                    {"output_format", output_format(style, bundle.permitted_modes)}});
    bundle.subject = render_instance(subject, schema, false);

    if (examples.empty()) {
        bundle.user = fill_placeholders(tmpl.user_zero_shot, {{"subject", bundle.subject}});
        return bundle;
    }
    std::string blocks;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        bundle.examples.push_back({ex.id, render_instance(ex, schema, true), ex.chosen_mode});
        if (i > 0) {
            blocks += tmpl.example_separator;
        }
        blocks += fill_placeholders(tmpl.example,
                                    {{"index", std::to_string(i + 1)}, {"narrative", bundle.examples.back().narrative}});
    }
    bundle.user = fill_placeholders(tmpl.user_few_shot, {{"examples", blocks}, {"subject", bundle.subject}});
    return bundle;
}

} // namespace modechoice
