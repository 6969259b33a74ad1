#include "modechoice/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "modechoice/csv.hpp"
#include "modechoice/errors.hpp"

namespace modechoice {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

bool is_missing_token(std::string_view field)
{
    auto t = trim(field);
    return t.empty() || t == "NA";
}

} // namespace

std::string_view to_string(AttributeGroup group)
{
    switch (group) {
    case AttributeGroup::socio:
        return "socio";
    case AttributeGroup::trip_num:
        return "trip_num";
    case AttributeGroup::trip_cat:
        return "trip_cat";
    case AttributeGroup::additional:
        return "additional";
    }
    return "?";
}

std::string_view to_string(AttributeKind kind)
{
    switch (kind) {
    case AttributeKind::ordinal:
        return "ordinal";
    case AttributeKind::nominal:
        return "nominal";
    case AttributeKind::continuous:
        return "continuous";
    }
    return "?";
}

AttributeGroup parse_group(std::string_view text)
{
    for (auto g : {AttributeGroup::socio, AttributeGroup::trip_num, AttributeGroup::trip_cat, AttributeGroup::additional}) {
        if (to_string(g) == text) {
            return g;
        }
    }
    throw ConfigError(fmt::format("unknown attribute group '{}'", text));
}

AttributeKind parse_kind(std::string_view text)
{
    for (auto k : {AttributeKind::ordinal, AttributeKind::nominal, AttributeKind::continuous}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw ConfigError(fmt::format("unknown attribute kind '{}'", text));
}

std::optional<std::size_t> Attribute::level_index(std::string_view level) const
{
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] == level) {
            return i;
        }
    }
    return std::nullopt;
}

const std::string& Attribute::level_text(std::size_t index) const
{
    if (index < level_labels.size()) {
        return level_labels[index];
    }
    return levels.at(index);
}

std::string canonical_mode(std::string_view raw)
{
    std::string out(trim(raw));
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

void AttributeSchema::validate() const
{
    if (mode_labels.empty()) {
        throw ConfigError("schema declares no mode labels");
    }
    std::set<std::string> modes;
    for (const auto& m : mode_labels) {
        if (m.empty() || m != canonical_mode(m)) {
            throw ConfigError(fmt::format("mode label '{}' is not canonical (trimmed upper-case)", m));
        }
        if (!modes.insert(m).second) {
            throw ConfigError(fmt::format("duplicate mode label '{}'", m));
        }
    }
    for (const auto& [mode, _] : mode_descriptions) {
        if (!modes.contains(mode)) {
            throw ConfigError(fmt::format("description given for unknown mode '{}'", mode));
        }
    }

    std::set<std::string> reserved{id_column, choice_column};
    if (!respondent_column.empty()) {
        reserved.insert(respondent_column);
    }
    if (availability_column) {
        reserved.insert(*availability_column);
    }

    std::set<std::string> names;
    for (const auto& a : attributes) {
        if (a.name.empty()) {
            throw ConfigError("attribute with empty name");
        }
        if (reserved.contains(a.name)) {
            throw ConfigError(fmt::format("attribute '{}' collides with a reserved column", a.name));
        }
        if (!names.insert(a.name).second) {
            throw ConfigError(fmt::format("duplicate attribute '{}'", a.name));
        }
        if (!a.mode.empty() && !modes.contains(a.mode)) {
            throw ConfigError(fmt::format("attribute '{}' refers to unknown mode '{}'", a.name, a.mode));
        }
        // trip_num is compared by Euclidean distance, the other groups by matching
        bool numeric_group = a.group == AttributeGroup::trip_num;
        if (numeric_group != (a.kind == AttributeKind::continuous)) {
            throw ConfigError(fmt::format("attribute '{}': group {} cannot hold {} values", a.name, to_string(a.group),
                                          to_string(a.kind)));
        }
        if (a.categorical()) {
            if (a.levels.empty()) {
                throw ConfigError(fmt::format("attribute '{}' declares no levels", a.name));
            }
            std::set<std::string> levels(a.levels.begin(), a.levels.end());
            if (levels.size() != a.levels.size()) {
                throw ConfigError(fmt::format("attribute '{}' repeats a level", a.name));
            }
            if (!a.level_labels.empty() && a.level_labels.size() != a.levels.size()) {
                throw ConfigError(fmt::format("attribute '{}': level_labels must match levels", a.name));
            }
        } else if (!a.levels.empty()) {
            throw ConfigError(fmt::format("continuous attribute '{}' cannot declare levels", a.name));
        }
    }
}

std::optional<std::size_t> AttributeSchema::find(std::string_view name) const
{
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (attributes[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t AttributeSchema::index_of(std::string_view name) const
{
    if (auto i = find(name)) {
        return *i;
    }
    throw ContractError(fmt::format("no attribute named '{}'", name));
}

std::optional<std::size_t> AttributeSchema::mode_index(std::string_view canonical_label) const
{
    auto it = std::find(mode_labels.begin(), mode_labels.end(), canonical_label);
    if (it == mode_labels.end()) {
        return std::nullopt;
    }
    return static_cast<std::size_t>(it - mode_labels.begin());
}

AttributeSchema AttributeSchema::from_json(const nlohmann::json& doc)
{
    AttributeSchema schema;
    try {
        schema.id_column = doc.value("id_column", "id");
        schema.respondent_column = doc.value("respondent_column", "");
        schema.choice_column = doc.value("choice_column", "choice");
        if (doc.contains("availability_column") && !doc["availability_column"].is_null()) {
            schema.availability_column = doc["availability_column"].get<std::string>();
        }
        for (const auto& m : doc.at("modes")) {
            schema.mode_labels.push_back(m.get<std::string>());
        }
        if (doc.contains("mode_descriptions")) {
            schema.mode_descriptions = doc["mode_descriptions"].get<std::map<std::string, std::string>>();
        }
        for (const auto& item : doc.at("attributes")) {
            Attribute a;
            a.name = item.at("name").get<std::string>();
            a.group = parse_group(item.at("group").get<std::string>());
            a.kind = parse_kind(item.at("kind").get<std::string>());
            a.unit = item.value("unit", "");
            a.label = item.value("label", "");
            a.mode = item.value("mode", "");
            if (item.contains("levels")) {
                a.levels = item["levels"].get<std::vector<std::string>>();
            }
            if (item.contains("level_labels")) {
                a.level_labels = item["level_labels"].get<std::vector<std::string>>();
            }
            schema.attributes.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("malformed schema: {}", e.what()));
    }
    schema.validate();
    return schema;
}

nlohmann::json AttributeSchema::to_json() const
{
    nlohmann::json doc;
    doc["id_column"] = id_column;
    doc["respondent_column"] = respondent_column;
    doc["choice_column"] = choice_column;
    doc["availability_column"] = availability_column ? nlohmann::json(*availability_column) : nlohmann::json();
    doc["modes"] = mode_labels;
    doc["mode_descriptions"] = mode_descriptions;
    auto& attrs = doc["attributes"] = nlohmann::json::array();
    for (const auto& a : attributes) {
        nlohmann::json item{{"name", a.name},
                            {"group", std::string(to_string(a.group))},
                            {"kind", std::string(to_string(a.kind))}};
        if (!a.unit.empty()) {
            item["unit"] = a.unit;
        }
        if (!a.label.empty()) {
            item["label"] = a.label;
        }
        if (!a.mode.empty()) {
            item["mode"] = a.mode;
        }
        if (!a.levels.empty()) {
            item["levels"] = a.levels;
        }
        if (!a.level_labels.empty()) {
            item["level_labels"] = a.level_labels;
        }
        attrs.push_back(std::move(item));
    }
    return doc;
}

bool ChoiceInstance::is_available(std::string_view mode) const
{
    return std::find(available_modes.begin(), available_modes.end(), mode) != available_modes.end();
}

namespace {

// Column role resolved from the header.
struct ColumnMap {
    std::size_t id = std::string::npos;
    std::size_t respondent = std::string::npos;
    std::size_t choice = std::string::npos;
    std::size_t availability = std::string::npos;
    std::vector<std::size_t> attribute; // header position per schema attribute
};

ColumnMap map_columns(const std::vector<std::string>& header, const AttributeSchema& schema)
{
    ColumnMap map;
    map.attribute.assign(schema.attributes.size(), std::string::npos);
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto name = std::string(trim(header[c]));
        std::size_t* slot = nullptr;
        if (name == schema.id_column) {
            slot = &map.id;
        } else if (!schema.respondent_column.empty() && name == schema.respondent_column) {
            slot = &map.respondent;
        } else if (name == schema.choice_column) {
            slot = &map.choice;
        } else if (schema.availability_column && name == *schema.availability_column) {
            slot = &map.availability;
        } else if (auto a = schema.find(name)) {
            slot = &map.attribute[*a];
        } else {
            throw LoadError(0, name, "unknown column");
        }
        if (*slot != std::string::npos) {
            throw LoadError(0, name, "duplicate column");
        }
        *slot = c;
    }
    auto require = [](std::size_t pos, const std::string& name) {
        if (pos == std::string::npos) {
            throw LoadError(0, name, "missing column");
        }
    };
    require(map.id, schema.id_column);
    require(map.choice, schema.choice_column);
    if (!schema.respondent_column.empty()) {
        require(map.respondent, schema.respondent_column);
    }
    if (schema.availability_column) {
        require(map.availability, *schema.availability_column);
    }
    for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
        require(map.attribute[a], schema.attributes[a].name);
    }
    return map;
}

Value parse_value(const Attribute& attr, std::string_view field, std::size_t row)
{
    if (is_missing_token(field)) {
        return Missing{};
    }
    auto text = trim(field);
    if (attr.kind == AttributeKind::continuous) {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
            throw LoadError(row, attr.name, fmt::format("unparseable number '{}'", text));
        }
        return v;
    }
    if (auto idx = attr.level_index(text)) {
        return *idx;
    }
    throw LoadError(row, attr.name, fmt::format("level '{}' not in declared levels", text));
}

} // namespace

std::vector<ChoiceInstance> parse_dataset(std::istream& in, const AttributeSchema& schema, LoadOptions options)
{
    schema.validate();
    auto table = csv::read(in, options.delimiter);
    if (table.header.empty()) {
        throw LoadError(0, "", "empty input");
    }
    const auto columns = map_columns(table.header, schema);

    std::vector<ChoiceInstance> out;
    out.reserve(table.rows.size());
    std::unordered_set<std::string> seen_ids;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto row_no = r + 1;
        const auto& fields = table.rows[r];
        if (fields.size() != table.header.size()) {
            throw LoadError(row_no, "", fmt::format("expected {} fields, found {}", table.header.size(), fields.size()));
        }
        ChoiceInstance inst;
        inst.id = std::string(trim(fields[columns.id]));
        if (inst.id.empty()) {
            throw LoadError(row_no, schema.id_column, "empty identifier");
        }
        if (!seen_ids.insert(inst.id).second) {
            throw LoadError(row_no, schema.id_column, fmt::format("duplicate identifier '{}'", inst.id));
        }
        if (columns.respondent != std::string::npos) {
            inst.respondent = std::string(trim(fields[columns.respondent]));
            if (inst.respondent.empty()) {
                throw LoadError(row_no, schema.respondent_column, "empty respondent identifier");
            }
        } else {
            inst.respondent = inst.id;
        }

        inst.values.reserve(schema.attributes.size());
        for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
            inst.values.push_back(parse_value(schema.attributes[a], fields[columns.attribute[a]], row_no));
        }

        if (columns.availability != std::string::npos) {
            std::vector<bool> flags(schema.mode_labels.size(), false);
            for (const auto& token : csv::split(fields[columns.availability], kAvailabilitySeparator)) {
                auto mode = canonical_mode(token);
                if (mode.empty()) {
                    continue;
                }
                auto idx = schema.mode_index(mode);
                if (!idx) {
                    throw LoadError(row_no, *schema.availability_column, fmt::format("unknown mode '{}'", mode));
                }
                flags[*idx] = true;
            }
            for (std::size_t m = 0; m < flags.size(); ++m) {
                if (flags[m]) {
                    inst.available_modes.push_back(schema.mode_labels[m]);
                }
            }
            if (inst.available_modes.empty()) {
                throw LoadError(row_no, *schema.availability_column, "empty availability set");
            }
        } else {
            inst.available_modes = schema.mode_labels;
        }

        inst.chosen_mode = canonical_mode(fields[columns.choice]);
        if (!schema.mode_index(inst.chosen_mode)) {
            throw LoadError(row_no, schema.choice_column, fmt::format("unknown mode '{}'", inst.chosen_mode));
        }
        if (!inst.is_available(inst.chosen_mode)) {
            throw LoadError(row_no, schema.choice_column,
                            fmt::format("chosen mode '{}' not in availability set", inst.chosen_mode));
        }
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<ChoiceInstance> load_dataset(const std::filesystem::path& path, const AttributeSchema& schema,
                                         LoadOptions options)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(fmt::format("cannot open dataset '{}'", path.string()));
    }
    return parse_dataset(in, schema, options);
}

void write_dataset(std::ostream& out, std::span<const ChoiceInstance> data, const AttributeSchema& schema,
                   LoadOptions options)
{
    const char d = options.delimiter;
    std::vector<std::string> header{schema.id_column};
    if (!schema.respondent_column.empty()) {
        header.push_back(schema.respondent_column);
    }
    for (const auto& a : schema.attributes) {
        header.push_back(a.name);
    }
    if (schema.availability_column) {
        header.push_back(*schema.availability_column);
    }
    header.push_back(schema.choice_column);
    out << csv::join(header, d) << '\n';

    for (const auto& inst : data) {
        std::vector<std::string> row{inst.id};
        if (!schema.respondent_column.empty()) {
            row.push_back(inst.respondent);
        }
        for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
            const auto& v = inst.values.at(a);
            if (is_missing(v)) {
                row.emplace_back("NA");
            } else if (const auto* num = std::get_if<double>(&v)) {
                row.push_back(fmt::format("{}", *num));
            } else {
                row.push_back(schema.attributes[a].levels.at(std::get<std::size_t>(v)));
            }
        }
        if (schema.availability_column) {
            std::string avail;
            for (const auto& m : inst.available_modes) {
                if (!avail.empty()) {
                    avail.push_back(kAvailabilitySeparator);
                }
                avail += m;
            }
            row.push_back(std::move(avail));
        }
        row.push_back(inst.chosen_mode);
        out << csv::join(row, d) << '\n';
    }
}

TrainTestSplit split_train_test(std::span<const ChoiceInstance> data, std::size_t n_respondents, std::size_t n_test,
                                std::uint64_t seed)
{
    std::vector<std::string> respondents;
    std::unordered_map<std::string, std::size_t> respondent_pos;
    for (const auto& inst : data) {
        if (respondent_pos.emplace(inst.respondent, respondents.size()).second) {
            respondents.push_back(inst.respondent);
        }
    }
    if (n_respondents > respondents.size()) {
        throw SizingError(fmt::format("requested {} training respondents but the dataset has {}", n_respondents,
                                      respondents.size()));
    }

    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(respondents.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> in_train(respondents.size(), false);
    for (std::size_t i = 0; i < n_respondents; ++i) {
        in_train[order[i]] = true;
    }

    TrainTestSplit split;
    split.seed = seed;
    std::vector<std::size_t> residual;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (in_train[respondent_pos.at(data[r].respondent)]) {
            split.train.push_back(data[r]);
        } else {
            residual.push_back(r);
        }
    }
    if (n_test > residual.size()) {
        throw SizingError(
            fmt::format("requested {} test rows but only {} remain outside the training pool", n_test, residual.size()));
    }
    std::shuffle(residual.begin(), residual.end(), rng);
    residual.resize(n_test);
    std::sort(residual.begin(), residual.end());
    split.test.reserve(n_test);
    for (auto r : residual) {
        split.test.push_back(data[r]);
    }
    return split;
}

const NumericRange& NumericNormalizer::range(std::string_view attribute) const
{
    auto it = ranges_.find(attribute);
    if (it == ranges_.end()) {
        throw ContractError(fmt::format("normalizer has no range for '{}'", attribute));
    }
    return it->second;
}

double NumericNormalizer::scale(std::string_view attribute, double value) const
{
    const auto& r = range(attribute);
    if (r.degenerate()) {
        return 0.0;
    }
    return std::clamp((value - r.min) / (r.max - r.min), 0.0, 1.0);
}

NumericNormalizer fit_normalizer(std::span<const ChoiceInstance> train, const AttributeSchema& schema)
{
    std::map<std::string, NumericRange, std::less<>> ranges;
    for (std::size_t a = 0; a < schema.attributes.size(); ++a) {
        const auto& attr = schema.attributes[a];
        if (attr.kind != AttributeKind::continuous) {
            continue;
        }
        std::optional<NumericRange> range;
        for (const auto& inst : train) {
            const auto* v = std::get_if<double>(&inst.values.at(a));
            if (!v) {
                continue;
            }
            if (!range) {
                range = NumericRange{*v, *v};
            } else {
                range->min = std::min(range->min, *v);
                range->max = std::max(range->max, *v);
            }
        }
        if (!range) {
            throw FitError(fmt::format("attribute '{}' has no values in the training pool", attr.name));
        }
        ranges.emplace(attr.name, *range);
    }
    return NumericNormalizer(std::move(ranges));
}

} // namespace modechoice
