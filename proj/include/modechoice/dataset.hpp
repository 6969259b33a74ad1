#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace modechoice {

// Similarity group an attribute contributes to.
enum class AttributeGroup { socio, trip_num, trip_cat, additional };
enum class AttributeKind { ordinal, nominal, continuous };

std::string_view to_string(AttributeGroup group);
std::string_view to_string(AttributeKind kind);
AttributeGroup parse_group(std::string_view text);
AttributeKind parse_kind(std::string_view text);

struct Attribute {
    std::string name;
    AttributeGroup group = AttributeGroup::socio;
    AttributeKind kind = AttributeKind::nominal;
    std::string unit;
    // Text used in narratives; falls back to name.
    std::string label;
    // Set when the attribute describes one alternative (e.g. TRAIN travel time).
    std::string mode;
    // Permitted levels for ordinal/nominal attributes, lowest first for ordinal.
    std::vector<std::string> levels;
    // Optional display text, parallel to levels.
    std::vector<std::string> level_labels;

    [[nodiscard]] bool categorical() const noexcept { return kind != AttributeKind::continuous; }
    [[nodiscard]] const std::string& display_label() const noexcept { return label.empty() ? name : label; }
    [[nodiscard]] std::optional<std::size_t> level_index(std::string_view level) const;
    [[nodiscard]] const std::string& level_text(std::size_t index) const;
};

// Declares the survey columns and how each one is compared and rendered.
struct AttributeSchema {
    std::vector<Attribute> attributes;
    std::vector<std::string> mode_labels;
    std::map<std::string, std::string> mode_descriptions;
    std::string id_column = "id";
    // Empty means every row is its own respondent.
    std::string respondent_column;
    std::string choice_column = "choice";
    std::optional<std::string> availability_column;

    // Throws ConfigError when an invariant is broken.
    void validate() const;

    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const;
    [[nodiscard]] std::size_t index_of(std::string_view name) const;
    [[nodiscard]] std::optional<std::size_t> mode_index(std::string_view canonical_label) const;

    static AttributeSchema from_json(const nlohmann::json& doc);
    [[nodiscard]] nlohmann::json to_json() const;
};

// Upper-cased, whitespace-trimmed mode token.
std::string canonical_mode(std::string_view raw);

struct Missing {
    bool operator==(const Missing&) const = default;
};

// Continuous attributes hold a double, ordinal/nominal ones a level index.
using Value = std::variant<Missing, double, std::size_t>;

inline bool is_missing(const Value& v) noexcept { return std::holds_alternative<Missing>(v); }

// One respondent-scenario observation. values is parallel to schema.attributes.
struct ChoiceInstance {
    std::string id;
    std::string respondent;
    std::vector<Value> values;
    // Canonical labels in schema order.
    std::vector<std::string> available_modes;
    std::string chosen_mode;

    [[nodiscard]] bool is_available(std::string_view mode) const;

    bool operator==(const ChoiceInstance&) const = default;
};

inline constexpr char kAvailabilitySeparator = '|';

struct LoadOptions {
    char delimiter = ',';
};

std::vector<ChoiceInstance> load_dataset(const std::filesystem::path& path, const AttributeSchema& schema,
                                         LoadOptions options = {});
std::vector<ChoiceInstance> parse_dataset(std::istream& in, const AttributeSchema& schema, LoadOptions options = {});

// Writes the header plus one row per instance; load_dataset reads it back unchanged.
void write_dataset(std::ostream& out, std::span<const ChoiceInstance> data, const AttributeSchema& schema,
                   LoadOptions options = {});

struct TrainTestSplit {
    std::vector<ChoiceInstance> train;
    std::vector<ChoiceInstance> test;
    std::uint64_t seed = 0;
};

// Train takes every row of n_respondents sampled respondents; test draws n_test
// rows uniformly from the remaining respondents. Both keep source row order.
TrainTestSplit split_train_test(std::span<const ChoiceInstance> data, std::size_t n_respondents, std::size_t n_test,
                                std::uint64_t seed);

struct NumericRange {
    double min = 0.0;
    double max = 0.0;

    [[nodiscard]] bool degenerate() const noexcept { return !(max > min); }
};

// Min-max scaling fitted on the training pool. Out-of-range values clamp to
// [0, 1]; a degenerate attribute scales everything to 0.
class NumericNormalizer {
public:
    NumericNormalizer() = default;
    explicit NumericNormalizer(std::map<std::string, NumericRange, std::less<>> ranges)
        : ranges_(std::move(ranges))
    {
    }

    [[nodiscard]] double scale(std::string_view attribute, double value) const;
    [[nodiscard]] const NumericRange& range(std::string_view attribute) const;
    [[nodiscard]] bool degenerate(std::string_view attribute) const { return range(attribute).degenerate(); }
    [[nodiscard]] const std::map<std::string, NumericRange, std::less<>>& ranges() const noexcept { return ranges_; }

private:
    std::map<std::string, NumericRange, std::less<>> ranges_;
};

NumericNormalizer fit_normalizer(std::span<const ChoiceInstance> train, const AttributeSchema& schema);

} // namespace modechoice
