#include "modechoice/synthetic.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>

namespace modechoice {

namespace {

Attribute categorical(std::string name, AttributeGroup group, AttributeKind kind, std::string label,
                      std::vector<std::string> levels, std::vector<std::string> level_labels = {})
{
    Attribute a;
    a.name = std::move(name);
    a.group = group;
    a.kind = kind;
    a.label = std::move(label);
    a.levels = std::move(levels);
    a.level_labels = std::move(level_labels);
    return a;
}

Attribute numeric(std::string name, std::string mode, std::string label, std::string unit)
{
    Attribute a;
    a.name = std::move(name);
    a.group = AttributeGroup::trip_num;
    a.kind = AttributeKind::continuous;
    a.mode = std::move(mode);
    a.label = std::move(label);
    a.unit = std::move(unit);
    return a;
}

} // namespace

AttributeSchema swissmetro_like_schema()
{
    using G = AttributeGroup;
    using K = AttributeKind;
    AttributeSchema s;
    s.mode_labels = {"TRAIN", "SM", "CAR"};
    s.mode_descriptions = {{"TRAIN", "regular train"}, {"SM", "Swissmetro, a high-speed maglev"}, {"CAR", "private car"}};
    s.id_column = "id";
    s.respondent_column = "respondent";
    s.choice_column = "choice";
    s.availability_column = "available";
    s.attributes = {
        categorical("age", G::socio, K::ordinal, "Age", {"1", "2", "3", "4", "5"},
                    {"24 or younger", "25 to 39", "40 to 54", "55 to 65", "over 65"}),
        categorical("income", G::socio, K::ordinal, "Annual income", {"1", "2", "3"},
                    {"under 50,000 CHF", "50,000 to 100,000 CHF", "over 100,000 CHF"}),
        categorical("gender", G::socio, K::nominal, "Gender", {"male", "female"}),
        categorical("ga", G::socio, K::nominal, "Holds an annual rail pass (GA)", {"no", "yes"}),
        categorical("purpose", G::trip_cat, K::nominal, "Trip purpose", {"commute", "shopping", "business", "leisure"}),
        categorical("luggage", G::trip_cat, K::ordinal, "Luggage", {"0", "1", "2"}, {"none", "one piece", "several pieces"}),
        numeric("train_tt", "TRAIN", "Travel time", "min"),
        numeric("train_co", "TRAIN", "Cost", "CHF"),
        numeric("train_he", "TRAIN", "Headway", "min"),
        numeric("sm_tt", "SM", "Travel time", "min"),
        numeric("sm_co", "SM", "Cost", "CHF"),
        numeric("sm_he", "SM", "Headway", "min"),
        numeric("car_tt", "CAR", "Travel time", "min"),
        numeric("car_co", "CAR", "Cost", "CHF"),
        categorical("first_class", G::additional, K::nominal, "Usually travels first class", {"no", "yes"}),
        categorical("who_pays", G::additional, K::nominal, "Who pays for the trip", {"self", "employer", "shared"}),
    };
    s.validate();
    return s;
}

SyntheticSurvey make_swissmetro_like(const SyntheticOptions& options)
{
    SyntheticSurvey out;
    out.schema = swissmetro_like_schema();
    const auto& schema = out.schema;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(unit(rng) * static_cast<double>(n)) % n; };
    auto gumbel = [&] { return -std::log(-std::log(std::max(unit(rng), 1e-300))); };
    const double train_headways[] = {30.0, 60.0, 120.0};
    const double sm_headways[] = {10.0, 20.0, 30.0};

    const auto idx = [&](const char* name) { return schema.index_of(name); };
    const std::size_t socio_cat[] = {idx("age"), idx("income"), idx("gender"), idx("ga"), idx("purpose"), idx("luggage")};

    for (std::size_t r = 0; r < options.respondents; ++r) {
        const auto respondent = fmt::format("R{:04}", r + 1);
        const std::size_t age = pick(5);
        const std::size_t income = pick(3);
        const std::size_t gender = pick(2);
        const std::size_t ga = unit(rng) < 0.25 ? 1 : 0;
        const std::size_t purpose = pick(4);
        const std::size_t luggage = unit(rng) < 0.6 ? 0 : (unit(rng) < 0.7 ? 1 : 2);
        const std::size_t first_class = unit(rng) < 0.2 ? 1 : 0;
        const std::size_t who_pays = purpose == 2 ? (unit(rng) < 0.7 ? 1 : 2) : 0;
        const bool car_available = unit(rng) < 0.7;
        const double base_tt = 40.0 + 240.0 * unit(rng);

        for (std::size_t s = 0; s < options.scenarios_per_respondent; ++s) {
            ChoiceInstance inst;
            inst.id = fmt::format("{}-S{}", respondent, s + 1);
            inst.respondent = respondent;
            inst.values.assign(schema.attributes.size(), Missing{});

            const double train_tt = std::round(base_tt * (0.8 + 0.4 * unit(rng)));
            const double train_co = ga ? 0.0 : std::round(train_tt * (0.3 + 0.3 * unit(rng)));
            const double train_he = train_headways[pick(3)];
            const double sm_tt = std::round(train_tt * (0.35 + 0.25 * unit(rng)));
            const double sm_co = std::round((ga ? train_tt * 0.3 : train_co) * (1.0 + 0.4 * unit(rng)));
            const double sm_he = sm_headways[pick(3)];
            const double car_tt = std::round(train_tt * (0.8 + 0.5 * unit(rng)));
            const double car_co = std::round(car_tt * (0.25 + 0.25 * unit(rng)));

            inst.values[idx("age")] = age;
            inst.values[idx("income")] = income;
            inst.values[idx("gender")] = gender;
            inst.values[idx("ga")] = ga;
            inst.values[idx("purpose")] = purpose;
            inst.values[idx("luggage")] = luggage;
            inst.values[idx("train_tt")] = train_tt;
            inst.values[idx("train_co")] = train_co;
            inst.values[idx("train_he")] = train_he;
            inst.values[idx("sm_tt")] = sm_tt;
            inst.values[idx("sm_co")] = sm_co;
            inst.values[idx("sm_he")] = sm_he;
            inst.values[idx("first_class")] = first_class;
            inst.values[idx("who_pays")] = who_pays;
            inst.available_modes = {"TRAIN", "SM"};
            if (car_available) {
                inst.values[idx("car_tt")] = car_tt;
                inst.values[idx("car_co")] = car_co;
                inst.available_modes.push_back("CAR");
            }

            const double cost_weight = who_pays == 1 ? 0.01 : 0.03 - 0.005 * static_cast<double>(income);
            const double u_train = -0.012 * train_tt - cost_weight * train_co - 0.006 * train_he + (ga ? 0.8 : 0.0) + gumbel();
            const double u_sm = 0.25 - 0.012 * sm_tt - cost_weight * sm_co - 0.006 * sm_he + gumbel();
            double best = u_train;
            inst.chosen_mode = "TRAIN";
            if (u_sm > best) {
                best = u_sm;
                inst.chosen_mode = "SM";
            }
            if (car_available) {
                const double u_car = 0.4 - 0.012 * car_tt - cost_weight * car_co + 0.3 * static_cast<double>(luggage)
                    + (purpose == 2 ? 0.3 : 0.0) + gumbel();
                if (u_car > best) {
                    inst.chosen_mode = "CAR";
                }
            }

            if (options.missing_rate > 0.0) {
                for (auto a : socio_cat) {
                    if (unit(rng) < options.missing_rate) {
                        inst.values[a] = Missing{};
                    }
                }
            }
            out.data.push_back(std::move(inst));
        }
    }
    return out;
}

} // namespace modechoice
