#pragma once

#include <cstdint>
#include <vector>

#include "modechoice/dataset.hpp"

namespace modechoice {

// A stated-preference style survey shaped like Swissmetro: three modes (TRAIN,
// SM, CAR), car availability per respondent, several scenarios per respondent,
// choices drawn from a logit model. Deterministic for a given seed.
struct SyntheticOptions {
    std::size_t respondents = 400;
    std::size_t scenarios_per_respondent = 9;
    std::uint64_t seed = 2024;
    // Probability that a socio or trip_cat value is blanked out.
    double missing_rate = 0.0;
};

struct SyntheticSurvey {
    AttributeSchema schema;
    std::vector<ChoiceInstance> data;
};

AttributeSchema swissmetro_like_schema();
SyntheticSurvey make_swissmetro_like(const SyntheticOptions& options = {});

} // namespace modechoice
