#include "modechoice/shot_type.hpp"

#include <fmt/format.h>

#include "modechoice/errors.hpp"

namespace modechoice {

std::string_view to_string(ShotType shot)
{
    switch (shot) {
    case ShotType::zeroshot:
        return "zeroshot";
    case ShotType::fewshot_random:
        return "fewshot_random";
    case ShotType::fewshot_targeted:
        return "fewshot_targeted";
    }
    return "?";
}

ShotType parse_shot_type(std::string_view text)
{
    for (auto s : {ShotType::zeroshot, ShotType::fewshot_random, ShotType::fewshot_targeted}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw ConfigError(fmt::format("unknown shot type '{}'", text));
}

std::string_view display_name(ShotType shot)
{
    switch (shot) {
    case ShotType::zeroshot:
        return "Zero-Shot";
    case ShotType::fewshot_random:
        return "Random Few-Shot";
    case ShotType::fewshot_targeted:
        return "Targeted Few-Shot";
    }
    return "?";
}

} // namespace modechoice
