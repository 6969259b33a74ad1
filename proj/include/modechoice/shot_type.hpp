#pragma once

#include <string_view>

namespace modechoice {

enum class ShotType { zeroshot, fewshot_random, fewshot_targeted };

std::string_view to_string(ShotType shot);
ShotType parse_shot_type(std::string_view text);

// "Zero-Shot", "Random Few-Shot", "Targeted Few-Shot"
std::string_view display_name(ShotType shot);

} // namespace modechoice
