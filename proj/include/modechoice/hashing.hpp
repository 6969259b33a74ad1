#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace modechoice {

// Lower-case hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

// First 16 hex digits of sha256_hex; used for config fingerprints and template hashes.
std::string short_hash(std::string_view data);

// Stable 64-bit seed derived from a base seed and any number of string parts.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> parts);

} // namespace modechoice
