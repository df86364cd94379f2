#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tessa {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase, trimmed, inner whitespace runs collapsed to one space.
std::string normalize_name(std::string_view s);

bool contains_ci(std::string_view haystack, std::string_view needle);

/// Non-overlapping occurrences of `needle` in `haystack`, case-insensitive.
std::size_t count_ci(std::string_view haystack, std::string_view needle);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Shortest round-trippable decimal rendering ("%.17g" trimmed).
std::string format_number(double v);
/// Fixed-point rendering with `digits` decimals.
std::string format_fixed(double v, int digits);

std::uint64_t fnv1a64(std::string_view bytes);

/// SplitMix64 step; used for every seed derivation in the project.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t child);

}  // namespace tessa
