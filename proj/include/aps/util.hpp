#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace aps::util {

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);
/// Fixed-point with `decimals` digits.
std::string format_fixed(double value, int decimals);
double parse_double(std::string_view text);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);

/// Linear-interpolation quantile (numpy "linear"), q in [0, 1]. Empty input is an error.
double quantile(std::vector<double> values, double q);

}  // namespace aps::util
