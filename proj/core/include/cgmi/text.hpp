// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cgmi::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

std::vector<std::string> split_lines(std::string_view s);
std::string first_line(std::string_view s);
std::string after_first_line(std::string_view s);

/// Lowercased alphanumeric tokens ("Anxious, student!" -> {"anxious", "student"}).
std::vector<std::string> word_tokens(std::string_view s);

/// First integer token in free text, with an optional leading minus sign.
std::optional<long long> first_integer(std::string_view s);

std::string truncate(std::string_view s, std::size_t max_chars);

/// Formats with exactly two decimals after rounding half away from zero.
std::string fixed2(double value);
double round_half_up(double value, int decimals);

}  // namespace cgmi::text
