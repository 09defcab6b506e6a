// SPDX-License-Identifier: Apache-2.0
#include "cgmi/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace cgmi::text {

namespace {
bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }
}  // namespace

std::string trim(std::string_view s) {
    auto begin = s.begin();
    auto end = s.end();
    while (begin != end && is_space(*begin)) ++begin;
    while (end != begin && is_space(*(end - 1))) --end;
    return {begin, end};
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (lower(s[i]) != lower(prefix[i])) return false;
    }
    return true;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < s.size()) lines.emplace_back(s.substr(start));
            break;
        }
        auto line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

std::string first_line(std::string_view s) {
    auto nl = s.find('\n');
    return trim(s.substr(0, nl));
}

std::string after_first_line(std::string_view s) {
    auto nl = s.find('\n');
    if (nl == std::string_view::npos) return {};
    return trim(s.substr(nl + 1));
}

std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string current;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
            current.push_back(lower(c));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::optional<long long> first_integer(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (std::isdigit(static_cast<unsigned char>(s[i])) == 0) continue;
        // A digit glued to letters (e.g. "B5") is not an integer token.
        if (i > 0 && std::isalpha(static_cast<unsigned char>(s[i - 1])) != 0) {
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])) != 0) ++i;
            continue;
        }
        bool negative = i > 0 && s[i - 1] == '-';
        long long value = 0;
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j])) != 0) {
            value = value * 10 + (s[j] - '0');
            if (value > 1'000'000'000LL) return std::nullopt;
            ++j;
        }
        return negative ? -value : value;
    }
    return std::nullopt;
}

std::string truncate(std::string_view s, std::size_t max_chars) {
    return std::string(s.substr(0, std::min(max_chars, s.size())));
}

double round_half_up(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    // Nudge by a relative epsilon so values like 30.005 stored as 30.00499999 round up.
    const double scaled = value * scale;
    const double nudge = std::abs(scaled) * 1e-12 + 1e-9;
    return std::copysign(std::floor(std::abs(scaled) + 0.5 + nudge), scaled) / scale;
}

std::string fixed2(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", round_half_up(value, 2));
    return buf;
}

}  // namespace cgmi::text
