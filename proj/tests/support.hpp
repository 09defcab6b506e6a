// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/lm_backend.hpp"
#include "cgmi/scale.hpp"

namespace cgmi::testing {

inline std::filesystem::path data_dir() { return std::filesystem::path(CGMI_DATA_DIR); }
inline std::filesystem::path demo_config() { return data_dir() / "scenarios" / "demo" / "config.json"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("cgmi-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::trunc) << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline nlohmann::json read_json(const std::filesystem::path& p) { return nlohmann::json::parse(read_text(p)); }

/// Answers persona probes with the value written next to the probed
/// description in the persona text.
inline lm::ScriptEntry truthful_probe_entry() {
    lm::ScriptEntry e;
    e.match = lm::MatchKind::Regex;
    e.pattern = R"(- ([^\n\[]+) \[(?:score|choice|type): ([^\]\n]+)\][\s\S]*"\1")";
    e.response = "$2";
    e.tag = std::string(lm::tags::kPersonaProbe);
    return e;
}

inline lm::ScriptEntry entry(std::string_view tag, std::string pattern, std::string response,
                             lm::MatchKind match = lm::MatchKind::Substring,
                             std::optional<std::size_t> max_uses = std::nullopt) {
    lm::ScriptEntry e;
    e.match = match;
    e.pattern = std::move(pattern);
    e.response = std::move(response);
    e.max_uses = max_uses;
    e.tag = std::string(tag);
    return e;
}

/// Big Five shaped tree (root, 5 traits, 5 facets each) with random facet scores.
inline nlohmann::json random_big_five(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> score(1, 5);
    nlohmann::json nodes = nlohmann::json::array();
    nlohmann::json root{{"id", "root"}, {"description", "Big Five personality"}, {"children", nlohmann::json::array()}};
    std::vector<nlohmann::json> rest;
    for (int t = 0; t < 5; ++t) {
        const std::string tid = "trait" + std::to_string(t);
        root["children"].push_back(tid);
        nlohmann::json trait{{"id", tid},
                             {"description", "Trait " + std::to_string(t)},
                             {"range", {5, 25}},
                             {"children", nlohmann::json::array()}};
        for (int f = 0; f < 5; ++f) {
            const std::string fid = tid + "_facet" + std::to_string(f);
            trait["children"].push_back(fid);
            rest.push_back({{"id", fid},
                            {"description", "Facet " + std::to_string(t) + "." + std::to_string(f)},
                            {"range", {1, 5}},
                            {"score", score(rng)}});
        }
        rest.push_back(std::move(trait));
    }
    // Shuffle the declaration order so the traversal cannot lean on it.
    std::shuffle(rest.begin(), rest.end(), rng);
    nodes.push_back(std::move(root));
    for (auto& n : rest) nodes.push_back(std::move(n));
    return {{"name", "Big Five"}, {"instrument", "big_five"}, {"kind", "score_based"}, {"root", "root"}, {"nodes", nodes}};
}

}  // namespace cgmi::testing
