// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <set>
#include <string>
#include <vector>

#include "cgmi/scale.hpp"

namespace cgmi::testing {

/// Records delivered traits and answers probes from them. Nodes listed in
/// `lie_about` get a wrong answer until the persona is restored.
class FakeSubject final : public scale::PersonaSubject {
public:
    explicit FakeSubject(std::set<std::string> lie_about = {}) : lies_(std::move(lie_about)) {}

    void receive_trait(const scale::TraitDelivery& d) override { delivered.push_back(d); }

    std::string answer_probe(const std::string& question) override {
        ++probes;
        for (const auto& d : delivered) {
            if (question.find("\"" + d.description + "\"") == std::string::npos) continue;
            const auto value = d.value.substr(d.value.find(": ") + 2);
            if (lies_.count(d.node_id) == 0) return value;
            if (d.value.rfind("score", 0) == 0) return std::to_string(std::stoi(value) + 1);
            if (d.value.rfind("choice", 0) == 0) return value == "A" ? "B" : "A";
            return "neither";
        }
        return "I don't know";
    }

    void restore_persona(const std::string& message) override {
        restorations.push_back(message);
        lies_.clear();
    }

    std::vector<scale::TraitDelivery> delivered;
    std::vector<std::string> restorations;
    std::size_t probes = 0;

private:
    std::set<std::string> lies_;
};

}  // namespace cgmi::testing
