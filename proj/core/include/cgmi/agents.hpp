// SPDX-License-Identifier: Apache-2.0
//
// Role agents (persona + cognition + backend) and the general agents that
// serve them: teaching-plan generator, process supervisor, persona
// consistency checker, willingness scorer, and the utterance classifier the
// orchestrator uses for question routing.
#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/cognition.hpp"
#include "cgmi/lm_backend.hpp"
#include "cgmi/scale.hpp"
#include "cgmi/transcript.hpp"

namespace cgmi::agents {

struct AgentSettings {
    double role_temperature = 0.7;
    double general_temperature = 0.0;
    int max_tokens = 512;
    std::optional<std::size_t> skill_k = 3;
    std::size_t working_capacity = 20;
    /// Distil working memory on every k-th cycle; reflect/plan/act run every cycle.
    std::size_t distill_every = 1;
};

class RoleAgent final : public scale::PersonaSubject {
public:
    RoleAgent(scale::PersonaProfile profile, lm::BackendPtr backend,
              std::shared_ptr<const cognition::PromptTemplates> templates, AgentSettings settings = {},
              std::vector<cognition::SkillEntry> skills = {});

    [[nodiscard]] const std::string& id() const noexcept { return profile_.agent_name; }
    [[nodiscard]] const scale::PersonaProfile& profile() const noexcept { return profile_; }
    [[nodiscard]] cognition::CognitiveState& cognition() noexcept { return state_; }
    [[nodiscard]] const cognition::CognitiveState& cognition() const noexcept { return state_; }
    [[nodiscard]] lm::Backend& backend() const noexcept { return *backend_; }
    [[nodiscard]] const AgentSettings& settings() const noexcept { return settings_; }

    /// Header, every delivered trait line and any restoration notes.
    [[nodiscard]] std::string persona_text() const;
    [[nodiscard]] const std::vector<scale::TraitDelivery>& deliveries() const noexcept { return deliveries_; }
    [[nodiscard]] const std::vector<std::string>& restorations() const noexcept { return restorations_; }

    void receive_trait(const scale::TraitDelivery& delivery) override;
    std::string answer_probe(const std::string& question) override;
    void restore_persona(const std::string& message) override;

    void perceive(int turn, std::string observation);
    /// One full cognitive cycle; returns the draft utterance.
    std::string take_turn(int turn);
    /// Re-runs only the action step with a correction note.
    std::string regenerate(int turn, std::string_view correction);

    /// Persona and memory summary for interactive inspection.
    [[nodiscard]] std::string inspect() const;

private:
    [[nodiscard]] cognition::CycleContext context() const;

    scale::PersonaProfile profile_;
    lm::BackendPtr backend_;
    std::shared_ptr<const cognition::PromptTemplates> templates_;
    AgentSettings settings_;
    cognition::CognitiveState state_;
    std::vector<scale::TraitDelivery> deliveries_;
    std::vector<std::string> restorations_;
    std::size_t cycles_ = 0;
};

// --- teaching plan ---------------------------------------------------------------

struct Stage {
    std::string name;
    std::string description;
    std::string completion_criterion;
};

struct TeachingPlan {
    std::string topic;
    std::vector<std::string> objectives;
    std::vector<Stage> stages;
};

/// Strict parser for the plan document grammar:
///
///   Topic: <text>
///   Objectives:
///   - <text>            (zero or more)
///   Stages:
///   1. <name>
///   Description: <text>
///   Criterion: <text>
///   2. ...
///
/// Blank lines are ignored; anything else is a "plan" ProtocolError.
TeachingPlan parse_plan(std::string_view document);
std::string render_plan(const TeachingPlan& plan);
nlohmann::json to_json(const TeachingPlan& plan);

/// One backend call; the returned plan carries the requested topic verbatim.
TeachingPlan generate_plan(std::string_view topic, lm::Backend& backend, const AgentSettings& settings = {});

// --- supervisor --------------------------------------------------------------------

enum class SignalValue { Continue, AdvanceStage, EndLesson };
std::string_view to_string(SignalValue value);

struct Signal {
    SignalValue value = SignalValue::Continue;
    std::string rationale;
    /// The raw verdict keyword before boundary normalisation.
    std::string verdict;
};

/// Maps a verdict reply to a Signal. ADVANCE on the final stage becomes
/// EndLesson; END before the final stage becomes AdvanceStage (no skipping).
Signal parse_verdict(std::string_view reply, std::size_t current_stage, std::size_t stage_count);

std::string supervisor_prompt(const TeachingPlan& plan, std::size_t current_stage,
                              std::span<const transcript::TranscriptEvent> recent_events);

Signal supervise(const TeachingPlan& plan, std::size_t current_stage,
                 std::span<const transcript::TranscriptEvent> recent_events, lm::Backend& backend,
                 const AgentSettings& settings = {});

// --- consistency checker -------------------------------------------------------------

struct PersonaVerdict {
    bool consistent = true;
    std::string correction;
};

PersonaVerdict check_persona(const RoleAgent& agent, std::string_view draft, lm::Backend& backend,
                             const AgentSettings& settings = {});

// --- willingness --------------------------------------------------------------------

struct WillingnessScore {
    std::string agent;
    int score = 0;
    std::string rationale;
};

struct WillingnessOptions {
    std::size_t context_window = 10;
    bool parallel = false;
};

/// Parses "SCORE: n" from the reply; nullopt when absent or outside 1..5.
std::optional<WillingnessScore> parse_willingness(std::string_view agent, std::string_view reply);

std::vector<WillingnessScore> score_willingness(std::span<RoleAgent* const> students, std::string_view question,
                                                std::span<const transcript::TranscriptEvent> context,
                                                lm::Backend& backend, const WillingnessOptions& options = {},
                                                const AgentSettings& settings = {});

/// Highest score wins; ties go to the earliest roster position.
std::string select_speaker(std::span<const WillingnessScore> scores, std::span<const std::string> roster);

/// Uniform draw from the roster.
std::string select_random(std::span<const std::string> roster, std::mt19937_64& rng);

// --- utterance classification --------------------------------------------------------

enum class UtteranceAct { Statement, QuestionToClass, QuestionToStudent };

struct Classification {
    UtteranceAct act = UtteranceAct::Statement;
    std::string target;  // QuestionToStudent only
};

Classification parse_classification(std::string_view reply);
Classification classify_utterance(std::string_view utterance, std::span<const std::string> roster,
                                  lm::Backend& backend, const AgentSettings& settings = {});

}  // namespace cgmi::agents
