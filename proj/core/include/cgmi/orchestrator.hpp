// SPDX-License-Identifier: Apache-2.0
//
// Scenario loading and the staged lesson loop.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/agents.hpp"
#include "cgmi/lm_backend.hpp"
#include "cgmi/scale.hpp"
#include "cgmi/transcript.hpp"

namespace cgmi::orchestrator {

enum class SelectionMode { Willingness, Random };
std::string_view to_string(SelectionMode mode);
std::optional<SelectionMode> selection_mode_from_string(std::string_view name);

enum class BackendKind { Scripted, Http, Replay };
std::string_view to_string(BackendKind kind);
std::optional<BackendKind> backend_kind_from_string(std::string_view name);

struct BackendConfig {
    BackendKind kind = BackendKind::Scripted;
    std::filesystem::path script;
    std::string model;
    /// Replay source, or the recording target for an http backend.
    std::filesystem::path cassette;
};

struct Limits {
    std::size_t max_turns = 60;
    std::size_t max_stage_turns = 12;
    std::size_t working_memory_capacity = 20;
    std::optional<std::size_t> skill_k = 3;
    std::size_t context_window = 10;
};

struct ScenarioConfig {
    std::filesystem::path source;
    std::string topic;
    std::filesystem::path teacher;
    std::vector<std::filesystem::path> students;
    std::filesystem::path skill_library;
    std::optional<std::filesystem::path> prompt_templates;
    BackendConfig backend;
    SelectionMode selection_mode = SelectionMode::Willingness;
    std::uint64_t seed = 0;
    std::size_t consistency_m = 2;
    Limits limits;
    double role_temperature = 0.7;
};

/// Relative paths resolve against `base_dir`. Errors are ConfigErrors naming
/// `source` and the offending field.
ScenarioConfig parse_scenario_config(const nlohmann::json& document, const std::filesystem::path& base_dir,
                                     const std::string& source);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

struct LoadOptions {
    std::optional<SelectionMode> selection_mode;
    std::optional<std::uint64_t> seed;
    std::optional<BackendKind> backend_kind;
    /// Replaces the configured backend entirely (tests, benchmarks).
    lm::BackendPtr backend;
};

struct SetupCheck {
    std::string agent;
    scale::ConsistencyReport report;
};

struct Scenario {
    ScenarioConfig config;
    std::shared_ptr<lm::InstrumentedBackend> backend;
    agents::AgentSettings settings;
    std::unique_ptr<agents::RoleAgent> teacher;
    std::vector<std::unique_ptr<agents::RoleAgent>> students;
    std::vector<std::string> roster;
    std::vector<SetupCheck> setup_checks;

    [[nodiscard]] agents::RoleAgent* find(std::string_view id) const;
    [[nodiscard]] std::vector<agents::RoleAgent*> student_ptrs() const;
};

/// Builds the backend named by the config (after option overrides).
lm::BackendPtr make_backend(const ScenarioConfig& config);

/// Constructs every role agent, assigns personas depth-first and runs the
/// initial persona consistency check on each of their scales.
Scenario load_scenario(const ScenarioConfig& config, LoadOptions options = {});
Scenario load_scenario(const std::filesystem::path& config_path, LoadOptions options = {});

// --- stage machine ---------------------------------------------------------------

class StageMachine {
public:
    StageMachine(std::size_t stage_count, std::size_t max_stage_turns);

    struct Step {
        agents::SignalValue applied = agents::SignalValue::Continue;
        bool capped = false;  // the stage-turn cap overrode a Continue
        std::size_t from = 0;
        std::size_t to = 0;
    };

    /// Counts one teacher turn in the current stage and applies the proposal.
    Step on_teacher_turn(agents::SignalValue proposed);
    /// User-forced advance; on the final stage this ends the lesson.
    Step force_advance();
    void end() noexcept { ended_ = true; }

    [[nodiscard]] std::size_t current() const noexcept { return current_; }
    [[nodiscard]] std::size_t stage_count() const noexcept { return count_; }
    [[nodiscard]] std::size_t turns_in_stage() const noexcept { return turns_; }
    [[nodiscard]] bool ended() const noexcept { return ended_; }
    [[nodiscard]] bool final_stage() const noexcept { return current_ + 1 == count_; }

private:
    Step apply(agents::SignalValue value, bool capped);

    std::size_t count_;
    std::size_t cap_;
    std::size_t current_ = 0;
    std::size_t turns_ = 0;
    bool ended_ = false;
};

// --- routing ------------------------------------------------------------------------

struct RoutingDecision {
    std::string speaker;
    std::string mode;  // "willingness", "random" or "directed"
    std::vector<agents::WillingnessScore> scores;
};

/// Question-to-student goes straight to the named student; question-to-class
/// is scored (or drawn at random) over the whole roster.
RoutingDecision route_question(const agents::Classification& classification, std::string_view question,
                               std::span<agents::RoleAgent* const> students,
                               std::span<const transcript::TranscriptEvent> context, SelectionMode mode,
                               std::mt19937_64& rng, lm::Backend& backend,
                               const agents::WillingnessOptions& options, const agents::AgentSettings& settings);

/// Exact roster match first, then case-insensitive; nullopt when absent.
std::optional<std::string> match_roster_name(std::span<const std::string> roster, std::string_view name);

// --- lesson ---------------------------------------------------------------------------

enum class Termination { SupervisorEnd, MaxTurns, UserEnd };
std::string_view to_string(Termination termination);

struct RunReport {
    std::size_t events = 0;
    std::size_t stages_completed = 0;
    std::size_t stage_count = 0;
    std::size_t teacher_turns = 0;
    std::map<std::string, std::size_t> backend_calls;
    Termination termination = Termination::SupervisorEnd;
};

nlohmann::json to_json(const RunReport& report, std::span<const SetupCheck> setup = {});

struct RunOptions {
    /// Transcript is streamed here event by event when set.
    std::optional<std::filesystem::path> transcript_path;
    /// Human-readable progress and `inspect` output.
    std::ostream* console = nullptr;
};

struct RunResult {
    transcript::Transcript transcript;
    RunReport report;
    agents::TeachingPlan plan;
};

RunResult run_lesson(Scenario& scenario, const RunOptions& options = {});

/// Same loop, but turns are driven by commands read line by line:
/// next (or an empty line), advance, end, ask <student> <question>,
/// pause, resume, inspect <agent>, help. When the stream runs out the lesson
/// plays on to its natural end.
RunResult interactive_session(Scenario& scenario, std::istream& commands, const RunOptions& options = {});

std::string interactive_help();

/// Cross-lesson carry-over: one memory document per role agent.
nlohmann::json export_memories(const Scenario& scenario);
void import_memories(Scenario& scenario, const nlohmann::json& document);

}  // namespace cgmi::orchestrator
