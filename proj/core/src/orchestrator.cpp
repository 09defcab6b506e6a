// SPDX-License-Identifier: Apache-2.0
#include "cgmi/orchestrator.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "cgmi/cognition.hpp"
#include "cgmi/error.hpp"
#include "cgmi/text.hpp"

namespace cgmi::orchestrator {

using nlohmann::json;
using agents::RoleAgent;
using agents::SignalValue;
using transcript::EventKind;
namespace fs = std::filesystem;

std::string_view to_string(SelectionMode mode) {
    return mode == SelectionMode::Random ? "random" : "willingness";
}

std::optional<SelectionMode> selection_mode_from_string(std::string_view name) {
    if (name == "willingness") return SelectionMode::Willingness;
    if (name == "random") return SelectionMode::Random;
    return std::nullopt;
}

std::string_view to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::Scripted: return "scripted";
        case BackendKind::Http: return "http";
        case BackendKind::Replay: return "replay";
    }
    return "scripted";
}

std::optional<BackendKind> backend_kind_from_string(std::string_view name) {
    if (name == "scripted") return BackendKind::Scripted;
    if (name == "http") return BackendKind::Http;
    if (name == "replay") return BackendKind::Replay;
    return std::nullopt;
}

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::SupervisorEnd: return "supervisor_end";
        case Termination::MaxTurns: return "max_turns";
        case Termination::UserEnd: return "user_end";
    }
    return "supervisor_end";
}

// --- config -----------------------------------------------------------------------

namespace {

class ConfigReader {
public:
    ConfigReader(const json& doc, fs::path base, std::string source)
        : doc_(doc), base_(std::move(base)), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::string& field, const std::string& message) const {
        throw ConfigError(source_, field, message);
    }

    const json* find(const json& obj, const std::string& key) const {
        auto it = obj.find(key);
        return it == obj.end() || it->is_null() ? nullptr : &*it;
    }

    std::string string(const json& obj, const std::string& key, const std::string& field, bool required) const {
        const json* v = find(obj, key);
        if (v == nullptr) {
            if (required) fail(field, "is required");
            return {};
        }
        if (!v->is_string()) fail(field, "must be a string");
        return v->get<std::string>();
    }

    fs::path path(const json& obj, const std::string& key, const std::string& field, bool required) const {
        const auto s = string(obj, key, field, required);
        if (s.empty()) {
            if (required) fail(field, "must not be empty");
            return {};
        }
        return resolve(s);
    }

    fs::path resolve(const std::string& s) const {
        fs::path p(s);
        return p.is_absolute() ? p : (base_ / p).lexically_normal();
    }

    std::size_t positive(const json& obj, const std::string& key, const std::string& field,
                         std::size_t fallback) const {
        const json* v = find(obj, key);
        if (v == nullptr) return fallback;
        if (!v->is_number_integer() || v->get<long long>() <= 0) fail(field, "must be a positive integer");
        return v->get<std::size_t>();
    }

    const json& doc() const { return doc_; }

private:
    const json& doc_;
    fs::path base_;
    std::string source_;
};

}  // namespace

ScenarioConfig parse_scenario_config(const json& doc, const fs::path& base_dir, const std::string& source) {
    ConfigReader r(doc, base_dir, source);
    if (!doc.is_object()) r.fail("", "scenario config must be a JSON object");
    static const std::vector<std::string> kKnown = {"topic",   "teacher",        "students", "skill_library",
                                                    "prompt_templates", "backend", "selection_mode", "seed",
                                                    "consistency_m",    "limits",  "role_temperature"};
    for (const auto& [key, _] : doc.items()) {
        if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) r.fail(key, "unknown field");
    }

    ScenarioConfig c;
    c.source = source;
    c.topic = r.string(doc, "topic", "topic", true);
    if (text::trim(c.topic).empty()) r.fail("topic", "must not be empty");
    c.teacher = r.path(doc, "teacher", "teacher", true);

    const json* students = r.find(doc, "students");
    if (students == nullptr || !students->is_array()) r.fail("students", "must be an array of persona paths");
    if (students->empty()) r.fail("students", "roster must contain at least one student");
    for (std::size_t i = 0; i < students->size(); ++i) {
        const auto& s = (*students)[i];
        const std::string field = "students[" + std::to_string(i) + "]";
        if (!s.is_string() || s.get<std::string>().empty()) r.fail(field, "must be a non-empty path");
        c.students.push_back(r.resolve(s.get<std::string>()));
    }

    c.skill_library = r.path(doc, "skill_library", "skill_library", true);
    if (auto t = r.path(doc, "prompt_templates", "prompt_templates", false); !t.empty()) c.prompt_templates = t;

    const json* backend = r.find(doc, "backend");
    if (backend == nullptr || !backend->is_object()) r.fail("backend", "must be an object with a 'kind'");
    const auto kind = r.string(*backend, "kind", "backend.kind", true);
    auto parsed_kind = backend_kind_from_string(kind);
    if (!parsed_kind) r.fail("backend.kind", "must be scripted, http or replay");
    c.backend.kind = *parsed_kind;
    c.backend.script = r.path(*backend, "script", "backend.script", c.backend.kind == BackendKind::Scripted);
    c.backend.model = r.string(*backend, "model", "backend.model", false);
    c.backend.cassette = r.path(*backend, "cassette", "backend.cassette", c.backend.kind == BackendKind::Replay);

    if (const json* mode = r.find(doc, "selection_mode")) {
        auto parsed = mode->is_string() ? selection_mode_from_string(mode->get<std::string>()) : std::nullopt;
        if (!parsed) r.fail("selection_mode", "must be willingness or random");
        c.selection_mode = *parsed;
    }
    if (const json* seed = r.find(doc, "seed")) {
        if (!seed->is_number_unsigned()) r.fail("seed", "must be a non-negative integer");
        c.seed = seed->get<std::uint64_t>();
    }
    c.consistency_m = r.positive(doc, "consistency_m", "consistency_m", c.consistency_m);
    if (const json* t = r.find(doc, "role_temperature")) {
        if (!t->is_number() || t->get<double>() < 0.0) r.fail("role_temperature", "must be a number >= 0");
        c.role_temperature = t->get<double>();
    }

    if (const json* limits = r.find(doc, "limits")) {
        if (!limits->is_object()) r.fail("limits", "must be an object");
        Limits& l = c.limits;
        l.max_turns = r.positive(*limits, "max_turns", "limits.max_turns", l.max_turns);
        l.max_stage_turns = r.positive(*limits, "max_stage_turns", "limits.max_stage_turns", l.max_stage_turns);
        l.working_memory_capacity = r.positive(*limits, "working_memory_capacity", "limits.working_memory_capacity",
                                               l.working_memory_capacity);
        l.skill_k = r.positive(*limits, "skill_k", "limits.skill_k", *l.skill_k);
        l.context_window = r.positive(*limits, "context_window", "limits.context_window", l.context_window);
    }
    return c;
}

ScenarioConfig load_scenario_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "", "cannot open scenario config");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "", std::string("malformed JSON: ") + e.what());
    }
    return parse_scenario_config(doc, path.parent_path(), path.string());
}

// --- scenario -----------------------------------------------------------------------

RoleAgent* Scenario::find(std::string_view id) const {
    if (teacher && teacher->id() == id) return teacher.get();
    for (const auto& s : students) {
        if (s->id() == id) return s.get();
    }
    return nullptr;
}

std::vector<RoleAgent*> Scenario::student_ptrs() const {
    std::vector<RoleAgent*> out;
    out.reserve(students.size());
    for (const auto& s : students) out.push_back(s.get());
    return out;
}

lm::BackendPtr make_backend(const ScenarioConfig& c) {
    const std::string source = c.source.string();
    switch (c.backend.kind) {
        case BackendKind::Scripted:
            if (c.backend.script.empty()) throw ConfigError(source, "backend.script", "is required for scripted runs");
            if (!fs::exists(c.backend.script)) {
                throw ConfigError(source, "backend.script", "file not found: " + c.backend.script.string());
            }
            try {
                return lm::ScriptedBackend::from_file(c.backend.script);
            } catch (const Error& e) {
                throw ConfigError(source, "backend.script", e.what());
            }
        case BackendKind::Http: {
            if (c.backend.model.empty()) throw ConfigError(source, "backend.model", "is required for http runs");
            lm::BackendPtr http = std::make_shared<lm::HttpBackend>(lm::HttpSettings::from_env(c.backend.model));
            http = lm::with_retry(std::move(http), {});
            if (!c.backend.cassette.empty()) {
                http = lm::record_replay(std::move(http), c.backend.cassette, lm::CassetteMode::Record);
            }
            return http;
        }
        case BackendKind::Replay:
            if (c.backend.cassette.empty()) throw ConfigError(source, "backend.cassette", "is required for replay");
            if (!fs::exists(c.backend.cassette)) {
                throw ConfigError(source, "backend.cassette", "file not found: " + c.backend.cassette.string());
            }
            return lm::record_replay(nullptr, c.backend.cassette, lm::CassetteMode::Replay);
    }
    throw ConfigError(source, "backend.kind", "unsupported backend");
}

namespace {

template <typename Fn>
auto load_artifact(const std::string& source, const std::string& field, const fs::path& path, Fn&& fn) {
    if (!fs::exists(path)) throw ConfigError(source, field, "file not found: " + path.string());
    try {
        return fn(path);
    } catch (const ConfigError& e) {
        throw ConfigError(source, field, e.what());
    } catch (const Error& e) {
        throw ConfigError(source, field, e.what());
    }
}

}  // namespace

Scenario load_scenario(const ScenarioConfig& config, LoadOptions options) {
    Scenario s;
    s.config = config;
    if (options.selection_mode) s.config.selection_mode = *options.selection_mode;
    if (options.seed) s.config.seed = *options.seed;
    if (options.backend_kind) s.config.backend.kind = *options.backend_kind;
    const std::string source = s.config.source.string();
    if (s.config.students.empty()) throw ConfigError(source, "students", "roster must contain at least one student");

    auto skills = load_artifact(source, "skill_library", s.config.skill_library,
                                [](const fs::path& p) { return cognition::load_skill_library_file(p); });
    auto templates = std::make_shared<const cognition::PromptTemplates>(
        s.config.prompt_templates
            ? load_artifact(source, "prompt_templates", *s.config.prompt_templates,
                            [](const fs::path& p) { return cognition::PromptTemplates::from_file(p); })
            : cognition::PromptTemplates::defaults());
    auto teacher_profile = load_artifact(source, "teacher", s.config.teacher,
                                         [](const fs::path& p) { return scale::load_persona_file(p); });
    std::vector<scale::PersonaProfile> student_profiles;
    for (std::size_t i = 0; i < s.config.students.size(); ++i) {
        student_profiles.push_back(load_artifact(source, "students[" + std::to_string(i) + "]", s.config.students[i],
                                                 [](const fs::path& p) { return scale::load_persona_file(p); }));
    }

    lm::BackendPtr inner = options.backend ? options.backend : make_backend(s.config);
    s.backend = std::make_shared<lm::InstrumentedBackend>(std::move(inner));

    const Limits& l = s.config.limits;
    s.settings.role_temperature = s.config.role_temperature;
    s.settings.skill_k = l.skill_k;
    s.settings.working_capacity = l.working_memory_capacity;

    std::vector<std::string> seen{teacher_profile.agent_name};
    s.teacher = std::make_unique<RoleAgent>(std::move(teacher_profile), s.backend, templates, s.settings, skills);
    for (std::size_t i = 0; i < student_profiles.size(); ++i) {
        auto& p = student_profiles[i];
        if (std::find(seen.begin(), seen.end(), p.agent_name) != seen.end()) {
            throw ConfigError(source, "students[" + std::to_string(i) + "]",
                              "duplicate agent name '" + p.agent_name + "'");
        }
        seen.push_back(p.agent_name);
        s.roster.push_back(p.agent_name);
        s.students.push_back(std::make_unique<RoleAgent>(std::move(p), s.backend, templates, s.settings, skills));
    }

    std::mt19937_64 rng(s.config.seed);
    auto setup = [&](RoleAgent& agent) {
        for (const auto& tree : agent.profile().scales) scale::assign_dfs(tree, agent);
        for (const auto& tree : agent.profile().scales) {
            const std::size_t m = std::min(s.config.consistency_m, tree.coarse_ids().size());
            if (m == 0) continue;
            s.setup_checks.push_back({agent.id(), scale::consistency_check(agent, tree, m, rng)});
        }
    };
    setup(*s.teacher);
    for (auto& st : s.students) setup(*st);
    return s;
}

Scenario load_scenario(const fs::path& config_path, LoadOptions options) {
    return load_scenario(load_scenario_config(config_path), std::move(options));
}

// --- stage machine --------------------------------------------------------------------

StageMachine::StageMachine(std::size_t stage_count, std::size_t max_stage_turns)
    : count_(stage_count), cap_(max_stage_turns) {
    if (count_ == 0) throw PreconditionError("stage machine needs at least one stage");
    if (cap_ == 0) throw PreconditionError("max_stage_turns must be positive");
}

StageMachine::Step StageMachine::apply(SignalValue value, bool capped) {
    Step step{value, capped, current_, current_};
    if (value == SignalValue::AdvanceStage && final_stage()) step.applied = value = SignalValue::EndLesson;
    if (value == SignalValue::AdvanceStage) {
        ++current_;
        turns_ = 0;
        step.to = current_;
    } else if (value == SignalValue::EndLesson) {
        ended_ = true;
    }
    return step;
}

StageMachine::Step StageMachine::on_teacher_turn(SignalValue proposed) {
    if (ended_) throw PreconditionError("lesson already ended");
    ++turns_;
    if (proposed == SignalValue::Continue && turns_ >= cap_) return apply(SignalValue::AdvanceStage, true);
    return apply(proposed, false);
}

StageMachine::Step StageMachine::force_advance() {
    if (ended_) throw PreconditionError("lesson already ended");
    return apply(SignalValue::AdvanceStage, false);
}

// --- routing ------------------------------------------------------------------------------

std::optional<std::string> match_roster_name(std::span<const std::string> roster, std::string_view name) {
    const auto wanted = text::trim(name);
    for (const auto& r : roster) {
        if (r == wanted) return r;
    }
    for (const auto& r : roster) {
        if (text::to_lower(r) == text::to_lower(wanted)) return r;
    }
    return std::nullopt;
}

RoutingDecision route_question(const agents::Classification& c, std::string_view question,
                               std::span<RoleAgent* const> students,
                               std::span<const transcript::TranscriptEvent> context, SelectionMode mode,
                               std::mt19937_64& rng, lm::Backend& backend,
                               const agents::WillingnessOptions& options, const agents::AgentSettings& settings) {
    std::vector<std::string> roster;
    for (const RoleAgent* s : students) roster.push_back(s->id());
    if (roster.empty()) throw PreconditionError("routing needs a non-empty roster");

    switch (c.act) {
        case agents::UtteranceAct::Statement:
            throw PreconditionError("a statement is not routed to a student");
        case agents::UtteranceAct::QuestionToStudent: {
            auto name = match_roster_name(roster, c.target);
            if (!name) throw ProtocolError("routing", "question addressed to '" + c.target + "', who is not in the roster");
            return {*name, "directed", {}};
        }
        case agents::UtteranceAct::QuestionToClass:
            break;
    }
    if (mode == SelectionMode::Random) return {agents::select_random(roster, rng), "random", {}};
    auto scores = agents::score_willingness(students, question, context, backend, options, settings);
    auto chosen = agents::select_speaker(scores, roster);
    return {chosen, "willingness", std::move(scores)};
}

// --- reports ----------------------------------------------------------------------------

json to_json(const RunReport& r, std::span<const SetupCheck> setup) {
    json out{{"events", r.events},
             {"stages_completed", r.stages_completed},
             {"stage_count", r.stage_count},
             {"teacher_turns", r.teacher_turns},
             {"backend_calls", r.backend_calls},
             {"termination", std::string(to_string(r.termination))}};
    json checks = json::array();
    for (const auto& c : setup) {
        auto j = scale::to_json(c.report);
        j["agent"] = c.agent;
        checks.push_back(std::move(j));
    }
    out["setup_checks"] = std::move(checks);
    return out;
}

json export_memories(const Scenario& s) {
    json out = json::object();
    out[s.teacher->id()] = cognition::export_memory(s.teacher->cognition());
    for (const auto& st : s.students) out[st->id()] = cognition::export_memory(st->cognition());
    return out;
}

void import_memories(Scenario& s, const json& doc) {
    if (!doc.is_object()) throw Error(ErrorCategory::Validation, "memory document must be an object keyed by agent");
    for (const auto& [name, memory] : doc.items()) {
        RoleAgent* agent = s.find(name);
        if (agent == nullptr) throw Error(ErrorCategory::Validation, "memory for unknown agent '" + name + "'");
        // Turn stamps belong to the earlier lesson; carried memory counts as known at the new lesson's start.
        json rebased = memory;
        for (const char* list : {"working", "declarative", "procedural"}) {
            if (rebased.contains(list) && rebased[list].is_array()) {
                for (auto& entry : rebased[list]) entry["turn"] = 0;
            }
        }
        for (const char* stamp : {"last_reflection", "last_plan"}) {
            if (rebased.contains(stamp) && rebased[stamp].is_object()) rebased[stamp]["turn"] = 0;
        }
        cognition::import_memory(agent->cognition(), rebased);
    }
}

// --- lesson loop ----------------------------------------------------------------------------

namespace {

constexpr std::string_view kSupervisor = "supervisor";

class Lesson {
public:
    Lesson(Scenario& s, const RunOptions& options) : s_(s), options_(options), rng_(s.config.seed) {}

    void start() {
        plan_ = agents::generate_plan(s_.config.topic, *s_.backend, s_.settings);
        json stages = json::array();
        for (const auto& st : plan_.stages) stages.push_back(st.name);
        json header{{"topic", plan_.topic},
                    {"stages", stages},
                    {"selection_mode", std::string(to_string(s_.config.selection_mode))},
                    {"seed", s_.config.seed},
                    {"teacher", s_.teacher->id()},
                    {"roster", s_.roster}};
        transcript_ = transcript::Transcript(std::move(header));
        if (options_.transcript_path) transcript_.stream_to(*options_.transcript_path);
        machine_.emplace(plan_.stages.size(), s_.config.limits.max_stage_turns);

        transcript_.append(0, EventKind::LessonStart, std::string(transcript::kSystemSpeaker),
                           {{"plan", agents::to_json(plan_)},
                            {"roster", s_.roster},
                            {"teacher", s_.teacher->id()},
                            {"selection_mode", std::string(to_string(s_.config.selection_mode))}});
        broadcast(0, "Lesson begins. " + agents::render_plan(plan_));
        say("Lesson: " + plan_.topic + " (" + std::to_string(plan_.stages.size()) + " stages)");
    }

    [[nodiscard]] bool ended() const { return ended_; }
    [[nodiscard]] int current_turn() const { return static_cast<int>(teacher_turns_); }

    void teacher_turn() {
        const int t = static_cast<int>(++teacher_turns_);
        RoleAgent& teacher = *s_.teacher;
        const auto text = checked_draft(teacher, t);
        const auto c = agents::classify_utterance(text, s_.roster, *s_.backend, s_.settings);
        EventKind kind = EventKind::Utterance;
        json payload{{"text", text}, {"stage_index", machine_->current()}};
        if (c.act == agents::UtteranceAct::QuestionToClass) kind = EventKind::QuestionToClass;
        if (c.act == agents::UtteranceAct::QuestionToStudent) {
            kind = EventKind::QuestionToStudent;
            payload["target"] = c.target;
        }
        const auto& spoken = transcript_.append(t, kind, teacher.id(), std::move(payload));
        const std::size_t question_index = spoken.index;
        say(teacher.id() + ": " + text);
        broadcast(t, teacher.id() + ": " + text);

        if (c.act != agents::UtteranceAct::Statement) {
            const auto students = s_.student_ptrs();
            const auto context = transcript_.tail(s_.config.limits.context_window);
            auto decision = route_question(c, text, students, context, s_.config.selection_mode, rng_,
                                           *s_.backend, {s_.config.limits.context_window, false}, s_.settings);
            record_selection(t, decision, question_index);
            student_answer(t, decision.speaker, question_index);
        }

        const auto recent = transcript_.tail(s_.config.limits.context_window);
        const auto signal = agents::supervise(plan_, machine_->current(), recent, *s_.backend, s_.settings);
        const auto step = machine_->on_teacher_turn(signal.value);
        std::string rationale = step.capped ? "max_stage_turns reached" : signal.rationale;
        transcript_.append(t, EventKind::Signal, std::string(kSupervisor),
                           {{"value", std::string(agents::to_string(step.applied))},
                            {"verdict", signal.verdict},
                            {"rationale", rationale},
                            {"stage_index", step.from},
                            {"capped", step.capped}});
        if (step.applied == SignalValue::AdvanceStage) {
            stage_transition(t, step, rationale);
        } else if (step.applied == SignalValue::EndLesson) {
            ++stages_completed_;
            finish(t, step.capped ? Termination::MaxTurns : Termination::SupervisorEnd);
            return;
        }
        if (teacher_turns_ >= s_.config.limits.max_turns) finish(t, Termination::MaxTurns);
    }

    // --- user commands ---

    void user_command(const std::string& command) {
        transcript_.append(current_turn(), EventKind::UserCommand, std::string(transcript::kUserSpeaker),
                           {{"command", command}});
    }

    void user_advance() {
        const int t = current_turn();
        const auto step = machine_->force_advance();
        if (step.applied == SignalValue::EndLesson) {
            ++stages_completed_;
            finish(t, Termination::UserEnd);
        } else {
            stage_transition(t, step, "user command");
        }
    }

    void user_end() {
        machine_->end();
        finish(current_turn(), Termination::UserEnd);
    }

    void user_ask(const std::string& student, const std::string& question) {
        const int t = current_turn();
        const auto& e = transcript_.append(t, EventKind::QuestionToStudent, std::string(transcript::kUserSpeaker),
                                           {{"text", question}, {"target", student}, {"stage_index", machine_->current()}});
        const std::size_t index = e.index;
        broadcast(t, "User: " + question);
        record_selection(t, {student, "directed", {}}, index);
        student_answer(t, student, index);
    }

    void inspect(const std::string& agent) {
        RoleAgent* a = s_.find(agent);
        if (a != nullptr && options_.console != nullptr) *options_.console << a->inspect() << '\n';
    }

    RunResult result() {
        RunReport r;
        r.events = transcript_.events().size();
        r.stages_completed = stages_completed_;
        r.stage_count = plan_.stages.size();
        r.teacher_turns = teacher_turns_;
        r.backend_calls = s_.backend->counts_by_tag();
        r.termination = termination_;
        return {std::move(transcript_), r, plan_};
    }

private:
    void say(const std::string& line) {
        if (options_.console != nullptr) *options_.console << line << '\n';
    }

    void broadcast(int turn, const std::string& observation) {
        s_.teacher->perceive(turn, observation);
        for (auto& st : s_.students) st->perceive(turn, observation);
    }

    // One cognitive cycle, the persona check and at most one corrected retry.
    std::string checked_draft(RoleAgent& agent, int t) {
        const auto draft = agent.take_turn(t);
        const auto verdict = agents::check_persona(agent, draft, *s_.backend, s_.settings);
        std::string final_text = draft;
        json payload{{"consistent", verdict.consistent}, {"draft", draft}};
        if (!verdict.consistent) {
            final_text = agent.regenerate(t, verdict.correction);
            payload["correction"] = verdict.correction;
            payload["regenerated"] = true;
        }
        transcript_.append(t, EventKind::PersonaCheck, agent.id(), std::move(payload));
        return final_text;
    }

    void record_selection(int t, const RoutingDecision& d, std::size_t question_index) {
        if (d.mode == "willingness") {
            json scores = json::array();
            for (const auto& ws : d.scores) {
                scores.push_back({{"agent", ws.agent}, {"score", ws.score}, {"rationale", ws.rationale}});
            }
            transcript_.append(t, EventKind::WillingnessScores, "willingness",
                               {{"question_index", question_index}, {"scores", std::move(scores)}});
        }
        transcript_.append(t, EventKind::Selection, std::string(transcript::kSystemSpeaker),
                           {{"mode", d.mode}, {"selected", d.speaker}, {"question_index", question_index}});
    }

    void student_answer(int t, const std::string& name, std::size_t question_index) {
        RoleAgent* student = s_.find(name);
        if (student == nullptr || student == s_.teacher.get()) {
            throw ProtocolError("routing", "'" + name + "' is not a student in this lesson");
        }
        const auto text = checked_draft(*student, t);
        transcript_.append(t, EventKind::Utterance, student->id(),
                           {{"text", text}, {"stage_index", machine_->current()}, {"in_reply_to", question_index}});
        say(student->id() + ": " + text);
        broadcast(t, student->id() + ": " + text);
    }

    void stage_transition(int t, const StageMachine::Step& step, const std::string& rationale) {
        ++stages_completed_;
        transcript_.append(t, EventKind::StageTransition, std::string(kSupervisor),
                           {{"from", plan_.stages[step.from].name},
                            {"to", plan_.stages[step.to].name},
                            {"from_index", step.from},
                            {"to_index", step.to},
                            {"rationale", rationale}});
        say("-- stage " + std::to_string(step.to + 1) + ": " + plan_.stages[step.to].name);
        broadcast(t, "The lesson moves on to the stage: " + plan_.stages[step.to].name);
    }

    void finish(int t, Termination why) {
        if (ended_) return;
        machine_->end();
        ended_ = true;
        termination_ = why;
        transcript_.append(t, EventKind::LessonEnd, std::string(transcript::kSystemSpeaker),
                           {{"termination", std::string(to_string(why))}, {"stages_completed", stages_completed_}});
        say("Lesson ended (" + std::string(to_string(why)) + ")");
    }

    Scenario& s_;
    const RunOptions& options_;
    std::mt19937_64 rng_;
    agents::TeachingPlan plan_;
    transcript::Transcript transcript_;
    std::optional<StageMachine> machine_;
    std::size_t teacher_turns_ = 0;
    std::size_t stages_completed_ = 0;
    bool ended_ = false;
    Termination termination_ = Termination::SupervisorEnd;
};

// "ask Ying Zheng why ..." -> the longest roster name that prefixes the rest.
std::optional<std::pair<std::string, std::string>> parse_ask(std::span<const std::string> roster,
                                                             std::string_view rest) {
    std::optional<std::pair<std::string, std::string>> best;
    for (const auto& name : roster) {
        if (!text::starts_with_ci(rest, name)) continue;
        if (rest.size() > name.size() && rest[name.size()] != ' ' && rest[name.size()] != ',' &&
            rest[name.size()] != ':') {
            continue;
        }
        if (best && best->first.size() >= name.size()) continue;
        auto question = text::trim(rest.substr(name.size()));
        while (!question.empty() && (question.front() == ',' || question.front() == ':')) {
            question = text::trim(question.substr(1));
        }
        best = std::make_pair(name, question);
    }
    if (best && best->second.empty()) return std::nullopt;
    return best;
}

}  // namespace

RunResult run_lesson(Scenario& scenario, const RunOptions& options) {
    Lesson lesson(scenario, options);
    lesson.start();
    while (!lesson.ended()) lesson.teacher_turn();
    return lesson.result();
}

std::string interactive_help() {
    return "Commands (read between turns):\n"
           "  next | <empty line>      run one teacher turn\n"
           "  advance                  force the next stage\n"
           "  end                      end the lesson now\n"
           "  ask <student> <question> put a question to one student\n"
           "  pause | resume           hold or release turn execution\n"
           "  inspect <agent>          show an agent's persona and memory\n"
           "  help                     show this text\n";
}

RunResult interactive_session(Scenario& scenario, std::istream& commands, const RunOptions& options) {
    Lesson lesson(scenario, options);
    lesson.start();
    bool paused = false;
    auto print = [&](const std::string& s) {
        if (options.console != nullptr) *options.console << s;
    };

    std::string line;
    while (!lesson.ended() && std::getline(commands, line)) {
        const auto cmd = text::trim(line);
        const auto space = cmd.find(' ');
        const auto verb = text::to_lower(cmd.substr(0, space));
        const auto rest = space == std::string::npos ? std::string{} : text::trim(cmd.substr(space + 1));

        if (verb.empty() || verb == "next") {
            if (paused) {
                print("paused; type resume to continue\n");
                continue;
            }
            lesson.user_command("next");
            lesson.teacher_turn();
        } else if (verb == "advance" && rest.empty()) {
            lesson.user_command(cmd);
            lesson.user_advance();
        } else if (verb == "end" && rest.empty()) {
            lesson.user_command(cmd);
            lesson.user_end();
        } else if (verb == "pause" && rest.empty()) {
            lesson.user_command(cmd);
            paused = true;
        } else if (verb == "resume" && rest.empty()) {
            lesson.user_command(cmd);
            paused = false;
        } else if (verb == "inspect" && scenario.find(rest) != nullptr) {
            lesson.user_command(cmd);
            lesson.inspect(rest);
        } else if (verb == "ask" && parse_ask(scenario.roster, rest)) {
            auto [student, question] = *parse_ask(scenario.roster, rest);
            lesson.user_command(cmd);
            lesson.user_ask(student, question);
        } else {
            if (verb != "help") print("unrecognised command: " + cmd + "\n");
            print(interactive_help());
        }
    }
    while (!lesson.ended()) lesson.teacher_turn();
    return lesson.result();
}

}  // namespace cgmi::orchestrator
