// SPDX-License-Identifier: Apache-2.0
#include "cgmi/agents.hpp"

#include <algorithm>
#include <future>
#include <regex>
#include <set>

#include "cgmi/text.hpp"

namespace cgmi::agents {

using nlohmann::json;

// --- RoleAgent ---------------------------------------------------------------------

RoleAgent::RoleAgent(scale::PersonaProfile profile, lm::BackendPtr backend,
                     std::shared_ptr<const cognition::PromptTemplates> templates, AgentSettings settings,
                     std::vector<cognition::SkillEntry> skills)
    : profile_(std::move(profile)),
      backend_(std::move(backend)),
      templates_(std::move(templates)),
      settings_(settings),
      state_(settings.working_capacity) {
    if (!backend_) throw PreconditionError("role agent '" + profile_.agent_name + "' has no backend");
    if (!templates_) templates_ = std::make_shared<cognition::PromptTemplates>(cognition::PromptTemplates::defaults());
    if (settings_.distill_every == 0) settings_.distill_every = 1;
    state_.skills = std::move(skills);
}

std::string RoleAgent::persona_text() const {
    std::string out = scale::render_persona_text(scale::render_persona_header(profile_), deliveries_);
    if (!restorations_.empty()) {
        out += "\n[Persona restorations]\n";
        for (const auto& r : restorations_) out += r;
    }
    return out;
}

void RoleAgent::receive_trait(const scale::TraitDelivery& delivery) { deliveries_.push_back(delivery); }

std::string RoleAgent::answer_probe(const std::string& question) {
    auto req = lm::make_request(persona_text(), question, settings_.role_temperature, settings_.max_tokens,
                                lm::tags::kPersonaProbe);
    return backend_->complete(req).text;
}

void RoleAgent::restore_persona(const std::string& message) { restorations_.push_back(message); }

cognition::CycleContext RoleAgent::context() const {
    return cognition::CycleContext{*backend_, *templates_, persona_text(), settings_.role_temperature,
                                   settings_.max_tokens, settings_.skill_k};
}

void RoleAgent::perceive(int turn, std::string observation) {
    cognition::perceive(state_, turn, std::move(observation));
}

std::string RoleAgent::take_turn(int turn) {
    const bool distill_now = cycles_ % settings_.distill_every == 0;
    ++cycles_;
    return cognition::run_cycle(state_, turn, context(), distill_now);
}

std::string RoleAgent::regenerate(int turn, std::string_view correction) {
    return cognition::act(state_, turn, context(), correction);
}

std::string RoleAgent::inspect() const {
    std::string out = persona_text();
    out += "\n[Memory]\n";
    out += "working entries: " + std::to_string(state_.working.entries().size()) + "\n";
    out += "declarative entries: " + std::to_string(state_.declarative.size()) + "\n";
    out += "procedural entries: " + std::to_string(state_.procedural.size()) + "\n";
    if (!state_.declarative.empty()) out += "latest declarative: " + state_.declarative.back().content + "\n";
    if (!state_.procedural.empty()) out += "latest procedural: " + state_.procedural.back().content + "\n";
    if (state_.last_reflection) out += "last reflection: " + state_.last_reflection->text + "\n";
    if (state_.last_plan) out += "last plan: " + state_.last_plan->text + "\n";
    return out;
}

// --- plan ----------------------------------------------------------------------------

namespace {
[[noreturn]] void plan_fail(const std::string& message) { throw ProtocolError("plan", message); }

std::optional<std::string> field_value(std::string_view line, std::string_view key) {
    if (!text::starts_with_ci(line, key)) return std::nullopt;
    return text::trim(line.substr(key.size()));
}
}  // namespace

TeachingPlan parse_plan(std::string_view document) {
    std::vector<std::string> lines;
    for (auto& l : text::split_lines(document)) {
        auto t = text::trim(l);
        if (!t.empty()) lines.push_back(std::move(t));
    }
    std::size_t i = 0;
    auto next = [&]() -> const std::string* { return i < lines.size() ? &lines[i] : nullptr; };

    TeachingPlan plan;
    if (next() == nullptr) plan_fail("empty plan document");
    auto topic = field_value(*next(), "Topic:");
    if (!topic || topic->empty()) plan_fail("expected 'Topic: <text>' on the first line");
    plan.topic = *topic;
    ++i;

    if (next() == nullptr || !field_value(*next(), "Objectives:") || !field_value(*next(), "Objectives:")->empty()) {
        plan_fail("expected 'Objectives:' after the topic");
    }
    ++i;
    while (next() != nullptr && next()->front() == '-') {
        auto objective = text::trim(next()->substr(1));
        if (objective.empty()) plan_fail("empty objective");
        plan.objectives.push_back(std::move(objective));
        ++i;
    }

    if (next() == nullptr || !field_value(*next(), "Stages:") || !field_value(*next(), "Stages:")->empty()) {
        plan_fail("expected 'Stages:' after the objectives");
    }
    ++i;
    static const std::regex kStageLine(R"(^(\d+)\.\s+(.+)$)");
    std::set<std::string> names;
    while (next() != nullptr) {
        std::smatch m;
        if (!std::regex_match(*next(), m, kStageLine)) plan_fail("expected a numbered stage line, got '" + *next() + "'");
        const auto number = std::stoul(m[1].str());
        if (number != plan.stages.size() + 1) plan_fail("stage numbers must count up from 1");
        Stage stage;
        stage.name = text::trim(m[2].str());
        ++i;
        auto description = next() ? field_value(*next(), "Description:") : std::nullopt;
        if (!description || description->empty()) plan_fail("stage '" + stage.name + "' needs a Description line");
        stage.description = *description;
        ++i;
        auto criterion = next() ? field_value(*next(), "Criterion:") : std::nullopt;
        if (!criterion || criterion->empty()) plan_fail("stage '" + stage.name + "' needs a Criterion line");
        stage.completion_criterion = *criterion;
        ++i;
        if (!names.insert(stage.name).second) plan_fail("duplicate stage name '" + stage.name + "'");
        plan.stages.push_back(std::move(stage));
    }
    if (plan.stages.empty()) plan_fail("plan has no stages");
    return plan;
}

std::string render_plan(const TeachingPlan& plan) {
    std::string out = "Topic: " + plan.topic + "\nObjectives:\n";
    for (const auto& o : plan.objectives) out += "- " + o + "\n";
    out += "Stages:\n";
    for (std::size_t i = 0; i < plan.stages.size(); ++i) {
        const auto& s = plan.stages[i];
        out += std::to_string(i + 1) + ". " + s.name + "\n";
        out += "Description: " + s.description + "\n";
        out += "Criterion: " + s.completion_criterion + "\n";
    }
    return out;
}

json to_json(const TeachingPlan& plan) {
    json stages = json::array();
    for (const auto& s : plan.stages) {
        stages.push_back({{"name", s.name}, {"description", s.description}, {"criterion", s.completion_criterion}});
    }
    return {{"topic", plan.topic}, {"objectives", plan.objectives}, {"stages", stages}};
}

TeachingPlan generate_plan(std::string_view topic, lm::Backend& backend, const AgentSettings& settings) {
    if (text::trim(topic).empty()) throw PreconditionError("lesson topic must not be empty");
    const std::string system =
        "You are the teaching assistant agent. You set educational goals and plan the teaching schedule "
        "for a lesson, decomposed into stages the teacher will follow.";
    const std::string user = "Produce a teaching plan for the lesson topic below. Use exactly this format:\n"
                             "Topic: <topic>\nObjectives:\n- <objective>\nStages:\n1. <stage name>\n"
                             "Description: <what happens in the stage>\n"
                             "Criterion: <when the stage is complete>\n\n"
                             "Lesson topic: " + std::string(topic);
    auto req = lm::make_request(system, user, settings.general_temperature, settings.max_tokens,
                                lm::tags::kTeachingPlan);
    TeachingPlan plan = parse_plan(backend.complete(req).text);
    plan.topic = std::string(topic);
    return plan;
}

// --- supervisor -----------------------------------------------------------------------

std::string_view to_string(SignalValue value) {
    switch (value) {
        case SignalValue::Continue: return "Continue";
        case SignalValue::AdvanceStage: return "AdvanceStage";
        case SignalValue::EndLesson: return "EndLesson";
    }
    return "Continue";
}

namespace {
// First word of the first line, uppercased, without trailing punctuation.
std::pair<std::string, std::string> leading_keyword(std::string_view reply) {
    const auto line = text::first_line(reply);
    std::size_t end = 0;
    while (end < line.size() && (std::isalnum(static_cast<unsigned char>(line[end])) != 0 || line[end] == '_')) ++end;
    std::string word = line.substr(0, end);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    std::string rest = line.substr(end);
    while (!rest.empty() && (rest.front() == ':' || rest.front() == '-' || rest.front() == '.' || rest.front() == ',' ||
                             std::isspace(static_cast<unsigned char>(rest.front())) != 0)) {
        rest.erase(rest.begin());
    }
    const auto tail = text::after_first_line(reply);
    if (!tail.empty()) rest = rest.empty() ? tail : rest + "\n" + tail;
    return {word, text::trim(rest)};
}
}  // namespace

Signal parse_verdict(std::string_view reply, std::size_t current_stage, std::size_t stage_count) {
    auto [word, rationale] = leading_keyword(reply);
    const bool final_stage = current_stage + 1 >= stage_count;
    Signal s;
    s.verdict = word;
    s.rationale = rationale;
    if (word == "CONTINUE") {
        s.value = SignalValue::Continue;
    } else if (word == "ADVANCE") {
        s.value = final_stage ? SignalValue::EndLesson : SignalValue::AdvanceStage;
    } else if (word == "END") {
        s.value = final_stage ? SignalValue::EndLesson : SignalValue::AdvanceStage;
    } else {
        throw ProtocolError("supervisor", "first line must be CONTINUE, ADVANCE or END, got '" +
                                              text::truncate(text::first_line(reply), 80) + "'");
    }
    return s;
}

std::string supervisor_prompt(const TeachingPlan& plan, std::size_t current_stage,
                              std::span<const transcript::TranscriptEvent> recent_events) {
    std::string out = "## Teaching plan\n" + render_plan(plan);
    out += "\n## Stages\n";
    for (std::size_t i = 0; i < plan.stages.size(); ++i) {
        const auto& s = plan.stages[i];
        out += std::to_string(i + 1) + ". " + s.name + " (complete when: " + s.completion_criterion + ")\n";
    }
    out += "\n## Current stage\nStage " + std::to_string(current_stage + 1) + " of " +
           std::to_string(plan.stages.size()) + ": " + plan.stages[current_stage].name + "\n";
    out += "\n## Recent classroom events\n" + transcript::render_events(recent_events) + "\n";
    return out;
}

Signal supervise(const TeachingPlan& plan, std::size_t current_stage,
                 std::span<const transcript::TranscriptEvent> recent_events, lm::Backend& backend,
                 const AgentSettings& settings) {
    if (current_stage >= plan.stages.size()) {
        throw PreconditionError("stage index " + std::to_string(current_stage) + " outside the plan");
    }
    const std::string system =
        "You are the teaching process supervisor agent. Decide whether the current stage of the lesson is "
        "complete. Answer with CONTINUE, ADVANCE or END on the first line, then a short rationale.";
    auto req = lm::make_request(system, supervisor_prompt(plan, current_stage, recent_events),
                                settings.general_temperature, settings.max_tokens, lm::tags::kSupervisor);
    return parse_verdict(backend.complete(req).text, current_stage, plan.stages.size());
}

// --- consistency checker -----------------------------------------------------------------

PersonaVerdict check_persona(const RoleAgent& agent, std::string_view draft, lm::Backend& backend,
                             const AgentSettings& settings) {
    if (text::trim(draft).empty()) throw PreconditionError("empty draft from " + agent.id());
    const std::string system =
        "You are the consistency checker agent. Judge whether a role agent's draft statement fits its persona. "
        "Answer CONSISTENT, or INCONSISTENT followed by a short correction note.";
    const std::string user = "## Persona\n" + agent.persona_text() + "\n## Draft statement\n" + std::string(draft);
    auto req = lm::make_request(system, user, settings.general_temperature, settings.max_tokens,
                                lm::tags::kConsistency);
    const auto reply = backend.complete(req).text;
    auto [word, note] = leading_keyword(reply);
    if (word == "CONSISTENT") return {true, {}};
    if (word == "INCONSISTENT") {
        return {false, note.empty() ? "Stay consistent with your persona." : note};
    }
    throw ProtocolError("persona_check", "first line must be CONSISTENT or INCONSISTENT, got '" +
                                             text::truncate(text::first_line(reply), 80) + "'");
}

// --- willingness -------------------------------------------------------------------------

std::optional<WillingnessScore> parse_willingness(std::string_view agent, std::string_view reply) {
    const auto lines = text::split_lines(reply);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = text::trim(lines[i]);
        if (!text::starts_with_ci(line, "SCORE:")) continue;
        const auto rest = std::string_view(line).substr(6);
        auto value = text::first_integer(rest);
        if (!value || *value < 1 || *value > 5) return std::nullopt;
        std::string rationale;
        for (std::size_t j = 0; j < lines.size(); ++j) {
            if (j == i) continue;
            auto t = text::trim(lines[j]);
            if (t.empty()) continue;
            if (!rationale.empty()) rationale += ' ';
            rationale += t;
        }
        return WillingnessScore{std::string(agent), static_cast<int>(*value), rationale};
    }
    return std::nullopt;
}

std::vector<WillingnessScore> score_willingness(std::span<RoleAgent* const> students, std::string_view question,
                                                std::span<const transcript::TranscriptEvent> context,
                                                lm::Backend& backend, const WillingnessOptions& options,
                                                const AgentSettings& settings) {
    if (students.empty()) throw PreconditionError("willingness scoring needs at least one student");
    const auto window = context.size() > options.context_window
                            ? context.subspan(context.size() - options.context_window)
                            : context;
    const std::string dynamics = transcript::render_events(window);
    const std::string system =
        "You are the willingness-to-speak agent. Estimate how willing a student is to answer the teacher's "
        "question, considering the student's personality, the classroom dynamics and their grasp of the subject.";

    auto score_one = [&](const RoleAgent& student) {
        const std::string user = "## Student under assessment: " + student.id() + "\n" + student.persona_text() +
                                 "\n## Question\n" + std::string(question) + "\n\n## Classroom dynamics\n" +
                                 dynamics + "\n\nReply with 'SCORE: <1-5>' on the first line, then one sentence "
                                            "of rationale.";
        auto req = lm::make_request(system, user, settings.general_temperature, settings.max_tokens,
                                    lm::tags::kWillingness);
        for (int attempt = 0; attempt < 2; ++attempt) {
            if (auto parsed = parse_willingness(student.id(), backend.complete(req).text)) return *parsed;
        }
        throw ProtocolError("willingness", "no valid 'SCORE: 1-5' answer for " + student.id() + " after a retry");
    };

    std::vector<WillingnessScore> out;
    out.reserve(students.size());
    if (options.parallel) {
        std::vector<std::future<WillingnessScore>> futures;
        futures.reserve(students.size());
        for (RoleAgent* s : students) futures.push_back(std::async(std::launch::async, score_one, std::cref(*s)));
        for (auto& f : futures) out.push_back(f.get());
    } else {
        for (RoleAgent* s : students) out.push_back(score_one(*s));
    }
    return out;
}

std::string select_speaker(std::span<const WillingnessScore> scores, std::span<const std::string> roster) {
    if (scores.empty()) throw PreconditionError("select_speaker needs at least one score");
    auto position = [&](const std::string& id) {
        auto it = std::find(roster.begin(), roster.end(), id);
        if (it == roster.end()) throw PreconditionError("scored agent '" + id + "' is not in the roster");
        return static_cast<std::size_t>(it - roster.begin());
    };
    const WillingnessScore* best = nullptr;
    std::size_t best_pos = 0;
    for (const auto& s : scores) {
        const auto pos = position(s.agent);
        if (best == nullptr || s.score > best->score || (s.score == best->score && pos < best_pos)) {
            best = &s;
            best_pos = pos;
        }
    }
    return best->agent;
}

std::string select_random(std::span<const std::string> roster, std::mt19937_64& rng) {
    if (roster.empty()) throw PreconditionError("select_random needs a non-empty roster");
    std::uniform_int_distribution<std::size_t> pick(0, roster.size() - 1);
    return roster[pick(rng)];
}

// --- classification -------------------------------------------------------------------------

Classification parse_classification(std::string_view reply) {
    auto [word, rest] = leading_keyword(reply);
    if (word == "STATEMENT") return {UtteranceAct::Statement, {}};
    if (word == "QUESTION_TO_CLASS") return {UtteranceAct::QuestionToClass, {}};
    if (word == "QUESTION_TO_STUDENT") {
        auto target = text::first_line(rest);
        if (target.empty()) throw ProtocolError("classifier", "QUESTION_TO_STUDENT needs a student name");
        return {UtteranceAct::QuestionToStudent, target};
    }
    throw ProtocolError("classifier", "expected STATEMENT, QUESTION_TO_CLASS or QUESTION_TO_STUDENT, got '" +
                                          text::truncate(text::first_line(reply), 80) + "'");
}

Classification classify_utterance(std::string_view utterance, std::span<const std::string> roster,
                                  lm::Backend& backend, const AgentSettings& settings) {
    std::string user = "## Roster\n";
    for (const auto& name : roster) user += "- " + name + "\n";
    user += "\n## Teacher utterance\n" + std::string(utterance) +
            "\n\nAnswer with one line: STATEMENT, QUESTION_TO_CLASS, or QUESTION_TO_STUDENT: <name>.";
    const std::string system =
        "You classify a teacher's utterance as a statement, a question to the whole class, or a question "
        "addressed to one named student.";
    auto req = lm::make_request(system, user, settings.general_temperature, settings.max_tokens, lm::tags::kClassify);
    return parse_classification(backend.complete(req).text);
}

}  // namespace cgmi::agents
