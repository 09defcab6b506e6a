// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>

#include "cgmi/orchestrator.hpp"
#include "support.hpp"

using namespace cgmi;
using namespace cgmi::orchestrator;
using cgmi::transcript::EventKind;
using nlohmann::json;

namespace {

json demo_document() { return testing::read_json(testing::demo_config()); }

ScenarioConfig demo_config(const json& doc) {
    return parse_scenario_config(doc, testing::demo_config().parent_path(), "config.json");
}

std::vector<const transcript::TranscriptEvent*> of_kind(const transcript::Transcript& t, EventKind kind) {
    std::vector<const transcript::TranscriptEvent*> out;
    for (const auto& e : t.events()) {
        if (e.kind == kind) out.push_back(&e);
    }
    return out;
}

std::vector<std::string> selected(const transcript::Transcript& t) {
    std::vector<std::string> out;
    for (const auto* e : of_kind(t, EventKind::Selection)) out.push_back(e->payload["selected"]);
    return out;
}

std::string config_error_field(const json& doc) {
    try {
        load_scenario(demo_config(doc));
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<none>";
}

RunResult run_interactive(const std::string& commands, std::ostream* console = nullptr) {
    auto scenario = load_scenario(testing::demo_config());
    std::istringstream in(commands);
    RunOptions options;
    options.console = console;
    return interactive_session(scenario, in, options);
}

}  // namespace

TEST_SUITE("orchestrator") {

TEST_CASE("the demo lesson follows its plan to the end") {
    auto scenario = load_scenario(testing::demo_config());
    REQUIRE(scenario.roster == std::vector<std::string>{"Emily", "John", "Ryan", "Samantha", "Ying Zheng"});
    REQUIRE(scenario.setup_checks.size() == 12);
    for (const auto& c : scenario.setup_checks) CHECK(c.report.outcome == scale::CheckOutcome::Pass);

    const auto result = run_lesson(scenario);
    const auto& t = result.transcript;
    CHECK(transcript::check_invariants(t).empty());
    CHECK(result.report.teacher_turns == 8);
    CHECK(result.report.stage_count == 3);
    CHECK(result.report.stages_completed == 3);
    CHECK(result.report.termination == Termination::SupervisorEnd);
    CHECK(result.report.events == t.events().size());
    CHECK(t.events().front().kind == EventKind::LessonStart);
    CHECK(t.events().back().kind == EventKind::LessonEnd);
    CHECK(t.header()["topic"] == "Concept of the quadratic equation");
    CHECK(t.header()["stages"] == json{"Introduction", "Exploration", "Practice and summary"});

    CHECK(selected(t) == std::vector<std::string>{"Emily", "Emily", "Ying Zheng", "Samantha"});
    const auto selections = of_kind(t, EventKind::Selection);
    CHECK(selections[0]->payload["mode"] == "willingness");
    CHECK(selections[2]->payload["mode"] == "directed");
    CHECK(of_kind(t, EventKind::WillingnessScores).size() == 2);

    const auto transitions = of_kind(t, EventKind::StageTransition);
    REQUIRE(transitions.size() == 2);
    CHECK(transitions[0]->turn == 2);
    CHECK(transitions[0]->payload["to"] == "Exploration");
    CHECK(transitions[1]->turn == 5);
    CHECK(t.events().back().turn == 8);

    const auto signals = of_kind(t, EventKind::Signal);
    REQUIRE(signals.size() == 8);
    CHECK(signals.back()->payload["verdict"] == "END");
    CHECK(signals.back()->payload["value"] == "EndLesson");

    const auto& calls = result.report.backend_calls;
    CHECK(calls.at("teaching_plan") == 1);
    CHECK(calls.at("supervisor") == 8);
    CHECK(calls.at("classify") == 8);
    CHECK(calls.at("willingness") == 10);
    CHECK(calls.at("consistency") == 12);
    CHECK(calls.at("act") == 12);
}

TEST_CASE("runs are byte-identical for the same seed") {
    std::string first;
    for (int i = 0; i < 2; ++i) {
        auto scenario = load_scenario(testing::demo_config());
        const auto text = run_lesson(scenario).transcript.to_jsonl();
        if (i == 0) first = text;
        CHECK(text == first);
    }
}

TEST_CASE("the transcript is streamed while the lesson runs") {
    testing::TempDir dir;
    auto scenario = load_scenario(testing::demo_config());
    RunOptions options;
    options.transcript_path = dir / "lesson.jsonl";
    const auto result = run_lesson(scenario, options);
    CHECK(testing::read_text(dir / "lesson.jsonl") == result.transcript.to_jsonl());
}

TEST_CASE("the turn limit stops the lesson") {
    auto doc = demo_document();
    doc["limits"]["max_turns"] = 1;
    auto scenario = load_scenario(demo_config(doc));
    const auto result = run_lesson(scenario);
    CHECK(result.report.teacher_turns == 1);
    CHECK(result.report.termination == Termination::MaxTurns);
    CHECK(result.transcript.events().back().payload["termination"] == "max_turns");
    CHECK(transcript::check_invariants(result.transcript).empty());
}

TEST_CASE("the stage-turn cap forces progress") {
    StageMachine m(2, 2);
    CHECK(m.on_teacher_turn(agents::SignalValue::Continue).applied == agents::SignalValue::Continue);
    const auto forced = m.on_teacher_turn(agents::SignalValue::Continue);
    CHECK(forced.applied == agents::SignalValue::AdvanceStage);
    CHECK(forced.capped);
    CHECK(m.current() == 1);
    CHECK(m.turns_in_stage() == 0);
    CHECK(m.on_teacher_turn(agents::SignalValue::AdvanceStage).applied == agents::SignalValue::EndLesson);
    CHECK(m.ended());

    StageMachine user(2, 10);
    CHECK(user.force_advance().applied == agents::SignalValue::AdvanceStage);
    CHECK(user.force_advance().applied == agents::SignalValue::EndLesson);
}

TEST_CASE("questions are routed to the right student") {
    auto scenario = load_scenario(testing::demo_config());
    const auto students = scenario.student_ptrs();
    std::mt19937_64 rng(1);
    transcript::Transcript t;
    const agents::WillingnessOptions wopts;

    const agents::Classification directed{agents::UtteranceAct::QuestionToStudent, "ying zheng"};
    auto d = route_question(directed, "Ying Zheng, can you explore?", students, t.events(),
                            SelectionMode::Willingness, rng, *scenario.backend, wopts, scenario.settings);
    CHECK(d.speaker == "Ying Zheng");
    CHECK(d.mode == "directed");
    CHECK(d.scores.empty());

    const agents::Classification to_class{agents::UtteranceAct::QuestionToClass, {}};
    d = route_question(to_class, "Can anyone tell me?", students, t.events(), SelectionMode::Willingness, rng,
                       *scenario.backend, wopts, scenario.settings);
    CHECK(d.speaker == "Emily");
    CHECK(d.scores.size() == 5);

    d = route_question(to_class, "Can anyone tell me?", students, t.events(), SelectionMode::Random, rng,
                       *scenario.backend, wopts, scenario.settings);
    CHECK(d.mode == "random");
    CHECK(std::find(scenario.roster.begin(), scenario.roster.end(), d.speaker) != scenario.roster.end());

    const agents::Classification stranger{agents::UtteranceAct::QuestionToStudent, "Alice"};
    try {
        route_question(stranger, "Alice?", students, t.events(), SelectionMode::Willingness, rng, *scenario.backend,
                       wopts, scenario.settings);
        FAIL("expected a routing error");
    } catch (const ProtocolError& e) {
        CHECK(e.protocol() == "routing");
    }
    const agents::Classification statement{agents::UtteranceAct::Statement, {}};
    CHECK_THROWS_AS(route_question(statement, "Hello.", students, t.events(), SelectionMode::Willingness, rng,
                                   *scenario.backend, wopts, scenario.settings),
                    PreconditionError);

    CHECK(match_roster_name(scenario.roster, "SAMANTHA") == "Samantha");
    CHECK_FALSE(match_roster_name(scenario.roster, "Sam").has_value());
}

TEST_CASE("random selection is reproducible and skips willingness scoring") {
    LoadOptions options;
    options.selection_mode = SelectionMode::Random;
    std::string first;
    for (int i = 0; i < 2; ++i) {
        auto scenario = load_scenario(testing::demo_config(), options);
        const auto result = run_lesson(scenario);
        CHECK(of_kind(result.transcript, EventKind::WillingnessScores).empty());
        CHECK(result.report.backend_calls.count("willingness") == 0);
        CHECK(transcript::check_invariants(result.transcript).empty());
        if (i == 0) first = result.transcript.to_jsonl();
        CHECK(result.transcript.to_jsonl() == first);
    }
}

TEST_CASE("interactive commands steer the lesson") {
    SUBCASE("advance then end") {
        const auto r = run_interactive("next\nadvance\nend\n");
        CHECK(r.report.teacher_turns == 1);
        CHECK(r.report.termination == Termination::UserEnd);
        const auto transitions = of_kind(r.transcript, EventKind::StageTransition);
        REQUIRE(transitions.size() == 1);
        CHECK(transitions[0]->payload["rationale"] == "user command");
        std::vector<std::string> commands;
        for (const auto* e : of_kind(r.transcript, EventKind::UserCommand)) commands.push_back(e->payload["command"]);
        CHECK(commands == std::vector<std::string>{"next", "advance", "end"});
        CHECK(transcript::check_invariants(r.transcript).empty());
    }
    SUBCASE("ask a named student") {
        const auto r = run_interactive("next\nask Samantha What did you get?\nend\n");
        const auto questions = of_kind(r.transcript, EventKind::QuestionToStudent);
        REQUIRE(questions.size() == 1);
        CHECK(questions[0]->speaker == "user");
        CHECK(questions[0]->payload["text"] == "What did you get?");
        CHECK(selected(r.transcript) == std::vector<std::string>{"Samantha"});
        const auto& answer = r.transcript.events()[questions[0]->index + 3];
        CHECK(answer.speaker == "Samantha");
        CHECK(answer.payload["in_reply_to"] == questions[0]->index);
        CHECK(transcript::check_invariants(r.transcript).empty());
    }
    SUBCASE("pause holds turns and end of input plays on") {
        const auto paused = run_interactive("pause\nnext\nnext\nend\n");
        CHECK(paused.report.teacher_turns == 0);
        const auto played = run_interactive("next\n");
        CHECK(played.report.teacher_turns == 8);
        CHECK(played.report.termination == Termination::SupervisorEnd);
    }
    SUBCASE("inspect and unknown commands") {
        std::ostringstream console;
        const auto r = run_interactive("inspect Emily\ndance\nend\n", &console);
        CHECK(console.str().find("Name: Emily") != std::string::npos);
        CHECK(console.str().find("advance") != std::string::npos);
        for (const auto* e : of_kind(r.transcript, EventKind::UserCommand)) CHECK(e->payload["command"] != "dance");
    }
}

TEST_CASE("memories carry over between lessons") {
    auto first = load_scenario(testing::demo_config());
    run_lesson(first);
    const auto memories = export_memories(first);
    CHECK(memories.contains("Emily"));
    auto second = load_scenario(testing::demo_config());
    import_memories(second, memories);
    const auto& emily = second.find("Emily")->cognition();
    REQUIRE(emily.declarative.size() == memories["Emily"]["declarative"].size());
    CHECK(emily.declarative.back().content == memories["Emily"]["declarative"].back()["content"]);
    CHECK(emily.declarative.back().turn == 0);
    CHECK(emily.working.last_turn() == 0);

    const auto carried = emily.declarative.size();
    const auto result = run_lesson(second);
    CHECK(result.report.termination == Termination::SupervisorEnd);
    CHECK(transcript::check_invariants(result.transcript).empty());
    CHECK(emily.declarative.size() > carried);
    CHECK(emily.declarative.front().turn == 0);
}

TEST_CASE("scenario configs are validated") {
    auto doc = demo_document();
    CHECK(demo_config(doc).students.size() == 5);
    CHECK(demo_config(doc).skill_library.is_absolute());

    auto empty_roster = doc;
    empty_roster["students"] = json::array();
    CHECK(config_error_field(empty_roster) == "students");

    auto missing_skills = doc;
    missing_skills.erase("skill_library");
    CHECK(config_error_field(missing_skills) == "skill_library");

    auto absent_skills = doc;
    absent_skills["skill_library"] = "nope.json";
    CHECK(config_error_field(absent_skills) == "skill_library");

    auto unknown = doc;
    unknown["colour"] = "blue";
    CHECK(config_error_field(unknown) == "colour");

    auto bad_mode = doc;
    bad_mode["selection_mode"] = "loudest";
    CHECK(config_error_field(bad_mode) == "selection_mode");

    auto replay = doc;
    replay["backend"] = {{"kind", "replay"}};
    CHECK(config_error_field(replay) == "backend.cassette");

    auto zero = doc;
    zero["limits"]["max_turns"] = 0;
    CHECK(config_error_field(zero) == "limits.max_turns");

    auto duplicate = doc;
    duplicate["students"].push_back(duplicate["students"][0]);
    CHECK(config_error_field(duplicate) == "students[5]");

    CHECK_THROWS_AS(load_scenario_config(testing::data_dir() / "missing.json"), ConfigError);
}

}  // TEST_SUITE
