// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "cgmi/agents.hpp"
#include "support.hpp"

using namespace cgmi;
using namespace cgmi::agents;
using nlohmann::json;

namespace {

const char* kPlan =
    "Topic: ignored by the engine\n"
    "Objectives:\n"
    "- Recognise a quadratic\n"
    "- Identify coefficients\n"
    "\n"
    "Stages:\n"
    "1. Introduction\n"
    "Description: Motivate the topic.\n"
    "Criterion: Students name an example.\n"
    "2. Practice\n"
    "Description: Work examples.\n"
    "Criterion: Two examples solved.\n";

TeachingPlan two_stage_plan() { return parse_plan(kPlan); }

std::shared_ptr<lm::ScriptedBackend> scripted(std::vector<lm::ScriptEntry> entries) {
    return std::make_shared<lm::ScriptedBackend>(std::move(entries));
}

RoleAgent make_agent(const std::string& persona_file, lm::BackendPtr backend) {
    auto profile = scale::load_persona_file(testing::data_dir() / "personas" / persona_file);
    RoleAgent agent(std::move(profile), std::move(backend), nullptr);
    for (const auto& tree : agent.profile().scales) scale::assign_dfs(tree, agent);
    return agent;
}

}  // namespace

TEST_SUITE("agents") {

TEST_CASE("plans parse strictly") {
    const auto plan = two_stage_plan();
    CHECK(plan.topic == "ignored by the engine");
    CHECK(plan.objectives == std::vector<std::string>{"Recognise a quadratic", "Identify coefficients"});
    REQUIRE(plan.stages.size() == 2);
    CHECK(plan.stages[1].name == "Practice");
    CHECK(plan.stages[1].completion_criterion == "Two examples solved.");
    CHECK(parse_plan(render_plan(plan)).stages.size() == 2);
    CHECK(to_json(plan)["stages"][0]["criterion"] == "Students name an example.");

    auto protocol_of = [](const std::string& doc) {
        try {
            parse_plan(doc);
        } catch (const ProtocolError& e) {
            return e.protocol();
        }
        return std::string{"accepted"};
    };
    CHECK(protocol_of("Topic: x\nObjectives:\nStages:\n") == "plan");
    CHECK(protocol_of("Topic: x\nObjectives:\nStages:\n2. A\nDescription: d\nCriterion: c\n") == "plan");
    CHECK(protocol_of("Topic: x\nObjectives:\nStages:\n1. A\nDescription: d\n") == "plan");
    CHECK(protocol_of("Topic: x\nObjectives:\nStages:\n1. A\nDescription: d\nCriterion: c\n"
                      "2. A\nDescription: d\nCriterion: c\n") == "plan");
    CHECK(protocol_of("Here is your plan!\n") == "plan");
}

TEST_CASE("generated plans carry the requested topic") {
    auto backend = scripted({testing::entry("teaching_plan", "Lesson topic: Quadratics", kPlan)});
    const auto plan = generate_plan("Quadratics", *backend);
    CHECK(plan.topic == "Quadratics");
    CHECK(plan.stages.size() == 2);
}

TEST_CASE("supervisor verdicts are normalised at the plan boundary") {
    CHECK(parse_verdict("CONTINUE", 0, 3).value == SignalValue::Continue);
    CHECK(parse_verdict("advance: objectives met", 0, 3).value == SignalValue::AdvanceStage);
    CHECK(parse_verdict("advance: objectives met", 0, 3).rationale == "objectives met");
    CHECK(parse_verdict("ADVANCE", 2, 3).value == SignalValue::EndLesson);
    const auto early_end = parse_verdict("END\nall done", 0, 3);
    CHECK(early_end.value == SignalValue::AdvanceStage);
    CHECK(early_end.verdict == "END");
    CHECK(early_end.rationale == "all done");
    CHECK(parse_verdict("END", 2, 3).value == SignalValue::EndLesson);
    CHECK_THROWS_AS(parse_verdict("Maybe later", 0, 3), ProtocolError);
}

TEST_CASE("the supervisor sees the plan, the stage and recent events") {
    const auto plan = two_stage_plan();
    transcript::Transcript t;
    t.append(1, transcript::EventKind::Utterance, "Emily", {{"text", "x squared"}});
    const auto prompt = supervisor_prompt(plan, 1, t.events());
    CHECK(prompt.find("## Teaching plan") != std::string::npos);
    CHECK(prompt.find("Stage 2 of 2: Practice") != std::string::npos);
    CHECK(prompt.find("Emily (utterance): x squared") != std::string::npos);

    auto backend = scripted({testing::entry("supervisor", "Stage 1 of 2", "ADVANCE")});
    CHECK(supervise(plan, 0, t.events(), *backend).value == SignalValue::AdvanceStage);
    CHECK_THROWS_AS(supervise(plan, 2, t.events(), *backend), PreconditionError);
}

TEST_CASE("role agents build their persona from delivered traits") {
    auto backend = scripted({testing::truthful_probe_entry()});
    auto emily = make_agent("emily.json", backend);
    CHECK(emily.id() == "Emily");
    CHECK(emily.deliveries().size() == 31 + 49);
    const auto text = emily.persona_text();
    CHECK(text.find("Name: Emily") != std::string::npos);
    CHECK(text.find("[score: 23]") != std::string::npos);

    std::mt19937_64 rng(3);
    for (const auto& tree : emily.profile().scales) {
        const auto report = scale::consistency_check(emily, tree, 2, rng);
        CHECK(report.outcome == scale::CheckOutcome::Pass);
        CHECK(report.queries_issued == 4);
    }
    emily.restore_persona("Your Extraversion score is 23.\n");
    CHECK(emily.persona_text().find("[Persona restorations]\nYour Extraversion score is 23.") != std::string::npos);
}

TEST_CASE("persona drift is caught and restored") {
    auto backend = scripted({testing::entry("persona_probe", "Persona check", "1")});
    auto emily = make_agent("emily.json", backend);
    std::mt19937_64 rng(1);
    const auto report = scale::consistency_check(emily, emily.profile().scales[0], 2, rng);
    CHECK(report.outcome == scale::CheckOutcome::FailedCoarse);
    CHECK(report.restored);
    CHECK(emily.restorations().size() == 1);
}

TEST_CASE("consistency checker verdicts") {
    auto agent_backend = scripted({testing::truthful_probe_entry()});
    auto emily = make_agent("emily.json", agent_backend);
    auto checker = scripted({testing::entry("consistency", "I hate talking", "INCONSISTENT: Emily is outgoing."),
                             testing::entry("consistency", "bare", "INCONSISTENT"),
                             testing::entry("consistency", "weird", "perhaps"),
                             testing::entry("consistency", "## Draft statement", "CONSISTENT")});
    CHECK(check_persona(emily, "Me! I know!", *checker).consistent);
    const auto bad = check_persona(emily, "I hate talking in class.", *checker);
    CHECK_FALSE(bad.consistent);
    CHECK(bad.correction == "Emily is outgoing.");
    CHECK(check_persona(emily, "bare", *checker).correction == "Stay consistent with your persona.");
    CHECK_THROWS_AS(check_persona(emily, "weird", *checker), ProtocolError);
    CHECK_THROWS_AS(check_persona(emily, "  ", *checker), PreconditionError);
}

TEST_CASE("willingness answers are parsed and validated") {
    auto s = parse_willingness("Emily", "I love this.\nSCORE: 5");
    REQUIRE(s.has_value());
    CHECK(s->score == 5);
    CHECK(s->rationale == "I love this.");
    CHECK(parse_willingness("A", "score: 3")->score == 3);
    CHECK_FALSE(parse_willingness("A", "SCORE: 6").has_value());
    CHECK_FALSE(parse_willingness("A", "SCORE: 0").has_value());
    CHECK_FALSE(parse_willingness("A", "I would say 4").has_value());
}

TEST_CASE("the most willing student is selected") {
    const std::vector<std::string> roster{"John", "Emily", "Ryan", "Samantha", "Ying Zheng"};
    const std::vector<WillingnessScore> scores{
        {"John", 3, ""}, {"Emily", 5, ""}, {"Ryan", 4, ""}, {"Samantha", 2, ""}, {"Ying Zheng", 4, ""}};
    CHECK(select_speaker(scores, roster) == "Emily");

    const std::vector<WillingnessScore> tie{{"Ying Zheng", 4, ""}, {"Ryan", 4, ""}, {"John", 1, ""}};
    CHECK(select_speaker(tie, roster) == "Ryan");
}

TEST_CASE("random selection is uniform and seeded") {
    const std::vector<std::string> roster{"A", "B", "C", "D"};
    std::mt19937_64 a(42);
    std::mt19937_64 b(42);
    std::map<std::string, int> counts;
    for (int i = 0; i < 4000; ++i) {
        const auto pick = select_random(roster, a);
        CHECK(pick == select_random(roster, b));
        ++counts[pick];
    }
    for (const auto& name : roster) {
        CHECK(counts[name] > 850);
        CHECK(counts[name] < 1150);
    }
    CHECK_THROWS_AS(select_random({}, a), PreconditionError);
}

TEST_CASE("willingness scoring asks once per student and retries once") {
    auto agent_backend = scripted({testing::truthful_probe_entry()});
    auto emily = make_agent("emily.json", agent_backend);
    auto samantha = make_agent("samantha.json", agent_backend);
    std::vector<RoleAgent*> students{&emily, &samantha};
    transcript::Transcript t;

    auto scorer = scripted({testing::entry("willingness", "under assessment: Emily", "Eager.\nSCORE: 5"),
                            testing::entry("willingness", "under assessment: Samantha", "hmm", lm::MatchKind::Substring, 1),
                            testing::entry("willingness", "under assessment: Samantha", "SCORE: 2")});
    const auto scores = score_willingness(students, "Who can explain?", t.events(), *scorer);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].agent == "Emily");
    CHECK(scores[0].score == 5);
    CHECK(scores[1].score == 2);
    CHECK(scorer->calls() == 3);

    WillingnessOptions parallel;
    parallel.parallel = true;
    auto fixed = scripted({testing::entry("willingness", "under assessment: Emily", "SCORE: 4"),
                           testing::entry("willingness", "under assessment: Samantha", "SCORE: 1")});
    const auto par = score_willingness(students, "Q?", t.events(), *fixed, parallel);
    CHECK(par[0].score == 4);
    CHECK(par[1].score == 1);

    auto broken = scripted({testing::entry("willingness", "under assessment", "no idea")});
    try {
        score_willingness(students, "Q?", t.events(), *broken);
        FAIL("expected a protocol error");
    } catch (const ProtocolError& e) {
        CHECK(e.protocol() == "willingness");
    }
}

TEST_CASE("teacher utterances are classified") {
    CHECK(parse_classification("STATEMENT").act == UtteranceAct::Statement);
    CHECK(parse_classification("question_to_class").act == UtteranceAct::QuestionToClass);
    const auto c = parse_classification("QUESTION_TO_STUDENT: Ying Zheng");
    CHECK(c.act == UtteranceAct::QuestionToStudent);
    CHECK(c.target == "Ying Zheng");
    CHECK_THROWS_AS(parse_classification("QUESTION_TO_STUDENT"), ProtocolError);
    CHECK_THROWS_AS(parse_classification("a question"), ProtocolError);

    const std::vector<std::string> roster{"Emily", "Ryan"};
    auto backend = scripted({testing::entry("classify", "## Teacher utterance\nRyan, what is a?", "QUESTION_TO_STUDENT: Ryan")});
    CHECK(classify_utterance("Ryan, what is a?", roster, *backend).target == "Ryan");
}

TEST_CASE("a role agent turn runs the cognitive cycle with its persona as system text") {
    auto backend = std::make_shared<lm::InstrumentedBackend>(scripted({
        testing::truthful_probe_entry(),
        testing::entry("distill_cot", "Working memory", "Class content."),
        testing::entry("distill_coa", "Working memory", "Steps."),
        testing::entry("reflect", "Class content.", "Reflection."),
        testing::entry("plan", "Steps.", "Plan."),
        testing::entry("act", "Reflection.", "Hello class."),
    }));
    auto teacher = make_agent("mrs_smith.json", backend);
    teacher.perceive(1, "Lesson begins.");
    CHECK(teacher.take_turn(1) == "Hello class.");
    CHECK(backend->tags() == std::vector<std::string>{"distill_cot", "distill_coa", "reflect", "plan", "act"});
    for (const auto& r : backend->requests()) CHECK(r.system == teacher.persona_text());
    CHECK(teacher.regenerate(1, "Be warmer.") == "Hello class.");
    CHECK(teacher.inspect().find("declarative entries: 1") != std::string::npos);
}

}  // TEST_SUITE
