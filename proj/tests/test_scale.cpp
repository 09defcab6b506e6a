// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <map>
#include <set>

#include "cgmi/scale.hpp"
#include "cgmi/text.hpp"
#include "fake_subject.hpp"
#include "support.hpp"

using namespace cgmi;
using namespace cgmi::scale;
using nlohmann::json;

namespace {

json small_tree() {
    return json::parse(R"({
      "name": "Mini", "kind": "score_based", "root": "r",
      "nodes": [
        {"id": "r", "description": "Root", "children": ["a", "b"]},
        {"id": "a", "description": "Trait A", "range": [2, 10], "children": ["a1", "a2"]},
        {"id": "b", "description": "Trait B", "range": [2, 10], "children": ["b1", "b2"]},
        {"id": "a1", "description": "Facet A1", "range": [1, 5], "score": 4},
        {"id": "a2", "description": "Facet A2", "range": [1, 5], "score": 2},
        {"id": "b1", "description": "Facet B1", "range": [1, 5], "score": 5},
        {"id": "b2", "description": "Facet B2", "range": [1, 5], "score": 1}
      ]})");
}

json& node(json& doc, const std::string& id) {
    for (auto& n : doc["nodes"]) {
        if (n["id"] == id) return n;
    }
    throw std::runtime_error("no node " + id);
}

ScaleErrorKind load_error_kind(const json& doc, std::string* node_id = nullptr) {
    try {
        (void)load_scale(doc);
    } catch (const ScaleError& e) {
        if (node_id != nullptr) *node_id = e.node_id();
        return e.kind();
    }
    FAIL("document loaded without error");
    return ScaleErrorKind::Parse;
}

}  // namespace

TEST_SUITE("scale") {

TEST_CASE("internal scores are the sum of their children") {
    const auto tree = load_scale(small_tree());
    CHECK(tree.node("a").score == 6);
    CHECK(tree.node("b").score == 6);
    CHECK(tree.node("r").score == 12);
    CHECK(tree.coarse_ids() == std::vector<std::string>{"a", "b"});
    CHECK(tree.leaves_under("a") == std::vector<std::string>{"a1", "a2"});
    CHECK(tree.parent_of("b2") == "b");
    CHECK_FALSE(tree.parent_of("r").has_value());
    CHECK(tree.value_text("a1") == "score: 4");
}

TEST_CASE("an authored internal score must match its children") {
    auto doc = small_tree();
    node(doc, "a")["score"] = 6;
    CHECK_NOTHROW(load_scale(doc));
    node(doc, "a")["score"] = 7;
    std::string where;
    CHECK(load_error_kind(doc, &where) == ScaleErrorKind::SumMismatch);
    CHECK(where == "a");
}

TEST_CASE("structural defects are rejected with the node they concern") {
    std::string where;
    SUBCASE("duplicate id") {
        auto doc = small_tree();
        doc["nodes"].push_back({{"id", "a1"}, {"description", "again"}, {"score", 1}});
        CHECK(load_error_kind(doc, &where) == ScaleErrorKind::DuplicateId);
        CHECK(where == "a1");
    }
    SUBCASE("cycle") {
        auto doc = small_tree();
        node(doc, "a1")["children"] = {"a"};
        CHECK(load_error_kind(doc) == ScaleErrorKind::Cycle);
    }
    SUBCASE("detached cycle") {
        auto doc = small_tree();
        doc["nodes"].push_back({{"id", "x"}, {"description", "X"}, {"children", {"y"}}});
        doc["nodes"].push_back({{"id", "y"}, {"description", "Y"}, {"children", {"x"}}});
        CHECK(load_error_kind(doc) == ScaleErrorKind::Cycle);
    }
    SUBCASE("second parent") {
        auto doc = small_tree();
        node(doc, "b")["children"].push_back("a1");
        CHECK(load_error_kind(doc, &where) == ScaleErrorKind::Structure);
        CHECK(where == "a1");
    }
    SUBCASE("orphan") {
        auto doc = small_tree();
        doc["nodes"].push_back({{"id", "lost"}, {"description", "Lost"}, {"score", 1}});
        CHECK(load_error_kind(doc, &where) == ScaleErrorKind::Structure);
        CHECK(where == "lost");
    }
    SUBCASE("score outside its range") {
        auto doc = small_tree();
        node(doc, "b1")["score"] = 6;
        CHECK(load_error_kind(doc, &where) == ScaleErrorKind::ScoreOutOfRange);
        CHECK(where == "b1");
    }
    SUBCASE("leaf without a score") {
        auto doc = small_tree();
        node(doc, "b1").erase("score");
        CHECK(load_error_kind(doc) == ScaleErrorKind::Parse);
    }
    SUBCASE("unknown child") {
        auto doc = small_tree();
        node(doc, "b")["children"].push_back("ghost");
        CHECK(load_error_kind(doc, &where) == ScaleErrorKind::Structure);
    }
}

TEST_CASE("error messages name the offending node") {
    auto doc = small_tree();
    node(doc, "b")["score"] = 9;
    try {
        (void)load_scale(doc);
        FAIL("expected an error");
    } catch (const ScaleError& e) {
        CHECK(std::string(e.what()).find("node 'b'") != std::string::npos);
        CHECK(e.category() == ErrorCategory::Validation);
    }
}

TEST_CASE("a single-node tree is allowed") {
    const auto tree = load_scale(json::parse(
        R"({"kind": "score_based", "root": "only", "nodes": [{"id": "only", "description": "Only"}]})"));
    CHECK(tree.size() == 1);
    CHECK(tree.coarse_ids().empty());
}

TEST_CASE("shipped inventories validate") {
    const auto big5 = load_scale_file(testing::data_dir() / "scales" / "bigfive.json");
    CHECK(big5.size() == 31);
    CHECK(big5.coarse_ids().size() == 5);
    for (const auto& c : big5.coarse_ids()) {
        CHECK(big5.node(c).children.size() == 5);
        CHECK(*big5.node(c).score >= 5);
        CHECK(*big5.node(c).score <= 25);
    }
    CHECK(big5.warnings().empty());

    const auto sternberg = load_scale_file(testing::data_dir() / "scales" / "sternberg.json");
    for (const auto& c : sternberg.coarse_ids()) {
        for (const auto& leaf : sternberg.leaves_under(c)) {
            CHECK(sternberg.node(leaf).range->lo == 1);
            CHECK(sternberg.node(leaf).range->hi == 7);
        }
    }

    const auto solomon = load_scale_file(testing::data_dir() / "scales" / "solomon.json");
    CHECK(solomon.kind() == ScaleKind::ChoiceBased);
    CHECK(solomon.coarse_ids().size() == 4);
    for (const auto& c : solomon.coarse_ids()) CHECK(solomon.leaves_under(c).size() == 11);
}

TEST_CASE("big five shape checks") {
    auto doc = testing::read_json(testing::data_dir() / "scales" / "bigfive.json");
    SUBCASE("coarse sum perturbation names the trait") {
        node(doc, "extraversion")["score"] = 24;
        std::string where;
        CHECK(load_error_kind(doc, &where) == ScaleErrorKind::SumMismatch);
        CHECK(where == "extraversion");
    }
    SUBCASE("facet range must be 1..5") {
        node(doc, "anxiety")["range"] = {1, 7};
        CHECK(load_error_kind(doc) == ScaleErrorKind::Structure);
    }
    SUBCASE("26-node variant loads with a warning") {
        json nodes = json::array();
        std::set<std::string> dropped;
        for (auto& n : doc["nodes"]) {
            if (n.contains("children") && n["id"] != "big_five") {
                dropped.insert(n["children"].back().get<std::string>());
                n["children"].erase(n["children"].size() - 1);
                n["range"] = {4, 20};
            }
        }
        for (auto& n : doc["nodes"]) {
            if (dropped.count(n["id"].get<std::string>()) == 0) nodes.push_back(n);
        }
        doc["nodes"] = nodes;
        const auto tree = load_scale(doc);
        CHECK(tree.size() == 26);
        CHECK(tree.warnings().size() == 1);
    }
}

TEST_CASE("solomon dimension type follows the majority of answers") {
    auto doc = testing::read_json(testing::data_dir() / "scales" / "solomon.json");
    json choices = json::object();
    for (int i = 1; i <= 11; ++i) choices["visual_verbal_" + std::to_string(i)] = i <= 6 ? "A" : "B";
    auto tree = load_scale(apply_overrides(doc, json::object(), choices));
    CHECK(tree.dimension_label("visual_verbal") == "Visual");
    CHECK(tree.value_text("visual_verbal") == "type: Visual");
    for (int i = 1; i <= 11; ++i) choices["visual_verbal_" + std::to_string(i)] = i <= 5 ? "A" : "B";
    tree = load_scale(apply_overrides(doc, json::object(), choices));
    CHECK(tree.dimension_label("visual_verbal") == "Verbal");
}

TEST_CASE("overrides re-derive internal scores") {
    auto doc = small_tree();
    node(doc, "a")["score"] = 6;
    const auto tree = load_scale(apply_overrides(doc, {{"a1", 1}}, json::object()));
    CHECK(tree.node("a").score == 3);
    CHECK_THROWS_AS(load_scale(apply_overrides(doc, {{"a9", 1}}, json::object())), Error);
}

TEST_CASE("depth-first assignment visits parents first in document order") {
    const auto tree = load_scale(small_tree());
    testing::FakeSubject subject;
    const auto record = assign_dfs(tree, subject);
    std::vector<std::string> order;
    for (const auto& d : record.deliveries) order.push_back(d.node_id);
    CHECK(order == std::vector<std::string>{"r", "a", "a1", "a2", "b", "b1", "b2"});
    CHECK(record.deliveries[2].depth == 2);
    CHECK(render_trait_line(record.deliveries[2]) == "    - Facet A1 [score: 4]");
    CHECK(subject.delivered.size() == tree.size());
}

TEST_CASE("probe questions and reply matching") {
    const auto tree = load_scale(small_tree());
    CHECK(probe_question(tree, "a") ==
          "Persona check (Mini): state your score for the trait \"Trait A\". Reply with a single integer.");
    CHECK(reply_matches(tree, "a", "6"));
    CHECK(reply_matches(tree, "a", "My score is 6 out of 10."));
    CHECK_FALSE(reply_matches(tree, "a", "7"));
    CHECK_FALSE(reply_matches(tree, "a", "no idea"));

    auto sol = testing::read_json(testing::data_dir() / "scales" / "solomon.json");
    const auto s = load_scale(sol);
    CHECK(reply_matches(s, "active_reflective_1", "A"));
    CHECK_FALSE(reply_matches(s, "active_reflective_1", "b"));
    CHECK(reply_matches(s, "active_reflective", "I am Active"));
    CHECK_FALSE(reply_matches(s, "active_reflective", "Reflective, not active"));
}

TEST_CASE("consistency check on a faithful subject") {
    const auto tree = load_scale_file(testing::data_dir() / "scales" / "bigfive.json");
    testing::FakeSubject subject;
    assign_dfs(tree, subject);
    std::mt19937_64 rng(11);
    const auto report = consistency_check(subject, tree, 3, rng);
    CHECK(report.outcome == CheckOutcome::Pass);
    CHECK(report.queries_issued == 6);
    CHECK(subject.probes == 6);
    CHECK_FALSE(report.restored);
    CHECK(subject.restorations.empty());
    CHECK(report.tested_coarse.size() == 3);
    CHECK(std::set<std::string>(report.tested_coarse.begin(), report.tested_coarse.end()).size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(tree.parent_of(report.tested_fine[i]) == report.tested_coarse[i]);
}

TEST_CASE("coarse drift is caught before any fine probe") {
    const auto tree = load_scale_file(testing::data_dir() / "scales" / "bigfive.json");
    std::set<std::string> all(tree.coarse_ids().begin(), tree.coarse_ids().end());
    testing::FakeSubject subject(all);
    assign_dfs(tree, subject);
    std::mt19937_64 rng(5);
    const auto report = consistency_check(subject, tree, 2, rng);
    CHECK(report.outcome == CheckOutcome::FailedCoarse);
    CHECK(report.queries_issued == 2);
    CHECK(report.tested_fine.empty());
    CHECK(report.restored);
    REQUIRE(subject.restorations.size() == 1);
    for (const auto& c : report.tested_coarse) {
        const auto& n = tree.node(c);
        CHECK(subject.restorations[0].find(n.description + " [" + tree.value_text(c) + "]") != std::string::npos);
    }
}

TEST_CASE("fine drift is caught in the second stage") {
    const auto tree = load_scale_file(testing::data_dir() / "scales" / "bigfive.json");
    std::set<std::string> leaves;
    for (const auto& c : tree.coarse_ids()) {
        for (const auto& l : tree.leaves_under(c)) leaves.insert(l);
    }
    testing::FakeSubject subject(leaves);
    assign_dfs(tree, subject);
    std::mt19937_64 rng(9);
    const auto report = consistency_check(subject, tree, 2, rng);
    CHECK(report.outcome == CheckOutcome::FailedFine);
    CHECK(report.queries_issued == 4);
    CHECK(report.restored);
    CHECK(report.mismatched == report.tested_fine);
}

TEST_CASE("m must not exceed the coarse count") {
    const auto tree = load_scale(small_tree());
    testing::FakeSubject subject;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(consistency_check(subject, tree, 3, rng), PreconditionError);
    CHECK_THROWS_AS(consistency_check(subject, tree, 0, rng), PreconditionError);
}

TEST_CASE("personas load from templates with overrides") {
    const auto p = load_persona_file(testing::data_dir() / "personas" / "emily.json");
    CHECK(p.agent_name == "Emily");
    REQUIRE(p.scales.size() == 2);
    CHECK(p.scales[0].node("extraversion").score == 23);
    const auto text = render_persona_prompt(p);
    CHECK(text.rfind("Name: Emily\nCareer: Student\n", 0) == 0);
    CHECK(text.find("\n[Big Five]\n") != std::string::npos);
    CHECK(text.find("  - Extraversion: outgoing, talkative and energetic in company [score: 23]") != std::string::npos);
}

TEST_CASE("a persona with an invalid scale is a config error naming the entry") {
    testing::TempDir dir;
    auto doc = json::parse(R"({"name": "X", "scales": [{"template": "t.json", "scores": {"a1": 9}}]})");
    testing::write_text(dir / "t.json", small_tree().dump());
    testing::write_text(dir / "p.json", doc.dump());
    try {
        (void)load_persona_file(dir / "p.json");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(e.field() == "scales[0]");
        CHECK(std::string(e.what()).find("a1") != std::string::npos);
    }
}

}  // TEST_SUITE
