// SPDX-License-Identifier: Apache-2.0
#include "cgmi/scale.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "cgmi/text.hpp"

namespace cgmi::scale {

using nlohmann::json;

std::string_view to_string(ScaleKind kind) {
    return kind == ScaleKind::ScoreBased ? "score_based" : "choice_based";
}

std::string_view to_string(Choice choice) { return choice == Choice::A ? "A" : "B"; }

std::string_view to_string(CheckOutcome outcome) {
    switch (outcome) {
        case CheckOutcome::Pass: return "pass";
        case CheckOutcome::FailedCoarse: return "failed_coarse";
        case CheckOutcome::FailedFine: return "failed_fine";
    }
    return "unknown";
}

// --- ScaleTree accessors ----------------------------------------------------

const ScaleNode& ScaleTree::node(std::string_view id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) {
        throw ScaleError(ScaleErrorKind::Structure, std::string(id), "no such node");
    }
    return it->second;
}

bool ScaleTree::contains(std::string_view id) const { return nodes_.find(id) != nodes_.end(); }

const std::vector<std::string>& ScaleTree::coarse_ids() const { return node(root_).children; }

std::vector<std::string> ScaleTree::leaves_under(std::string_view id) const {
    std::vector<std::string> out;
    std::vector<std::string_view> stack{id};
    while (!stack.empty()) {
        const ScaleNode& n = node(stack.back());
        stack.pop_back();
        if (n.is_leaf()) {
            out.push_back(n.id);
            continue;
        }
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.emplace_back(*it);
    }
    return out;
}

std::optional<std::string> ScaleTree::parent_of(std::string_view id) const {
    auto it = parents_.find(id);
    if (it == parents_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::string> ScaleTree::dimension_label(std::string_view id) const {
    const ScaleNode& n = node(id);
    if (!n.poles) return std::nullopt;
    std::size_t a_count = 0;
    std::size_t b_count = 0;
    for (const auto& leaf : leaves_under(id)) {
        const auto& c = node(leaf).choice;
        if (!c) continue;
        (*c == Choice::A ? a_count : b_count) += 1;
    }
    return a_count > b_count ? n.poles->first : n.poles->second;
}

std::string ScaleTree::value_text(std::string_view id) const {
    const ScaleNode& n = node(id);
    if (n.score) return "score: " + std::to_string(*n.score);
    if (n.choice) return "choice: " + std::string(to_string(*n.choice));
    if (auto label = dimension_label(id)) return "type: " + *label;
    return {};
}

// --- loading -----------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& node, const std::string& message) {
    throw ScaleError(ScaleErrorKind::Parse, node, message);
}

ScaleNode parse_node(const json& j) {
    if (!j.is_object()) parse_fail("", "node entry is not an object");
    ScaleNode n;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
        parse_fail("", "node without a string id");
    }
    n.id = j["id"].get<std::string>();
    if (!j.contains("description") || !j["description"].is_string()) {
        parse_fail(n.id, "missing string description");
    }
    n.description = j["description"].get<std::string>();
    if (j.contains("score") && !j["score"].is_null()) {
        if (!j["score"].is_number_integer()) parse_fail(n.id, "score must be an integer");
        n.score = j["score"].get<int>();
    }
    if (j.contains("range")) {
        const auto& r = j["range"];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() ||
            !r[1].is_number_integer()) {
            parse_fail(n.id, "range must be a pair of integers");
        }
        n.range = ScoreRange{r[0].get<int>(), r[1].get<int>()};
        if (n.range->lo > n.range->hi) parse_fail(n.id, "range lower bound exceeds upper bound");
    }
    if (j.contains("choice") && !j["choice"].is_null()) {
        const auto c = j["choice"].is_string() ? j["choice"].get<std::string>() : std::string{};
        if (c == "A" || c == "a") {
            n.choice = Choice::A;
        } else if (c == "B" || c == "b") {
            n.choice = Choice::B;
        } else {
            parse_fail(n.id, "choice must be \"A\" or \"B\"");
        }
    }
    if (j.contains("poles")) {
        const auto& p = j["poles"];
        if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string()) {
            parse_fail(n.id, "poles must be a pair of strings");
        }
        n.poles = std::pair{p[0].get<std::string>(), p[1].get<std::string>()};
    }
    if (j.contains("children")) {
        if (!j["children"].is_array()) parse_fail(n.id, "children must be an array");
        for (const auto& c : j["children"]) {
            if (!c.is_string()) parse_fail(n.id, "child ids must be strings");
            n.children.push_back(c.get<std::string>());
        }
    }
    return n;
}

void check_big_five_shape(const ScaleTree& tree, std::vector<std::string>& warnings) {
    if (tree.size() == 26) {
        warnings.emplace_back(
            "Big Five document has 26 nodes; the five-by-five layout has 31 (root, 5 traits, 25 facets)");
        return;
    }
    const auto& coarse = tree.coarse_ids();
    if (tree.size() != 31 || coarse.size() != 5) {
        throw ScaleError(ScaleErrorKind::Structure, tree.root_id(),
                         "Big Five expects a root with 5 traits of 5 facets each (31 nodes), got " +
                             std::to_string(tree.size()) + " nodes");
    }
    for (const auto& c : coarse) {
        const auto& trait = tree.node(c);
        if (trait.children.size() != 5) {
            throw ScaleError(ScaleErrorKind::Structure, c, "Big Five trait must have 5 facets");
        }
        if (!trait.range || trait.range->lo != 5 || trait.range->hi != 25) {
            throw ScaleError(ScaleErrorKind::Structure, c, "Big Five trait range must be [5, 25]");
        }
        for (const auto& f : trait.children) {
            const auto& facet = tree.node(f);
            if (!facet.is_leaf()) {
                throw ScaleError(ScaleErrorKind::Structure, f, "Big Five facet must be a leaf");
            }
            if (!facet.range || facet.range->lo != 1 || facet.range->hi != 5) {
                throw ScaleError(ScaleErrorKind::Structure, f, "Big Five facet range must be [1, 5]");
            }
        }
    }
}

void check_sternberg_shape(const ScaleTree& tree) {
    if (tree.kind() != ScaleKind::ScoreBased) {
        throw ScaleError(ScaleErrorKind::Structure, tree.root_id(), "Sternberg inventory is score-based");
    }
    for (const auto& c : tree.coarse_ids()) {
        const auto& style = tree.node(c);
        if (style.is_leaf()) {
            throw ScaleError(ScaleErrorKind::Structure, c, "Sternberg style needs item children");
        }
        for (const auto& item : style.children) {
            const auto& leaf = tree.node(item);
            if (!leaf.is_leaf() || !leaf.range || leaf.range->lo != 1 || leaf.range->hi != 7) {
                throw ScaleError(ScaleErrorKind::Structure, item,
                                 "Sternberg item must be a leaf with range [1, 7]");
            }
        }
    }
}

void check_solomon_shape(const ScaleTree& tree) {
    if (tree.kind() != ScaleKind::ChoiceBased) {
        throw ScaleError(ScaleErrorKind::Structure, tree.root_id(), "Solomon inventory is choice-based");
    }
    if (tree.coarse_ids().size() != 4) {
        throw ScaleError(ScaleErrorKind::Structure, tree.root_id(), "Solomon inventory has 4 dimensions");
    }
    for (const auto& c : tree.coarse_ids()) {
        const auto& dim = tree.node(c);
        if (!dim.poles) throw ScaleError(ScaleErrorKind::Structure, c, "dimension needs two poles");
        if (dim.children.size() != 11) {
            throw ScaleError(ScaleErrorKind::Structure, c, "dimension needs 11 items");
        }
        for (const auto& item : dim.children) {
            if (!tree.node(item).is_leaf()) {
                throw ScaleError(ScaleErrorKind::Structure, item, "Solomon item must be a leaf");
            }
        }
    }
}

}  // namespace

ScaleTree load_scale(const json& document) {
    if (!document.is_object()) parse_fail("", "scale document must be an object");
    ScaleTree tree;
    tree.name_ = document.value("name", std::string{});
    tree.instrument_ = document.value("instrument", std::string{});

    if (!document.contains("kind") || !document["kind"].is_string()) parse_fail("", "missing kind");
    const auto kind = document["kind"].get<std::string>();
    if (kind == "score_based") {
        tree.kind_ = ScaleKind::ScoreBased;
    } else if (kind == "choice_based") {
        tree.kind_ = ScaleKind::ChoiceBased;
    } else {
        parse_fail("", "unknown kind '" + kind + "'");
    }
    if (!document.contains("root") || !document["root"].is_string()) parse_fail("", "missing root");
    tree.root_ = document["root"].get<std::string>();
    if (!document.contains("nodes") || !document["nodes"].is_array()) parse_fail("", "missing nodes array");

    std::vector<std::string> order;
    for (const auto& j : document["nodes"]) {
        ScaleNode n = parse_node(j);
        if (tree.nodes_.count(n.id) != 0) {
            throw ScaleError(ScaleErrorKind::DuplicateId, n.id, "duplicate node id");
        }
        order.push_back(n.id);
        tree.nodes_.emplace(n.id, std::move(n));
    }
    if (tree.nodes_.count(tree.root_) == 0) {
        throw ScaleError(ScaleErrorKind::Structure, tree.root_, "root id does not name a node");
    }
    for (const auto& id : order) {
        for (const auto& child : tree.nodes_.at(id).children) {
            if (tree.nodes_.count(child) == 0) {
                throw ScaleError(ScaleErrorKind::Structure, id, "unknown child '" + child + "'");
            }
        }
    }

    // Cycle detection from the root (white/grey/black colouring, iterative).
    enum class Colour { White, Grey, Black };
    std::map<std::string, Colour, std::less<>> colour;
    for (const auto& id : order) colour[id] = Colour::White;
    struct Frame {
        std::string id;
        std::size_t next_child = 0;
    };
    std::vector<Frame> stack{{tree.root_}};
    colour[tree.root_] = Colour::Grey;
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& children = tree.nodes_.at(top.id).children;
        if (top.next_child == children.size()) {
            colour[top.id] = Colour::Black;
            stack.pop_back();
            continue;
        }
        const std::string child = children[top.next_child++];
        if (colour[child] == Colour::Grey) {
            throw ScaleError(ScaleErrorKind::Cycle, child, "cycle detected");
        }
        if (colour[child] == Colour::White) {
            colour[child] = Colour::Grey;
            stack.push_back({child});
        }
    }

    for (const auto& id : order) {
        for (const auto& child : tree.nodes_.at(id).children) {
            if (child == tree.root_) {
                throw ScaleError(ScaleErrorKind::Cycle, child, "root listed as a child");
            }
            if (!tree.parents_.emplace(child, id).second) {
                throw ScaleError(ScaleErrorKind::Structure, child, "node has more than one parent");
            }
        }
    }
    for (const auto& id : order) {
        if (colour[id] != Colour::White) continue;
        // Unreachable: either an orphan or part of a detached cycle.
        std::set<std::string> seen{id};
        for (auto it = tree.parents_.find(id); it != tree.parents_.end();
             it = tree.parents_.find(it->second)) {
            if (!seen.insert(it->second).second) {
                throw ScaleError(ScaleErrorKind::Cycle, it->second, "cycle detected");
            }
        }
        throw ScaleError(ScaleErrorKind::Structure, id, "node is not reachable from the root");
    }

    // Value checks, children before parents (reverse depth-first order).
    std::vector<std::string> preorder;
    {
        std::vector<std::string> s{tree.root_};
        while (!s.empty()) {
            auto id = s.back();
            s.pop_back();
            preorder.push_back(id);
            const auto& ch = tree.nodes_.at(id).children;
            for (auto it = ch.rbegin(); it != ch.rend(); ++it) s.push_back(*it);
        }
    }
    const bool degenerate = tree.nodes_.size() == 1;
    for (auto it = preorder.rbegin(); it != preorder.rend(); ++it) {
        ScaleNode& n = tree.nodes_.at(*it);
        if (tree.kind_ == ScaleKind::ScoreBased) {
            if (n.choice || n.poles) {
                parse_fail(n.id, "choice fields are not allowed in a score-based scale");
            }
            if (n.is_leaf()) {
                if (!n.score) {
                    if (degenerate) continue;
                    throw ScaleError(ScaleErrorKind::Parse, n.id, "leaf has no score");
                }
                if (!n.range) throw ScaleError(ScaleErrorKind::Structure, n.id, "scored leaf has no range");
            } else {
                int sum = 0;
                for (const auto& c : n.children) sum += tree.nodes_.at(c).score.value_or(0);
                if (n.score && *n.score != sum) {
                    throw ScaleError(ScaleErrorKind::SumMismatch, n.id,
                                     "score " + std::to_string(*n.score) +
                                         " differs from the sum of its children " + std::to_string(sum));
                }
                n.score = sum;
            }
            if (n.range && n.score && !n.range->contains(*n.score)) {
                throw ScaleError(ScaleErrorKind::ScoreOutOfRange, n.id,
                                 "score " + std::to_string(*n.score) + " outside [" +
                                     std::to_string(n.range->lo) + ", " + std::to_string(n.range->hi) + "]");
            }
        } else {
            if (n.score) parse_fail(n.id, "scores are not allowed in a choice-based scale");
            if (n.is_leaf() && !n.choice && !degenerate) {
                throw ScaleError(ScaleErrorKind::Structure, n.id, "leaf has no choice");
            }
            if (!n.is_leaf() && n.choice) {
                throw ScaleError(ScaleErrorKind::Structure, n.id, "only leaves carry a choice");
            }
        }
    }

    if (tree.instrument_ == "big_five") {
        check_big_five_shape(tree, tree.warnings_);
    } else if (tree.instrument_ == "sternberg") {
        check_sternberg_shape(tree);
    } else if (tree.instrument_ == "solomon") {
        check_solomon_shape(tree);
    } else if (!tree.instrument_.empty() && tree.instrument_ != "generic") {
        parse_fail("", "unknown instrument '" + tree.instrument_ + "'");
    }
    return tree;
}

ScaleTree load_scale_text(std::string_view document) {
    json j;
    try {
        j = json::parse(document);
    } catch (const json::parse_error& e) {
        parse_fail("", std::string("malformed JSON: ") + e.what());
    }
    return load_scale(j);
}

namespace {
json read_json_file(const std::filesystem::path& path, const std::string& field) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), field, "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), field, std::string("malformed JSON: ") + e.what());
    }
}
}  // namespace

ScaleTree load_scale_file(const std::filesystem::path& path) {
    return load_scale(read_json_file(path, ""));
}

json apply_overrides(json document, const json& scores, const json& choices) {
    if (!document.contains("nodes") || !document["nodes"].is_array()) parse_fail("", "missing nodes array");
    auto& nodes = document["nodes"];
    auto find = [&](const std::string& id) -> json& {
        for (auto& n : nodes) {
            if (n.is_object() && n.value("id", std::string{}) == id) return n;
        }
        throw ScaleError(ScaleErrorKind::Structure, id, "override names an unknown node");
    };
    if (scores.is_object()) {
        for (const auto& [id, value] : scores.items()) {
            if (!value.is_number_integer()) parse_fail(id, "override score must be an integer");
            find(id)["score"] = value;
        }
        for (auto& n : nodes) {
            if (n.is_object() && n.contains("children") && !n["children"].empty()) n.erase("score");
        }
    }
    if (choices.is_object()) {
        for (const auto& [id, value] : choices.items()) find(id)["choice"] = value;
    }
    return document;
}

PersonaProfile load_persona(const json& document, const std::filesystem::path& base_dir,
                            const std::string& source_name) {
    if (!document.is_object()) throw ConfigError(source_name, "", "persona must be an object");
    PersonaProfile p;
    auto text_field = [&](const char* key, bool required) {
        if (!document.contains(key)) {
            if (required) throw ConfigError(source_name, key, "missing");
            return std::string{};
        }
        if (!document[key].is_string()) throw ConfigError(source_name, key, "must be a string");
        return document[key].get<std::string>();
    };
    p.agent_name = text_field("name", true);
    if (p.agent_name.empty()) throw ConfigError(source_name, "name", "must not be empty");
    p.career = text_field("career", false);
    p.basic_info = text_field("basic_info", false);
    if (!document.contains("scales")) return p;
    if (!document["scales"].is_array()) throw ConfigError(source_name, "scales", "must be an array");
    std::size_t i = 0;
    for (const auto& entry : document["scales"]) {
        const std::string field = "scales[" + std::to_string(i++) + "]";
        try {
            if (entry.is_object() && entry.contains("template")) {
                const auto path = base_dir / entry["template"].get<std::string>();
                json doc = read_json_file(path, field + ".template");
                doc = apply_overrides(std::move(doc), entry.value("scores", json::object()),
                                      entry.value("choices", json::object()));
                p.scales.push_back(load_scale(doc));
            } else {
                p.scales.push_back(load_scale(entry));
            }
        } catch (const ScaleError& e) {
            throw ConfigError(source_name, field, e.what());
        } catch (const json::exception& e) {
            throw ConfigError(source_name, field, e.what());
        }
    }
    return p;
}

PersonaProfile load_persona_file(const std::filesystem::path& path) {
    return load_persona(read_json_file(path, ""), path.parent_path(), path.string());
}

// --- assignment and rendering --------------------------------------------------

std::string render_trait_line(const TraitDelivery& d) {
    std::string line(static_cast<std::size_t>(d.depth) * 2, ' ');
    line += "- ";
    line += d.description;
    if (!d.value.empty()) line += " [" + d.value + "]";
    return line;
}

std::string render_persona_header(const PersonaProfile& profile) {
    std::string out = "Name: " + profile.agent_name + "\n";
    out += "Career: " + profile.career + "\n";
    out += "Basic information: " + profile.basic_info + "\n";
    return out;
}

std::string render_scale_heading(const ScaleTree& tree) {
    return "[" + (tree.name().empty() ? tree.root_id() : tree.name()) + "]";
}

std::string render_persona_text(std::string_view header, const std::vector<TraitDelivery>& deliveries) {
    std::string out(header);
    const std::string* current = nullptr;
    for (const auto& d : deliveries) {
        if (current == nullptr || *current != d.scale) {
            out += "\n[" + d.scale + "]\n";
            current = &d.scale;
        }
        out += render_trait_line(d);
        out += '\n';
    }
    return out;
}

AssignmentRecord assign_dfs(const ScaleTree& tree, PersonaSubject& subject) {
    AssignmentRecord record;
    const std::string scale_name = tree.name().empty() ? tree.root_id() : tree.name();
    std::vector<std::pair<std::string, int>> stack{{tree.root_id(), 0}};
    while (!stack.empty()) {
        auto [id, depth] = stack.back();
        stack.pop_back();
        const ScaleNode& n = tree.node(id);
        TraitDelivery d{scale_name, n.id, n.description, tree.value_text(id), depth};
        subject.receive_trait(d);
        record.deliveries.push_back(std::move(d));
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) {
            stack.emplace_back(*it, depth + 1);
        }
    }
    return record;
}

namespace {
class Collector final : public PersonaSubject {
public:
    void receive_trait(const TraitDelivery& d) override { deliveries.push_back(d); }
    std::string answer_probe(const std::string&) override { return {}; }
    void restore_persona(const std::string&) override {}
    std::vector<TraitDelivery> deliveries;
};
}  // namespace

std::string render_persona_prompt(const PersonaProfile& profile) {
    Collector c;
    for (const auto& tree : profile.scales) assign_dfs(tree, c);
    return render_persona_text(render_persona_header(profile), c.deliveries);
}

// --- consistency testing -------------------------------------------------------

std::string probe_question(const ScaleTree& tree, std::string_view node_id) {
    const ScaleNode& n = tree.node(node_id);
    const std::string inventory = tree.name().empty() ? tree.root_id() : tree.name();
    if (n.score) {
        return "Persona check (" + inventory + "): state your score for the trait \"" + n.description +
               "\". Reply with a single integer.";
    }
    if (n.choice) {
        return "Persona check (" + inventory + "): state your choice for the item \"" + n.description +
               "\". Reply with A or B.";
    }
    if (n.poles) {
        return "Persona check (" + inventory + "): state your type for the dimension \"" + n.description +
               "\". Reply with " + n.poles->first + " or " + n.poles->second + ".";
    }
    return "Persona check (" + inventory + "): describe \"" + n.description + "\".";
}

bool reply_matches(const ScaleTree& tree, std::string_view node_id, std::string_view reply) {
    const ScaleNode& n = tree.node(node_id);
    if (n.score) {
        auto value = text::first_integer(reply);
        return value && *value == *n.score;
    }
    if (n.choice) {
        for (const auto& tok : text::word_tokens(reply)) {
            if (tok == "a") return *n.choice == Choice::A;
            if (tok == "b") return *n.choice == Choice::B;
        }
        return false;
    }
    if (n.poles) {
        const auto lowered = text::to_lower(reply);
        const auto first = lowered.find(text::to_lower(n.poles->first));
        const auto second = lowered.find(text::to_lower(n.poles->second));
        if (first == std::string::npos && second == std::string::npos) return false;
        const std::string said = first < second ? n.poles->first : n.poles->second;
        return said == *tree.dimension_label(node_id);
    }
    return true;
}

ConsistencyReport consistency_check(PersonaSubject& subject, const ScaleTree& tree, std::size_t m,
                                    std::mt19937_64& rng) {
    const auto& coarse = tree.coarse_ids();
    if (m == 0) throw PreconditionError("m must be at least 1");
    if (m > coarse.size()) {
        throw PreconditionError("m = " + std::to_string(m) + " exceeds the " +
                                std::to_string(coarse.size()) + " coarse nodes of '" + tree.name() + "'");
    }
    ConsistencyReport report;
    report.scale = tree.name().empty() ? tree.root_id() : tree.name();

    // Partial Fisher-Yates: the first m entries are a uniform sample.
    std::vector<std::string> pool(coarse.begin(), coarse.end());
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    report.tested_coarse.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));

    auto ask = [&](const std::string& id) {
        const std::string reply = subject.answer_probe(probe_question(tree, id));
        ++report.queries_issued;
        if (!reply_matches(tree, id, reply)) report.mismatched.push_back(id);
    };

    for (const auto& id : report.tested_coarse) ask(id);
    if (report.mismatched.empty()) {
        for (const auto& id : report.tested_coarse) {
            const auto leaves = tree.leaves_under(id);
            std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
            report.tested_fine.push_back(leaves[pick(rng)]);
        }
        for (const auto& id : report.tested_fine) ask(id);
        if (!report.mismatched.empty()) report.outcome = CheckOutcome::FailedFine;
    } else {
        report.outcome = CheckOutcome::FailedCoarse;
    }

    if (report.outcome != CheckOutcome::Pass) {
        std::string msg = "Persona restoration (" + report.scale + "). Your true values are:\n";
        auto add = [&](const std::string& id) {
            const ScaleNode& n = tree.node(id);
            msg += render_trait_line({report.scale, n.id, n.description, tree.value_text(id), 0});
            msg += '\n';
        };
        for (const auto& id : report.tested_coarse) add(id);
        for (const auto& id : report.tested_fine) add(id);
        report.restoration_message = msg;
        subject.restore_persona(msg);
        report.restored = true;
    }
    return report;
}

json to_json(const ConsistencyReport& r) {
    return json{{"scale", r.scale},
                {"tested_coarse", r.tested_coarse},
                {"tested_fine", r.tested_fine},
                {"outcome", std::string(to_string(r.outcome))},
                {"restored", r.restored},
                {"queries_issued", r.queries_issued},
                {"mismatched", r.mismatched}};
}

}  // namespace cgmi::scale
