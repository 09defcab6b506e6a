// SPDX-License-Identifier: Apache-2.0
//
// Tree-structured persona inventories (Big Five, Sternberg teaching styles,
// Solomon learning styles) and the assign / test / restore protocol that keeps
// a role agent's persona stable over a long interaction.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/error.hpp"

namespace cgmi::scale {

enum class ScaleKind { ScoreBased, ChoiceBased };
enum class Choice { A, B };

std::string_view to_string(ScaleKind kind);
std::string_view to_string(Choice choice);

struct ScoreRange {
    int lo = 0;
    int hi = 0;
    [[nodiscard]] bool contains(int v) const { return v >= lo && v <= hi; }
};

struct ScaleNode {
    std::string id;
    std::string description;
    std::optional<int> score;
    std::optional<ScoreRange> range;
    std::optional<Choice> choice;
    /// Choice-based dimension nodes name their two poles; the label is the
    /// first pole when A is chosen by a strict majority of the leaves.
    std::optional<std::pair<std::string, std::string>> poles;
    std::vector<std::string> children;

    [[nodiscard]] bool is_leaf() const { return children.empty(); }
};

enum class ScaleErrorKind { Parse, DuplicateId, Cycle, ScoreOutOfRange, SumMismatch, Structure };

class ScaleError : public Error {
public:
    ScaleError(ScaleErrorKind kind, std::string node_id, const std::string& message)
        : Error(ErrorCategory::Validation,
                node_id.empty() ? message : "node '" + node_id + "': " + message),
          kind_(kind),
          node_id_(std::move(node_id)) {}

    [[nodiscard]] ScaleErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& node_id() const noexcept { return node_id_; }

private:
    ScaleErrorKind kind_;
    std::string node_id_;
};

/// An immutable, validated inventory tree. Only `load_scale` constructs one.
class ScaleTree {
public:
    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] ScaleKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& instrument() const noexcept { return instrument_; }
    [[nodiscard]] const std::string& root_id() const noexcept { return root_; }
    [[nodiscard]] const std::map<std::string, ScaleNode, std::less<>>& nodes() const noexcept {
        return nodes_;
    }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
    [[nodiscard]] const ScaleNode& node(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const;

    /// Children of the root, in document order.
    [[nodiscard]] const std::vector<std::string>& coarse_ids() const;
    /// Leaves below `id` in document order (the node itself when it is a leaf).
    [[nodiscard]] std::vector<std::string> leaves_under(std::string_view id) const;
    [[nodiscard]] std::optional<std::string> parent_of(std::string_view id) const;

    /// Pole label of a choice-based dimension node; empty for other nodes.
    [[nodiscard]] std::optional<std::string> dimension_label(std::string_view id) const;

    /// The ground-truth value rendered for prompts: "score: 18", "choice: A" or
    /// "type: Active". Empty for nodes that carry no value (degenerate roots).
    [[nodiscard]] std::string value_text(std::string_view id) const;

    /// Non-fatal findings, e.g. a 26-node Big Five document.
    [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }

private:
    friend ScaleTree load_scale(const nlohmann::json& document);

    std::string name_;
    std::string instrument_;
    ScaleKind kind_ = ScaleKind::ScoreBased;
    std::string root_;
    std::map<std::string, ScaleNode, std::less<>> nodes_;
    std::map<std::string, std::string, std::less<>> parents_;
    std::vector<std::string> warnings_;
};

/// Parses and validates a scale definition document. Internal scores of
/// score-based scales are derived from their children; authored internal
/// scores must agree with the derived sum.
ScaleTree load_scale(const nlohmann::json& document);
ScaleTree load_scale_text(std::string_view document);
ScaleTree load_scale_file(const std::filesystem::path& path);

/// Applies per-node score/choice overrides to a template document. Authored
/// internal scores are dropped so they are re-derived from the new leaves.
nlohmann::json apply_overrides(nlohmann::json document, const nlohmann::json& scores,
                               const nlohmann::json& choices);

struct PersonaProfile {
    std::string agent_name;
    std::string career;
    std::string basic_info;
    std::vector<ScaleTree> scales;
};

/// Loads a persona document. Scale entries are either inline scale documents
/// or {"template": path, "scores": {...}, "choices": {...}} relative to the
/// persona file's directory.
PersonaProfile load_persona_file(const std::filesystem::path& path);
PersonaProfile load_persona(const nlohmann::json& document, const std::filesystem::path& base_dir,
                            const std::string& source_name = {});

/// One (D_i, S_i) pair as handed to an agent.
struct TraitDelivery {
    std::string scale;
    std::string node_id;
    std::string description;
    std::string value;  // value_text() of the node
    int depth = 0;
};

/// The rendered persona line for one delivered node.
std::string render_trait_line(const TraitDelivery& delivery);

/// Header followed by the delivered lines, with a heading whenever the scale changes.
std::string render_persona_text(std::string_view header, const std::vector<TraitDelivery>& deliveries);

/// Anything that can be given a persona, probed about it and corrected.
class PersonaSubject {
public:
    virtual ~PersonaSubject() = default;
    virtual void receive_trait(const TraitDelivery& delivery) = 0;
    /// Asks the subject a persona question and returns its free-text reply.
    virtual std::string answer_probe(const std::string& question) = 0;
    virtual void restore_persona(const std::string& message) = 0;
};

struct AssignmentRecord {
    std::vector<TraitDelivery> deliveries;
};

/// Depth-first delivery of every node, parents before children. Children are
/// pushed in reverse so they pop in document order.
AssignmentRecord assign_dfs(const ScaleTree& tree, PersonaSubject& subject);

enum class CheckOutcome { Pass, FailedCoarse, FailedFine };
std::string_view to_string(CheckOutcome outcome);

struct ConsistencyReport {
    std::string scale;
    std::vector<std::string> tested_coarse;
    std::vector<std::string> tested_fine;
    CheckOutcome outcome = CheckOutcome::Pass;
    bool restored = false;
    std::size_t queries_issued = 0;
    std::vector<std::string> mismatched;
    std::string restoration_message;
};

nlohmann::json to_json(const ConsistencyReport& report);

/// The probe question asked for one node.
std::string probe_question(const ScaleTree& tree, std::string_view node_id);

/// True when the reply states the node's ground-truth value. Score nodes take
/// the first integer token; choice leaves the first standalone A/B; dimension
/// nodes whichever pole name is mentioned first.
bool reply_matches(const ScaleTree& tree, std::string_view node_id, std::string_view reply);

/// Two-stage random persona test: m coarse nodes, then one leaf under each.
/// Any mismatch restores the true values of every selected node.
ConsistencyReport consistency_check(PersonaSubject& subject, const ScaleTree& tree, std::size_t m,
                                    std::mt19937_64& rng);

/// Deterministic persona text: header lines followed by one line per node of
/// every scale, in depth-first order.
std::string render_persona_prompt(const PersonaProfile& profile);
std::string render_persona_header(const PersonaProfile& profile);
std::string render_scale_heading(const ScaleTree& tree);

}  // namespace cgmi::scale
