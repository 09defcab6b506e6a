// SPDX-License-Identifier: Apache-2.0
//
// Cognitive architecture of a role agent: working memory feeding declarative
// and procedural memory through two distillation prompts, skill-conditioned
// reflection and planning, and action synthesis from reflection + plan +
// working memory. Every "+" in the model is an ordered concatenation of
// labelled prompt sections; nothing stored is paraphrased by the engine.
#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/lm_backend.hpp"

namespace cgmi::cognition {

enum class MemoryKind { Declarative, Procedural };
std::string_view to_string(MemoryKind kind);

struct MemoryEntry {
    int turn = 0;
    MemoryKind kind = MemoryKind::Declarative;
    std::string content;
    std::pair<int, int> source_span{0, 0};
};

struct Observation {
    int turn = 0;
    std::string text;
};

/// Bounded FIFO of perceived text; the oldest entry is evicted first.
class WorkingMemory {
public:
    explicit WorkingMemory(std::size_t capacity = 20);

    void push(int turn, std::string text);
    [[nodiscard]] const std::deque<Observation>& entries() const noexcept { return entries_; }
    [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
    [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
    [[nodiscard]] std::optional<int> last_turn() const;
    /// One "[t=N] text" line per entry; "(empty)" when there is nothing.
    [[nodiscard]] std::string render() const;

private:
    std::size_t capacity_;
    std::deque<Observation> entries_;
};

struct SkillEntry {
    std::string id;
    std::vector<std::string> tags;
    std::string content;
};

std::vector<SkillEntry> load_skill_library(const nlohmann::json& document, const std::string& source = {});
std::vector<SkillEntry> load_skill_library_file(const std::filesystem::path& path);

/// Top-k by the number of entry tags present among the query's word tokens,
/// ties broken by id. `k == nullopt` returns the whole library, ranked.
std::vector<SkillEntry> retrieve_skills(std::span<const SkillEntry> library, std::string_view query,
                                        std::optional<std::size_t> k);

struct Stamped {
    int turn = 0;
    std::string text;
};

struct CognitiveState {
    explicit CognitiveState(std::size_t working_capacity = 20) : working(working_capacity) {}

    WorkingMemory working;
    std::vector<MemoryEntry> declarative;
    std::vector<MemoryEntry> procedural;
    std::vector<SkillEntry> skills;
    std::optional<Stamped> last_reflection;
    std::optional<Stamped> last_plan;
};

/// Memory export for chaining lessons. Skills are configuration and are not exported.
nlohmann::json export_memory(const CognitiveState& state);
void import_memory(CognitiveState& state, const nlohmann::json& document);

/// Named prompt templates with {placeholder} slots. "{{" and "}}" are literal braces.
class PromptTemplates {
public:
    static const std::vector<std::string>& names();
    static const std::vector<std::string>& placeholders();
    static PromptTemplates defaults();
    /// Overrides any subset of the defaults; unknown names or placeholders are errors.
    static PromptTemplates from_json(const nlohmann::json& document, const std::string& source = {});
    static PromptTemplates from_file(const std::filesystem::path& path);

    [[nodiscard]] const std::string& get(std::string_view name) const;
    /// Single-pass substitution: values are inserted verbatim and never re-expanded.
    [[nodiscard]] std::string render(std::string_view name,
                                     const std::map<std::string, std::string, std::less<>>& values) const;

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

/// Everything one cognitive call needs besides the state it mutates.
struct CycleContext {
    lm::Backend& backend;
    const PromptTemplates& templates;
    std::string persona;  // sent as the system message
    double temperature = 0.7;
    int max_tokens = 512;
    std::optional<std::size_t> skill_k = 3;
};

void perceive(CognitiveState& state, int turn, std::string observation);

/// One backend call over the whole working memory; appends the result.
MemoryEntry distill(CognitiveState& state, int turn, MemoryKind kind, const CycleContext& ctx);

std::string reflect(CognitiveState& state, int turn, const CycleContext& ctx);
std::string plan(CognitiveState& state, int turn, const CycleContext& ctx);

/// Synthesises the utterance for turn + 1 from the reflection and plan stamped
/// `turn` and the current working memory. A non-empty `feedback` note is
/// appended as an extra section (used for one persona-consistency retry).
std::string act(const CognitiveState& state, int turn, const CycleContext& ctx,
                std::string_view feedback = {});

/// Seeds empty reflection and plan so the very first action can run.
void seed_cold_start(CognitiveState& state, int turn);

/// perceive has already happened; runs distill (both kinds, when `distill_now`
/// or when nothing has been distilled yet), reflect, plan and act.
std::string run_cycle(CognitiveState& state, int turn, const CycleContext& ctx, bool distill_now = true);

}  // namespace cgmi::cognition
