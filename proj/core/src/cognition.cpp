// SPDX-License-Identifier: Apache-2.0
#include "cgmi/cognition.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "cgmi/text.hpp"

namespace cgmi::cognition {

using nlohmann::json;

std::string_view to_string(MemoryKind kind) {
    return kind == MemoryKind::Declarative ? "declarative" : "procedural";
}

// --- working memory ------------------------------------------------------------

WorkingMemory::WorkingMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw PreconditionError("working memory capacity must be positive");
}

void WorkingMemory::push(int turn, std::string text) {
    entries_.push_back({turn, std::move(text)});
    while (entries_.size() > capacity_) entries_.pop_front();
}

std::optional<int> WorkingMemory::last_turn() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.back().turn;
}

std::string WorkingMemory::render() const {
    if (entries_.empty()) return "(empty)";
    std::string out;
    for (const auto& e : entries_) {
        if (!out.empty()) out += '\n';
        out += "[t=" + std::to_string(e.turn) + "] " + e.text;
    }
    return out;
}

// --- skills --------------------------------------------------------------------

std::vector<SkillEntry> load_skill_library(const json& document, const std::string& source) {
    const json* list = &document;
    if (document.is_object()) {
        if (!document.contains("skills")) throw ConfigError(source, "skills", "missing");
        list = &document.at("skills");
    }
    if (!list->is_array()) throw ConfigError(source, "skills", "must be an array");
    std::vector<SkillEntry> out;
    std::set<std::string> ids;
    std::size_t i = 0;
    for (const auto& j : *list) {
        const std::string field = "skills[" + std::to_string(i++) + "]";
        try {
            SkillEntry e;
            e.id = j.at("id").get<std::string>();
            e.content = j.at("content").get<std::string>();
            for (const auto& t : j.at("tags")) e.tags.push_back(text::to_lower(t.get<std::string>()));
            if (e.id.empty()) throw ConfigError(source, field + ".id", "must not be empty");
            if (e.tags.empty()) throw ConfigError(source, field + ".tags", "needs at least one tag");
            if (!ids.insert(e.id).second) throw ConfigError(source, field + ".id", "duplicate id '" + e.id + "'");
            out.push_back(std::move(e));
        } catch (const json::exception& e) {
            throw ConfigError(source, field, e.what());
        }
    }
    return out;
}

std::vector<SkillEntry> load_skill_library_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "skill_library", "cannot open file");
    try {
        return load_skill_library(json::parse(in), path.string());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "skill_library", std::string("malformed JSON: ") + e.what());
    }
}

std::vector<SkillEntry> retrieve_skills(std::span<const SkillEntry> library, std::string_view query,
                                        std::optional<std::size_t> k) {
    const auto tokens = text::word_tokens(query);
    const std::set<std::string> words(tokens.begin(), tokens.end());
    std::vector<std::pair<std::size_t, const SkillEntry*>> scored;
    scored.reserve(library.size());
    for (const auto& entry : library) {
        std::size_t overlap = 0;
        for (const auto& tag : entry.tags) overlap += words.count(tag);
        scored.emplace_back(overlap, &entry);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->id < b.second->id;
    });
    const std::size_t n = std::min(scored.size(), k.value_or(scored.size()));
    std::vector<SkillEntry> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(*scored[i].second);
    return out;
}

// --- export / import -------------------------------------------------------------

namespace {
json entry_to_json(const MemoryEntry& e) {
    return {{"turn", e.turn},
            {"kind", std::string(to_string(e.kind))},
            {"content", e.content},
            {"source_span", {e.source_span.first, e.source_span.second}}};
}

MemoryEntry entry_from_json(const json& j, MemoryKind expected) {
    MemoryEntry e;
    e.turn = j.at("turn").get<int>();
    e.kind = j.at("kind").get<std::string>() == "procedural" ? MemoryKind::Procedural : MemoryKind::Declarative;
    if (e.kind != expected) throw PreconditionError("memory entry filed under the wrong kind");
    e.content = j.at("content").get<std::string>();
    e.source_span = {j.at("source_span").at(0).get<int>(), j.at("source_span").at(1).get<int>()};
    return e;
}
}  // namespace

json export_memory(const CognitiveState& state) {
    json out;
    out["working"] = json::array();
    for (const auto& o : state.working.entries()) out["working"].push_back({{"turn", o.turn}, {"text", o.text}});
    out["declarative"] = json::array();
    for (const auto& e : state.declarative) out["declarative"].push_back(entry_to_json(e));
    out["procedural"] = json::array();
    for (const auto& e : state.procedural) out["procedural"].push_back(entry_to_json(e));
    auto stamped = [](const std::optional<Stamped>& s) {
        return s ? json{{"turn", s->turn}, {"text", s->text}} : json(nullptr);
    };
    out["last_reflection"] = stamped(state.last_reflection);
    out["last_plan"] = stamped(state.last_plan);
    return out;
}

void import_memory(CognitiveState& state, const json& document) {
    CognitiveState fresh(state.working.capacity());
    fresh.skills = state.skills;
    for (const auto& o : document.at("working")) fresh.working.push(o.at("turn").get<int>(), o.at("text").get<std::string>());
    for (const auto& e : document.at("declarative")) fresh.declarative.push_back(entry_from_json(e, MemoryKind::Declarative));
    for (const auto& e : document.at("procedural")) fresh.procedural.push_back(entry_from_json(e, MemoryKind::Procedural));
    auto stamped = [](const json& j) -> std::optional<Stamped> {
        if (j.is_null()) return std::nullopt;
        return Stamped{j.at("turn").get<int>(), j.at("text").get<std::string>()};
    };
    fresh.last_reflection = stamped(document.at("last_reflection"));
    fresh.last_plan = stamped(document.at("last_plan"));
    state = std::move(fresh);
}

// --- templates --------------------------------------------------------------------

const std::vector<std::string>& PromptTemplates::names() {
    static const std::vector<std::string> kNames{"distill_cot", "distill_coa", "reflect", "plan", "act"};
    return kNames;
}

const std::vector<std::string>& PromptTemplates::placeholders() {
    static const std::vector<std::string> kSlots{"persona",    "declarative", "procedural",    "skills",
                                                 "reflection", "plan",        "working_memory"};
    return kSlots;
}

PromptTemplates PromptTemplates::defaults() {
    PromptTemplates t;
    t.templates_ = {
        {"distill_cot", "Summarize the class content sequentially.\n\n## Working memory\n{working_memory}"},
        {"distill_coa", "Detail the pedagogical steps.\n\n## Working memory\n{working_memory}"},
        {"reflect",
         "Reflect on what the classroom events below mean for you, drawing on the listed skills where "
         "they fit.\n\n## Declarative memory\n{declarative}\n\n## Skills\n{skills}"},
        {"plan",
         "Decide what to do next, step by step, drawing on the listed skills where they fit.\n\n"
         "## Procedural memory\n{procedural}\n\n## Skills\n{skills}"},
        {"act",
         "## Reflection\n{reflection}\n\n## Plan\n{plan}\n\n## Working memory\n{working_memory}\n\n"
         "Say your next line in the classroom, in character. Reply with the utterance only."},
    };
    return t;
}

namespace {
// Walks a template; calls on_text for literal runs and on_slot for {name}.
template <typename OnText, typename OnSlot>
void scan_template(std::string_view tpl, OnText on_text, OnSlot on_slot) {
    std::size_t i = 0;
    while (i < tpl.size()) {
        if (tpl.compare(i, 2, "{{") == 0) {
            on_text("{");
            i += 2;
        } else if (tpl.compare(i, 2, "}}") == 0) {
            on_text("}");
            i += 2;
        } else if (tpl[i] == '{') {
            const auto close = tpl.find('}', i);
            if (close == std::string_view::npos) throw PreconditionError("unterminated placeholder");
            on_slot(tpl.substr(i + 1, close - i - 1));
            i = close + 1;
        } else {
            const auto next = tpl.find_first_of("{}", i + 1);
            const auto end = next == std::string_view::npos ? tpl.size() : next;
            on_text(tpl.substr(i, end - i));
            i = end;
        }
    }
}
}  // namespace

PromptTemplates PromptTemplates::from_json(const json& document, const std::string& source) {
    if (!document.is_object()) throw ConfigError(source, "prompt_templates", "must be an object");
    PromptTemplates t = defaults();
    const auto& known = placeholders();
    for (const auto& [name, value] : document.items()) {
        if (std::find(names().begin(), names().end(), name) == names().end()) {
            throw ConfigError(source, name, "unknown template name");
        }
        if (!value.is_string()) throw ConfigError(source, name, "must be a string");
        const auto tpl = value.get<std::string>();
        try {
            scan_template(tpl, [](std::string_view) {}, [&](std::string_view slot) {
                if (std::find(known.begin(), known.end(), slot) == known.end()) {
                    throw ConfigError(source, name, "unknown placeholder {" + std::string(slot) + "}");
                }
            });
        } catch (const PreconditionError& e) {
            throw ConfigError(source, name, e.what());
        }
        t.templates_[name] = tpl;
    }
    return t;
}

PromptTemplates PromptTemplates::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "prompt_templates", "cannot open file");
    try {
        return from_json(json::parse(in), path.string());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "prompt_templates", std::string("malformed JSON: ") + e.what());
    }
}

const std::string& PromptTemplates::get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw PreconditionError("no template named '" + std::string(name) + "'");
    return it->second;
}

std::string PromptTemplates::render(std::string_view name,
                                    const std::map<std::string, std::string, std::less<>>& values) const {
    std::string out;
    scan_template(get(name), [&](std::string_view s) { out += s; }, [&](std::string_view slot) {
        auto it = values.find(slot);
        if (it != values.end()) out += it->second;
    });
    return out;
}

// --- operations -------------------------------------------------------------------

namespace {

std::string call(const CycleContext& ctx, std::string user, std::string_view tag) {
    auto req = lm::make_request(ctx.persona, std::move(user), ctx.temperature, ctx.max_tokens, tag);
    return ctx.backend.complete(req).text;
}

std::string render_skills(const std::vector<SkillEntry>& skills) {
    if (skills.empty()) return "(none)";
    std::string out;
    for (const auto& s : skills) {
        if (!out.empty()) out += '\n';
        out += "- [" + s.id + "] " + s.content;
    }
    return out;
}

const MemoryEntry* latest_at_or_before(const std::vector<MemoryEntry>& list, int turn) {
    for (auto it = list.rbegin(); it != list.rend(); ++it) {
        if (it->turn <= turn) return &*it;
    }
    return nullptr;
}

}  // namespace

void perceive(CognitiveState& state, int turn, std::string observation) {
    if (text::trim(observation).empty()) throw PreconditionError("empty observation");
    if (auto last = state.working.last_turn(); last && turn < *last) {
        throw PreconditionError("observation at turn " + std::to_string(turn) + " after turn " +
                                std::to_string(*last));
    }
    state.working.push(turn, std::move(observation));
}

MemoryEntry distill(CognitiveState& state, int turn, MemoryKind kind, const CycleContext& ctx) {
    if (state.working.empty()) throw PreconditionError("cannot distill an empty working memory");
    const bool declarative = kind == MemoryKind::Declarative;
    const auto prompt = ctx.templates.render(declarative ? "distill_cot" : "distill_coa",
                                             {{"working_memory", state.working.render()},
                                              {"persona", ctx.persona}});
    std::string summary;
    try {
        summary = call(ctx, prompt, declarative ? lm::tags::kDistillCot : lm::tags::kDistillCoa);
    } catch (const lm::BackendError& e) {
        throw lm::BackendError(e.kind(), std::string("distill (") + std::string(to_string(kind)) + "): " + e.what(),
                               e.status());
    }
    if (text::trim(summary).empty()) summary = "(no summary)";
    MemoryEntry entry{turn, kind, std::move(summary),
                      {state.working.entries().front().turn, state.working.entries().back().turn}};
    entry.source_span.first = std::min(entry.source_span.first, turn);
    entry.source_span.second = std::min(entry.source_span.second, turn);
    (declarative ? state.declarative : state.procedural).push_back(entry);
    return entry;
}

std::string reflect(CognitiveState& state, int turn, const CycleContext& ctx) {
    const MemoryEntry* latest = latest_at_or_before(state.declarative, turn);
    if (latest == nullptr) throw PreconditionError("reflect needs declarative memory");
    const auto skills = retrieve_skills(state.skills, latest->content, ctx.skill_k);
    const auto prompt = ctx.templates.render(
        "reflect", {{"declarative", latest->content}, {"skills", render_skills(skills)}, {"persona", ctx.persona}});
    std::string out = call(ctx, prompt, lm::tags::kReflect);
    state.last_reflection = Stamped{turn, out};
    return out;
}

std::string plan(CognitiveState& state, int turn, const CycleContext& ctx) {
    const MemoryEntry* latest = latest_at_or_before(state.procedural, turn);
    if (latest == nullptr) throw PreconditionError("plan needs procedural memory");
    const auto skills = retrieve_skills(state.skills, latest->content, ctx.skill_k);
    const auto prompt = ctx.templates.render(
        "plan", {{"procedural", latest->content}, {"skills", render_skills(skills)}, {"persona", ctx.persona}});
    std::string out = call(ctx, prompt, lm::tags::kPlan);
    state.last_plan = Stamped{turn, out};
    return out;
}

std::string act(const CognitiveState& state, int turn, const CycleContext& ctx, std::string_view feedback) {
    if (!state.last_reflection || state.last_reflection->turn != turn) {
        throw PreconditionError("act at turn " + std::to_string(turn) + " has no reflection for that turn");
    }
    if (!state.last_plan || state.last_plan->turn != turn) {
        throw PreconditionError("act at turn " + std::to_string(turn) + " has no plan for that turn");
    }
    auto prompt = ctx.templates.render("act", {{"reflection", state.last_reflection->text},
                                               {"plan", state.last_plan->text},
                                               {"working_memory", state.working.render()},
                                               {"persona", ctx.persona}});
    if (!feedback.empty()) {
        prompt += "\n\n## Consistency feedback\n";
        prompt += feedback;
    }
    return call(ctx, std::move(prompt), lm::tags::kAct);
}

void seed_cold_start(CognitiveState& state, int turn) {
    state.last_reflection = Stamped{turn, ""};
    state.last_plan = Stamped{turn, ""};
}

std::string run_cycle(CognitiveState& state, int turn, const CycleContext& ctx, bool distill_now) {
    if (state.working.empty() && state.declarative.empty()) {
        seed_cold_start(state, turn);
        return act(state, turn, ctx);
    }
    const bool needs_memory = state.declarative.empty() || state.procedural.empty();
    if ((distill_now || needs_memory) && !state.working.empty()) {
        distill(state, turn, MemoryKind::Declarative, ctx);
        distill(state, turn, MemoryKind::Procedural, ctx);
    }
    reflect(state, turn, ctx);
    plan(state, turn, ctx);
    return act(state, turn, ctx);
}

}  // namespace cgmi::cognition
