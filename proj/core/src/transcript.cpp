// SPDX-License-Identifier: Apache-2.0
#include "cgmi/transcript.hpp"

#include <array>
#include <istream>
#include <map>
#include <sstream>

#include "cgmi/error.hpp"
#include "cgmi/text.hpp"

namespace cgmi::transcript {

using nlohmann::json;

namespace {
constexpr std::array<std::pair<EventKind, std::string_view>, 11> kKindNames{{
    {EventKind::Utterance, "utterance"},
    {EventKind::QuestionToClass, "question_to_class"},
    {EventKind::QuestionToStudent, "question_to_student"},
    {EventKind::WillingnessScores, "willingness_scores"},
    {EventKind::Selection, "selection"},
    {EventKind::PersonaCheck, "persona_check"},
    {EventKind::Signal, "signal"},
    {EventKind::StageTransition, "stage_transition"},
    {EventKind::LessonStart, "lesson_start"},
    {EventKind::LessonEnd, "lesson_end"},
    {EventKind::UserCommand, "user_command"},
}};
}  // namespace

std::string_view to_string(EventKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::optional<EventKind> event_kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

bool is_speech(EventKind kind) {
    return kind == EventKind::Utterance || kind == EventKind::QuestionToClass ||
           kind == EventKind::QuestionToStudent;
}

std::string TranscriptEvent::text() const {
    if (payload.is_object() && payload.contains("text") && payload["text"].is_string()) {
        return payload["text"].get<std::string>();
    }
    return {};
}

json to_json(const TranscriptEvent& e) {
    return {{"index", e.index},
            {"turn", e.turn},
            {"kind", std::string(to_string(e.kind))},
            {"speaker", e.speaker},
            {"payload", e.payload}};
}

TranscriptEvent event_from_json(const json& j) {
    TranscriptEvent e;
    e.index = j.at("index").get<std::size_t>();
    e.turn = j.at("turn").get<int>();
    const auto kind = j.at("kind").get<std::string>();
    auto parsed = event_kind_from_string(kind);
    if (!parsed) throw Error(ErrorCategory::Validation, "unknown event kind '" + kind + "'");
    e.kind = *parsed;
    e.speaker = j.at("speaker").get<std::string>();
    e.payload = j.value("payload", json::object());
    return e;
}

std::string render_event(const TranscriptEvent& e) {
    std::string out = "[#" + std::to_string(e.index) + " t=" + std::to_string(e.turn) + "] " + e.speaker + " (" +
                      std::string(to_string(e.kind)) + ")";
    if (is_speech(e.kind)) return out + ": " + e.text();
    switch (e.kind) {
        case EventKind::Selection:
            return out + ": " + e.payload.value("selected", std::string{});
        case EventKind::Signal:
            return out + ": " + e.payload.value("value", std::string{});
        case EventKind::StageTransition:
            return out + ": " + e.payload.value("from", std::string{}) + " -> " + e.payload.value("to", std::string{});
        case EventKind::WillingnessScores: {
            std::string scores;
            for (const auto& s : e.payload.value("scores", json::array())) {
                if (!scores.empty()) scores += ", ";
                scores += s.value("agent", std::string{}) + ":" + std::to_string(s.value("score", 0));
            }
            return out + ": " + scores;
        }
        case EventKind::UserCommand:
            return out + ": " + e.payload.value("command", std::string{});
        default:
            return out;
    }
}

std::string render_events(std::span<const TranscriptEvent> events) {
    if (events.empty()) return "(no events yet)";
    std::string out;
    for (const auto& e : events) {
        if (!out.empty()) out += '\n';
        out += render_event(e);
    }
    return out;
}

// --- Transcript ----------------------------------------------------------------------

Transcript::Transcript(json header) : header_(std::move(header)) {
    if (!header_.is_object()) header_ = json::object();
    header_["schema"] = std::string(kSchemaName);
    header_["version"] = kSchemaVersion;
}

void Transcript::stream_to(const std::filesystem::path& path) {
    auto out = std::make_unique<std::ofstream>(path, std::ios::trunc);
    if (!*out) throw Error(ErrorCategory::Config, "cannot write transcript to " + path.string());
    *out << header_.dump() << '\n';
    for (const auto& e : events_) *out << to_json(e).dump() << '\n';
    out->flush();
    sink_ = std::move(out);
}

const TranscriptEvent& Transcript::append(int turn, EventKind kind, std::string speaker, json payload) {
    TranscriptEvent e{events_.size(), turn, kind, std::move(speaker), std::move(payload)};
    events_.push_back(std::move(e));
    if (sink_) {
        *sink_ << to_json(events_.back()).dump() << '\n';
        sink_->flush();
    }
    return events_.back();
}

std::span<const TranscriptEvent> Transcript::tail(std::size_t n) const {
    const std::size_t k = std::min(n, events_.size());
    return std::span<const TranscriptEvent>(events_).subspan(events_.size() - k);
}

void Transcript::write_jsonl(std::ostream& out) const {
    out << header_.dump() << '\n';
    for (const auto& e : events_) out << to_json(e).dump() << '\n';
}

std::string Transcript::to_jsonl() const {
    std::ostringstream out;
    write_jsonl(out);
    return out.str();
}

Transcript Transcript::read_jsonl(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<Transcript> t;
    const std::string where = source.empty() ? std::string{"transcript"} : source;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCategory::Validation, where + ":" + std::to_string(line_no) + ": malformed JSON");
        }
        if (!t) {
            if (!j.is_object() || j.value("schema", std::string{}) != kSchemaName) {
                throw Error(ErrorCategory::Validation, where + ":" + std::to_string(line_no) +
                                                           ": missing " + std::string(kSchemaName) + " header");
            }
            if (j.value("version", 0) != kSchemaVersion) {
                throw Error(ErrorCategory::Validation, where + ": unsupported schema version");
            }
            t.emplace(j);
            continue;
        }
        try {
            t->events_.push_back(event_from_json(j));
        } catch (const json::exception& e) {
            throw Error(ErrorCategory::Validation, where + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCategory::Validation, where + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!t) throw Error(ErrorCategory::Validation, where + ": empty transcript");
    return std::move(*t);
}

Transcript Transcript::read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCategory::Config, "cannot open transcript " + path.string());
    return read_jsonl(in, path.string());
}

// --- invariants -------------------------------------------------------------------------

std::vector<std::string> check_invariants(const Transcript& t) {
    std::vector<std::string> problems;
    const auto& events = t.events();
    std::size_t starts = 0;
    std::size_t ends = 0;
    std::optional<long long> stage;
    std::map<std::string, std::optional<std::size_t>> pending_check;  // speaker -> persona_check index
    const std::string mode = t.header().value("selection_mode", std::string{});

    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        const std::string at = "event #" + std::to_string(e.index);
        if (e.index != i) problems.push_back(at + ": index gap or reorder (expected " + std::to_string(i) + ")");
        if (i > 0 && e.turn < events[i - 1].turn) problems.push_back(at + ": turn decreased");

        switch (e.kind) {
            case EventKind::LessonStart:
                ++starts;
                if (i != 0) problems.push_back(at + ": lesson_start is not the first event");
                stage = 0;
                break;
            case EventKind::LessonEnd:
                ++ends;
                if (i + 1 != events.size()) problems.push_back(at + ": events after lesson_end");
                break;
            case EventKind::StageTransition: {
                const auto from = e.payload.value("from_index", -1LL);
                const auto to = e.payload.value("to_index", -1LL);
                if (!stage || from != *stage || to != from + 1) {
                    problems.push_back(at + ": stage transition is not a +1 step from the current stage");
                }
                const auto& names = t.header().contains("stages") ? t.header()["stages"] : json::array();
                if (to < 0 || static_cast<std::size_t>(to) >= names.size() ||
                    names[static_cast<std::size_t>(to)] != e.payload.value("to", std::string{})) {
                    problems.push_back(at + ": stage transition names an unknown stage");
                }
                stage = to;
                break;
            }
            case EventKind::PersonaCheck:
                pending_check[e.speaker] = i;
                break;
            case EventKind::Selection: {
                const auto via = e.payload.value("mode", std::string{});
                const bool scored = i > 0 && events[i - 1].kind == EventKind::WillingnessScores &&
                                    events[i - 1].turn == e.turn;
                if (via == "willingness" && !scored) {
                    problems.push_back(at + ": willingness selection without a preceding willingness_scores event");
                }
                if (via == "random" && scored) {
                    problems.push_back(at + ": random selection preceded by willingness scores");
                }
                if ((via == "willingness" || via == "random") && !mode.empty() && via != mode) {
                    problems.push_back(at + ": selection mode differs from the scenario's");
                }
                break;
            }
            default:
                break;
        }
        if (is_speech(e.kind) && e.speaker != kUserSpeaker && e.speaker != kSystemSpeaker) {
            auto it = pending_check.find(e.speaker);
            if (it == pending_check.end() || !it->second || events[*it->second].turn != e.turn) {
                problems.push_back(at + ": speech by " + e.speaker + " without a persona_check for that turn");
            } else {
                it->second.reset();
            }
        }
    }
    if (!events.empty() && starts != 1) problems.push_back("expected exactly one lesson_start");
    if (ends > 1) problems.push_back("more than one lesson_end");
    return problems;
}

}  // namespace cgmi::transcript
