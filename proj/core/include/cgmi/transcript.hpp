// SPDX-License-Identifier: Apache-2.0
//
// The classroom event log. The log up to turn t is the classroom state that
// general agents read; it is written as JSON lines, one event per line, after
// a versioned header record.
#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace cgmi::transcript {

inline constexpr std::string_view kSchemaName = "cgmi.transcript";
inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kSystemSpeaker = "system";
inline constexpr std::string_view kUserSpeaker = "user";

enum class EventKind {
    Utterance,
    QuestionToClass,
    QuestionToStudent,
    WillingnessScores,
    Selection,
    PersonaCheck,
    Signal,
    StageTransition,
    LessonStart,
    LessonEnd,
    UserCommand,
};

std::string_view to_string(EventKind kind);
std::optional<EventKind> event_kind_from_string(std::string_view name);

/// Utterances and both question kinds carry spoken text in payload["text"].
bool is_speech(EventKind kind);

struct TranscriptEvent {
    std::size_t index = 0;
    int turn = 0;
    EventKind kind = EventKind::Utterance;
    std::string speaker;
    nlohmann::json payload = nlohmann::json::object();

    [[nodiscard]] std::string text() const;
};

nlohmann::json to_json(const TranscriptEvent& event);
TranscriptEvent event_from_json(const nlohmann::json& j);

/// "[#12 t=4] Emily (utterance): ...", as general agents read it.
std::string render_event(const TranscriptEvent& event);
std::string render_events(std::span<const TranscriptEvent> events);

class Transcript {
public:
    explicit Transcript(nlohmann::json header = nlohmann::json::object());

    /// Every appended event is also written (and flushed) to this file.
    void stream_to(const std::filesystem::path& path);

    const TranscriptEvent& append(int turn, EventKind kind, std::string speaker,
                                  nlohmann::json payload = nlohmann::json::object());

    [[nodiscard]] const std::vector<TranscriptEvent>& events() const noexcept { return events_; }
    [[nodiscard]] const nlohmann::json& header() const noexcept { return header_; }
    /// Last `n` events (all when fewer).
    [[nodiscard]] std::span<const TranscriptEvent> tail(std::size_t n) const;

    void write_jsonl(std::ostream& out) const;
    [[nodiscard]] std::string to_jsonl() const;

    /// Throws cgmi::Error (validation) on malformed input, naming the line.
    static Transcript read_jsonl(std::istream& in, const std::string& source = {});
    static Transcript read_file(const std::filesystem::path& path);

private:
    nlohmann::json header_;
    std::vector<TranscriptEvent> events_;
    std::unique_ptr<std::ofstream> sink_;
};

/// Structural checks that need nothing but the log itself. Returns one message
/// per violation; empty means the transcript is well formed.
std::vector<std::string> check_invariants(const Transcript& transcript);

}  // namespace cgmi::transcript
