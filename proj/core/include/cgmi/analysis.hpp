// SPDX-License-Identifier: Apache-2.0
//
// Flanders-style interaction coding (nine categories, one code per utterance)
// and the summary statistics computed over a coded lesson.
#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/lm_backend.hpp"
#include "cgmi/transcript.hpp"

namespace cgmi::analysis {

enum class FIASCode { B1 = 1, B2, B3, B4, B5, B6, B7, B8, B9 };
inline constexpr std::size_t kCodeCount = 9;

inline constexpr std::array<FIASCode, kCodeCount> kAllCodes{FIASCode::B1, FIASCode::B2, FIASCode::B3,
                                                            FIASCode::B4, FIASCode::B5, FIASCode::B6,
                                                            FIASCode::B7, FIASCode::B8, FIASCode::B9};

/// "B5"
std::string code_name(FIASCode code);
/// "Lecturing"
std::string_view code_label(FIASCode code);
std::optional<FIASCode> code_from_string(std::string_view name);
inline std::size_t code_slot(FIASCode code) { return static_cast<std::size_t>(code) - 1; }

enum class SpeakerRole { Teacher, Student };

/// B1..B7 are teacher categories, B8/B9 pupil categories.
bool allowed_for(FIASCode code, SpeakerRole role);

struct CodedUtterance {
    std::size_t event_index = 0;
    FIASCode code = FIASCode::B5;
};

struct CodedSequence {
    std::vector<CodedUtterance> codes;
    std::vector<std::string> warnings;
};

class Coder {
public:
    virtual ~Coder() = default;
    /// Codes one speech event. Unmatched input may be noted in `warnings`.
    virtual FIASCode code(const transcript::TranscriptEvent& event, SpeakerRole role,
                          std::vector<std::string>& warnings) = 0;
};

/// Ordered keyword rules; the first rule whose code suits the speaker's role
/// and whose keyword occurs in the utterance wins. Keywords match
/// case-insensitively at word boundaries.
class LexiconCoder final : public Coder {
public:
    struct Rule {
        FIASCode code = FIASCode::B5;
        std::vector<std::string> keywords;
    };

    explicit LexiconCoder(std::vector<Rule> rules);
    static LexiconCoder from_json(const nlohmann::json& document, const std::string& source = {});
    static LexiconCoder from_file(const std::filesystem::path& path);

    FIASCode code(const transcript::TranscriptEvent& event, SpeakerRole role,
                  std::vector<std::string>& warnings) override;

    /// Rule lookup without the default; nullopt when nothing matches.
    [[nodiscard]] std::optional<FIASCode> match(std::string_view text, SpeakerRole role) const;
    [[nodiscard]] const std::vector<Rule>& rules() const noexcept { return rules_; }

private:
    std::vector<Rule> rules_;
};

/// One backend call per utterance; the answer must be a single code token
/// allowed for the speaker's role.
class BackendCoder final : public Coder {
public:
    explicit BackendCoder(lm::Backend& backend) : backend_(backend) {}
    FIASCode code(const transcript::TranscriptEvent& event, SpeakerRole role,
                  std::vector<std::string>& warnings) override;

private:
    lm::Backend& backend_;
};

/// Parses a strict single-token answer ("B4"); throws a "fias" ProtocolError otherwise.
FIASCode parse_code_answer(std::string_view reply, SpeakerRole role);

/// Codes every speech event by the teacher (header "teacher") and by other
/// role agents as students. User and system speech is skipped with a warning.
CodedSequence code_transcript(const transcript::Transcript& transcript, Coder& coder);

struct FIASReport {
    std::array<std::size_t, kCodeCount> counts{};
    std::size_t total = 0;
    /// Unrounded percentages; rounding happens only when rendering.
    std::array<double, kCodeCount> proportions{};
    double teacher_talk = 0.0;
    double pupil_response = 0.0;
    double pupil_initiation = 0.0;
    /// (B1+B2+B3+B4)/(B5+B6+B7); absent when there is no direct influence.
    std::optional<double> indirect_direct_ratio;

    [[nodiscard]] double proportion(FIASCode code) const { return proportions[code_slot(code)]; }
};

FIASReport report_from_counts(const std::array<std::size_t, kCodeCount>& counts);
FIASReport compute_report(const CodedSequence& sequence);
/// Arithmetic mean of every field; the ratio averages the reports that define one.
FIASReport aggregate_reports(std::span<const FIASReport> reports);

/// Percentages rounded half-up to two decimals.
nlohmann::json to_json(const FIASReport& report);

/// Aligned text table in category order, one column per named report.
std::string render_table(std::span<const std::pair<std::string, FIASReport>> columns);

}  // namespace cgmi::analysis
