// SPDX-License-Identifier: Apache-2.0
#include "cgmi/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cgmi/error.hpp"
#include "cgmi/text.hpp"

namespace cgmi::analysis {

using nlohmann::json;
using transcript::EventKind;

namespace {
constexpr std::array<std::string_view, kCodeCount> kLabels{
    "Accept feeling", "Praises or encourages", "Accept ideas",        "Asks questions",           "Lecturing",
    "Gives directions", "Criticising",         "Pupil talk response", "Pupil talk Initiation"};

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Case-insensitive phrase search; alphanumeric keyword ends must sit on word boundaries.
bool contains_keyword(std::string_view lowered_text, std::string_view lowered_keyword) {
    if (lowered_keyword.empty()) return false;
    std::size_t pos = 0;
    while ((pos = lowered_text.find(lowered_keyword, pos)) != std::string_view::npos) {
        const std::size_t end = pos + lowered_keyword.size();
        const bool left_ok = !is_alnum(lowered_keyword.front()) || pos == 0 || !is_alnum(lowered_text[pos - 1]);
        const bool right_ok =
            !is_alnum(lowered_keyword.back()) || end == lowered_text.size() || !is_alnum(lowered_text[end]);
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}
}  // namespace

std::string code_name(FIASCode code) { return "B" + std::to_string(static_cast<int>(code)); }

std::string_view code_label(FIASCode code) { return kLabels[code_slot(code)]; }

std::optional<FIASCode> code_from_string(std::string_view name) {
    const auto t = text::trim(name);
    if (t.size() != 2 || (t[0] != 'B' && t[0] != 'b') || t[1] < '1' || t[1] > '9') return std::nullopt;
    return static_cast<FIASCode>(t[1] - '0');
}

bool allowed_for(FIASCode code, SpeakerRole role) {
    const bool pupil = code == FIASCode::B8 || code == FIASCode::B9;
    return role == SpeakerRole::Student ? pupil : !pupil;
}

// --- lexicon coder ---------------------------------------------------------------------

LexiconCoder::LexiconCoder(std::vector<Rule> rules) : rules_(std::move(rules)) {
    for (auto& r : rules_) {
        for (auto& k : r.keywords) k = text::to_lower(k);
    }
}

LexiconCoder LexiconCoder::from_json(const json& doc, const std::string& source) {
    const std::string where = source.empty() ? std::string{"lexicon"} : source;
    const json* rules = doc.is_object() && doc.contains("rules") ? &doc["rules"] : (doc.is_array() ? &doc : nullptr);
    if (rules == nullptr || !rules->is_array()) throw ConfigError(where, "rules", "must be an array");
    std::vector<Rule> out;
    for (std::size_t i = 0; i < rules->size(); ++i) {
        const auto& r = (*rules)[i];
        const std::string field = "rules[" + std::to_string(i) + "]";
        if (!r.is_object() || !r.contains("code") || !r["code"].is_string()) {
            throw ConfigError(where, field, "needs a string 'code'");
        }
        auto code = code_from_string(r["code"].get<std::string>());
        if (!code) throw ConfigError(where, field + ".code", "must be one of B1..B9");
        if (!r.contains("keywords") || !r["keywords"].is_array() || r["keywords"].empty()) {
            throw ConfigError(where, field + ".keywords", "must be a non-empty array");
        }
        Rule rule{*code, {}};
        for (const auto& k : r["keywords"]) {
            if (!k.is_string() || text::trim(k.get<std::string>()).empty()) {
                throw ConfigError(where, field + ".keywords", "keywords must be non-empty strings");
            }
            rule.keywords.push_back(k.get<std::string>());
        }
        out.push_back(std::move(rule));
    }
    return LexiconCoder(std::move(out));
}

LexiconCoder LexiconCoder::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "", "cannot open lexicon");
    try {
        return from_json(json::parse(in), path.string());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "", std::string("malformed JSON: ") + e.what());
    }
}

std::optional<FIASCode> LexiconCoder::match(std::string_view text_in, SpeakerRole role) const {
    const auto lowered = text::to_lower(text_in);
    for (const auto& r : rules_) {
        if (!allowed_for(r.code, role)) continue;
        for (const auto& k : r.keywords) {
            if (contains_keyword(lowered, k)) return r.code;
        }
    }
    return std::nullopt;
}

FIASCode LexiconCoder::code(const transcript::TranscriptEvent& event, SpeakerRole role,
                            std::vector<std::string>& warnings) {
    if (auto c = match(event.text(), role)) return *c;
    const FIASCode fallback = role == SpeakerRole::Teacher ? FIASCode::B5 : FIASCode::B8;
    warnings.push_back("event #" + std::to_string(event.index) + ": no lexicon match, defaulted to " +
                       code_name(fallback));
    return fallback;
}

// --- backend coder --------------------------------------------------------------------

FIASCode parse_code_answer(std::string_view reply, SpeakerRole role) {
    const auto t = text::trim(reply);
    auto code = code_from_string(t);
    if (!code) throw ProtocolError("fias", "expected a single code token B1..B9, got '" + text::truncate(t, 40) + "'");
    if (!allowed_for(*code, role)) {
        throw ProtocolError("fias", code_name(*code) + " is not a " +
                                        (role == SpeakerRole::Teacher ? "teacher" : "student") + " category");
    }
    return *code;
}

FIASCode BackendCoder::code(const transcript::TranscriptEvent& event, SpeakerRole role, std::vector<std::string>&) {
    std::string system = "You code classroom talk with the Flanders interaction categories. Answer with exactly "
                         "one code token and nothing else.";
    std::string user = "Allowed codes:\n";
    for (auto c : kAllCodes) {
        if (allowed_for(c, role)) user += code_name(c) + " " + std::string(code_label(c)) + "\n";
    }
    user += "\nSpeaker (" + std::string(role == SpeakerRole::Teacher ? "teacher" : "student") + "): " +
            event.speaker + "\nUtterance: " + event.text();
    auto req = lm::make_request(system, user, 0.0, 4, lm::tags::kFiasCode);
    return parse_code_answer(backend_.complete(req).text, role);
}

// --- coding a transcript -----------------------------------------------------------------

CodedSequence code_transcript(const transcript::Transcript& t, Coder& coder) {
    CodedSequence seq;
    const auto teacher = t.header().value("teacher", std::string{});
    if (teacher.empty() && !t.events().empty()) {
        throw Error(ErrorCategory::Validation, "transcript header names no teacher");
    }
    for (const auto& e : t.events()) {
        if (!transcript::is_speech(e.kind)) continue;
        if (e.speaker == transcript::kUserSpeaker || e.speaker == transcript::kSystemSpeaker) {
            seq.warnings.push_back("event #" + std::to_string(e.index) + ": " + e.speaker + " speech is not coded");
            continue;
        }
        const SpeakerRole role = e.speaker == teacher ? SpeakerRole::Teacher : SpeakerRole::Student;
        const FIASCode c = coder.code(e, role, seq.warnings);
        if (!allowed_for(c, role)) {
            throw ProtocolError("fias", "coder returned " + code_name(c) + " for event #" + std::to_string(e.index));
        }
        seq.codes.push_back({e.index, c});
    }
    return seq;
}

// --- statistics ----------------------------------------------------------------------------

FIASReport report_from_counts(const std::array<std::size_t, kCodeCount>& counts) {
    FIASReport r;
    r.counts = counts;
    for (auto c : counts) r.total += c;
    if (r.total == 0) throw PreconditionError("cannot compute a report over zero coded utterances");
    for (std::size_t i = 0; i < kCodeCount; ++i) {
        r.proportions[i] = 100.0 * static_cast<double>(counts[i]) / static_cast<double>(r.total);
    }
    std::size_t indirect = 0;
    std::size_t direct = 0;
    for (std::size_t i = 0; i < 4; ++i) indirect += counts[i];
    for (std::size_t i = 4; i < 7; ++i) direct += counts[i];
    r.teacher_talk = 100.0 * static_cast<double>(indirect + direct) / static_cast<double>(r.total);
    r.pupil_response = r.proportions[7];
    r.pupil_initiation = r.proportions[8];
    if (direct > 0) r.indirect_direct_ratio = static_cast<double>(indirect) / static_cast<double>(direct);
    return r;
}

FIASReport compute_report(const CodedSequence& sequence) {
    if (sequence.codes.empty()) throw PreconditionError("cannot compute a report over an empty sequence");
    std::array<std::size_t, kCodeCount> counts{};
    for (const auto& c : sequence.codes) ++counts[code_slot(c.code)];
    return report_from_counts(counts);
}

FIASReport aggregate_reports(std::span<const FIASReport> reports) {
    if (reports.empty()) throw PreconditionError("cannot aggregate an empty list of reports");
    FIASReport out;
    const auto n = static_cast<double>(reports.size());
    double ratio_sum = 0.0;
    std::size_t ratio_n = 0;
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < kCodeCount; ++i) {
            out.counts[i] += r.counts[i];
            out.proportions[i] += r.proportions[i] / n;
        }
        out.total += r.total;
        out.teacher_talk += r.teacher_talk / n;
        out.pupil_response += r.pupil_response / n;
        out.pupil_initiation += r.pupil_initiation / n;
        if (r.indirect_direct_ratio) {
            ratio_sum += *r.indirect_direct_ratio;
            ++ratio_n;
        }
    }
    if (ratio_n > 0) out.indirect_direct_ratio = ratio_sum / static_cast<double>(ratio_n);
    return out;
}

json to_json(const FIASReport& r) {
    json proportions = json::object();
    json counts = json::object();
    for (auto c : kAllCodes) {
        proportions[code_name(c)] = text::round_half_up(r.proportion(c), 2);
        counts[code_name(c)] = r.counts[code_slot(c)];
    }
    return {{"total", r.total},
            {"counts", counts},
            {"proportions", proportions},
            {"teacher_talk", text::round_half_up(r.teacher_talk, 2)},
            {"pupil_response", text::round_half_up(r.pupil_response, 2)},
            {"pupil_initiation", text::round_half_up(r.pupil_initiation, 2)},
            {"indirect_direct_ratio",
             r.indirect_direct_ratio ? json(text::round_half_up(*r.indirect_direct_ratio, 2)) : json(nullptr)}};
}

std::string render_table(std::span<const std::pair<std::string, FIASReport>> columns) {
    std::vector<std::string> rows;
    for (auto c : kAllCodes) rows.push_back(code_name(c) + "." + std::string(code_label(c)));
    rows.insert(rows.end(), {"Teacher talk (B1-B7)", "Pupil response (B8)", "Pupil initiation (B9)",
                             "Indirect/direct ratio"});
    std::size_t first_width = std::string_view("Categories").size();
    for (const auto& r : rows) first_width = std::max(first_width, r.size());

    auto cell = [](const FIASReport& r, std::size_t row) -> std::string {
        if (row < kCodeCount) return text::fixed2(r.proportions[row]) + "%";
        if (row == kCodeCount) return text::fixed2(r.teacher_talk) + "%";
        if (row == kCodeCount + 1) return text::fixed2(r.pupil_response) + "%";
        if (row == kCodeCount + 2) return text::fixed2(r.pupil_initiation) + "%";
        return r.indirect_direct_ratio ? text::fixed2(*r.indirect_direct_ratio) : std::string("n/a");
    };
    std::vector<std::size_t> widths;
    for (const auto& [name, report] : columns) {
        std::size_t w = name.size();
        for (std::size_t i = 0; i < rows.size(); ++i) w = std::max(w, cell(report, i).size());
        widths.push_back(w);
    }

    std::ostringstream out;
    auto rule = [&] {
        out << std::string(first_width, '-');
        for (auto w : widths) out << "-+-" << std::string(w, '-');
        out << '\n';
    };
    out << std::left << std::setw(static_cast<int>(first_width)) << "Categories";
    for (std::size_t c = 0; c < columns.size(); ++c) {
        out << " | " << std::right << std::setw(static_cast<int>(widths[c])) << columns[c].first;
    }
    out << '\n';
    rule();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == 4 || i == 7 || i == kCodeCount) rule();
        out << std::left << std::setw(static_cast<int>(first_width)) << rows[i];
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << " | " << std::right << std::setw(static_cast<int>(widths[c])) << cell(columns[c].second, i);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace cgmi::analysis
