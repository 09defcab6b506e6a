// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cgmi/agents.hpp"
#include "cgmi/analysis.hpp"
#include "cgmi/cognition.hpp"
#include "cgmi/error.hpp"
#include "cgmi/orchestrator.hpp"
#include "cgmi/scale.hpp"
#include "cgmi/text.hpp"
#include "cgmi/transcript.hpp"

#ifndef CGMI_DEFAULT_LEXICON
#define CGMI_DEFAULT_LEXICON "data/lexicon/fias_lexicon.json"
#endif

namespace cgmi::cli {

namespace fs = std::filesystem;
using nlohmann::json;
namespace orch = cgmi::orchestrator;

namespace {

struct Streams {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

struct ScenarioFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string backend;
    std::string select;

    orch::LoadOptions load_options() const {
        orch::LoadOptions o;
        o.seed = seed;
        if (!backend.empty()) o.backend_kind = orch::backend_kind_from_string(backend);
        if (!select.empty()) o.selection_mode = orch::selection_mode_from_string(select);
        return o;
    }
};

void add_scenario_flags(CLI::App& sub, ScenarioFlags& f, bool with_select) {
    sub.add_option("--config", f.config, "Scenario config (JSON)")->required();
    sub.add_option("--seed", f.seed, "Override the scenario seed");
    sub.add_option("--backend", f.backend, "Override the backend kind")
        ->check(CLI::IsMember({"scripted", "http", "replay"}));
    if (with_select) {
        sub.add_option("--select", f.select, "Speaker selection for class questions")
            ->check(CLI::IsMember({"willingness", "random"}));
    }
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error(ErrorCategory::Config, "cannot write " + path.string());
    f << content;
}

json read_json(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "", "cannot open " + what);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "", std::string("malformed JSON: ") + e.what());
    }
}

void print_summary(std::ostream& out, const orch::RunResult& r, const fs::path& transcript, const fs::path& report) {
    std::size_t calls = 0;
    for (const auto& [tag, n] : r.report.backend_calls) calls += n;
    out << "transcript: " << transcript.string() << '\n'
        << "report: " << report.string() << '\n'
        << "events: " << r.report.events << '\n'
        << "teacher turns: " << r.report.teacher_turns << '\n'
        << "stages completed: " << r.report.stages_completed << '/' << r.report.stage_count << '\n'
        << "termination: " << orch::to_string(r.report.termination) << '\n'
        << "backend calls: " << calls << '\n';
}

// --- run / interactive ---------------------------------------------------------------

struct RunFlags {
    ScenarioFlags scenario;
    std::string out;
    std::string report;
    std::string memory_in;
    std::string memory_out;
    std::string commands;
    bool quiet = false;
};

void add_run_flags(CLI::App& sub, RunFlags& f) {
    add_scenario_flags(sub, f.scenario, true);
    sub.add_option("--out", f.out, "Transcript output (JSONL)")->required();
    sub.add_option("--report", f.report, "Run report output (default: <out>.report.json)");
    sub.add_option("--memory-in", f.memory_in, "Import agent memory exported by an earlier lesson");
    sub.add_option("--memory-out", f.memory_out, "Export agent memory after the lesson");
}

int do_run(const RunFlags& f, bool interactive, Streams& io) {
    auto scenario = orch::load_scenario(fs::path(f.scenario.config), f.scenario.load_options());
    if (!f.memory_in.empty()) orch::import_memories(scenario, read_json(f.memory_in, "memory file"));

    const fs::path transcript_path(f.out);
    fs::path report_path(f.report);
    if (report_path.empty()) report_path = fs::path(transcript_path).replace_extension(".report.json");
    if (transcript_path.has_parent_path()) fs::create_directories(transcript_path.parent_path());

    orch::RunOptions options;
    options.transcript_path = transcript_path;
    options.console = f.quiet ? nullptr : &io.out;

    orch::RunResult result = [&] {
        if (!interactive) return orch::run_lesson(scenario, options);
        if (f.commands.empty()) {
            io.out << orch::interactive_help();
            return orch::interactive_session(scenario, io.in, options);
        }
        std::ifstream commands(f.commands);
        if (!commands) throw ConfigError(f.commands, "", "cannot open command file");
        return orch::interactive_session(scenario, commands, options);
    }();

    write_file(report_path, orch::to_json(result.report, scenario.setup_checks).dump(2) + "\n");
    if (!f.memory_out.empty()) write_file(f.memory_out, orch::export_memories(scenario).dump(2) + "\n");
    print_summary(io.out, result, transcript_path, report_path);
    return kExitOk;
}

// --- analyze ----------------------------------------------------------------------------

struct AnalyzeFlags {
    std::vector<std::string> transcripts;
    std::string coder = "lexicon";
    std::string lexicon;
    std::string out;
    bool aggregate = false;
    std::string backend = "scripted";
    std::string script;
    std::string model;
    std::string cassette;
};

lm::BackendPtr analysis_backend(const AnalyzeFlags& f) {
    if (f.backend == "scripted") {
        if (f.script.empty()) throw ConfigError("", "--script", "the scripted coder backend needs --script");
        return lm::ScriptedBackend::from_file(f.script);
    }
    if (f.backend == "replay") {
        if (f.cassette.empty()) throw ConfigError("", "--cassette", "replay needs --cassette");
        return lm::record_replay(nullptr, f.cassette, lm::CassetteMode::Replay);
    }
    if (f.model.empty()) throw ConfigError("", "--model", "the http coder backend needs --model");
    return lm::with_retry(std::make_shared<lm::HttpBackend>(lm::HttpSettings::from_env(f.model)), {});
}

int do_analyze(const AnalyzeFlags& f, Streams& io) {
    std::unique_ptr<analysis::Coder> coder;
    lm::BackendPtr backend;
    if (f.coder == "lexicon") {
        std::string path = f.lexicon;
        if (path.empty()) {
            const char* env = std::getenv("CGMI_LEXICON");
            path = env != nullptr ? env : CGMI_DEFAULT_LEXICON;
        }
        coder = std::make_unique<analysis::LexiconCoder>(analysis::LexiconCoder::from_file(path));
    } else {
        backend = analysis_backend(f);
        coder = std::make_unique<analysis::BackendCoder>(*backend);
    }

    std::vector<std::pair<std::string, analysis::FIASReport>> columns;
    json reports = json::array();
    for (const auto& path : f.transcripts) {
        const auto t = transcript::Transcript::read_file(path);
        const auto seq = analysis::code_transcript(t, *coder);
        for (const auto& w : seq.warnings) io.err << path << ": " << w << '\n';
        if (seq.codes.empty()) {
            throw Error(ErrorCategory::Validation, path + ": transcript has no codable utterances");
        }
        auto report = analysis::compute_report(seq);
        json entry = analysis::to_json(report);
        entry["transcript"] = path;
        json codes = json::array();
        for (const auto& c : seq.codes) codes.push_back({{"event", c.event_index}, {"code", analysis::code_name(c.code)}});
        entry["sequence"] = std::move(codes);
        reports.push_back(std::move(entry));
        columns.emplace_back(fs::path(path).stem().string(), report);
    }

    json doc{{"reports", reports}};
    if (f.aggregate) {
        std::vector<analysis::FIASReport> all;
        for (const auto& [_, r] : columns) all.push_back(r);
        auto mean = analysis::aggregate_reports(all);
        doc["aggregate"] = analysis::to_json(mean);
        columns.emplace_back("Mean", mean);
    }
    write_file(f.out, doc.dump(2) + "\n");
    io.out << analysis::render_table(columns);
    return kExitOk;
}

// --- persona-check --------------------------------------------------------------------

struct PersonaFlags {
    std::string config;
    std::string agent;
    std::size_t m = 2;
    std::uint64_t seed = 0;
    std::string backend;
};

int do_persona_check(const PersonaFlags& f, Streams& io) {
    auto config = orch::load_scenario_config(f.config);
    if (!f.backend.empty()) config.backend.kind = *orch::backend_kind_from_string(f.backend);
    std::vector<fs::path> candidates{config.teacher};
    candidates.insert(candidates.end(), config.students.begin(), config.students.end());
    std::optional<scale::PersonaProfile> profile;
    std::vector<std::string> names;
    for (const auto& p : candidates) {
        auto loaded = scale::load_persona_file(p);
        names.push_back(loaded.agent_name);
        if (loaded.agent_name == f.agent) profile = std::move(loaded);
    }
    if (!profile) {
        std::string known;
        for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError(f.config, "agent", "no agent named '" + f.agent + "' (known: " + known + ")");
    }
    for (const auto& tree : profile->scales) {
        if (f.m > tree.coarse_ids().size()) {
            throw PreconditionError("m=" + std::to_string(f.m) + " exceeds the " +
                                    std::to_string(tree.coarse_ids().size()) + " coarse traits of " + tree.name());
        }
    }

    agents::RoleAgent agent(*profile, orch::make_backend(config),
                            std::make_shared<cognition::PromptTemplates>(cognition::PromptTemplates::defaults()));
    std::mt19937_64 rng(f.seed);
    bool drift = false;
    json reports = json::array();
    for (const auto& tree : agent.profile().scales) scale::assign_dfs(tree, agent);
    for (const auto& tree : agent.profile().scales) {
        auto report = scale::consistency_check(agent, tree, f.m, rng);
        drift = drift || report.outcome != scale::CheckOutcome::Pass;
        reports.push_back(scale::to_json(report));
    }
    io.out << json{{"agent", agent.id()}, {"m", f.m}, {"seed", f.seed}, {"drift", drift}, {"reports", reports}}.dump(2) << '\n';
    return drift ? kExitDrift : kExitOk;
}

// --- validate -----------------------------------------------------------------------------

int do_validate(const std::string& config_path, Streams& io) {
    auto verdict = [&](const std::string& what, const fs::path& p) {
        io.out << "ok    " << what << ": " << p.string() << '\n';
    };
    auto config = orch::load_scenario_config(config_path);
    verdict("config", config_path);
    auto check = [&](const std::string& field, const fs::path& p, auto&& load) {
        if (!fs::exists(p)) throw ConfigError(config_path, field, "file not found: " + p.string());
        try {
            load(p);
        } catch (const Error& e) {
            throw ConfigError(config_path, field, e.what());
        }
        verdict(field, p);
    };
    auto persona = [&](const fs::path& p) {
        auto profile = scale::load_persona_file(p);
        for (const auto& tree : profile.scales) {
            for (const auto& w : tree.warnings()) io.err << p.string() << ": " << w << '\n';
        }
    };
    check("teacher", config.teacher, persona);
    for (std::size_t i = 0; i < config.students.size(); ++i) {
        check("students[" + std::to_string(i) + "]", config.students[i], persona);
    }
    check("skill_library", config.skill_library, [](const fs::path& p) { cognition::load_skill_library_file(p); });
    if (config.prompt_templates) {
        check("prompt_templates", *config.prompt_templates,
              [](const fs::path& p) { cognition::PromptTemplates::from_file(p); });
    }
    if (config.backend.kind == orch::BackendKind::Scripted) {
        check("backend.script", config.backend.script, [](const fs::path& p) { lm::ScriptedBackend::from_file(p); });
    } else if (config.backend.kind == orch::BackendKind::Replay) {
        check("backend.cassette", config.backend.cassette, [](const fs::path& p) {
            lm::record_replay(nullptr, p, lm::CassetteMode::Replay);
        });
    }
    io.out << "valid\n";
    return kExitOk;
}

// --- replay (screenplay) ------------------------------------------------------------------

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::string screenplay(const transcript::Transcript& t) {
    using transcript::EventKind;
    std::string out = "LESSON: " + t.header().value("topic", std::string{"(untitled)"}) + "\n";
    const auto stages = t.header().value("stages", json::array());
    for (std::size_t i = 0; i < stages.size(); ++i) {
        out += "  " + std::to_string(i + 1) + ". " + stages[i].get<std::string>() + "\n";
    }
    for (const auto& e : t.events()) {
        switch (e.kind) {
            case EventKind::LessonStart:
                if (!stages.empty()) out += "\n== " + stages[0].get<std::string>() + " ==\n";
                break;
            case EventKind::Utterance:
                out += "\n" + upper(e.speaker) + ": " + e.text() + "\n";
                break;
            case EventKind::QuestionToClass:
                out += "\n" + upper(e.speaker) + " (to the class): " + e.text() + "\n";
                break;
            case EventKind::QuestionToStudent:
                out += "\n" + upper(e.speaker) + " (to " + e.payload.value("target", std::string{}) + "): " +
                       e.text() + "\n";
                break;
            case EventKind::WillingnessScores: {
                std::string scores;
                for (const auto& s : e.payload.value("scores", json::array())) {
                    scores += (scores.empty() ? "" : ", ") + s.value("agent", std::string{}) + " " +
                              std::to_string(s.value("score", 0));
                }
                out += "  (hands: " + scores + ")\n";
                break;
            }
            case EventKind::Selection:
                out += "  (" + e.payload.value("selected", std::string{}) + " is called on, " +
                       e.payload.value("mode", std::string{}) + ")\n";
                break;
            case EventKind::PersonaCheck:
                if (!e.payload.value("consistent", true)) {
                    out += "  (" + e.speaker + " corrected: " + e.payload.value("correction", std::string{}) + ")\n";
                }
                break;
            case EventKind::Signal:
            case EventKind::LessonEnd:
                if (e.kind == EventKind::LessonEnd) {
                    out += "\n== END (" + e.payload.value("termination", std::string{}) + ") ==\n";
                }
                break;
            case EventKind::StageTransition:
                out += "\n== " + e.payload.value("to", std::string{}) + " ==\n";
                break;
            case EventKind::UserCommand:
                out += "  [user: " + e.payload.value("command", std::string{}) + "]\n";
                break;
        }
    }
    return out;
}

int do_replay(const std::string& path, const std::string& out_path, Streams& io) {
    const auto t = transcript::Transcript::read_file(path);
    const auto text = screenplay(t);
    if (out_path.empty()) {
        io.out << text;
    } else {
        write_file(out_path, text);
        io.out << "screenplay: " << out_path << '\n';
    }
    return kExitOk;
}

int exit_code_for(const Error& e) {
    switch (e.category()) {
        case ErrorCategory::Config:
        case ErrorCategory::Validation:
        case ErrorCategory::Precondition:
            return kExitConfig;
        case ErrorCategory::Backend:
        case ErrorCategory::Protocol:
            return kExitRuntime;
    }
    return kExitRuntime;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
    Streams io{in, out, err};
    CLI::App app{"Configurable multi-agent classroom simulation", "cgmi"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "Run a scenario to completion");
    add_run_flags(*run, run_flags);
    run->add_flag("--quiet", run_flags.quiet, "Only print the summary");

    RunFlags interactive_flags;
    auto* interactive = app.add_subcommand("interactive", "Run a scenario under user commands");
    add_run_flags(*interactive, interactive_flags);
    interactive->add_option("--commands", interactive_flags.commands, "Read commands from a file instead of stdin");

    AnalyzeFlags analyze_flags;
    auto* analyze = app.add_subcommand("analyze", "Code transcripts and report interaction statistics");
    analyze->add_option("--transcript", analyze_flags.transcripts, "Transcript (JSONL); repeat for several")
        ->required();
    analyze->add_option("--coder", analyze_flags.coder, "Coder")->check(CLI::IsMember({"lexicon", "backend"}));
    analyze->add_option("--lexicon", analyze_flags.lexicon, "Lexicon table (JSON)");
    analyze->add_option("--out", analyze_flags.out, "Report output (JSON)")->required();
    analyze->add_flag("--aggregate", analyze_flags.aggregate, "Also report the mean over all transcripts");
    analyze->add_option("--backend", analyze_flags.backend, "Coder backend kind")
        ->check(CLI::IsMember({"scripted", "http", "replay"}));
    analyze->add_option("--script", analyze_flags.script, "Script for a scripted coder backend");
    analyze->add_option("--model", analyze_flags.model, "Model for an http coder backend");
    analyze->add_option("--cassette", analyze_flags.cassette, "Cassette for a replay coder backend");

    PersonaFlags persona_flags;
    auto* persona = app.add_subcommand("persona-check", "Probe one agent's persona for drift");
    persona->add_option("--config", persona_flags.config, "Scenario config (JSON)")->required();
    persona->add_option("--agent", persona_flags.agent, "Agent name")->required();
    persona->add_option("--m", persona_flags.m, "Coarse traits to test")->check(CLI::PositiveNumber);
    persona->add_option("--seed", persona_flags.seed, "Random seed");
    persona->add_option("--backend", persona_flags.backend, "Override the backend kind")
        ->check(CLI::IsMember({"scripted", "http", "replay"}));

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "Validate a scenario and every file it references");
    validate->add_option("--config", validate_config, "Scenario config (JSON)")->required();

    std::string replay_transcript;
    std::string replay_out;
    auto* replay = app.add_subcommand("replay", "Render a transcript as a screenplay");
    replay->add_option("--transcript", replay_transcript, "Transcript (JSONL)")->required();
    replay->add_option("--out", replay_out, "Write the screenplay here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return do_run(run_flags, false, io);
        if (*interactive) return do_run(interactive_flags, true, io);
        if (*analyze) return do_analyze(analyze_flags, io);
        if (*persona) return do_persona_check(persona_flags, io);
        if (*validate) return do_validate(validate_config, io);
        if (*replay) return do_replay(replay_transcript, replay_out, io);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed document: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace cgmi::cli
