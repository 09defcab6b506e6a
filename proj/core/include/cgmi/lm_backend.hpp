// SPDX-License-Identifier: Apache-2.0
//
// Language-model access. Every engine component talks to a `Backend`; the
// concrete handles are an OpenAI-compatible HTTP client, a deterministic
// scripted backend for offline runs, and wrappers for retry, record/replay
// and call instrumentation.
#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgmi/error.hpp"

namespace cgmi::lm {

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

/// Tags naming the role a request plays; instrumentation counts by these.
namespace tags {
inline constexpr std::string_view kDistillCot = "distill_cot";
inline constexpr std::string_view kDistillCoa = "distill_coa";
inline constexpr std::string_view kReflect = "reflect";
inline constexpr std::string_view kPlan = "plan";
inline constexpr std::string_view kAct = "act";
inline constexpr std::string_view kWillingness = "willingness";
inline constexpr std::string_view kSupervisor = "supervisor";
inline constexpr std::string_view kConsistency = "consistency";
inline constexpr std::string_view kPersonaProbe = "persona_probe";
inline constexpr std::string_view kTeachingPlan = "teaching_plan";
inline constexpr std::string_view kClassify = "classify";
inline constexpr std::string_view kFiasCode = "fias_code";
}  // namespace tags

struct LMRequest {
    std::string system;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 512;
    std::string tag;

    /// Throws PreconditionError when messages are empty or temperature is
    /// negative or not finite.
    void validate() const;

    /// System text followed by every message body, separated by blank lines.
    /// Scripted matchers run against this.
    [[nodiscard]] std::string flatten() const;
};

LMRequest make_request(std::string system, std::string user, double temperature, int max_tokens,
                       std::string_view tag);

struct TokenUsage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct LMResponse {
    std::string text;
    TokenUsage usage;
    std::chrono::milliseconds latency{0};
};

enum class BackendErrorKind { Network, HttpStatus, MalformedBody, NoMatch, ReplayMiss, Cassette };
std::string_view to_string(BackendErrorKind kind);

class BackendError : public Error {
public:
    BackendError(BackendErrorKind kind, const std::string& message, int status = 0)
        : Error(ErrorCategory::Backend, std::string(to_string(kind)) + ": " + message),
          kind_(kind),
          status_(status) {}

    [[nodiscard]] BackendErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] int status() const noexcept { return status_; }
    /// Network failures, 429 and 5xx are worth retrying; everything else is not.
    [[nodiscard]] bool transient() const noexcept {
        return kind_ == BackendErrorKind::Network ||
               (kind_ == BackendErrorKind::HttpStatus && (status_ == 429 || status_ >= 500));
    }

private:
    BackendErrorKind kind_;
    int status_;
};

class Backend {
public:
    virtual ~Backend() = default;
    /// Thread-safe; may be called concurrently.
    virtual LMResponse complete(const LMRequest& request) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

// --- scripted ------------------------------------------------------------------

enum class MatchKind { Exact, Substring, Regex };

struct ScriptEntry {
    MatchKind match = MatchKind::Substring;
    std::string pattern;
    /// For regex entries, $1..$9 are replaced by the corresponding capture.
    std::string response;
    std::optional<std::size_t> max_uses;  // nullopt = unlimited
    /// When set, the entry only applies to requests carrying this tag.
    std::optional<std::string> tag;
};

/// Serves the response of the first entry, in declaration order, whose
/// pattern matches the flattened prompt and which has uses left. A request no
/// entry matches is an error: it signals an untested prompt path.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptEntry> entries);

    static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& script,
                                                      const std::string& source = {});
    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    LMResponse complete(const LMRequest& request) override;

    [[nodiscard]] std::size_t uses(std::size_t entry_index) const;
    [[nodiscard]] std::size_t calls() const;

private:
    struct Compiled;
    std::vector<ScriptEntry> entries_;
    std::vector<std::shared_ptr<const Compiled>> compiled_;
    mutable std::mutex mutex_;
    std::vector<std::size_t> uses_;
    std::size_t calls_ = 0;
};

// --- HTTP ------------------------------------------------------------------------

struct HttpSettings {
    std::string base_url;  // scheme://host[:port][/prefix]
    std::string api_key;
    std::string model;
    std::chrono::seconds timeout{120};

    /// Reads CGMI_API_BASE (default https://api.openai.com) and CGMI_API_KEY.
    static HttpSettings from_env(std::string model);
};

/// POSTs to <prefix>/v1/chat/completions (or <prefix>/chat/completions when
/// the prefix already ends in /v1) and returns the first choice's content.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpSettings settings);
    LMResponse complete(const LMRequest& request) override;

    /// The request body that would be sent, for inspection and tests.
    [[nodiscard]] nlohmann::json request_body(const LMRequest& request) const;
    [[nodiscard]] const std::string& endpoint_path() const noexcept { return path_; }

private:
    HttpSettings settings_;
    std::string scheme_host_port_;
    std::string path_;
};

// --- wrappers ---------------------------------------------------------------------

struct RetryPolicy {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Retries transient failures with exponential backoff (base, 2*base, ...).
BackendPtr with_retry(BackendPtr inner, RetryPolicy policy, Sleeper sleeper = {});

enum class CassetteMode { Record, Replay };

/// Hex SHA-256 over (system, messages, temperature, max_tokens). The tag is
/// deliberately excluded.
std::string request_digest(const LMRequest& request);

/// Record mode forwards to `inner` and persists digest -> response after each
/// call; replay mode serves from the cassette and never touches `inner`.
BackendPtr record_replay(BackendPtr inner, std::filesystem::path cassette, CassetteMode mode);

/// Records the tag of every call, in order, plus the request itself.
class InstrumentedBackend final : public Backend {
public:
    explicit InstrumentedBackend(BackendPtr inner);
    LMResponse complete(const LMRequest& request) override;

    [[nodiscard]] std::vector<std::string> tags() const;
    [[nodiscard]] std::vector<LMRequest> requests() const;
    [[nodiscard]] std::map<std::string, std::size_t> counts_by_tag() const;
    [[nodiscard]] std::size_t total() const;
    void reset();

private:
    BackendPtr inner_;
    mutable std::mutex mutex_;
    std::vector<LMRequest> requests_;
};

}  // namespace cgmi::lm
