// SPDX-License-Identifier: Apache-2.0
#include "cgmi/lm_backend.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include <boost/regex.hpp>
#include <openssl/sha.h>

#include "cgmi/text.hpp"

namespace cgmi::lm {

using nlohmann::json;

std::string_view to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

std::string_view to_string(BackendErrorKind kind) {
    switch (kind) {
        case BackendErrorKind::Network: return "network failure";
        case BackendErrorKind::HttpStatus: return "http status";
        case BackendErrorKind::MalformedBody: return "malformed response body";
        case BackendErrorKind::NoMatch: return "no script entry matches";
        case BackendErrorKind::ReplayMiss: return "replay miss";
        case BackendErrorKind::Cassette: return "cassette error";
    }
    return "backend error";
}

void LMRequest::validate() const {
    if (messages.empty()) throw PreconditionError("LM request '" + tag + "' has no messages");
    if (!std::isfinite(temperature) || temperature < 0.0) {
        throw PreconditionError("LM request '" + tag + "' has an invalid temperature");
    }
    if (max_tokens <= 0) throw PreconditionError("LM request '" + tag + "' has max_tokens <= 0");
}

std::string LMRequest::flatten() const {
    std::string out = system;
    for (const auto& m : messages) {
        if (!out.empty()) out += "\n\n";
        out += m.content;
    }
    return out;
}

LMRequest make_request(std::string system, std::string user, double temperature, int max_tokens,
                       std::string_view tag) {
    LMRequest r;
    r.system = std::move(system);
    r.messages.push_back({Role::User, std::move(user)});
    r.temperature = temperature;
    r.max_tokens = max_tokens;
    r.tag = std::string(tag);
    return r;
}

// --- scripted ------------------------------------------------------------------

struct ScriptedBackend::Compiled {
    boost::regex re;
};

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> entries)
    : entries_(std::move(entries)), uses_(entries_.size(), 0) {
    compiled_.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.pattern.empty()) {
            throw ConfigError("", "entries[" + std::to_string(i) + "].pattern", "must not be empty");
        }
        if (e.match == MatchKind::Regex) {
            try {
                compiled_.push_back(std::make_shared<Compiled>(Compiled{boost::regex(e.pattern)}));
            } catch (const boost::regex_error& err) {
                throw ConfigError("", "entries[" + std::to_string(i) + "].pattern",
                                  std::string("invalid regex: ") + err.what());
            }
        } else {
            compiled_.push_back(nullptr);
        }
    }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& script, const std::string& source) {
    const json* list = &script;
    if (script.is_object()) {
        if (!script.contains("entries")) throw ConfigError(source, "entries", "missing");
        list = &script.at("entries");
    }
    if (!list->is_array()) throw ConfigError(source, "entries", "must be an array");
    std::vector<ScriptEntry> entries;
    std::size_t i = 0;
    for (const auto& j : *list) {
        const std::string field = "entries[" + std::to_string(i++) + "]";
        if (!j.is_object()) throw ConfigError(source, field, "must be an object");
        ScriptEntry e;
        const auto match = j.value("match", std::string{"substring"});
        if (match == "exact") {
            e.match = MatchKind::Exact;
        } else if (match == "substring") {
            e.match = MatchKind::Substring;
        } else if (match == "regex") {
            e.match = MatchKind::Regex;
        } else {
            throw ConfigError(source, field + ".match", "unknown matcher '" + match + "'");
        }
        if (!j.contains("pattern") || !j["pattern"].is_string()) {
            throw ConfigError(source, field + ".pattern", "missing string");
        }
        e.pattern = j["pattern"].get<std::string>();
        if (!j.contains("response") || !j["response"].is_string()) {
            throw ConfigError(source, field + ".response", "missing string");
        }
        e.response = j["response"].get<std::string>();
        if (j.contains("max_uses") && !j["max_uses"].is_null()) {
            if (!j["max_uses"].is_number_unsigned()) {
                throw ConfigError(source, field + ".max_uses", "must be a non-negative integer");
            }
            e.max_uses = j["max_uses"].get<std::size_t>();
        }
        if (j.contains("tag")) e.tag = j["tag"].get<std::string>();
        entries.push_back(std::move(e));
    }
    try {
        return std::make_shared<ScriptedBackend>(std::move(entries));
    } catch (const ConfigError& e) {
        throw ConfigError(source, e.field(), e.what());
    }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "", "cannot open script file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), "", std::string("malformed JSON: ") + e.what());
    }
    return from_json(j, path.string());
}

namespace {
std::string substitute_captures(const std::string& response, const boost::smatch& m) {
    std::string out;
    for (std::size_t i = 0; i < response.size(); ++i) {
        if (response[i] == '$' && i + 1 < response.size() && response[i + 1] >= '1' &&
            response[i + 1] <= '9') {
            const auto group = static_cast<std::size_t>(response[i + 1] - '0');
            if (group < m.size()) out += m[static_cast<int>(group)].str();
            ++i;
            continue;
        }
        out.push_back(response[i]);
    }
    return out;
}
}  // namespace

LMResponse ScriptedBackend::complete(const LMRequest& request) {
    request.validate();
    const std::string prompt = request.flatten();
    std::lock_guard lock(mutex_);
    ++calls_;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.max_uses && uses_[i] >= *e.max_uses) continue;
        if (e.tag && *e.tag != request.tag) continue;
        std::optional<std::string> response;
        switch (e.match) {
            case MatchKind::Exact:
                if (prompt == e.pattern || (!request.messages.empty() &&
                                            request.messages.back().content == e.pattern)) {
                    response = e.response;
                }
                break;
            case MatchKind::Substring:
                if (prompt.find(e.pattern) != std::string::npos) response = e.response;
                break;
            case MatchKind::Regex: {
                boost::smatch m;
                bool found = false;
                try {
                    found = boost::regex_search(prompt, m, compiled_[i]->re);
                } catch (const std::runtime_error& err) {
                    throw BackendError(BackendErrorKind::NoMatch,
                                       "regex entry " + std::to_string(i) + " failed: " + err.what());
                }
                if (found) response = substitute_captures(e.response, m);
                break;
            }
        }
        if (response) {
            ++uses_[i];
            LMResponse r;
            r.text = std::move(*response);
            r.usage.prompt_tokens = static_cast<int>(prompt.size() / 4);
            r.usage.completion_tokens = static_cast<int>(r.text.size() / 4);
            return r;
        }
    }
    throw BackendError(BackendErrorKind::NoMatch,
                       "tag '" + request.tag + "', prompt begins: " + text::truncate(prompt, 200));
}

std::size_t ScriptedBackend::uses(std::size_t entry_index) const {
    std::lock_guard lock(mutex_);
    return uses_.at(entry_index);
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

// --- retry -----------------------------------------------------------------------

namespace {
class RetryingBackend final : public Backend {
public:
    RetryingBackend(BackendPtr inner, RetryPolicy policy, Sleeper sleeper)
        : inner_(std::move(inner)), policy_(policy), sleeper_(std::move(sleeper)) {}

    LMResponse complete(const LMRequest& request) override {
        auto delay = policy_.base_delay;
        for (std::size_t attempt = 1;; ++attempt) {
            try {
                return inner_->complete(request);
            } catch (const BackendError& e) {
                if (!e.transient() || attempt >= policy_.max_attempts) throw;
            }
            sleeper_(delay);
            delay *= 2;
        }
    }

private:
    BackendPtr inner_;
    RetryPolicy policy_;
    Sleeper sleeper_;
};
}  // namespace

BackendPtr with_retry(BackendPtr inner, RetryPolicy policy, Sleeper sleeper) {
    if (policy.max_attempts < 1) throw PreconditionError("retry policy needs max_attempts >= 1");
    if (!sleeper) sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    return std::make_shared<RetryingBackend>(std::move(inner), policy, std::move(sleeper));
}

// --- record / replay ----------------------------------------------------------------

std::string request_digest(const LMRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back(json::array({std::string(to_string(m.role)), m.content}));
    }
    const json canonical = {{"system", request.system},
                            {"messages", messages},
                            {"temperature", request.temperature},
                            {"max_tokens", request.max_tokens}};
    const std::string bytes = canonical.dump();
    unsigned char hash[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), hash);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : hash) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xF]);
    }
    return out;
}

namespace {
class CassetteBackend final : public Backend {
public:
    CassetteBackend(BackendPtr inner, std::filesystem::path path, CassetteMode mode)
        : inner_(std::move(inner)), path_(std::move(path)), mode_(mode) {
        if (mode_ == CassetteMode::Replay) {
            std::ifstream in(path_);
            if (!in) throw ConfigError(path_.string(), "", "cannot open cassette");
            try {
                const json doc = json::parse(in);
                for (const auto& [digest, record] : doc.at("entries").items()) {
                    entries_[digest] = record;
                }
            } catch (const json::exception& e) {
                throw ConfigError(path_.string(), "entries", std::string("malformed cassette: ") + e.what());
            }
        } else {
            if (!inner_) throw PreconditionError("record mode needs an inner backend");
            flush();
        }
    }

    LMResponse complete(const LMRequest& request) override {
        request.validate();
        const std::string digest = request_digest(request);
        if (mode_ == CassetteMode::Replay) {
            std::lock_guard lock(mutex_);
            auto it = entries_.find(digest);
            if (it == entries_.end()) {
                throw BackendError(BackendErrorKind::ReplayMiss,
                                   "digest " + digest + " not in " + path_.string());
            }
            LMResponse r;
            r.text = it->second.at("text").get<std::string>();
            r.usage.prompt_tokens = it->second.value("prompt_tokens", 0);
            r.usage.completion_tokens = it->second.value("completion_tokens", 0);
            return r;
        }
        LMResponse r = inner_->complete(request);
        std::lock_guard lock(mutex_);
        entries_[digest] = json{{"text", r.text},
                                {"prompt_tokens", r.usage.prompt_tokens},
                                {"completion_tokens", r.usage.completion_tokens}};
        flush();
        return r;
    }

private:
    void flush() {
        json doc = {{"version", 1}, {"entries", json::object()}};
        for (const auto& [digest, record] : entries_) doc["entries"][digest] = record;
        std::ofstream out(path_, std::ios::trunc);
        if (!out) throw BackendError(BackendErrorKind::Cassette, "cannot write " + path_.string());
        out << doc.dump(2) << '\n';
    }

    BackendPtr inner_;
    std::filesystem::path path_;
    CassetteMode mode_;
    std::mutex mutex_;
    std::map<std::string, json> entries_;
};
}  // namespace

BackendPtr record_replay(BackendPtr inner, std::filesystem::path cassette, CassetteMode mode) {
    return std::make_shared<CassetteBackend>(std::move(inner), std::move(cassette), mode);
}

// --- instrumentation --------------------------------------------------------------------

InstrumentedBackend::InstrumentedBackend(BackendPtr inner) : inner_(std::move(inner)) {}

LMResponse InstrumentedBackend::complete(const LMRequest& request) {
    {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
    }
    return inner_->complete(request);
}

std::vector<std::string> InstrumentedBackend::tags() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    out.reserve(requests_.size());
    for (const auto& r : requests_) out.push_back(r.tag);
    return out;
}

std::vector<LMRequest> InstrumentedBackend::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

std::map<std::string, std::size_t> InstrumentedBackend::counts_by_tag() const {
    std::lock_guard lock(mutex_);
    std::map<std::string, std::size_t> out;
    for (const auto& r : requests_) ++out[r.tag];
    return out;
}

std::size_t InstrumentedBackend::total() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
}

void InstrumentedBackend::reset() {
    std::lock_guard lock(mutex_);
    requests_.clear();
}

}  // namespace cgmi::lm
