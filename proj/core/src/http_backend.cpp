// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <regex>

#include "cgmi/lm_backend.hpp"

namespace cgmi::lm {

using nlohmann::json;

HttpSettings HttpSettings::from_env(std::string model) {
    HttpSettings s;
    const char* base = std::getenv("CGMI_API_BASE");
    s.base_url = base != nullptr && *base != '\0' ? base : "https://api.openai.com";
    const char* key = std::getenv("CGMI_API_KEY");
    s.api_key = key != nullptr ? key : "";
    s.model = std::move(model);
    return s;
}

HttpBackend::HttpBackend(HttpSettings settings) : settings_(std::move(settings)) {
    static const std::regex kUrl(R"(^(https?)://([^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(settings_.base_url, m, kUrl)) {
        throw ConfigError("CGMI_API_BASE", "base_url", "not an http(s) URL: " + settings_.base_url);
    }
    scheme_host_port_ = m[1].str() + "://" + m[2].str();
    std::string prefix = m[3].matched ? m[3].str() : std::string{};
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    const bool has_v1 = prefix.size() >= 3 && prefix.compare(prefix.size() - 3, 3, "/v1") == 0;
    path_ = prefix + (has_v1 ? "/chat/completions" : "/v1/chat/completions");
    if (settings_.model.empty()) throw ConfigError("", "model", "HTTP backend needs a model name");
}

json HttpBackend::request_body(const LMRequest& request) const {
    json messages = json::array();
    if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
    for (const auto& m : request.messages) {
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    }
    return {{"model", settings_.model},
            {"messages", messages},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens}};
}

LMResponse HttpBackend::complete(const LMRequest& request) {
    request.validate();
    const auto started = std::chrono::steady_clock::now();

    httplib::Client client(scheme_host_port_);
    const auto timeout = std::chrono::duration_cast<std::chrono::seconds>(settings_.timeout).count();
    client.set_connection_timeout(timeout, 0);
    client.set_read_timeout(timeout, 0);
    client.set_write_timeout(timeout, 0);

    httplib::Headers headers;
    if (!settings_.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings_.api_key);

    auto result = client.Post(path_, headers, request_body(request).dump(), "application/json");
    if (!result) {
        throw BackendError(BackendErrorKind::Network,
                           scheme_host_port_ + path_ + ": " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw BackendError(BackendErrorKind::HttpStatus,
                           "POST " + path_ + " returned " + std::to_string(result->status),
                           result->status);
    }

    LMResponse response;
    try {
        const json body = json::parse(result->body);
        const auto& content = body.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw BackendError(BackendErrorKind::MalformedBody, "content is not a string");
        response.text = content.get<std::string>();
        if (body.contains("usage") && body["usage"].is_object()) {
            response.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
            response.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
        }
    } catch (const json::exception& e) {
        throw BackendError(BackendErrorKind::MalformedBody, e.what());
    }
    response.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return response;
}

}  // namespace cgmi::lm
