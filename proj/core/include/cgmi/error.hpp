// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cgmi {

// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorCategory {
    Config,      // missing/invalid scenario artifacts
    Validation,  // a document parsed but violates its invariants
    Precondition,
    Backend,     // transport, status, cassette, script lookups
    Protocol,    // a model answer that breaks a verdict/answer protocol
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    ConfigError(std::string file, std::string field, const std::string& message)
        : Error(ErrorCategory::Config, compose(file, field, message)),
          file_(std::move(file)),
          field_(std::move(field)) {}

    [[nodiscard]] const std::string& file() const noexcept { return file_; }
    [[nodiscard]] const std::string& field() const noexcept { return field_; }

private:
    static std::string compose(const std::string& file, const std::string& field,
                               const std::string& message) {
        std::string out = file.empty() ? std::string{"<config>"} : file;
        if (!field.empty()) out += ": field '" + field + "'";
        return out + ": " + message;
    }

    std::string file_;
    std::string field_;
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message)
        : Error(ErrorCategory::Precondition, message) {}
};

class ProtocolError : public Error {
public:
    ProtocolError(std::string protocol, const std::string& message)
        : Error(ErrorCategory::Protocol, protocol + " protocol violation: " + message),
          protocol_(std::move(protocol)) {}

    /// Which answer protocol was violated: "plan", "supervisor", "persona_check",
    /// "willingness", "classifier" or "fias".
    [[nodiscard]] const std::string& protocol() const noexcept { return protocol_; }

private:
    std::string protocol_;
};

}  // namespace cgmi
