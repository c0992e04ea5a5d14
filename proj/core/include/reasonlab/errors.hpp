#pragma once

#include <stdexcept>
#include <string>

namespace reasonlab {

// Bad configuration: missing files, malformed catalogs, invalid profiles.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dataset schema violations. Carries the offending line when known.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what, int line = -1)
        : std::runtime_error(what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Template rendering with unbound required placeholders or unknown keys.
class TemplateError : public std::runtime_error {
public:
    explicit TemplateError(const std::string& what) : std::runtime_error(what) {}
};

// Failures while talking to a generation backend. Classified so callers can
// record them per-trial instead of crashing a whole search.
class GatewayError : public std::runtime_error {
public:
    enum class Kind { Transport, Endpoint, Timeout, ScriptedMiss };

    GatewayError(Kind kind, const std::string& what, int http_status = 0)
        : std::runtime_error(what), kind_(kind), http_status_(http_status) {}

    Kind kind() const { return kind_; }
    int http_status() const { return http_status_; }

private:
    Kind kind_;
    int http_status_;
};

// Grading misconfiguration (e.g. JudgeEndpoint without a judge profile).
class GradeError : public std::runtime_error {
public:
    explicit GradeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace reasonlab
