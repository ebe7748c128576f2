#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace taxoclass {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input record. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Structural violation in a taxonomy: duplicate id, dangling parent, cycle.
class IntegrityError : public Error {
public:
    IntegrityError(const std::string& what, std::vector<std::string> ids = {})
        : Error(what), ids_(std::move(ids)) {}
    const std::vector<std::string>& ids() const noexcept { return ids_; }

private:
    std::vector<std::string> ids_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class ContentError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class ScoringIncompleteError : public Error {
public:
    using Error::Error;
};

class IndexIncompleteError : public Error {
public:
    explicit IndexIncompleteError(std::vector<std::string> missing)
        : Error(make_message(missing)), missing_(std::move(missing)) {}
    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    static std::string make_message(const std::vector<std::string>& ids) {
        std::string msg = "embedding index incomplete, missing " + std::to_string(ids.size()) + " node(s):";
        for (std::size_t i = 0; i < ids.size() && i < 20; ++i) msg += " " + ids[i];
        if (ids.size() > 20) msg += " ...";
        return msg;
    }
    std::vector<std::string> missing_;
};

// Provider-side failures. All are retry-eligible subject to ProviderConfig.
class ProviderError : public Error {
public:
    using Error::Error;
};

class TransportError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

class TimeoutError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

class AuthError : public ProviderError {
public:
    using ProviderError::ProviderError;
};

/// A provider reply that could not be turned into the expected schema.
class ResponseError : public Error {
public:
    enum class Kind { no_json, schema_mismatch, out_of_range, duplicate_id };

    ResponseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

inline const char* to_string(ResponseError::Kind kind) {
    switch (kind) {
        case ResponseError::Kind::no_json: return "no_json";
        case ResponseError::Kind::schema_mismatch: return "schema_mismatch";
        case ResponseError::Kind::out_of_range: return "out_of_range";
        case ResponseError::Kind::duplicate_id: return "duplicate_id";
    }
    return "unknown";
}

/// Raised after max_retries + 1 failed attempts; carries the last raw reply for audit.
class RetryExhaustedError : public Error {
public:
    RetryExhaustedError(const std::string& what, std::string last_raw, int attempts)
        : Error(what), last_raw_(std::move(last_raw)), attempts_(attempts) {}
    const std::string& last_raw() const noexcept { return last_raw_; }
    int attempts() const noexcept { return attempts_; }

private:
    std::string last_raw_;
    int attempts_;
};

} // namespace taxoclass
