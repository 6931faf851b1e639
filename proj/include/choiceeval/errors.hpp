#pragma once

#include <stdexcept>
#include <string>

namespace choiceeval {

// Base class for all recoverable pipeline errors. Anything not derived from
// Error is treated as fatal by the batch drivers.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- configuration / input ---

struct ConfigError : Error {
    ConfigError(std::string field, const std::string& detail)
        : Error(field + ": " + detail), field_path(std::move(field)) {}
    std::string field_path;
};

struct StoreError : Error {
    using Error::Error;
};

struct MissingInput : Error {
    using Error::Error;
};

struct CatalogConflict : Error {
    using Error::Error;
};

// --- provider errors ---

struct AuthError : Error {
    AuthError(std::string var, const std::string& detail)
        : Error("auth: " + detail), env_var(std::move(var)) {}
    std::string env_var;
};

struct RateLimited : Error {
    explicit RateLimited(double after_s = 0.0)
        : Error("rate limited"), retry_after_s(after_s) {}
    double retry_after_s;
};

struct Timeout : Error {
    using Error::Error;
};

struct Refusal : Error {
    using Error::Error;
};

struct ProtocolError : Error {
    using Error::Error;
};

struct ExhaustedRetries : Error {
    ExhaustedRetries(int n, std::string cls, const std::string& last)
        : Error("retries exhausted after " + std::to_string(n) + " attempts: " + last),
          attempts(n),
          last_class(std::move(cls)) {}
    int attempts;
    std::string last_class;
};

struct UnscriptedPrompt : Error {
    using Error::Error;
};

// --- generation / extraction ---

struct GenerationParseError : Error {
    GenerationParseError(const std::string& what, std::string reply)
        : Error(what), raw_reply(std::move(reply)) {}
    std::string raw_reply;
};

struct InsufficientDistinctQuestions : Error {
    using Error::Error;
};

struct ExtractionParseError : Error {
    ExtractionParseError(const std::string& what, std::string reply)
        : Error(what), raw_reply(std::move(reply)) {}
    std::string raw_reply;
};

struct MismatchedResponseRefs : Error {
    using Error::Error;
};

struct InsufficientEntities : Error {
    using Error::Error;
};

// --- analysis ---

struct EmptyCorpus : Error {
    using Error::Error;
};

struct MissingRegion : Error {
    explicit MissingRegion(std::string name)
        : Error("entity has no region assignment: " + name), entity(std::move(name)) {}
    std::string entity;
};

struct UnknownCountry : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct TooFewGroups : Error {
    using Error::Error;
};

struct LengthMismatch : Error {
    using Error::Error;
};

}  // namespace choiceeval
