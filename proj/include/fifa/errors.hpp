#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fifa {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- ingest / file format ---
struct IOError : Error {
    using Error::Error;
};
struct ParseError : Error {
    ParseError(std::size_t line, const std::string& reason)
        : Error("parse error at line " + std::to_string(line) + ": " + reason), line(line) {}
    std::size_t line;
};
struct SchemaError : Error {
    SchemaError(std::size_t line, const std::string& reason)
        : Error("schema error at line " + std::to_string(line) + ": " + reason), line(line) {}
    std::size_t line;
};
struct FormatError : Error {
    using Error::Error;
};
struct DuplicateIdError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

// --- scoring ---
struct NonFiniteError : Error {
    using Error::Error;
};
struct EmptyInputError : Error {
    using Error::Error;
};
struct EmptyPromptError : Error {
    using Error::Error;
};
struct NoRatingError : Error {
    using Error::Error;
};
struct OutOfRangeError : Error {
    using Error::Error;
};
struct EndpointUnreachable : Error {
    using Error::Error;
};

// --- diversity ---
struct TooFewPointsError : Error {
    using Error::Error;
};
struct EmptyCorpusError : Error {
    using Error::Error;
};
struct ZeroVectorError : Error {
    using Error::Error;
};

// --- selection ---
struct MissingScoreError : Error {
    using Error::Error;
};
struct MissingInputError : Error {
    using Error::Error;
};

// --- design lab ---
struct SingularDesignError : Error {
    SingularDesignError(const std::string& what, int rank) : Error(what), rank(rank) {}
    int rank;
};
struct SpanDeficientError : Error {
    using Error::Error;
};
/// Design optimization hit its iteration limit. optimize_design itself
/// reports this via the converged flag; the type exists for callers that
/// want to escalate a non-converged result.
struct NonConvergenceError : Error {
    using Error::Error;
};

}  // namespace fifa
