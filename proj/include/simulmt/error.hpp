#pragma once

#include <stdexcept>
#include <string>

namespace simulmt {

// Error taxonomy. The CLI maps these onto distinct exit codes:
//   0 success, 2 usage, 3 io, 4 backend/session, 5 metric.

// Bad flag combinations, invalid argument values, malformed domain input.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File system and parse failures; messages carry path and line context.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Generation backend failures, each kind distinct and tagged with the
// request id it occurred on.
struct BackendError : std::runtime_error {
    enum class Kind { transport, malformed, timeout, fixture_miss };

    BackendError(Kind k, std::string request_id, const std::string& what)
        : std::runtime_error(what), kind(k), request_id(std::move(request_id)) {}

    Kind kind;
    std::string request_id;
};

// A streaming session aborted mid-run: wraps the failing invocation index.
struct SessionError : std::runtime_error {
    SessionError(const std::string& what, int invocation_index)
        : std::runtime_error(what), invocation_index(invocation_index) {}

    int invocation_index;
};

// Metric preconditions violated (undefined LAAL, misaligned corpora, ...).
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid in-process arguments (empty candidate sets, empty sources, ...).
struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace simulmt
