#pragma once

#include <stdexcept>
#include <string>

namespace petkin {

/// Bad configuration / usage: maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad or missing data at runtime: maps to CLI exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A linear or nonlinear fit could not be performed (degenerate inputs).
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Training hit a non-finite loss; carries the offending sample index.
struct TrainAbort : std::runtime_error {
    int sample_index;
    TrainAbort(const std::string& msg, int idx)
        : std::runtime_error(msg), sample_index(idx) {}
};

} // namespace petkin
