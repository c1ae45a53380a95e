#pragma once

#include <stdexcept>
#include <string>

namespace mvcool {

// Numerical failures (CLI maps these to exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TruncationTooSmall : NumericalError {
    using NumericalError::NumericalError;
};

struct GridTooNarrow : NumericalError {
    using NumericalError::NumericalError;
};

struct StepTooCoarse : NumericalError {
    using NumericalError::NumericalError;
};

struct FitDidNotConverge : NumericalError {
    using NumericalError::NumericalError;
};

struct DegenerateData : NumericalError {
    using NumericalError::NumericalError;
};

struct NoImprovement : NumericalError {
    using NumericalError::NumericalError;
};

// Configuration problems (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mvcool
