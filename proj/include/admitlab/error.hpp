#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace admitlab {

enum class ErrorCode {
    ParamOutOfRange,
    NoConvergence,
    UnstableLinearization,
    SingularResolvent,
    InvalidTaps,
    NumericalBlowup,
    LengthMismatch,
    IllConditioned,
    MissingFrequency,
    GenerationStalled,
    IoError,
    SchemaError,
    TooFewSamples,
    DegenerateData,
    WidthMismatch,
    NotTreeBased,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Configuration-class errors map to a different CLI exit code than computation errors.
bool is_config_error(ErrorCode code);

}  // namespace admitlab
