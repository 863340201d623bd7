#pragma once

#include <stdexcept>
#include <string>

namespace riskjump {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct SigmaNotPositiveDefinite : Error {
    using Error::Error;
};
struct JumpSignCoverageViolated : Error {
    using Error::Error;
};
struct MarkBelowMinusOne : Error {
    using Error::Error;
};
struct NonPositiveIntensity : Error {
    using Error::Error;
};

// A control whose portfolio can be wiped out by a single jump.
struct InfeasibleControl : Error {
    using Error::Error;
};
struct NoConvergence : Error {
    using Error::Error;
};
struct RankDeficient : Error {
    using Error::Error;
};
struct ZeroBetaInfeasible : Error {
    using Error::Error;
};

struct LinearSolveFailure : Error {
    using Error::Error;
};
struct NonPositiveValue : Error {
    using Error::Error;
};
struct NoPolicyConvergence : Error {
    using Error::Error;
};

struct InfeasiblePolicyOnPath : Error {
    using Error::Error;
};

struct A0NotZero : Error {
    using Error::Error;
};
struct GridMismatch : Error {
    using Error::Error;
};
struct StepTooLarge : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace riskjump
