#pragma once

#include <stdexcept>
#include <string>

#include "srkit/types.hpp"

namespace srkit {

/// Exit-code classes used by the CLI (and handy for tests).
enum class ErrorClass {
    Config = 2,      ///< malformed input / configuration
    Numeric = 3,     ///< integration or solver failure
    Hypothesis = 4,  ///< violated geometric hypothesis (rank, transversality, ...)
};

struct Error : std::runtime_error {
    Error(ErrorClass c, const std::string& what) : std::runtime_error(what), cls(c) {}
    ErrorClass cls;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorClass::Config, what) {}
};

/// A point left the model's domain box.
struct OutOfChartError : Error {
    OutOfChartError(const std::string& what, Vec q_)
        : Error(ErrorClass::Numeric, what), q(std::move(q_)) {}
    Vec q;
};

/// Full frame numerically rank-deficient at a point.
struct DegenerateFrameError : Error {
    DegenerateFrameError(const std::string& what, Vec q_, double smin)
        : Error(ErrorClass::Hypothesis, what), q(std::move(q_)), sigma_min(smin) {}
    Vec q;
    double sigma_min;
};

/// Adaptive integrator could not proceed (step underflow / step budget).
struct StepFailureError : Error {
    explicit StepFailureError(const std::string& what, double t_)
        : Error(ErrorClass::Numeric, what), t(t_) {}
    double t;
};

/// Operation requires horizontal controls but got complement components.
struct NonHorizontalError : Error {
    explicit NonHorizontalError(const std::string& what) : Error(ErrorClass::Hypothesis, what) {}
};

/// Boundary submanifold fails transversality to the distribution.
struct TransversalityError : Error {
    TransversalityError(const std::string& what, Vec q_, double smin)
        : Error(ErrorClass::Hypothesis, what), q(std::move(q_)), sigma_min(smin) {}
    Vec q;
    double sigma_min;
};

/// Covector field on a hypersurface cannot be H-normalized (surface tangent to D).
struct NormalizationError : Error {
    NormalizationError(const std::string& what, Vec q_)
        : Error(ErrorClass::Hypothesis, what), q(std::move(q_)) {}
    Vec q;
};

/// Wavefront chart Jacobian singular on the requested region.
struct SingularJacobianError : Error {
    SingularJacobianError(const std::string& what, double det_)
        : Error(ErrorClass::Numeric, what), det(det_) {}
    double det;
};

/// Reparameterization of a zero-length curve requested.
struct ZeroLengthError : Error {
    explicit ZeroLengthError(const std::string& what) : Error(ErrorClass::Hypothesis, what) {}
};

}  // namespace srkit
