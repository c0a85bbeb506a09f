#pragma once

// Arclength profile and unit-speed reparameterization of horizontal control
// curves.  Controls are piecewise constant, so per-interval arclength
// integrals are exact and the profile is piecewise linear.

#include <vector>

#include "srkit/endpoint.hpp"
#include "srkit/model.hpp"

namespace srkit {

struct ArclengthProfile {
    std::vector<double> t;      ///< N+1 grid nodes
    std::vector<double> sigma;  ///< nondecreasing, sigma[0] = 0
    double length() const { return sigma.back(); }
};

/// Cumulative arclength of a horizontal control curve (frame-orthonormal
/// metric: speed on interval j is |h_j|).  Throws NonHorizontalError if the
/// complement components exceed `horizontal_tol`.
ArclengthProfile arclength_profile(const ChartModel& model, const ControlCurve& curve,
                                   double horizontal_tol = 1e-10);

/// Resample the curve at sigma-equispaced parameters via the monotone inverse
/// of the profile; intervals with |h| < plateau_tol are collapsed.  The output
/// lives on [0, L] with |h| = 1 on every interval and reproduces the same
/// geometric path.  out_intervals = 0 keeps the input interval count.
/// Throws ZeroLengthError when the curve has zero length.
ControlCurve unit_speed_reparam(const ChartModel& model, const ControlCurve& curve,
                                int out_intervals = 0, double plateau_tol = 1e-12);

}  // namespace srkit
