#pragma once

// Normal-geodesic machinery: the sub-Riemannian kinetic Hamiltonian
// H(q,p) = 1/2 sum_{i<=m} (p . X_i(q))^2, its Hamilton equations, geodesic
// integration (adaptive or fixed-step), the flow linearization (variational
// equations), and the lift-consistency residual.

#include <cstdint>
#include <optional>
#include <vector>

#include "srkit/model.hpp"
#include "srkit/types.hpp"

namespace srkit {

struct IntegrateOpts {
    enum class Mode { Adaptive, FixedStep };
    Mode mode = Mode::Adaptive;
    int fixed_steps = 1000;   ///< RK4 steps in FixedStep mode (every node is output)
    double abs_tol = 1e-10;   ///< adaptive tolerances
    double rel_tol = 1e-10;
    int output_nodes = 100;   ///< adaptive mode: uniform output intervals
    std::optional<std::vector<double>> output_grid;  ///< adaptive mode: explicit grid
    double h_init = 0.0;
    std::int64_t max_steps = 2000000;
    std::optional<double> h_drift_bound;  ///< post-hoc energy-drift check if set
};

/// H(q,p) = 1/2 sum_{i<=m} (p . X_i(q))^2.
double hamiltonian(const ChartModel& model, const Vec& q, const Vec& p, double t = 0.0);

/// Frame coefficients of the geodesic velocity: u_i = p . X_i(q), i <= m.
Vec horizontal_controls(const ChartModel& model, const Vec& q, const Vec& p, double t = 0.0);

/// Right-hand side of the Hamilton equations:
///   dq/dt =  sum u_i X_i,      dp/dt = -sum u_i (dX_i/dq)^T p.
void hamilton_rhs(const ChartModel& model, const Vec& q, const Vec& p, Vec& dq, Vec& dp,
                  double t = 0.0);

/// Integrate the normal geodesic with initial covector p0 over [a, b].
/// Domain-box exits return a partial trajectory with the `exit` field set;
/// integrator breakdown throws StepFailureError.
Trajectory integrate_geodesic(const ChartModel& model, const Vec& q0, const Vec& p0, double a,
                              double b, const IntegrateOpts& opts = {});

struct FlowLinearization {
    Mat J;           ///< 2n x 2n sensitivity d(q(b), p(b)) / d(q0, p0)
    PhaseState end;  ///< state at b
    /// convenience: the n x n block dq(b)/dp0
    Mat dq_dp0() const { return J.block(0, J.cols() / 2, J.rows() / 2, J.cols() / 2); }
};

/// Variational (linearized-flow) integration along the geodesic from (q0, p0).
FlowLinearization flow_linearization(const ChartModel& model, const Vec& q0, const Vec& p0,
                                     double a, double b, const IntegrateOpts& opts = {});

/// Lift-consistency residual: max over nodes and i <= m of
/// |p . X_i - g(v, X_i)| where v is the stored node velocity.  Near zero for
/// genuine normal-geodesic trajectories; O(|p . X_i|) for inconsistent data.
double lift_residual(const ChartModel& model, const Trajectory& traj);

}  // namespace srkit
