#pragma once

// Endpoint-map machinery along a fixed control curve: the control chart
// (curve <-> frame coefficients), the fundamental solution of the linearized
// flow, the endpoint-differential Gramian with its abnormality verdict, and
// the adjoint (characteristic) system.

#include <string>
#include <vector>

#include "srkit/model.hpp"
#include "srkit/types.hpp"

namespace srkit {

/// Piecewise-constant frame coefficients h on a uniform grid over [a, b],
/// anchored at q0.  Row j of `h` holds all n coefficients on interval j;
/// the curve is horizontal when rows m..n-1 vanish.
struct ControlCurve {
    double a = 0.0, b = 1.0;
    Vec q0;
    Mat h;  ///< N x n
    std::string model;

    int intervals() const { return static_cast<int>(h.rows()); }
    double dt() const { return (b - a) / intervals(); }
    double max_complement(int m) const {
        return (h.cols() > m) ? h.rightCols(h.cols() - m).cwiseAbs().maxCoeff() : 0.0;
    }
    bool is_horizontal(int m, double tol = 1e-12) const { return max_complement(m) <= tol; }
};

/// Integrate dq/dt = sum_i h_i(t) X_i(q) from q0; nodes at the control grid.
/// `substeps` RK4 steps per interval.  Domain-box exits give a partial
/// trajectory with `exit` set.
Trajectory controls_to_curve(const ChartModel& model, const ControlCurve& curve, int substeps = 1);

/// Inverse chart map: per-interval h solving frame(q_mid) h = (q_{j+1}-q_j)/dt
/// at the interval midpoint.  Requires a uniform-grid trajectory.
ControlCurve curve_to_controls(const ChartModel& model, const Trajectory& traj);

/// Transition operators Phi_j of the linearized flow dv/dt = (dXtilde/dq) v
/// along the control curve, with inverses and condition numbers per node.
struct FundamentalSolution {
    std::vector<double> t;  ///< N+1 nodes
    Mat q;                  ///< (N+1) x n curve nodes
    std::vector<Mat> Phi, PhiInv;
    Vec cond;               ///< condition number of Phi_j per node
};
FundamentalSolution fundamental_solution(const ChartModel& model, const ControlCurve& curve,
                                         int substeps = 1);

/// First-order endpoint change predicted by the variation-of-constants
/// formula for a horizontal perturbation dw (N x m rows per interval):
///   Phi_b * sum_j trapz(Phi_s^{-1} X(gamma_s)) dw_j.
Vec endpoint_differential_apply(const ChartModel& model, const FundamentalSolution& fs,
                                const Mat& dw);

struct GramianOpts {
    double rank_tol_factor = 1e3;  ///< threshold = max(n, nodes) * eps * sigma_1 * factor
    int substeps = 1;
    double char_tol = 1e-8;        ///< reporting tolerance for characteristic violation
};

/// Rank analysis of the endpoint differential via the controllability Gramian
/// G = int Phi_s^{-1} X X^T Phi_s^{-T} ds (trapezoid on the control grid).
struct AbnormalReport {
    Mat gramian;
    Vec singular_values;   ///< descending
    int rank = 0;
    double threshold = 0;  ///< singular-value cutoff used
    Mat seeds;             ///< (n-rank) x n rows: characteristic seeds eta(b), unit norm
    Vec max_violations;    ///< per seed: max_t max_i |eta(t) . X_i(gamma(t))|
    std::string verdict;   ///< "regular" (rank n) or "abnormal"
};
AbnormalReport endpoint_differential_gramian(const ChartModel& model, const ControlCurve& curve,
                                             const GramianOpts& opts = {});

enum class AdjointDirection { Forward, Backward };

/// Integrate the adjoint system d eta/dt = -(dXtilde/dq)^T eta along the
/// curve.  Forward: eta0 = eta(a); backward: eta0 = eta(b).  Returns the
/// (N+1) x n covector path in forward time order.
Mat adjoint_integrate(const ChartModel& model, const ControlCurve& curve, const Vec& eta0,
                      AdjointDirection direction = AdjointDirection::Forward, int substeps = 1);

/// Transport of a tangent vector by the linearized flow, dv/dt = (dXtilde/dq) v
/// (used to cross-check the adjoint pairing <eta(t), v(t)> = const).
Mat fundamental_field(const ChartModel& model, const ControlCurve& curve, const Vec& v0,
                      int substeps = 1);

struct CharacteristicResult {
    bool characteristic = false;
    double max_violation = 0.0;
    bool zero_input = false;  ///< eta0 = 0 is flagged, not treated as characteristic
};
/// Does eta(a) = eta0 generate a characteristic (annihilates the horizontal
/// frame along the whole curve within tol)?
CharacteristicResult characteristic_test(const ChartModel& model, const ControlCurve& curve,
                                         const Vec& eta0, double tol = 1e-8);

}  // namespace srkit
