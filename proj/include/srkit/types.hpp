#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace srkit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Axis-aligned chart validity box: coordinates are valid while lo <= q <= hi.
struct Box {
    Vec lo, hi;
    bool contains(const Vec& q) const {
        return (q.array() >= lo.array()).all() && (q.array() <= hi.array()).all();
    }
};

/// One node of a lifted curve in T*M coordinates.
struct PhaseState {
    double t = 0.0;
    Vec q;
    Vec p;
};

/// Reason a trajectory stopped before the end of its requested span.
struct ChartExit {
    double t = 0.0;  ///< exit time (located by bisection on the offending step)
    Vec q;           ///< state at the exit time
};

/// Sampled solution curve.  `p` may be empty (0x0) for configuration-only
/// curves (e.g. the output of controls_to_curve).  `v` holds the analytic
/// dq/dt evaluated at each node when the integrator knows it.
struct Trajectory {
    std::vector<double> t;  ///< grid, strictly increasing
    Mat q;                  ///< (#nodes) x n
    Mat p;                  ///< (#nodes) x n or empty
    Mat v;                  ///< (#nodes) x n node velocities, or empty
    std::vector<double> H;  ///< Hamiltonian per node (empty if no momentum)
    int interp_order = 4;   ///< interpolation/order tag of the producing scheme
    std::string model;      ///< producing model name
    std::optional<ChartExit> exit;  ///< set if the curve left the domain box

    int nodes() const { return static_cast<int>(t.size()); }
    bool has_momentum() const { return p.size() > 0; }
    PhaseState state(int j) const {
        PhaseState s;
        s.t = t[static_cast<size_t>(j)];
        s.q = q.row(j).transpose();
        if (has_momentum()) s.p = p.row(j).transpose();
        return s;
    }
    /// max_j |H_j - H_0|, 0 for momentum-free curves.
    double energy_drift() const {
        if (H.empty()) return 0.0;
        double d = 0.0;
        for (double h : H) d = std::max(d, std::abs(h - H.front()));
        return d;
    }
};

}  // namespace srkit
