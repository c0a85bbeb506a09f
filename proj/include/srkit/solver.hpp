#pragma once

// Geodesic boundary-value machinery: action/length functionals, damped-Newton
// shooting (point-to-point and submanifold-to-submanifold with transversal
// lift conditions), multiplier recovery, a direct-minimization oracle over
// discretized controls, and exponential-sphere sampling.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srkit/endpoint.hpp"
#include "srkit/flow.hpp"
#include "srkit/model.hpp"

namespace srkit {

// --- functionals --------------------------------------------------------------

/// Action of a horizontal control curve: 1/2 sum |h_j|^2 dt.
/// Throws NonHorizontalError when complement coefficients exceed tolerance.
double action(const ChartModel& model, const ControlCurve& curve, double horizontal_tol = 1e-10);
/// Action of a momentum-carrying trajectory: trapezoid of H over the grid.
double action(const ChartModel& model, const Trajectory& traj);
/// Length of a horizontal control curve: sum |h_j| dt.
double length(const ChartModel& model, const ControlCurve& curve, double horizontal_tol = 1e-10);
/// Length of a momentum-carrying trajectory: trapezoid of sqrt(2H).
double length(const ChartModel& model, const Trajectory& traj);

// --- boundary submanifolds ------------------------------------------------------

/// Boundary condition: a point, or a level set {G = 0} of codimension r with
/// an anchor point used for seeding (and for the upfront transversality check).
struct SubmanifoldSpec {
    enum class Kind { Point, LevelSet };
    Kind kind = Kind::Point;
    Vec point;  ///< Point: the point itself; LevelSet: anchor on/near {G=0}
    std::function<Vec(const Vec&)> G;
    std::function<Mat(const Vec&)> JG;  ///< optional analytic Jacobian (else FD)
    int codim = 0;

    static SubmanifoldSpec MakePoint(Vec q);
    static SubmanifoldSpec MakeLevelSet(std::function<Vec(const Vec&)> G, int codim, Vec anchor,
                                        std::function<Mat(const Vec&)> JG = nullptr);
};

/// Jacobian of G at q (analytic or central-difference).
Mat submanifold_jacobian(const SubmanifoldSpec& spec, const Vec& q);

/// Orthonormal basis of the tangent space at q: n x (n - codim) columns with
/// the deterministic sign convention (empty for points).
Mat tangent_basis(const SubmanifoldSpec& spec, const Vec& q, int n);

/// Gauss-Newton projection of q onto the level set {G = 0} (identity for
/// point specs).
Vec project_to_submanifold(const SubmanifoldSpec& spec, Vec q);

struct TransversalityCertificate {
    Vec q;
    int rank = 0;           ///< rank of [tangent basis | horizontal frame]
    double sigma_min = 0.0; ///< n-th singular value of that matrix
    bool ok = false;
};
/// Checks T_q S + D_q = T_q M.  Point specs pass trivially (classical
/// endpoint condition, no lift constraint at that end).
TransversalityCertificate transversality_certificate(const ChartModel& model,
                                                     const SubmanifoldSpec& spec, const Vec& q);

// --- boundary value solutions ----------------------------------------------------

struct BvpSolution {
    Vec q0, p0;
    Trajectory trajectory;
    Vec boundary_residuals;  ///< stacked residual vector at convergence
    Mat multiplier;          ///< (nodes) x k multiplier path along the solution
    int newton_iterations = 0;
    bool converged = false;
    double action = 0.0, length = 0.0;
    std::string abnormal_verdict;  ///< "regular"/"abnormal" for the solution curve
};

struct ShootOpts {
    int num_seeds = 32;           ///< random covector seeds on {H = 1/2}
    std::uint64_t seed = 12345;
    double newton_tol = 1e-9;     ///< residual norm for convergence
    int max_iterations = 50;
    double dedupe_radius = 1e-4;  ///< on p0 * (b-a)
    int max_solutions = 8;
    int threads = 1;
    IntegrateOpts integrate;      ///< inner integrations (tolerances, mode)
    int refine_nodes = 100;       ///< output grid of returned trajectories
};

/// Damped-Newton multistart shooting from q0 to q1.  Solutions sorted by
/// action; if nothing converges, the best attempt is returned tagged
/// unconverged.
std::vector<BvpSolution> shoot_point_to_point(const ChartModel& model, const Vec& q0,
                                              const Vec& q1, double a, double b,
                                              const ShootOpts& opts = {});

/// Shooting between submanifolds with transversal lift conditions
/// (p(a) annihilates T P, p(b) annihilates T Q).  Point/Point reduces exactly
/// to shoot_point_to_point.  Throws TransversalityError when a level-set
/// boundary fails transversality (at its anchor or at a candidate contact
/// point), with the offending point attached.
std::vector<BvpSolution> shoot_to_submanifolds(const ChartModel& model, const SubmanifoldSpec& P,
                                               const SubmanifoldSpec& Q, double a, double b,
                                               const ShootOpts& opts = {});

/// Multiplier path lambda(t) = -p(t) o [theta|_D1]^{-1} along a
/// momentum-carrying trajectory: per-node k x k solve against the smooth
/// (unflipped) coframe.  Returns (nodes) x k.
Mat recover_multiplier(const ChartModel& model, const Trajectory& traj);

// --- direct minimization oracle ---------------------------------------------------

struct DirectOpts {
    int intervals = 256;
    int starts = 3;
    std::uint64_t seed = 99;
    double endpoint_tol = 1e-9;
    int max_outer = 15;
    int max_lbfgs = 400;
    double w0 = 1e2, w_max = 1e8;  ///< penalty weight schedule
    int threads = 1;
};

struct DirectResult {
    ControlCurve controls;
    double action = 0.0, length = 0.0;
    double endpoint_residual = 0.0;
    bool converged = false;
};

/// Gradient-based minimization of the discretized action with an endpoint
/// penalty (weight schedule + multiplier update), exact discrete gradients,
/// L-BFGS inner solver, multistart.
DirectResult direct_minimize(const ChartModel& model, const Vec& q0, const Vec& q1, double a,
                             double b, const DirectOpts& opts = {});

/// Variant with the start point free on a level-set P (penalized start
/// constraint); used by minimality certificates.
DirectResult direct_minimize_from(const ChartModel& model, const SubmanifoldSpec& P,
                                  const Vec& q1, double a, double b, const DirectOpts& opts = {});

// --- exponential sphere sampling ---------------------------------------------------

struct BallOpts {
    std::uint64_t seed = 7;
    int threads = 1;
    IntegrateOpts integrate;
};

struct BallSample {
    Mat endpoints;  ///< rays x n
    Mat p0;         ///< rays x n sampled covectors (H = 1/2)
    Vec lengths;    ///< arclength reached (= radius unless the ray exits the chart)
    std::vector<char> exited;
};

/// Integrates unit-H geodesics over arclength = radius for covectors sampled
/// on {H = 1/2} (uniform sphere directions rescaled to unit H).
BallSample ball_sample(const ChartModel& model, const Vec& q0, double radius, int num_rays,
                       const BallOpts& opts = {});

}  // namespace srkit
