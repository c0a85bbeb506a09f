#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "srkit/flow.hpp"
#include "srkit/model.hpp"
#include "srkit/solver.hpp"
#include "srkit/types.hpp"

namespace srkit {

/// Parameterized hypersurface patch u -> x(u), u ranging over an (n-1)-box.
struct HypersurfaceParam {
    std::function<Vec(const Vec&)> x;
    Vec u_lo, u_hi;

    int udim() const { return static_cast<int>(u_lo.size()); }
};

struct WavefrontOpts {
    int nt = 20;              ///< intervals along the flow time
    std::vector<int> nu;      ///< intervals per surface parameter (empty = 10 each)
    IntegrateOpts integrate;  ///< per-sample geodesic integration
    int threads = 0;
};

/// Sampled wavefront map F(t, u) = pi o Phi(t, x(u)) together with the unit
/// conormal covector field lambda on the surface and along the flow.
struct WavefrontChart {
    ChartModel model;
    HypersurfaceParam surface;
    double t0 = 0.0, t1 = 0.0;
    int nt = 0;
    std::vector<int> nu;
    IntegrateOpts integrate;

    Mat base;     ///< (#u) x n surface points x(u)
    Mat lambda0;  ///< (#u) x n covector field on the surface (sign-continuous)
    Mat F;        ///< (#samples) x n flowed positions, sample = it * #u + iu
    Mat P;        ///< (#samples) x n flowed momenta (= lambda at the flowed points)
    std::vector<Mat> dF;  ///< per-sample Jacobian wrt (t, u), n x n
    Vec det_dF;
    Vec cond_dF;

    int udim() const { return surface.udim(); }
    int u_count() const;
    int t_count() const { return nt + 1; }
    int sample_count() const { return t_count() * u_count(); }
    int flat_index(int it, int iu) const { return it * u_count() + iu; }
    double t_node(int it) const { return t0 + (t1 - t0) * it / nt; }
    double t_step() const { return (t1 - t0) / nt; }
    double u_step(int d) const { return (surface.u_hi[d] - surface.u_lo[d]) / nu[static_cast<size_t>(d)]; }
    Vec u_node(int iu) const;
    int nearest_sample(const Vec& x) const;

    /// Unit conormal at an off-grid parameter value; sign matched to sign_ref.
    Vec lambda_at(const Vec& u, const Vec& sign_ref) const;
    /// Off-grid evaluation of F (fresh geodesic integration).
    Vec eval_F(double t, const Vec& u, Vec* p_out = nullptr) const;
};

WavefrontChart build_wavefront(const ChartModel& model, const HypersurfaceParam& surface,
                               const Vec& seed_covector, double t0, double t1,
                               const WavefrontOpts& opts = {});

struct CalibrationReport {
    double max_form_residual = 0.0;  ///< max over samples of |dtau - lambda|_2
    double max_norm_residual = 0.0;  ///< max over samples of |sum_i (dtau . X_i)^2 - 1|
    double min_abs_det_dF = 0.0;
};

/// Numerically inverts F on the grid and compares dtau with the transported
/// covector field.  Throws SingularJacobianError (listing the offending
/// samples) when dF degenerates anywhere on the grid.
CalibrationReport calibration_check(const WavefrontChart& chart);

/// Local inversion of the wavefront map: tau/u coordinates of a chart point.
struct ChartInverse {
    double tau = 0.0;
    Vec u;
    double residual = 0.0;  ///< |F(tau, u) - x| after refinement
};

/// Nearest-sample initialization plus frozen-Jacobian Newton refinement.
/// Returns nullopt when x lies outside the covered tube (no convergence).
std::optional<ChartInverse> invert_chart(const WavefrontChart& chart, const Vec& x,
                                         int max_newton = 12, double tol = 1e-12);

struct CertificateOpts {
    double calibration_threshold = 1e-3;
    double oracle_tol = 1e-4;  ///< relative length tolerance for the oracle part
    double u_radius = 0.0;     ///< surface patch half-width (0 = derived from epsilon)
    WavefrontOpts wavefront;
    DirectOpts oracle;
};

struct MinimalityCertificate {
    std::string verdict;  ///< "certified-at-tolerance" | "inconclusive"
    double min_abs_det_dF = std::numeric_limits<double>::quiet_NaN();
    double calibration_residual = std::numeric_limits<double>::quiet_NaN();
    double oracle_gap = std::numeric_limits<double>::quiet_NaN();
    double epsilon = 0.0;
    bool point_source = false;  ///< wavefront parts skipped, oracle only
    std::string detail;

    bool certified() const { return verdict == "certified-at-tolerance"; }
};

/// Empirical local-minimality certificate for the unit-speed geodesic segment
/// of arclength epsilon issued from (geodesic.q0, geodesic.p0) orthogonally
/// to P: nonsingular wavefront chart, calibration residual, and a direct
/// minimization oracle searching for shorter competitors.  Never a proof.
MinimalityCertificate minimality_certificate(const ChartModel& model, const SubmanifoldSpec& P,
                                             const BvpSolution& geodesic, double epsilon,
                                             const CertificateOpts& opts = {});

}  // namespace srkit
