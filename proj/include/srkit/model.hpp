#pragma once

// Chart-level description of a sub-Riemannian structure: a coordinate box, a
// horizontal frame X_1..X_m spanning the distribution, and complement fields
// X_{m+1}..X_n completing it to a basis of the tangent space.  The metric is
// the one making the declared frame orthonormal ("frame-orthonormal" mode);
// all builtin models use it.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "srkit/types.hpp"

namespace srkit {

enum class MetricMode { FrameOrthonormal };
enum class JacobianSource { Analytic, FiniteDifference };

struct ChartModel {
    std::string name;
    int n = 0;  ///< chart dimension
    int m = 0;  ///< distribution rank (horizontal fields)
    MetricMode metric_mode = MetricMode::FrameOrthonormal;
    JacobianSource jacobian_source = JacobianSource::FiniteDifference;
    double fd_step_rel = 1e-6;    ///< FD step relative to coordinate magnitude
    double fd_step_floor = 1e-8;  ///< FD step floor
    std::optional<Box> domain_box;

    // Evaluators keep a time argument for forward compatibility with
    // time-varying frames; builtin models ignore it.
    std::function<Mat(const Vec&, double)> frame;       ///< q -> n x m horizontal columns
    std::function<Mat(const Vec&, double)> complement;  ///< q -> n x (n-m) columns
    /// optional analytic Jacobian d(X_i)_r/dq_c (n x n), i over all n fields
    std::function<Mat(const Vec&, int, double)> jacobian;
    /// optional analytic p-contracted Hessian sum_r p_r d2(X_i)_r/dq_c dq_d
    std::function<Mat(const Vec&, int, const Vec&, double)> hessian_p;

    int k() const { return n - m; }
    bool in_chart(const Vec& q) const { return !domain_box || domain_box->contains(q); }
};

// --- builtin registry (closed, versioned) -----------------------------------
inline constexpr int kModelRegistryVersion = 1;
std::vector<std::string> builtin_model_names();
ChartModel make_model(const std::string& name);  ///< throws ConfigError on unknown name
ChartModel flat_model();
ChartModel heisenberg_model();
ChartModel martinet_model();

/// Copy of `base` restricted to the box [lo, hi].
ChartModel with_domain_box(ChartModel base, const Vec& lo, const Vec& hi);

// --- model definition files --------------------------------------------------
/// Load a model from a JSON definition file (see README for the schema).
/// Builtin names never go through this path.
ChartModel load_model_json(const std::string& path);
/// Same, from JSON text (used by tests).
ChartModel parse_model_json(const std::string& json_text);

// --- chart operations ---------------------------------------------------------
/// Throws OutOfChartError if q lies outside the model's domain box.
void check_in_chart(const ChartModel& model, const Vec& q);

/// Full frame [X_1..X_m | X_{m+1}..X_n] as an n x n matrix.  Validates chart
/// membership and numerical rank (smallest singular value > 1e-10 x largest);
/// throws OutOfChartError / DegenerateFrameError.
Mat eval_frame(const ChartModel& model, const Vec& q, double t = 0.0);

/// Horizontal columns only, no validation (integrator hot path).
Mat eval_horizontal(const ChartModel& model, const Vec& q, double t = 0.0);

/// Jacobians of the horizontal fields: m matrices d(X_i)/dq, analytic or
/// central-difference per the model's jacobian_source.
std::vector<Mat> frame_jacobian(const ChartModel& model, const Vec& q, double t = 0.0);

/// Jacobian of any single frame field (i in [0, n), complement included).
Mat field_jacobian(const ChartModel& model, const Vec& q, int i, double t = 0.0);

/// p-contracted Hessian sum_r p_r d2(X_i)_r/dq dq of field i (n x n, symmetric).
Mat field_hessian_p(const ChartModel& model, const Vec& q, int i, const Vec& p, double t = 0.0);

/// Annihilator coframe: k x n matrix whose rows span the annihilator of the
/// distribution, orthonormal w.r.t. the dual metric, Gram-Schmidt in row
/// order.  With sign_fixed the deterministic sign convention (first nonzero
/// component positive) is applied; multiplier recovery uses the smooth
/// unflipped variant.
Mat annihilator_coframe(const ChartModel& model, const Vec& q, double t = 0.0,
                        bool sign_fixed = true);

}  // namespace srkit
