#include "srkit/endpoint.hpp"

#include <cmath>
#include <sstream>

#include "srkit/errors.hpp"
#include "srkit/rk.hpp"

namespace srkit {

namespace {

/// dXtilde/dq = sum_i h_i dX_i/dq at q for one interval's coefficients.
Mat xtilde_jacobian(const ChartModel& model, const Vec& q, const Vec& h, double t) {
    Mat A = Mat::Zero(model.n, model.n);
    for (int i = 0; i < model.n; ++i)
        if (h[i] != 0.0) A.noalias() += h[i] * field_jacobian(model, q, i, t);
    return A;
}

/// Xtilde(q) = sum_i h_i X_i(q) over all n fields.
Vec xtilde(const ChartModel& model, const Vec& q, const Vec& h, double t) {
    Vec v = model.frame(q, t) * h.head(model.m);
    if (model.k() > 0) v.noalias() += model.complement(q, t) * h.tail(model.k());
    return v;
}

void require_nonempty(const ControlCurve& c) {
    if (c.intervals() < 1) throw ConfigError("control curve has no intervals");
    if (!(c.b > c.a)) throw ConfigError("control curve needs b > a");
}

/// Walk the control grid with RK4 substeps.  `rhs(j)` yields the autonomous
/// RHS valid on interval j; `record(j, t_j, y_j)` is called at every node
/// 0..N.  Returns false (with *exit filled) if the q-part leaves the box.
template <class MakeRhs, class Record>
bool walk_intervals(const ChartModel& model, const ControlCurve& c, const Vec& y0, int substeps,
                    MakeRhs&& make_rhs, Record&& record, std::optional<ChartExit>* exit_out) {
    const double dt = c.dt();
    const int N = c.intervals(), n = model.n;
    std::function<bool(const Vec&)> admissible;
    const std::function<bool(const Vec&)>* adm_ptr = nullptr;
    if (model.domain_box) {
        const Box& box = *model.domain_box;
        admissible = [&box, n](const Vec& y) { return box.contains(y.head(n)); };
        adm_ptr = &admissible;
    }
    Vec y = y0;
    record(0, c.a, y);
    for (int j = 0; j < N; ++j) {
        auto rhs = make_rhs(j);
        double t0 = c.a + j * dt;
        auto st = integrate_rk4(rhs, t0, y, t0 + dt, substeps, [](int, double, const Vec&) {},
                                adm_ptr);
        if (!st.completed) {
            if (exit_out && st.t_event)
                *exit_out = ChartExit{*st.t_event, st.y_event.head(n)};
            record(j + 1, st.t_end, st.y_end);  // boundary state as final node
            return false;
        }
        y = std::move(st.y_end);
        record(j + 1, t0 + dt, y);
    }
    return true;
}

}  // namespace

Trajectory controls_to_curve(const ChartModel& model, const ControlCurve& curve, int substeps) {
    require_nonempty(curve);
    if (curve.h.cols() != model.n) throw ConfigError("control curve has wrong coefficient arity");
    if (curve.q0.size() != model.n) throw ConfigError("control curve base point dimension mismatch");
    check_in_chart(model, curve.q0);

    const int n = model.n;
    Trajectory traj;
    traj.model = model.name;
    traj.interp_order = 4;

    std::vector<double> ts;
    std::vector<Vec> qs;
    auto make_rhs = [&](int j) {
        Vec h = curve.h.row(j).transpose();
        return [&model, h](double t, const Vec& y, Vec& dy) { dy = xtilde(model, y, h, t); };
    };
    walk_intervals(model, curve, curve.q0, std::max(1, substeps), make_rhs,
                   [&](int, double t, const Vec& y) {
                       ts.push_back(t);
                       qs.push_back(y);
                   },
                   &traj.exit);

    const int N = static_cast<int>(ts.size());
    traj.t = std::move(ts);
    traj.q.resize(N, n);
    for (int j = 0; j < N; ++j) traj.q.row(j) = qs[static_cast<size_t>(j)].transpose();
    return traj;
}

ControlCurve curve_to_controls(const ChartModel& model, const Trajectory& traj) {
    const int N = traj.nodes() - 1;
    if (N < 1) throw ConfigError("trajectory needs at least two nodes");
    const double dt = (traj.t.back() - traj.t.front()) / N;
    for (int j = 0; j < N; ++j) {
        double step = traj.t[static_cast<size_t>(j) + 1] - traj.t[static_cast<size_t>(j)];
        if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw ConfigError("curve_to_controls requires a uniform grid");
    }
    ControlCurve c;
    c.a = traj.t.front();
    c.b = traj.t.back();
    c.q0 = traj.q.row(0).transpose();
    c.model = model.name;
    c.h.resize(N, model.n);
    for (int j = 0; j < N; ++j) {
        Vec qmid = 0.5 * (traj.q.row(j) + traj.q.row(j + 1)).transpose();
        Vec vel = (traj.q.row(j + 1) - traj.q.row(j)).transpose() / dt;
        Mat F = eval_frame(model, qmid, traj.t[static_cast<size_t>(j)] + 0.5 * dt);
        c.h.row(j) = F.partialPivLu().solve(vel).transpose();
    }
    return c;
}

FundamentalSolution fundamental_solution(const ChartModel& model, const ControlCurve& curve,
                                         int substeps) {
    require_nonempty(curve);
    check_in_chart(model, curve.q0);
    const int n = model.n, N = curve.intervals();

    FundamentalSolution fs;
    fs.t.reserve(static_cast<size_t>(N) + 1);
    fs.Phi.reserve(static_cast<size_t>(N) + 1);
    fs.PhiInv.reserve(static_cast<size_t>(N) + 1);
    fs.q.resize(N + 1, n);
    fs.cond.resize(N + 1);

    // state: [q; vec(Phi)]
    auto make_rhs = [&](int j) {
        Vec h = curve.h.row(j).transpose();
        return [&model, h, n](double t, const Vec& y, Vec& dy) {
            dy.resize(n + n * n);
            Vec q = y.head(n);
            dy.head(n) = xtilde(model, q, h, t);
            Mat A = xtilde_jacobian(model, q, h, t);
            Eigen::Map<const Mat> Phi(y.data() + n, n, n);
            Eigen::Map<Mat> dPhi(dy.data() + n, n, n);
            dPhi.noalias() = A * Phi;
        };
    };

    Vec y0(n + n * n);
    y0.head(n) = curve.q0;
    Eigen::Map<Mat>(y0.data() + n, n, n) = Mat::Identity(n, n);

    std::optional<ChartExit> exit;
    int filled = 0;
    bool ok = walk_intervals(model, curve, y0, std::max(1, substeps), make_rhs,
                             [&](int j, double t, const Vec& y) {
                                 fs.t.push_back(t);
                                 fs.q.row(j) = y.head(n).transpose();
                                 Mat Phi = Eigen::Map<const Mat>(y.data() + n, n, n);
                                 Eigen::JacobiSVD<Mat> svd(Phi, Eigen::ComputeThinU |
                                                                    Eigen::ComputeThinV);
                                 double smin = svd.singularValues()(n - 1);
                                 fs.cond[j] = (smin > 0) ? svd.singularValues()(0) / smin
                                                         : std::numeric_limits<double>::infinity();
                                 fs.Phi.push_back(Phi);
                                 fs.PhiInv.push_back(Phi.partialPivLu().inverse());
                                 filled = j + 1;
                             },
                             &exit);
    if (!ok) {
        std::stringstream ss;
        ss << "control curve left the domain box at t=" << (exit ? exit->t : curve.b);
        throw OutOfChartError(ss.str(), exit ? exit->q : curve.q0);
    }
    (void)filled;
    return fs;
}

Vec endpoint_differential_apply(const ChartModel& model, const FundamentalSolution& fs,
                                const Mat& dw) {
    const int n = model.n, m = model.m;
    const int N = static_cast<int>(fs.Phi.size()) - 1;
    if (dw.rows() != N || dw.cols() != m)
        throw ConfigError("perturbation must have one m-row per control interval");
    // per-node integrand A_j = Phi_j^{-1} X(gamma_j); per-interval trapezoid
    std::vector<Mat> A(static_cast<size_t>(N) + 1);
    for (int j = 0; j <= N; ++j)
        A[static_cast<size_t>(j)] =
            fs.PhiInv[static_cast<size_t>(j)] *
            eval_horizontal(model, fs.q.row(j).transpose(), fs.t[static_cast<size_t>(j)]);
    const double dt = (fs.t.back() - fs.t.front()) / N;
    Vec acc = Vec::Zero(n);
    for (int j = 0; j < N; ++j)
        acc.noalias() += 0.5 * dt *
                         ((A[static_cast<size_t>(j)] + A[static_cast<size_t>(j) + 1]) *
                          dw.row(j).transpose());
    return fs.Phi.back() * acc;
}

AbnormalReport endpoint_differential_gramian(const ChartModel& model, const ControlCurve& curve,
                                             const GramianOpts& opts) {
    const int n = model.n;
    FundamentalSolution fs = fundamental_solution(model, curve, opts.substeps);
    const int N = static_cast<int>(fs.Phi.size()) - 1;
    const double dt = (fs.t.back() - fs.t.front()) / N;

    AbnormalReport rep;
    rep.gramian = Mat::Zero(n, n);
    for (int j = 0; j <= N; ++j) {
        Mat A = fs.PhiInv[static_cast<size_t>(j)] *
                eval_horizontal(model, fs.q.row(j).transpose(), fs.t[static_cast<size_t>(j)]);
        double w = (j == 0 || j == N) ? 0.5 : 1.0;
        rep.gramian.noalias() += (w * dt) * (A * A.transpose());
    }

    Eigen::SelfAdjointEigenSolver<Mat> eig(rep.gramian);  // ascending eigenvalues
    rep.singular_values = eig.eigenvalues().reverse();
    double sigma1 = std::max(rep.singular_values(0), 0.0);
    rep.threshold = std::max(n, N + 1) * std::numeric_limits<double>::epsilon() * sigma1 *
                    opts.rank_tol_factor;
    rep.rank = 0;
    for (int i = 0; i < n; ++i)
        if (rep.singular_values(i) > rep.threshold) ++rep.rank;
    rep.verdict = (rep.rank == n) ? "regular" : "abnormal";

    const int knull = n - rep.rank;
    rep.seeds.resize(knull, n);
    rep.max_violations.resize(knull);
    Eigen::PartialPivLU<Mat> phiT(fs.Phi.back().transpose());
    for (int s = 0; s < knull; ++s) {
        Vec eta_a = eig.eigenvectors().col(s);  // ascending: first vectors span the null space
        Vec eta_b = phiT.solve(eta_a);
        eta_b.normalize();
        double scale = eta_b.cwiseAbs().maxCoeff();
        for (int c = 0; c < n; ++c) {
            if (std::abs(eta_b[c]) > 1e-12 * scale) {
                if (eta_b[c] < 0.0) eta_b = -eta_b;
                break;
            }
        }
        rep.seeds.row(s) = eta_b.transpose();
        // transported characteristic: eta(t_j) = Phi_j^{-T} eta(a)
        double viol = 0.0;
        for (int j = 0; j <= N; ++j) {
            Vec eta_j = fs.Phi[static_cast<size_t>(j)].transpose().partialPivLu().solve(eta_a);
            Vec pair = eval_horizontal(model, fs.q.row(j).transpose(),
                                       fs.t[static_cast<size_t>(j)])
                           .transpose() *
                       eta_j;
            viol = std::max(viol, pair.cwiseAbs().maxCoeff());
        }
        rep.max_violations[s] = viol;
    }
    return rep;
}

Mat adjoint_integrate(const ChartModel& model, const ControlCurve& curve, const Vec& eta0,
                      AdjointDirection direction, int substeps) {
    require_nonempty(curve);
    const int n = model.n, N = curve.intervals();
    if (eta0.size() != n) throw ConfigError("adjoint seed dimension mismatch");
    substeps = std::max(1, substeps);
    const double dt = curve.dt();

    // forward pass for the base curve (needed as initial state for backward)
    Trajectory base = controls_to_curve(model, curve, substeps);
    if (base.exit) throw OutOfChartError("control curve left the domain box", base.exit->q);

    Mat path(N + 1, n);
    auto rhs_for = [&](int j) {
        Vec h = curve.h.row(j).transpose();
        return [&model, h, n](double t, const Vec& y, Vec& dy) {
            dy.resize(2 * n);
            Vec q = y.head(n), eta = y.tail(n);
            dy.head(n) = xtilde(model, q, h, t);
            dy.tail(n) = -xtilde_jacobian(model, q, h, t).transpose() * eta;
        };
    };

    if (direction == AdjointDirection::Forward) {
        Vec y(2 * n);
        y << curve.q0, eta0;
        path.row(0) = eta0.transpose();
        for (int j = 0; j < N; ++j) {
            double t0 = curve.a + j * dt;
            auto st = integrate_rk4(rhs_for(j), t0, y, t0 + dt, substeps,
                                    [](int, double, const Vec&) {});
            y = std::move(st.y_end);
            path.row(j + 1) = y.tail(n).transpose();
        }
    } else {
        Vec y(2 * n);
        y << base.q.row(N).transpose(), eta0;
        path.row(N) = eta0.transpose();
        for (int j = N - 1; j >= 0; --j) {
            double t1 = curve.a + (j + 1) * dt;
            auto st = integrate_rk4(rhs_for(j), t1, y, t1 - dt, substeps,
                                    [](int, double, const Vec&) {});
            y = std::move(st.y_end);
            path.row(j) = y.tail(n).transpose();
        }
    }
    return path;
}

Mat fundamental_field(const ChartModel& model, const ControlCurve& curve, const Vec& v0,
                      int substeps) {
    require_nonempty(curve);
    const int n = model.n, N = curve.intervals();
    if (v0.size() != n) throw ConfigError("field seed dimension mismatch");
    substeps = std::max(1, substeps);
    const double dt = curve.dt();

    Mat path(N + 1, n);
    Vec y(2 * n);
    y << curve.q0, v0;
    path.row(0) = v0.transpose();
    for (int j = 0; j < N; ++j) {
        Vec h = curve.h.row(j).transpose();
        auto rhs = [&model, h, n](double t, const Vec& yy, Vec& dy) {
            dy.resize(2 * n);
            Vec q = yy.head(n), v = yy.tail(n);
            dy.head(n) = xtilde(model, q, h, t);
            dy.tail(n) = xtilde_jacobian(model, q, h, t) * v;
        };
        double t0 = curve.a + j * dt;
        auto st = integrate_rk4(rhs, t0, y, t0 + dt, substeps, [](int, double, const Vec&) {});
        y = std::move(st.y_end);
        path.row(j + 1) = y.tail(n).transpose();
    }
    return path;
}

CharacteristicResult characteristic_test(const ChartModel& model, const ControlCurve& curve,
                                         const Vec& eta0, double tol) {
    CharacteristicResult res;
    if (eta0.cwiseAbs().maxCoeff() == 0.0) {
        res.zero_input = true;
        res.characteristic = false;
        return res;
    }
    Mat path = adjoint_integrate(model, curve, eta0, AdjointDirection::Forward);
    Trajectory base = controls_to_curve(model, curve);
    double viol = 0.0;
    for (int j = 0; j < path.rows(); ++j) {
        Vec pair = eval_horizontal(model, base.q.row(j).transpose(),
                                   base.t[static_cast<size_t>(j)])
                       .transpose() *
                   path.row(j).transpose();
        viol = std::max(viol, pair.cwiseAbs().maxCoeff());
    }
    res.max_violation = viol;
    res.characteristic = viol <= tol;
    return res;
}

}  // namespace srkit
