#include "srkit/flow.hpp"

#include <cmath>
#include <sstream>

#include "srkit/errors.hpp"
#include "srkit/rk.hpp"

namespace srkit {

double hamiltonian(const ChartModel& model, const Vec& q, const Vec& p, double t) {
    Mat F = model.frame(q, t);
    return 0.5 * (F.transpose() * p).squaredNorm();
}

Vec horizontal_controls(const ChartModel& model, const Vec& q, const Vec& p, double t) {
    return model.frame(q, t).transpose() * p;
}

void hamilton_rhs(const ChartModel& model, const Vec& q, const Vec& p, Vec& dq, Vec& dp,
                  double t) {
    Mat F = model.frame(q, t);       // n x m
    Vec u = F.transpose() * p;       // controls
    dq = F * u;
    dp = Vec::Zero(model.n);
    for (int i = 0; i < model.m; ++i)
        dp.noalias() -= u[i] * (field_jacobian(model, q, i, t).transpose() * p);
}

namespace {

/// Shared driver: integrates y' = f over [a,b] against the model's domain box,
/// records nodes through `record`, throws on step failure.
template <class F, class Record>
void run_integration(const ChartModel& model, F&& f, double a, double b, const Vec& y0,
                     const IntegrateOpts& opts, int qdim_offset, Record&& record,
                     std::optional<ChartExit>* exit_out) {
    std::function<bool(const Vec&)> admissible;
    const std::function<bool(const Vec&)>* adm_ptr = nullptr;
    if (model.domain_box) {
        const Box& box = *model.domain_box;
        int n = model.n, off = qdim_offset;
        admissible = [&box, n, off](const Vec& y) { return box.contains(y.segment(off, n)); };
        adm_ptr = &admissible;
    }

    IntegrationStatus st;
    if (opts.mode == IntegrateOpts::Mode::FixedStep) {
        st = integrate_rk4(f, a, y0, b, opts.fixed_steps,
                           [&](int, double t, const Vec& y) { record(t, y); }, adm_ptr);
    } else {
        std::vector<double> grid =
            opts.output_grid ? *opts.output_grid : uniform_grid(a, b, std::max(1, opts.output_nodes));
        AdaptiveOpts aopts;
        aopts.abs_tol = opts.abs_tol;
        aopts.rel_tol = opts.rel_tol;
        aopts.h_init = opts.h_init;
        aopts.max_steps = opts.max_steps;
        st = integrate_dp54(f, a, y0, b, grid, aopts,
                            [&](size_t, double t, const Vec& y) { record(t, y); }, adm_ptr);
    }
    if (st.step_failure) {
        std::stringstream ss;
        ss << "integration from t=" << a << " stalled at t=" << st.t_end
           << " (step underflow or step budget exhausted)";
        throw StepFailureError(ss.str(), st.t_end);
    }
    if (!st.completed && st.t_event) {
        // partial trajectory: append the located boundary state
        record(*st.t_event, st.y_event);
        if (exit_out) *exit_out = ChartExit{*st.t_event, st.y_event.segment(qdim_offset, model.n)};
    }
}

}  // namespace

Trajectory integrate_geodesic(const ChartModel& model, const Vec& q0, const Vec& p0, double a,
                              double b, const IntegrateOpts& opts) {
    const int n = model.n;
    if (q0.size() != n || p0.size() != n) throw ConfigError("q0/p0 dimension mismatch");
    check_in_chart(model, q0);

    Trajectory traj;
    traj.model = model.name;
    traj.interp_order = (opts.mode == IntegrateOpts::Mode::FixedStep) ? 4 : 5;

    auto f = [&](double t, const Vec& y, Vec& dy) {
        dy.resize(2 * n);
        Vec dq(n), dp(n);
        Vec q = y.head(n), p = y.tail(n);
        hamilton_rhs(model, q, p, dq, dp, t);
        dy.head(n) = dq;
        dy.tail(n) = dp;
    };

    std::vector<double> ts;
    std::vector<Vec> qs, ps, vs;
    std::vector<double> Hs;
    auto record = [&](double t, const Vec& y) {
        Vec q = y.head(n), p = y.tail(n);
        ts.push_back(t);
        qs.push_back(q);
        ps.push_back(p);
        Mat F = model.frame(q, t);
        Vec u = F.transpose() * p;
        vs.push_back(F * u);
        Hs.push_back(0.5 * u.squaredNorm());
    };

    if (a == b) {
        Vec y0(2 * n);
        y0 << q0, p0;
        record(a, y0);
    } else {
        Vec y0(2 * n);
        y0 << q0, p0;
        run_integration(model, f, a, b, y0, opts, 0, record, &traj.exit);
    }

    const int N = static_cast<int>(ts.size());
    traj.t = std::move(ts);
    traj.q.resize(N, n);
    traj.p.resize(N, n);
    traj.v.resize(N, n);
    for (int j = 0; j < N; ++j) {
        traj.q.row(j) = qs[static_cast<size_t>(j)].transpose();
        traj.p.row(j) = ps[static_cast<size_t>(j)].transpose();
        traj.v.row(j) = vs[static_cast<size_t>(j)].transpose();
    }
    traj.H = std::move(Hs);

    if (opts.h_drift_bound && traj.energy_drift() > *opts.h_drift_bound) {
        std::stringstream ss;
        ss << "Hamiltonian drift " << traj.energy_drift() << " exceeds configured bound "
           << *opts.h_drift_bound;
        throw StepFailureError(ss.str(), traj.t.back());
    }
    return traj;
}

namespace {

/// Variational matrix A(q,p) of the Hamilton equations, 2n x 2n:
///   A = [ d(dq)/dq  d(dq)/dp ]
///       [ d(dp)/dq  d(dp)/dp ]
Mat variational_matrix(const ChartModel& model, const Vec& q, const Vec& p, double t) {
    const int n = model.n;
    Mat A = Mat::Zero(2 * n, 2 * n);
    Mat F = model.frame(q, t);
    Vec u = F.transpose() * p;
    auto Aqq = A.block(0, 0, n, n);
    auto Aqp = A.block(0, n, n, n);
    auto Apq = A.block(n, 0, n, n);
    auto App = A.block(n, n, n, n);
    for (int i = 0; i < model.m; ++i) {
        Vec Xi = F.col(i);
        Mat Ji = field_jacobian(model, q, i, t);
        Vec ai = Ji.transpose() * p;
        Mat Hi = field_hessian_p(model, q, i, p, t);
        Aqq.noalias() += Xi * ai.transpose() + u[i] * Ji;
        Aqp.noalias() += Xi * Xi.transpose();
        Apq.noalias() -= ai * ai.transpose() + u[i] * Hi;
        App.noalias() -= ai * Xi.transpose() + u[i] * Ji.transpose();
    }
    return A;
}

}  // namespace

FlowLinearization flow_linearization(const ChartModel& model, const Vec& q0, const Vec& p0,
                                     double a, double b, const IntegrateOpts& opts) {
    const int n = model.n;
    if (q0.size() != n || p0.size() != n) throw ConfigError("q0/p0 dimension mismatch");
    check_in_chart(model, q0);
    const int nn = 2 * n;

    // state: [q; p; vec(J)] with J the 2n x 2n sensitivity, J(a) = I
    auto f = [&](double t, const Vec& y, Vec& dy) {
        dy.resize(nn + nn * nn);
        Vec q = y.head(n), p = y.segment(n, n);
        Vec dq(n), dp(n);
        hamilton_rhs(model, q, p, dq, dp, t);
        dy.head(n) = dq;
        dy.segment(n, n) = dp;
        Mat A = variational_matrix(model, q, p, t);
        Eigen::Map<const Mat> J(y.data() + nn, nn, nn);
        Eigen::Map<Mat> dJ(dy.data() + nn, nn, nn);
        dJ.noalias() = A * J;
    };

    Vec y0(nn + nn * nn);
    y0.head(n) = q0;
    y0.segment(n, n) = p0;
    Eigen::Map<Mat>(y0.data() + nn, nn, nn) = Mat::Identity(nn, nn);

    FlowLinearization out;
    if (a == b) {
        out.J = Mat::Identity(nn, nn);
        out.end = PhaseState{a, q0, p0};
        return out;
    }

    // only the final state matters; observe nothing in between
    IntegrateOpts o = opts;
    o.output_grid = std::vector<double>{a, b};
    Vec y_end;
    double t_end = a;
    std::optional<ChartExit> exit;
    run_integration(
        model, f, a, b, y0, o, 0,
        [&](double t, const Vec& y) {
            t_end = t;
            y_end = y;
        },
        &exit);
    if (exit) {
        std::stringstream ss;
        ss << "flow linearization left the domain box at t=" << exit->t;
        throw OutOfChartError(ss.str(), exit->q);
    }
    out.J = Eigen::Map<const Mat>(y_end.data() + nn, nn, nn);
    out.end = PhaseState{t_end, y_end.head(n), y_end.segment(n, n)};
    return out;
}

double lift_residual(const ChartModel& model, const Trajectory& traj) {
    if (!traj.has_momentum()) throw ConfigError("lift residual needs a momentum-carrying trajectory");
    if (traj.v.size() == 0) throw ConfigError("trajectory carries no node velocities");
    double res = 0.0;
    for (int j = 0; j < traj.nodes(); ++j) {
        Vec q = traj.q.row(j).transpose();
        Vec p = traj.p.row(j).transpose();
        Vec v = traj.v.row(j).transpose();
        Mat F = eval_frame(model, q, traj.t[static_cast<size_t>(j)]);
        Vec u = F.leftCols(model.m).transpose() * p;  // p . X_i
        Vec c = F.partialPivLu().solve(v);            // frame coefficients of v
        for (int i = 0; i < model.m; ++i) res = std::max(res, std::abs(u[i] - c[i]));
    }
    return res;
}

}  // namespace srkit
