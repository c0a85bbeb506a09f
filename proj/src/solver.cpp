#include "srkit/solver.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <sstream>

#include "srkit/errors.hpp"
#include "srkit/parallel.hpp"
#include "srkit/rk.hpp"

namespace srkit {

// --- functionals -----------------------------------------------------------------

double action(const ChartModel& model, const ControlCurve& curve, double horizontal_tol) {
    double comp = curve.max_complement(model.m);
    if (comp > horizontal_tol) {
        std::stringstream ss;
        ss << "action of a non-horizontal curve (max complement coefficient " << comp << ")";
        throw NonHorizontalError(ss.str());
    }
    double acc = 0.0;
    for (int j = 0; j < curve.intervals(); ++j)
        acc += 0.5 * curve.h.row(j).head(model.m).squaredNorm() * curve.dt();
    return acc;
}

double action(const ChartModel&, const Trajectory& traj) {
    if (!traj.has_momentum()) throw ConfigError("trajectory action needs momenta");
    double acc = 0.0;
    for (int j = 0; j + 1 < traj.nodes(); ++j) {
        double dt = traj.t[static_cast<size_t>(j) + 1] - traj.t[static_cast<size_t>(j)];
        acc += 0.5 * (traj.H[static_cast<size_t>(j)] + traj.H[static_cast<size_t>(j) + 1]) * dt;
    }
    return acc;
}

double length(const ChartModel& model, const ControlCurve& curve, double horizontal_tol) {
    double comp = curve.max_complement(model.m);
    if (comp > horizontal_tol) {
        std::stringstream ss;
        ss << "length of a non-horizontal curve (max complement coefficient " << comp << ")";
        throw NonHorizontalError(ss.str());
    }
    double acc = 0.0;
    for (int j = 0; j < curve.intervals(); ++j)
        acc += curve.h.row(j).head(model.m).norm() * curve.dt();
    return acc;
}

double length(const ChartModel&, const Trajectory& traj) {
    if (!traj.has_momentum()) throw ConfigError("trajectory length needs momenta");
    double acc = 0.0;
    for (int j = 0; j + 1 < traj.nodes(); ++j) {
        double dt = traj.t[static_cast<size_t>(j) + 1] - traj.t[static_cast<size_t>(j)];
        double v0 = std::sqrt(std::max(0.0, 2.0 * traj.H[static_cast<size_t>(j)]));
        double v1 = std::sqrt(std::max(0.0, 2.0 * traj.H[static_cast<size_t>(j) + 1]));
        acc += 0.5 * (v0 + v1) * dt;
    }
    return acc;
}

// --- boundary submanifolds ----------------------------------------------------------

SubmanifoldSpec SubmanifoldSpec::MakePoint(Vec q) {
    SubmanifoldSpec s;
    s.kind = Kind::Point;
    s.point = std::move(q);
    return s;
}

SubmanifoldSpec SubmanifoldSpec::MakeLevelSet(std::function<Vec(const Vec&)> G, int codim,
                                              Vec anchor, std::function<Mat(const Vec&)> JG) {
    if (codim < 1) throw ConfigError("level-set submanifold needs codim >= 1");
    SubmanifoldSpec s;
    s.kind = Kind::LevelSet;
    s.G = std::move(G);
    s.JG = std::move(JG);
    s.codim = codim;
    s.point = std::move(anchor);
    return s;
}

Mat submanifold_jacobian(const SubmanifoldSpec& spec, const Vec& q) {
    if (spec.kind != SubmanifoldSpec::Kind::LevelSet)
        throw ConfigError("point submanifolds have no level-set Jacobian");
    if (spec.JG) return spec.JG(q);
    const int n = static_cast<int>(q.size());
    Mat J(spec.codim, n);
    Vec qp = q, qm = q;
    for (int d = 0; d < n; ++d) {
        double h = std::max(1e-8, 1e-6 * std::abs(q[d]));
        qp[d] = q[d] + h;
        qm[d] = q[d] - h;
        J.col(d) = (spec.G(qp) - spec.G(qm)) / (2.0 * h);
        qp[d] = q[d];
        qm[d] = q[d];
    }
    return J;
}

Mat tangent_basis(const SubmanifoldSpec& spec, const Vec& q, int n) {
    if (spec.kind == SubmanifoldSpec::Kind::Point) return Mat(n, 0);
    Mat JG = submanifold_jacobian(spec, q);  // r x n
    Eigen::JacobiSVD<Mat> svd(JG, Eigen::ComputeFullV);
    Mat B = svd.matrixV().rightCols(n - spec.codim);  // kernel basis, orthonormal
    for (int c = 0; c < B.cols(); ++c) {
        double scale = B.col(c).cwiseAbs().maxCoeff();
        for (int r = 0; r < n; ++r) {
            if (std::abs(B(r, c)) > 1e-12 * scale) {
                if (B(r, c) < 0.0) B.col(c) = -B.col(c);
                break;
            }
        }
    }
    return B;
}

TransversalityCertificate transversality_certificate(const ChartModel& model,
                                                     const SubmanifoldSpec& spec, const Vec& q) {
    TransversalityCertificate cert;
    cert.q = q;
    if (spec.kind == SubmanifoldSpec::Kind::Point) {
        // classical endpoint condition; no lift constraint to certify
        cert.rank = model.n;
        cert.sigma_min = 1.0;
        cert.ok = true;
        return cert;
    }
    const int n = model.n;
    Mat B = tangent_basis(spec, q, n);
    Mat M(n, B.cols() + model.m);
    M.leftCols(B.cols()) = B;
    M.rightCols(model.m) = eval_horizontal(model, q);
    Eigen::JacobiSVD<Mat> svd(M);
    double smax = svd.singularValues()(0);
    double thresh = std::max<double>(n, M.cols()) * std::numeric_limits<double>::epsilon() *
                    smax * 1e3;
    cert.rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > thresh) ++cert.rank;
    cert.rank = std::min(cert.rank, n);
    cert.sigma_min = svd.singularValues()(std::min<int>(n, svd.singularValues().size()) - 1);
    cert.ok = (cert.rank == n);
    return cert;
}

// --- shooting -----------------------------------------------------------------------

namespace {

/// Plain endpoint evaluation (q(b), p(b)); nullopt when the geodesic leaves
/// the chart.
std::optional<PhaseState> endpoint_state(const ChartModel& model, const Vec& q0, const Vec& p0,
                                         double a, double b, const IntegrateOpts& opts) {
    IntegrateOpts o = opts;
    o.output_grid = std::vector<double>{a, b};
    o.output_nodes = 1;
    Trajectory tr = integrate_geodesic(model, q0, p0, a, b, o);
    if (tr.exit) return std::nullopt;
    return tr.state(tr.nodes() - 1);
}

/// Covector seeds for multistart: the trivial seed p0 = 0 first, then random
/// unit-sphere directions rescaled to H = 1/2.
std::vector<Vec> covector_seeds(const ChartModel& model, const Vec& q0, int count,
                                std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> seeds;
    seeds.push_back(Vec::Zero(model.n));
    for (int s = 0; s < count; ++s) {
        for (int tries = 0; tries < 256; ++tries) {
            Vec xi(model.n);
            for (int i = 0; i < model.n; ++i) xi[i] = normal(eng);
            double nrm = xi.norm();
            if (nrm < 1e-12) continue;
            xi /= nrm;
            double H = hamiltonian(model, q0, xi);
            if (H < 1e-10) continue;  // annihilator direction, no geodesic
            seeds.push_back(xi / std::sqrt(2.0 * H));
            break;
        }
    }
    return seeds;
}

struct NewtonOutcome {
    Vec p0;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

/// Damped Newton on p0 -> q(b; q0, p0) - q1 with the variational Jacobian.
NewtonOutcome newton_point_shot(const ChartModel& model, const Vec& q0, const Vec& q1, double a,
                                double b, const Vec& p_seed, const ShootOpts& opts) {
    NewtonOutcome out;
    Vec p = p_seed;
    auto resid = [&](const Vec& pp) -> std::optional<Vec> {
        auto st = endpoint_state(model, q0, pp, a, b, opts.integrate);
        if (!st) return std::nullopt;
        return Vec(st->q - q1);
    };
    auto F0 = resid(p);
    if (!F0) return out;
    Vec F = *F0;
    out.p0 = p;
    out.residual = F.norm();
    for (int it = 0; it < opts.max_iterations; ++it) {
        if (F.norm() <= opts.newton_tol) {
            out.converged = true;
            out.iterations = it;
            out.p0 = p;
            out.residual = F.norm();
            return out;
        }
        Mat J;
        try {
            J = flow_linearization(model, q0, p, a, b, opts.integrate).dq_dp0();
        } catch (const Error&) {
            break;
        }
        Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-12);
        Vec delta = svd.solve(-F);
        double cap = 10.0 * (1.0 + p.norm());
        if (delta.norm() > cap) delta *= cap / delta.norm();

        double alpha = 1.0;
        bool stepped = false;
        while (alpha >= 1.0 / 1024.0) {
            Vec p_try = p + alpha * delta;
            auto Ft = resid(p_try);
            if (Ft && Ft->norm() <= (1.0 - 1e-4 * alpha) * F.norm()) {
                p = p_try;
                F = *Ft;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        out.iterations = it + 1;
        if (F.norm() < out.residual) {
            out.residual = F.norm();
            out.p0 = p;
        }
        if (!stepped) break;  // stalled
    }
    if (F.norm() <= opts.newton_tol) {
        out.converged = true;
        out.p0 = p;
        out.residual = F.norm();
    }
    return out;
}

/// Assemble the returned solution record from a converged (q0, p0).
BvpSolution finish_solution(const ChartModel& model, const Vec& q0, const Vec& p0, double a,
                            double b, const Vec& residuals, int iterations, bool converged,
                            const ShootOpts& opts) {
    BvpSolution sol;
    sol.q0 = q0;
    sol.p0 = p0;
    sol.boundary_residuals = residuals;
    sol.newton_iterations = iterations;
    sol.converged = converged;
    IntegrateOpts o = opts.integrate;
    o.output_grid.reset();
    o.output_nodes = std::max(2, opts.refine_nodes);
    sol.trajectory = integrate_geodesic(model, q0, p0, a, b, o);
    sol.action = action(model, sol.trajectory);
    sol.length = length(model, sol.trajectory);
    sol.multiplier = recover_multiplier(model, sol.trajectory);
    if (!sol.trajectory.exit) {
        ControlCurve cc = curve_to_controls(model, sol.trajectory);
        sol.abnormal_verdict = endpoint_differential_gramian(model, cc).verdict;
    }
    return sol;
}

}  // namespace

std::vector<BvpSolution> shoot_point_to_point(const ChartModel& model, const Vec& q0,
                                              const Vec& q1, double a, double b,
                                              const ShootOpts& opts) {
    if (q0.size() != model.n || q1.size() != model.n)
        throw ConfigError("shooting endpoints have wrong dimension");
    if (!(b > a)) throw ConfigError("shooting needs b > a");
    check_in_chart(model, q0);
    check_in_chart(model, q1);

    auto seeds = covector_seeds(model, q0, opts.num_seeds, opts.seed);
    std::vector<NewtonOutcome> outcomes(seeds.size());
    parallel_for(static_cast<int>(seeds.size()), opts.threads, [&](int i) {
        outcomes[static_cast<size_t>(i)] =
            newton_point_shot(model, q0, q1, a, b, seeds[static_cast<size_t>(i)], opts);
    });

    std::vector<BvpSolution> solutions;
    const double tspan = b - a;
    NewtonOutcome best;
    for (const auto& oc : outcomes) {
        if (oc.residual < best.residual) best = oc;
        if (!oc.converged) continue;
        bool dup = false;
        for (const auto& sol : solutions)
            if ((oc.p0 - sol.p0).norm() * tspan <= opts.dedupe_radius) {
                dup = true;
                break;
            }
        if (dup) continue;
        auto st = endpoint_state(model, q0, oc.p0, a, b, opts.integrate);
        Vec res = st ? Vec(st->q - q1) : Vec(Vec::Constant(model.n, 1e30));
        solutions.push_back(
            finish_solution(model, q0, oc.p0, a, b, res, oc.iterations, true, opts));
    }
    std::sort(solutions.begin(), solutions.end(),
              [](const BvpSolution& x, const BvpSolution& y) { return x.action < y.action; });
    if (static_cast<int>(solutions.size()) > opts.max_solutions)
        solutions.resize(static_cast<size_t>(opts.max_solutions));
    if (solutions.empty() && best.residual < std::numeric_limits<double>::infinity()) {
        auto st = endpoint_state(model, q0, best.p0, a, b, opts.integrate);
        Vec res = st ? Vec(st->q - q1) : Vec(Vec::Constant(model.n, 1e30));
        solutions.push_back(
            finish_solution(model, q0, best.p0, a, b, res, best.iterations, false, opts));
    }
    return solutions;
}

// --- submanifold shooting --------------------------------------------------------------

Vec project_to_submanifold(const SubmanifoldSpec& spec, Vec q) {
    if (spec.kind == SubmanifoldSpec::Kind::Point) return spec.point;
    for (int it = 0; it < 32; ++it) {
        Vec g = spec.G(q);
        if (g.norm() < 1e-12) break;
        Mat J = submanifold_jacobian(spec, q);
        Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-12);
        q -= svd.solve(g);
    }
    return q;
}

namespace {

struct SubShotProblem {
    const ChartModel* model;
    const SubmanifoldSpec *P, *Q;
    double a, b;
    const ShootOpts* opts;
    bool p_free;  ///< start point is a level-set variable

    int dim() const { return p_free ? 2 * model->n : model->n; }

    Vec unpack_q0(const Vec& x) const { return p_free ? Vec(x.head(model->n)) : P->point; }
    Vec unpack_p0(const Vec& x) const { return Vec(x.tail(model->n)); }

    /// Stacked boundary residual (size == dim()).
    std::optional<Vec> residual(const Vec& x) const {
        const int n = model->n;
        Vec q0 = unpack_q0(x), p0 = unpack_p0(x);
        if (!model->in_chart(q0)) return std::nullopt;
        auto st = endpoint_state(*model, q0, p0, a, b, opts->integrate);
        if (!st) return std::nullopt;
        Vec R(dim());
        int at = 0;
        if (p_free) {
            Vec gp = P->G(q0);
            R.segment(at, P->codim) = gp;
            at += P->codim;
            Mat BP = tangent_basis(*P, q0, n);
            R.segment(at, BP.cols()) = BP.transpose() * p0;
            at += static_cast<int>(BP.cols());
        }
        if (Q->kind == SubmanifoldSpec::Kind::Point) {
            R.segment(at, n) = st->q - Q->point;
            at += n;
        } else {
            Vec gq = Q->G(st->q);
            R.segment(at, Q->codim) = gq;
            at += Q->codim;
            Mat BQ = tangent_basis(*Q, st->q, n);
            R.segment(at, BQ.cols()) = BQ.transpose() * st->p;
            at += static_cast<int>(BQ.cols());
        }
        return R;
    }

    /// Central-difference Jacobian of the residual.
    std::optional<Mat> jacobian(const Vec& x) const {
        const int d = dim();
        Mat J(d, d);
        Vec xp = x, xm = x;
        for (int i = 0; i < d; ++i) {
            double h = 1e-6 * std::max(1.0, std::abs(x[i]));
            xp[i] = x[i] + h;
            xm[i] = x[i] - h;
            auto rp = residual(xp), rm = residual(xm);
            if (!rp || !rm) return std::nullopt;
            J.col(i) = (*rp - *rm) / (2.0 * h);
            xp[i] = x[i];
            xm[i] = x[i];
        }
        return J;
    }
};

}  // namespace

std::vector<BvpSolution> shoot_to_submanifolds(const ChartModel& model, const SubmanifoldSpec& P,
                                               const SubmanifoldSpec& Q, double a, double b,
                                               const ShootOpts& opts) {
    if (P.kind == SubmanifoldSpec::Kind::Point && Q.kind == SubmanifoldSpec::Kind::Point)
        return shoot_point_to_point(model, P.point, Q.point, a, b, opts);
    if (!(b > a)) throw ConfigError("shooting needs b > a");

    // upfront rejection of non-transversal level sets at their anchors
    for (const SubmanifoldSpec* spec : {&P, &Q}) {
        if (spec->kind != SubmanifoldSpec::Kind::LevelSet) continue;
        Vec anchor = project_to_submanifold(*spec, spec->point);
        auto cert = transversality_certificate(model, *spec, anchor);
        if (!cert.ok) {
            std::stringstream ss;
            ss << "boundary submanifold fails transversality to the distribution at ("
               << cert.q.transpose() << "): rank " << cert.rank << " < " << model.n;
            throw TransversalityError(ss.str(), cert.q, cert.sigma_min);
        }
    }

    SubShotProblem prob{&model, &P, &Q, a, b, &opts,
                        P.kind == SubmanifoldSpec::Kind::LevelSet};
    const int n = model.n;

    // seeds: start points on P (anchor + projected tangent jitter), covectors on {H=1/2}
    std::mt19937_64 eng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec anchor = prob.p_free ? project_to_submanifold(P, P.point) : P.point;
    std::vector<Vec> x_seeds;
    {
        auto p_seeds = covector_seeds(model, anchor, opts.num_seeds, opts.seed);
        for (size_t s = 0; s < p_seeds.size(); ++s) {
            Vec q0 = anchor;
            if (prob.p_free && s > 0) {
                Mat B = tangent_basis(P, anchor, n);
                Vec z(B.cols());
                for (int i = 0; i < z.size(); ++i) z[i] = 0.3 * normal(eng);
                q0 = project_to_submanifold(P, anchor + B * z);
            }
            Vec x(prob.dim());
            if (prob.p_free) x << q0, p_seeds[s];
            else x = p_seeds[s];
            x_seeds.push_back(x);
        }
    }

    struct Outcome {
        Vec x;
        Vec residual_vec;
        double residual = std::numeric_limits<double>::infinity();
        int iterations = 0;
        bool converged = false;
    };
    std::vector<Outcome> outcomes(x_seeds.size());

    parallel_for(static_cast<int>(x_seeds.size()), opts.threads, [&](int si) {
        Outcome& out = outcomes[static_cast<size_t>(si)];
        Vec x = x_seeds[static_cast<size_t>(si)];
        auto R0 = prob.residual(x);
        if (!R0) return;
        Vec R = *R0;
        out.x = x;
        out.residual_vec = R;
        out.residual = R.norm();
        for (int it = 0; it < opts.max_iterations; ++it) {
            if (R.norm() <= opts.newton_tol) break;
            auto J = prob.jacobian(x);
            if (!J) break;
            Eigen::JacobiSVD<Mat> svd(*J, Eigen::ComputeThinU | Eigen::ComputeThinV);
            svd.setThreshold(1e-12);
            Vec delta = svd.solve(-R);
            double cap = 10.0 * (1.0 + x.norm());
            if (delta.norm() > cap) delta *= cap / delta.norm();
            double alpha = 1.0;
            bool stepped = false;
            while (alpha >= 1.0 / 1024.0) {
                Vec x_try = x + alpha * delta;
                auto Rt = prob.residual(x_try);
                if (Rt && Rt->norm() <= (1.0 - 1e-4 * alpha) * R.norm()) {
                    x = x_try;
                    R = *Rt;
                    stepped = true;
                    break;
                }
                alpha *= 0.5;
            }
            out.iterations = it + 1;
            if (R.norm() < out.residual) {
                out.residual = R.norm();
                out.x = x;
                out.residual_vec = R;
            }
            if (!stepped) break;
        }
        out.converged = (out.residual <= opts.newton_tol);
    });

    std::vector<BvpSolution> solutions;
    Outcome best;
    const double tspan = b - a;
    for (const auto& oc : outcomes) {
        if (oc.residual < best.residual) best = oc;
        if (!oc.converged) continue;
        Vec q0 = prob.unpack_q0(oc.x), p0 = prob.unpack_p0(oc.x);
        bool dup = false;
        for (const auto& sol : solutions)
            if ((p0 - sol.p0).norm() * tspan + (q0 - sol.q0).norm() <= opts.dedupe_radius) {
                dup = true;
                break;
            }
        if (dup) continue;
        // transversality at the actual contact points
        auto stq = endpoint_state(model, q0, p0, a, b, opts.integrate);
        if (prob.p_free) {
            auto cert = transversality_certificate(model, P, q0);
            if (!cert.ok)
                throw TransversalityError("start submanifold non-transversal at contact point",
                                          cert.q, cert.sigma_min);
        }
        if (Q.kind == SubmanifoldSpec::Kind::LevelSet && stq) {
            auto cert = transversality_certificate(model, Q, stq->q);
            if (!cert.ok)
                throw TransversalityError("target submanifold non-transversal at contact point",
                                          cert.q, cert.sigma_min);
        }
        solutions.push_back(finish_solution(model, q0, p0, a, b, oc.residual_vec, oc.iterations,
                                            true, opts));
    }
    std::sort(solutions.begin(), solutions.end(),
              [](const BvpSolution& x, const BvpSolution& y) { return x.action < y.action; });
    if (static_cast<int>(solutions.size()) > opts.max_solutions)
        solutions.resize(static_cast<size_t>(opts.max_solutions));
    if (solutions.empty() && best.residual < std::numeric_limits<double>::infinity())
        solutions.push_back(finish_solution(model, prob.unpack_q0(best.x),
                                            prob.unpack_p0(best.x), a, b, best.residual_vec,
                                            best.iterations, false, opts));
    return solutions;
}

// --- multiplier recovery -----------------------------------------------------------------

Mat recover_multiplier(const ChartModel& model, const Trajectory& traj) {
    if (!traj.has_momentum()) throw ConfigError("multiplier recovery needs momenta");
    const int k = model.k();
    Mat lam(traj.nodes(), k);
    for (int j = 0; j < traj.nodes(); ++j) {
        double t = traj.t[static_cast<size_t>(j)];
        Vec q = traj.q.row(j).transpose();
        Vec p = traj.p.row(j).transpose();
        // smooth (unflipped) coframe: the sign convention is discontinuous
        // along curves and would break the multiplier path
        Mat theta = annihilator_coframe(model, q, t, /*sign_fixed=*/false);
        Mat C = model.complement(q, t);
        Mat M = theta * C;  // k x k pairing, invertible by construction
        lam.row(j) = (-(M.transpose().partialPivLu().solve(C.transpose() * p))).transpose();
    }
    return lam;
}

// --- direct minimization ------------------------------------------------------------------

namespace {

/// Forward RK4 sweep through the control grid with exact discrete tangents.
struct ForwardSweep {
    Mat qnodes;              ///< (N+1) x n
    std::vector<Mat> Dq;     ///< per-interval d q_{j+1} / d q_j     (n x n)
    std::vector<Mat> Du;     ///< per-interval d q_{j+1} / d u_j     (n x m)
};

void forward_sweep(const ChartModel& model, const Vec& q0, const Mat& u, double a, double b,
                   ForwardSweep& fw, bool want_tangents) {
    const int n = model.n, m = model.m, N = static_cast<int>(u.rows());
    const double dt = (b - a) / N;
    fw.qnodes.resize(N + 1, n);
    if (want_tangents) {
        fw.Dq.assign(static_cast<size_t>(N), Mat());
        fw.Du.assign(static_cast<size_t>(N), Mat());
    }
    Vec q = q0;
    fw.qnodes.row(0) = q.transpose();
    Mat I = Mat::Identity(n, n);
    for (int j = 0; j < N; ++j) {
        Vec uj = u.row(j).transpose();
        auto fA = [&](const Vec& y, Vec& k, Mat& A, Mat& B) {
            B = eval_horizontal(model, y);
            k = B * uj;
            A.setZero(n, n);
            for (int i = 0; i < m; ++i)
                if (uj[i] != 0.0) A.noalias() += uj[i] * field_jacobian(model, y, i);
        };
        Vec k1(n), k2(n), k3(n), k4(n);
        Mat A1, A2, A3, A4, B1, B2, B3, B4;
        fA(q, k1, A1, B1);
        Vec y2 = q + 0.5 * dt * k1;
        fA(y2, k2, A2, B2);
        Vec y3 = q + 0.5 * dt * k2;
        fA(y3, k3, A3, B3);
        Vec y4 = q + dt * k3;
        fA(y4, k4, A4, B4);
        Vec qn = q + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (want_tangents) {
            Mat Dk1q = A1, Dk1u = B1;
            Mat Dy2q = I + 0.5 * dt * Dk1q, Dy2u = 0.5 * dt * Dk1u;
            Mat Dk2q = A2 * Dy2q, Dk2u = A2 * Dy2u + B2;
            Mat Dy3q = I + 0.5 * dt * Dk2q, Dy3u = 0.5 * dt * Dk2u;
            Mat Dk3q = A3 * Dy3q, Dk3u = A3 * Dy3u + B3;
            Mat Dy4q = I + dt * Dk3q, Dy4u = dt * Dk3u;
            Mat Dk4q = A4 * Dy4q, Dk4u = A4 * Dy4u + B4;
            fw.Dq[static_cast<size_t>(j)] =
                I + (dt / 6.0) * (Dk1q + 2.0 * Dk2q + 2.0 * Dk3q + Dk4q);
            fw.Du[static_cast<size_t>(j)] = (dt / 6.0) * (Dk1u + 2.0 * Dk2u + 2.0 * Dk3u + Dk4u);
        }
        q = qn;
        fw.qnodes.row(j + 1) = q.transpose();
    }
}

/// Minimal L-BFGS (memory 10, Armijo backtracking).  fg(z, grad) -> value.
double lbfgs_minimize(const std::function<double(const Vec&, Vec&)>& fg, Vec& z, int max_iter,
                      double gtol) {
    const int mem = 10;
    std::deque<Vec> S, Y;
    std::deque<double> rho;
    Vec g(z.size()), g_new(z.size());
    double f = fg(z, g);
    for (int it = 0; it < max_iter; ++it) {
        if (g.cwiseAbs().maxCoeff() <= gtol) break;
        // two-loop recursion
        Vec d = -g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[static_cast<size_t>(i)] =
                rho[static_cast<size_t>(i)] * S[static_cast<size_t>(i)].dot(d);
            d -= alpha[static_cast<size_t>(i)] * Y[static_cast<size_t>(i)];
        }
        if (!S.empty()) {
            double gamma = S.back().dot(Y.back()) / Y.back().squaredNorm();
            d *= gamma;
        }
        for (size_t i = 0; i < S.size(); ++i) {
            double beta = rho[i] * Y[i].dot(d);
            d += (alpha[i] - beta) * S[i];
        }
        if (d.dot(g) >= 0.0) d = -g;  // safeguard: fall back to steepest descent

        double step = 1.0, f_new = f;
        bool ok = false;
        double gd = g.dot(d);
        for (int ls = 0; ls < 40; ++ls) {
            Vec z_try = z + step * d;
            f_new = fg(z_try, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * gd) {
                Vec s = step * d;
                Vec y = g_new - g;
                double sy = s.dot(y);
                if (sy > 1e-12 * s.norm() * y.norm()) {
                    S.push_back(s);
                    Y.push_back(y);
                    rho.push_back(1.0 / sy);
                    if (static_cast<int>(S.size()) > mem) {
                        S.pop_front();
                        Y.pop_front();
                        rho.pop_front();
                    }
                }
                z = z_try;
                g = g_new;
                f = f_new;
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;  // no progress at the smallest step
    }
    return f;
}

struct DirectProblem {
    const ChartModel* model;
    const SubmanifoldSpec* P;  ///< nullptr = fixed start point
    Vec q0_fixed, q1;
    double a, b;
    int N;

    bool q0_free() const { return P != nullptr; }
    int dim() const { return N * model->m + (q0_free() ? model->n : 0); }

    Mat controls_of(const Vec& z) const {
        Mat u(N, model->m);
        for (int j = 0; j < N; ++j)
            u.row(j) = z.segment(static_cast<Eigen::Index>(j) * model->m, model->m).transpose();
        return u;
    }
    Vec start_of(const Vec& z) const {
        return q0_free() ? Vec(z.tail(model->n)) : q0_fixed;
    }

    /// Augmented objective: action + mu.r + w/2 |r|^2 (+ start-constraint terms).
    double eval(const Vec& z, Vec& grad, const Vec& mu, const Vec& muP, double w) const {
        const int n = model->n, m = model->m;
        const double dt = (b - a) / N;
        Mat u = controls_of(z);
        Vec q0 = start_of(z);
        ForwardSweep fw;
        forward_sweep(*model, q0, u, a, b, fw, true);
        Vec r = fw.qnodes.row(N).transpose() - q1;

        double f = 0.5 * dt * u.squaredNorm() + mu.dot(r) + 0.5 * w * r.squaredNorm();
        Vec rho = mu + w * r;  // dE/dq_N
        grad.resize(dim());
        for (int j = N - 1; j >= 0; --j) {
            grad.segment(static_cast<Eigen::Index>(j) * m, m) =
                dt * u.row(j).transpose() + fw.Du[static_cast<size_t>(j)].transpose() * rho;
            rho = fw.Dq[static_cast<size_t>(j)].transpose() * rho;
        }
        if (q0_free()) {
            Vec gP = P->G(q0);
            Mat JP = submanifold_jacobian(*P, q0);
            f += muP.dot(gP) + 0.5 * w * gP.squaredNorm();
            grad.tail(n) = rho + JP.transpose() * (muP + w * gP);
        }
        return f;
    }
};

DirectResult run_direct(const ChartModel& model, const SubmanifoldSpec* P, const Vec& q0_fixed,
                        const Vec& q1, double a, double b, const DirectOpts& opts) {
    if (!(b > a)) throw ConfigError("direct minimization needs b > a");
    const int n = model.n, m = model.m, N = std::max(4, opts.intervals);
    DirectProblem prob{&model, P, q0_fixed, q1, a, b, N};
    const double dt = (b - a) / N;

    Vec anchor = P ? project_to_submanifold(*P, P->point) : q0_fixed;
    check_in_chart(model, anchor);

    // chord initialization: least-squares horizontal controls toward q1
    Vec chord = Eigen::JacobiSVD<Mat>(eval_horizontal(model, anchor),
                                      Eigen::ComputeThinU | Eigen::ComputeThinV)
                    .solve((q1 - anchor) / (b - a));
    std::mt19937_64 eng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> starts;
    for (int s = 0; s < std::max(1, opts.starts); ++s) {
        Vec z = Vec::Zero(prob.dim());
        for (int j = 0; j < N; ++j)
            z.segment(static_cast<Eigen::Index>(j) * m, m) = chord;
        if (s > 0) {
            double scale = 0.5 * std::max(1.0, chord.norm());
            for (int i = 0; i < N * m; ++i) z[i] += scale * normal(eng);
        }
        if (prob.q0_free()) z.tail(n) = anchor;
        starts.push_back(z);
    }

    struct Candidate {
        Vec z;
        double action = std::numeric_limits<double>::infinity();
        double resid = std::numeric_limits<double>::infinity();
        bool converged = false;
    };
    std::vector<Candidate> cands(starts.size());

    parallel_for(static_cast<int>(starts.size()), opts.threads, [&](int si) {
        Vec z = starts[static_cast<size_t>(si)];
        Vec mu = Vec::Zero(n);
        Vec muP = P ? Vec(Vec::Zero(P->codim)) : Vec();
        double w = opts.w0;
        double prev_r = std::numeric_limits<double>::infinity();
        Candidate cand;
        for (int outer = 0; outer < opts.max_outer; ++outer) {
            auto fg = [&](const Vec& zz, Vec& gg) { return prob.eval(zz, gg, mu, muP, w); };
            // loose subproblem tolerance early, tightened as the multiplier
            // estimate converges (standard augmented-Lagrangian schedule)
            double gtol = std::max(1e-9, 1e-5 * std::pow(0.1, outer));
            lbfgs_minimize(fg, z, opts.max_lbfgs, gtol);
            // true constraint violation
            ForwardSweep fw;
            forward_sweep(model, prob.start_of(z), prob.controls_of(z), a, b, fw, false);
            Vec r = fw.qnodes.row(N).transpose() - q1;
            double rn = r.norm();
            if (P) rn = std::max(rn, P->G(prob.start_of(z)).norm());
            if (rn <= opts.endpoint_tol) {
                cand.converged = true;
                cand.resid = rn;
                break;
            }
            mu += w * r;
            if (P) muP += w * P->G(prob.start_of(z));
            if (rn > 0.25 * prev_r) w = std::min(10.0 * w, opts.w_max);
            prev_r = rn;
            cand.resid = rn;
        }
        cand.z = z;
        cand.action = 0.5 * dt * prob.controls_of(z).squaredNorm();
        cands[static_cast<size_t>(si)] = cand;
    });

    const Candidate* pick = nullptr;
    for (const auto& c : cands) {
        if (!pick) {
            pick = &c;
            continue;
        }
        if (c.converged != pick->converged) {
            if (c.converged) pick = &c;
            continue;
        }
        if (c.action < pick->action) pick = &c;
    }

    DirectResult res;
    Mat u = prob.controls_of(pick->z);
    res.controls.a = a;
    res.controls.b = b;
    res.controls.q0 = prob.start_of(pick->z);
    res.controls.model = model.name;
    res.controls.h = Mat::Zero(N, n);
    res.controls.h.leftCols(m) = u;
    res.action = 0.5 * dt * u.squaredNorm();
    for (int j = 0; j < N; ++j) res.length += u.row(j).norm() * dt;
    res.endpoint_residual = pick->resid;
    res.converged = pick->converged;
    return res;
}

}  // namespace

DirectResult direct_minimize(const ChartModel& model, const Vec& q0, const Vec& q1, double a,
                             double b, const DirectOpts& opts) {
    return run_direct(model, nullptr, q0, q1, a, b, opts);
}

DirectResult direct_minimize_from(const ChartModel& model, const SubmanifoldSpec& P,
                                  const Vec& q1, double a, double b, const DirectOpts& opts) {
    if (P.kind == SubmanifoldSpec::Kind::Point)
        return run_direct(model, nullptr, P.point, q1, a, b, opts);
    return run_direct(model, &P, Vec(), q1, a, b, opts);
}

// --- ball sampling --------------------------------------------------------------------------

BallSample ball_sample(const ChartModel& model, const Vec& q0, double radius, int num_rays,
                       const BallOpts& opts) {
    if (radius < 0.0) throw ConfigError("ball radius must be nonnegative");
    if (num_rays < 1) throw ConfigError("need at least one ray");
    check_in_chart(model, q0);
    const int n = model.n;

    // draw all covectors upfront so results do not depend on the thread count
    std::mt19937_64 eng(opts.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat p0(num_rays, n);
    for (int r = 0; r < num_rays; ++r) {
        for (int tries = 0; tries < 256; ++tries) {
            Vec xi(n);
            for (int i = 0; i < n; ++i) xi[i] = normal(eng);
            double nrm = xi.norm();
            if (nrm < 1e-12) continue;
            xi /= nrm;
            double H = hamiltonian(model, q0, xi);
            if (H < 1e-10) continue;
            p0.row(r) = (xi / std::sqrt(2.0 * H)).transpose();
            break;
        }
    }

    BallSample out;
    out.p0 = p0;
    out.endpoints.resize(num_rays, n);
    out.lengths.resize(num_rays);
    out.exited.assign(static_cast<size_t>(num_rays), 0);

    parallel_for(num_rays, opts.threads, [&](int r) {
        if (radius == 0.0) {
            out.endpoints.row(r) = q0.transpose();
            out.lengths[r] = 0.0;
            return;
        }
        IntegrateOpts o = opts.integrate;
        o.output_grid = std::vector<double>{0.0, radius};
        o.output_nodes = 1;
        Trajectory tr = integrate_geodesic(model, q0, p0.row(r).transpose(), 0.0, radius, o);
        out.endpoints.row(r) = tr.q.row(tr.nodes() - 1);
        // unit-H rays have unit speed: arclength reached = time reached
        out.lengths[r] = tr.exit ? tr.exit->t : radius;
        out.exited[static_cast<size_t>(r)] = tr.exit ? 1 : 0;
    });
    return out;
}

}  // namespace srkit
