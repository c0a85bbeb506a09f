#include "srkit/minimality.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "srkit/errors.hpp"
#include "srkit/parallel.hpp"

namespace srkit {

namespace {

/// Central-difference tangent frame of the surface at u: n x (n-1).
Mat surface_tangents(const HypersurfaceParam& surface, const Vec& u) {
    const int d = surface.udim();
    Vec x0 = surface.x(u);
    Mat T(x0.size(), d);
    Vec up = u, um = u;
    for (int j = 0; j < d; ++j) {
        double h = 1e-6 * (1.0 + std::abs(u[j]));
        up[j] = u[j] + h;
        um[j] = u[j] - h;
        T.col(j) = (surface.x(up) - surface.x(um)) / (2.0 * h);
        up[j] = u[j];
        um[j] = u[j];
    }
    return T;
}

/// Unit-H covector annihilating the surface tangents at x(u); sign arbitrary.
Vec conormal_unsigned(const ChartModel& model, const HypersurfaceParam& surface, const Vec& u) {
    Vec x = surface.x(u);
    Mat T = surface_tangents(surface, u);
    Eigen::JacobiSVD<Mat> svd(Mat(T.transpose()), Eigen::ComputeFullV);
    const int n = model.n;
    if (T.cols() > 0) {
        double smin = svd.singularValues()(svd.singularValues().size() - 1);
        double smax = svd.singularValues()(0);
        if (smin <= 1e-8 * std::max(1.0, smax)) {
            std::stringstream ss;
            ss << "surface parameterization degenerate at u = (" << u.transpose() << ")";
            throw NormalizationError(ss.str(), x);
        }
    }
    Vec nu = svd.matrixV().col(n - 1);  // kernel of T^T
    double s = 0.0;
    Mat X = eval_horizontal(model, x);
    for (int i = 0; i < model.m; ++i) {
        double c = nu.dot(X.col(i));
        s += c * c;
    }
    if (s <= 1e-12) {
        std::stringstream ss;
        ss << "no unit-H covector annihilating the surface tangents at ("
           << x.transpose() << "): surface tangent to the distribution";
        throw NormalizationError(ss.str(), x);
    }
    return nu / std::sqrt(s);
}

/// Column index -> multi-index helpers for the flattened u grid (C order).
std::vector<int> u_multi_index(int iu, const std::vector<int>& nu) {
    const int d = static_cast<int>(nu.size());
    std::vector<int> idx(static_cast<size_t>(d));
    for (int j = d - 1; j >= 0; --j) {
        int span = nu[static_cast<size_t>(j)] + 1;
        idx[static_cast<size_t>(j)] = iu % span;
        iu /= span;
    }
    return idx;
}

int u_flat_index(const std::vector<int>& idx, const std::vector<int>& nu) {
    int iu = 0;
    for (size_t j = 0; j < nu.size(); ++j) iu = iu * (nu[j] + 1) + idx[j];
    return iu;
}

/// Second-order finite difference along one grid line: f'(node i) given the
/// per-node values on that line and the spacing.
Vec grid_derivative(const std::vector<Vec>& line, int i, double h) {
    const int N = static_cast<int>(line.size()) - 1;
    if (N == 0) throw ConfigError("grid too small for finite differences");
    if (N == 1) return (line[1] - line[0]) / h;  // first order, degenerate line
    if (i == 0) return (-3.0 * line[0] + 4.0 * line[1] - line[2]) / (2.0 * h);
    if (i == N)
        return (3.0 * line[static_cast<size_t>(N)] - 4.0 * line[static_cast<size_t>(N) - 1] +
                line[static_cast<size_t>(N) - 2]) /
               (2.0 * h);
    return (line[static_cast<size_t>(i) + 1] - line[static_cast<size_t>(i) - 1]) / (2.0 * h);
}

}  // namespace

int WavefrontChart::u_count() const {
    int c = 1;
    for (int v : nu) c *= v + 1;
    return c;
}

Vec WavefrontChart::u_node(int iu) const {
    auto idx = u_multi_index(iu, nu);
    Vec u(udim());
    for (int j = 0; j < udim(); ++j)
        u[j] = surface.u_lo[j] + u_step(j) * idx[static_cast<size_t>(j)];
    return u;
}

int WavefrontChart::nearest_sample(const Vec& x) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int s = 0; s < sample_count(); ++s) {
        double d = (F.row(s).transpose() - x).squaredNorm();
        if (d < bd) {
            bd = d;
            best = s;
        }
    }
    return best;
}

Vec WavefrontChart::lambda_at(const Vec& u, const Vec& sign_ref) const {
    Vec lam = conormal_unsigned(model, surface, u);
    if (lam.dot(sign_ref) < 0.0) lam = -lam;
    return lam;
}

Vec WavefrontChart::eval_F(double t, const Vec& u, Vec* p_out) const {
    // sign reference: nearest u grid node
    int iu_best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int iu = 0; iu < u_count(); ++iu) {
        double d = (u_node(iu) - u).squaredNorm();
        if (d < bd) {
            bd = d;
            iu_best = iu;
        }
    }
    Vec lam = lambda_at(u, lambda0.row(iu_best).transpose());
    Vec x = surface.x(u);
    if (t == 0.0) {
        if (p_out) *p_out = lam;
        return x;
    }
    IntegrateOpts o = integrate;
    o.output_grid = std::vector<double>{0.0, t};
    o.output_nodes = 1;
    Trajectory tr = integrate_geodesic(model, x, lam, 0.0, t, o);
    if (tr.exit) throw OutOfChartError("wavefront geodesic left the chart box", tr.exit->q);
    if (p_out) *p_out = tr.p.row(tr.nodes() - 1).transpose();
    return tr.q.row(tr.nodes() - 1).transpose();
}

WavefrontChart build_wavefront(const ChartModel& model, const HypersurfaceParam& surface,
                               const Vec& seed_covector, double t0, double t1,
                               const WavefrontOpts& opts) {
    const int n = model.n;
    const int d = surface.udim();
    if (d != n - 1) throw ConfigError("wavefront surface must have codimension 1");
    if (!(t1 > t0)) throw ConfigError("wavefront needs t1 > t0");
    if (opts.nt < 2) throw ConfigError("wavefront needs at least 2 time intervals");

    WavefrontChart chart;
    chart.model = model;
    chart.surface = surface;
    chart.t0 = t0;
    chart.t1 = t1;
    chart.nt = opts.nt;
    chart.nu = opts.nu.empty() ? std::vector<int>(static_cast<size_t>(d), 10) : opts.nu;
    if (static_cast<int>(chart.nu.size()) != d)
        throw ConfigError("wavefront grid has wrong number of u dimensions");
    for (int v : chart.nu)
        if (v < 2) throw ConfigError("wavefront needs at least 2 intervals per u dimension");
    chart.integrate = opts.integrate;

    const int UC = chart.u_count();
    chart.base.resize(UC, n);
    chart.lambda0.resize(UC, n);

    // conormal field, sign-ambiguous at first
    for (int iu = 0; iu < UC; ++iu) {
        Vec u = chart.u_node(iu);
        chart.base.row(iu) = surface.x(u).transpose();
        chart.lambda0.row(iu) = conormal_unsigned(model, surface, u).transpose();
    }

    // validate and apply the seed at the grid node nearest the box center
    {
        Vec uc = 0.5 * (surface.u_lo + surface.u_hi);
        int iu0 = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int iu = 0; iu < UC; ++iu) {
            double dd = (chart.u_node(iu) - uc).squaredNorm();
            if (dd < bd) {
                bd = dd;
                iu0 = iu;
            }
        }
        Vec u0 = chart.u_node(iu0);
        Vec x0 = chart.base.row(iu0).transpose();
        if (seed_covector.size() != n) throw ConfigError("seed covector has wrong dimension");
        Mat T = surface_tangents(surface, u0);
        double ann = (T.transpose() * seed_covector).cwiseAbs().maxCoeff();
        if (ann > 1e-6 * std::max(1.0, seed_covector.norm()))
            throw ConfigError("seed covector does not annihilate the surface tangents");
        double H = hamiltonian(model, x0, seed_covector);
        if (std::abs(2.0 * H - 1.0) > 1e-6)
            throw ConfigError("seed covector is not H-normalized (need H = 1/2)");
        if (chart.lambda0.row(iu0).dot(seed_covector) < 0.0)
            chart.lambda0.row(iu0) = -chart.lambda0.row(iu0);

        // propagate the sign over the grid, walking neighbors from the seed
        std::vector<char> fixed(static_cast<size_t>(UC), 0);
        std::vector<int> queue{iu0};
        fixed[static_cast<size_t>(iu0)] = 1;
        while (!queue.empty()) {
            int cur = queue.back();
            queue.pop_back();
            auto idx = u_multi_index(cur, chart.nu);
            for (int j = 0; j < d; ++j) {
                for (int step : {-1, +1}) {
                    auto nb = idx;
                    nb[static_cast<size_t>(j)] += step;
                    if (nb[static_cast<size_t>(j)] < 0 ||
                        nb[static_cast<size_t>(j)] > chart.nu[static_cast<size_t>(j)])
                        continue;
                    int inb = u_flat_index(nb, chart.nu);
                    if (fixed[static_cast<size_t>(inb)]) continue;
                    if (chart.lambda0.row(inb).dot(chart.lambda0.row(cur)) < 0.0)
                        chart.lambda0.row(inb) = -chart.lambda0.row(inb);
                    fixed[static_cast<size_t>(inb)] = 1;
                    queue.push_back(inb);
                }
            }
        }
    }

    // flow every surface sample; t-nodes are output times of one integration
    // per side of t = 0
    const int TC = chart.t_count();
    chart.F.resize(TC * UC, n);
    chart.P.resize(TC * UC, n);
    std::vector<std::string> errors(static_cast<size_t>(UC));
    parallel_for(UC, opts.threads, [&](int iu) {
        try {
            Vec x = chart.base.row(iu).transpose();
            Vec lam = chart.lambda0.row(iu).transpose();
            std::vector<double> fwd, bwd;  // nodes by sign of t
            for (int it = 0; it < TC; ++it)
                (chart.t_node(it) >= 0.0 ? fwd : bwd).push_back(chart.t_node(it));
            std::sort(bwd.begin(), bwd.end(), std::greater<double>());
            auto run_side = [&](const std::vector<double>& nodes) {
                if (nodes.empty()) return;
                IntegrateOpts o = chart.integrate;
                std::vector<double> grid{0.0};
                grid.insert(grid.end(), nodes.begin(), nodes.end());
                o.output_grid = grid;
                Trajectory tr =
                    integrate_geodesic(model, x, lam, 0.0, nodes.back(), o);
                if (tr.exit)
                    throw OutOfChartError("wavefront geodesic left the chart box", tr.exit->q);
                for (int j = 0; j < tr.nodes(); ++j) {
                    double t = tr.t[static_cast<size_t>(j)];
                    // map the node time back to its t-grid index
                    int it = static_cast<int>(std::lround((t - chart.t0) / chart.t_step()));
                    if (it < 0 || it >= TC) continue;  // the auxiliary t = 0 node
                    if (std::abs(chart.t_node(it) - t) > 1e-9 * (1.0 + std::abs(t))) continue;
                    chart.F.row(chart.flat_index(it, iu)) = tr.q.row(j);
                    chart.P.row(chart.flat_index(it, iu)) = tr.p.row(j);
                }
            };
            run_side(fwd);
            run_side(bwd);
        } catch (const Error& e) {
            errors[static_cast<size_t>(iu)] = e.what();
        }
    });
    for (int iu = 0; iu < UC; ++iu)
        if (!errors[static_cast<size_t>(iu)].empty())
            throw OutOfChartError(errors[static_cast<size_t>(iu)],
                                  chart.base.row(iu).transpose());

    // grid Jacobians dF/d(t,u) by second-order finite differences
    chart.dF.assign(static_cast<size_t>(TC * UC), Mat());
    chart.det_dF.resize(TC * UC);
    chart.cond_dF.resize(TC * UC);
    for (int it = 0; it < TC; ++it) {
        for (int iu = 0; iu < UC; ++iu) {
            Mat J(n, n);
            {  // t direction
                std::vector<Vec> line(static_cast<size_t>(TC));
                for (int k = 0; k < TC; ++k)
                    line[static_cast<size_t>(k)] = chart.F.row(chart.flat_index(k, iu)).transpose();
                J.col(0) = grid_derivative(line, it, chart.t_step());
            }
            auto idx = u_multi_index(iu, chart.nu);
            for (int j = 0; j < d; ++j) {
                int span = chart.nu[static_cast<size_t>(j)] + 1;
                std::vector<Vec> line(static_cast<size_t>(span));
                auto nb = idx;
                for (int k = 0; k < span; ++k) {
                    nb[static_cast<size_t>(j)] = k;
                    line[static_cast<size_t>(k)] =
                        chart.F.row(chart.flat_index(it, u_flat_index(nb, chart.nu))).transpose();
                }
                J.col(j + 1) = grid_derivative(line, idx[static_cast<size_t>(j)], chart.u_step(j));
            }
            int s = chart.flat_index(it, iu);
            chart.dF[static_cast<size_t>(s)] = J;
            chart.det_dF[s] = J.determinant();
            Eigen::JacobiSVD<Mat> svd(J);
            double smin = svd.singularValues()(n - 1);
            chart.cond_dF[s] = smin > 0.0 ? svd.singularValues()(0) / smin
                                          : std::numeric_limits<double>::infinity();
        }
    }
    return chart;
}

CalibrationReport calibration_check(const WavefrontChart& chart) {
    const int n = chart.model.n;
    const int S = chart.sample_count();
    double dmax = chart.det_dF.cwiseAbs().maxCoeff();
    std::vector<int> singular;
    for (int s = 0; s < S; ++s)
        if (std::abs(chart.det_dF[s]) <= 1e-10 * std::max(1.0, dmax)) singular.push_back(s);
    if (!singular.empty()) {
        std::stringstream ss;
        ss << "wavefront map has singular dF at " << singular.size() << " sample(s):";
        for (size_t i = 0; i < singular.size() && i < 5; ++i) {
            int s = singular[i];
            ss << " [t=" << chart.t_node(s / chart.u_count()) << ", q=("
               << chart.F.row(s) << ")]";
        }
        throw SingularJacobianError(ss.str(), chart.det_dF.cwiseAbs().minCoeff());
    }

    CalibrationReport rep;
    rep.min_abs_det_dF = chart.det_dF.cwiseAbs().minCoeff();
    for (int s = 0; s < S; ++s) {
        // tau o F(t, u) = t, hence dtau = e1^T dF^{-1} in ambient coordinates
        Vec dtau = chart.dF[static_cast<size_t>(s)].transpose().partialPivLu().solve(
            Vec(Vec::Unit(n, 0)));
        rep.max_form_residual =
            std::max(rep.max_form_residual, (dtau - chart.P.row(s).transpose()).norm());
        Mat X = eval_horizontal(chart.model, chart.F.row(s).transpose());
        double norm2 = 0.0;
        for (int i = 0; i < chart.model.m; ++i) {
            double c = dtau.dot(X.col(i));
            norm2 += c * c;
        }
        rep.max_norm_residual = std::max(rep.max_norm_residual, std::abs(norm2 - 1.0));
    }
    return rep;
}

std::optional<ChartInverse> invert_chart(const WavefrontChart& chart, const Vec& x,
                                         int max_newton, double tol) {
    const int n = chart.model.n;
    int s0 = chart.nearest_sample(x);
    Mat Jlu = chart.dF[static_cast<size_t>(s0)];
    Eigen::PartialPivLU<Mat> lu(Jlu);

    Vec y(n);  // (t, u) chart coordinates
    y[0] = chart.t_node(s0 / chart.u_count());
    y.tail(n - 1) = chart.u_node(s0 % chart.u_count());

    Vec r = chart.eval_F(y[0], y.tail(n - 1)) - x;
    for (int it = 0; it < max_newton && r.norm() > tol; ++it) {
        Vec step = lu.solve(r);
        y -= step;
        // keep u within a half-cell margin of the parameter box
        for (int j = 0; j < n - 1; ++j) {
            double lo = chart.surface.u_lo[j] - 0.5 * chart.u_step(j);
            double hi = chart.surface.u_hi[j] + 0.5 * chart.u_step(j);
            y[j + 1] = std::clamp(y[j + 1], lo, hi);
        }
        try {
            r = chart.eval_F(y[0], y.tail(n - 1)) - x;
        } catch (const Error&) {
            return std::nullopt;
        }
    }
    if (r.norm() > 1e-6) return std::nullopt;  // outside the covered tube
    ChartInverse inv;
    inv.tau = y[0];
    inv.u = y.tail(n - 1);
    inv.residual = r.norm();
    return inv;
}

MinimalityCertificate minimality_certificate(const ChartModel& model, const SubmanifoldSpec& P,
                                             const BvpSolution& geodesic, double epsilon,
                                             const CertificateOpts& opts) {
    if (!(epsilon > 0.0)) throw ConfigError("certificate needs epsilon > 0");
    const int n = model.n;
    Vec q0 = geodesic.q0, p0 = geodesic.p0;
    if (q0.size() != n || p0.size() != n)
        throw ConfigError("geodesic record has wrong dimensions");

    // hypothesis: the initial covector annihilates T_{q0} P
    if (P.kind == SubmanifoldSpec::Kind::LevelSet) {
        Mat B = tangent_basis(P, q0, n);
        double res = B.cols() > 0 ? (B.transpose() * p0).cwiseAbs().maxCoeff() : 0.0;
        if (res > 1e-8)
            throw TransversalityError(
                "initial covector does not annihilate the start submanifold", q0, res);
    }

    double H0 = hamiltonian(model, q0, p0);
    if (H0 < 1e-14) throw ZeroLengthError("certificate needs a nonconstant geodesic");
    Vec lam0 = p0 / std::sqrt(2.0 * H0);  // unit-speed lift; epsilon is arclength

    MinimalityCertificate cert;
    cert.epsilon = epsilon;
    cert.point_source =
        (P.kind == SubmanifoldSpec::Kind::Point) || (P.codim != 1);

    // segment endpoint gamma(a + epsilon) of the unit-speed segment
    IntegrateOpts io = opts.wavefront.integrate;
    io.output_grid = std::vector<double>{0.0, epsilon};
    Trajectory seg = integrate_geodesic(model, q0, lam0, 0.0, epsilon, io);
    if (seg.exit) {
        cert.verdict = "inconclusive";
        cert.detail = "segment leaves the chart box before epsilon";
        return cert;
    }
    Vec qe = seg.q.row(seg.nodes() - 1).transpose();
    const double seg_length = epsilon;

    // parts (i) and (ii): wavefront chart and calibration around the segment
    if (!cert.point_source) {
        double ur = opts.u_radius > 0.0 ? opts.u_radius : std::max(0.05, 0.5 * epsilon);
        Mat B = tangent_basis(P, q0, n);
        HypersurfaceParam patch;
        patch.u_lo = Vec::Constant(n - 1, -ur);
        patch.u_hi = Vec::Constant(n - 1, ur);
        patch.x = [&model, &P, B, q0](const Vec& u) {
            (void)model;
            return project_to_submanifold(P, q0 + B * u);
        };
        try {
            WavefrontOpts wo = opts.wavefront;
            if (wo.nu.empty()) wo.nu.assign(static_cast<size_t>(n - 1), 8);
            WavefrontChart chart =
                build_wavefront(model, patch, lam0, 0.0, epsilon, wo);
            CalibrationReport rep = calibration_check(chart);
            cert.min_abs_det_dF = rep.min_abs_det_dF;
            cert.calibration_residual =
                std::max(rep.max_form_residual, rep.max_norm_residual);
        } catch (const SingularJacobianError& e) {
            cert.verdict = "inconclusive";
            cert.detail = e.what();
            cert.min_abs_det_dF = e.det;
            return cert;
        } catch (const OutOfChartError& e) {
            cert.verdict = "inconclusive";
            cert.detail = e.what();
            return cert;
        }
        if (!(cert.calibration_residual <= opts.calibration_threshold)) {
            cert.verdict = "inconclusive";
            cert.detail = "calibration residual above threshold";
            return cert;
        }
    } else {
        cert.detail = "point source: wavefront parts skipped, oracle only";
    }

    // part (iii): direct-minimization oracle from P to the segment endpoint
    DirectResult oracle = (P.kind == SubmanifoldSpec::Kind::Point)
                              ? direct_minimize(model, q0, qe, 0.0, epsilon, opts.oracle)
                              : direct_minimize_from(model, P, qe, 0.0, epsilon, opts.oracle);
    cert.oracle_gap = (seg_length - oracle.length) / std::max(1.0, seg_length);
    if (!oracle.converged) {
        cert.verdict = "inconclusive";
        cert.detail = "oracle did not converge to the endpoint";
        return cert;
    }
    if (cert.oracle_gap > opts.oracle_tol) {
        cert.verdict = "inconclusive";
        cert.detail = "oracle found a shorter competitor";
        return cert;
    }
    cert.verdict = "certified-at-tolerance";
    return cert;
}

}  // namespace srkit
