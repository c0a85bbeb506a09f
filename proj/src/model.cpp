#include "srkit/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "srkit/errors.hpp"
#include "srkit/expr.hpp"

namespace srkit {

namespace {

/// Central-difference Jacobian of one frame field from the model evaluators.
Mat fd_field_jacobian(const ChartModel& model, const Vec& q, int i, double t) {
    const int n = model.n;
    Mat J(n, n);
    Vec qp = q, qm = q;
    for (int d = 0; d < n; ++d) {
        double h = std::max(model.fd_step_floor, model.fd_step_rel * std::abs(q[d]));
        qp[d] = q[d] + h;
        qm[d] = q[d] - h;
        Vec col_p = (i < model.m) ? Vec(model.frame(qp, t).col(i))
                                  : Vec(model.complement(qp, t).col(i - model.m));
        Vec col_m = (i < model.m) ? Vec(model.frame(qm, t).col(i))
                                  : Vec(model.complement(qm, t).col(i - model.m));
        J.col(d) = (col_p - col_m) / (2.0 * h);
        qp[d] = q[d];
        qm[d] = q[d];
    }
    return J;
}

/// Central-difference derivative of q -> J_i(q)^T p (gives the p-contracted
/// Hessian column by column).  Uses a larger step than the Jacobian itself to
/// keep the nested-difference noise down when J_i is itself finite-differenced.
Mat fd_field_hessian_p(const ChartModel& model, const Vec& q, int i, const Vec& p, double t) {
    const int n = model.n;
    Mat H(n, n);
    Vec qp = q, qm = q;
    bool nested = !model.jacobian;
    for (int d = 0; d < n; ++d) {
        double rel = nested ? 1e-4 : model.fd_step_rel;
        double floor = nested ? 1e-5 : model.fd_step_floor;
        double h = std::max(floor, rel * std::abs(q[d]));
        qp[d] = q[d] + h;
        qm[d] = q[d] - h;
        Vec ap = field_jacobian(model, qp, i, t).transpose() * p;
        Vec am = field_jacobian(model, qm, i, t).transpose() * p;
        H.col(d) = (ap - am) / (2.0 * h);
        qp[d] = q[d];
        qm[d] = q[d];
    }
    // symmetrize: the exact object is a symmetric bilinear form
    return 0.5 * (H + H.transpose());
}

}  // namespace

// --- builtin models -----------------------------------------------------------

ChartModel flat_model() {
    ChartModel mod;
    mod.name = "flat";
    mod.n = 3;
    mod.m = 2;
    mod.jacobian_source = JacobianSource::Analytic;
    mod.frame = [](const Vec&, double) {
        Mat F(3, 2);
        F << 1, 0, 0, 1, 0, 0;
        return F;
    };
    mod.complement = [](const Vec&, double) {
        Mat C(3, 1);
        C << 0, 0, 1;
        return C;
    };
    mod.jacobian = [](const Vec&, int, double) { return Mat(Mat::Zero(3, 3)); };
    mod.hessian_p = [](const Vec&, int, const Vec&, double) { return Mat(Mat::Zero(3, 3)); };
    return mod;
}

ChartModel heisenberg_model() {
    ChartModel mod;
    mod.name = "heisenberg";
    mod.n = 3;
    mod.m = 2;
    mod.jacobian_source = JacobianSource::Analytic;
    mod.frame = [](const Vec& q, double) {
        Mat F(3, 2);
        F << 1, 0, 0, 1, -q[1] / 2.0, q[0] / 2.0;
        return F;
    };
    mod.complement = [](const Vec&, double) {
        Mat C(3, 1);
        C << 0, 0, 1;
        return C;
    };
    mod.jacobian = [](const Vec&, int i, double) {
        Mat J = Mat::Zero(3, 3);
        if (i == 0) J(2, 1) = -0.5;
        if (i == 1) J(2, 0) = 0.5;
        return J;
    };
    mod.hessian_p = [](const Vec&, int, const Vec&, double) { return Mat(Mat::Zero(3, 3)); };
    return mod;
}

ChartModel martinet_model() {
    ChartModel mod;
    mod.name = "martinet";
    mod.n = 3;
    mod.m = 2;
    mod.jacobian_source = JacobianSource::Analytic;
    mod.frame = [](const Vec& q, double) {
        Mat F(3, 2);
        F << 1, 0, 0, 1, 0, q[0] * q[0] / 2.0;
        return F;
    };
    mod.complement = [](const Vec&, double) {
        Mat C(3, 1);
        C << 0, 0, 1;
        return C;
    };
    mod.jacobian = [](const Vec& q, int i, double) {
        Mat J = Mat::Zero(3, 3);
        if (i == 1) J(2, 0) = q[0];
        return J;
    };
    mod.hessian_p = [](const Vec&, int i, const Vec& p, double) {
        Mat H = Mat::Zero(3, 3);
        if (i == 1) H(0, 0) = p[2];
        return H;
    };
    return mod;
}

std::vector<std::string> builtin_model_names() { return {"flat", "heisenberg", "martinet"}; }

ChartModel make_model(const std::string& name) {
    if (name == "flat") return flat_model();
    if (name == "heisenberg") return heisenberg_model();
    if (name == "martinet") return martinet_model();
    throw ConfigError("unknown builtin model \"" + name +
                      "\" (registry v" + std::to_string(kModelRegistryVersion) +
                      ": flat, heisenberg, martinet)");
}

ChartModel with_domain_box(ChartModel base, const Vec& lo, const Vec& hi) {
    if (lo.size() != base.n || hi.size() != base.n)
        throw ConfigError("domain box dimension mismatch");
    base.domain_box = Box{lo, hi};
    return base;
}

// --- JSON model files ----------------------------------------------------------

namespace {

ChartModel model_from_json(const nlohmann::json& j) {
    ChartModel mod;
    try {
        mod.name = j.at("name").get<std::string>();
        mod.n = j.at("n").get<int>();
        mod.m = j.at("m").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model file: missing/invalid name, n or m: ") + e.what());
    }
    if (mod.n < 1 || mod.m < 1 || mod.m > mod.n)
        throw ConfigError("model file: need 1 <= m <= n");
    const int n = mod.n, m = mod.m, k = mod.k();

    auto parse_fields = [&](const nlohmann::json& arr, const char* what) {
        std::vector<std::vector<Expr>> fields;
        if (!arr.is_array()) throw ConfigError(std::string("model file: ") + what + " must be an array");
        for (const auto& field : arr) {
            if (!field.is_array() || static_cast<int>(field.size()) != n)
                throw ConfigError(std::string("model file: each ") + what +
                                  " entry needs exactly n component expressions");
            std::vector<Expr> comps;
            for (const auto& s : field) comps.push_back(Expr::parse(s.get<std::string>(), n));
            fields.push_back(std::move(comps));
        }
        return fields;
    };

    auto frame_exprs = parse_fields(j.at("frame"), "frame");
    if (static_cast<int>(frame_exprs.size()) != m)
        throw ConfigError("model file: frame must list exactly m fields");
    auto frame_shared = std::make_shared<std::vector<std::vector<Expr>>>(std::move(frame_exprs));
    mod.frame = [frame_shared, n, m](const Vec& q, double) {
        Mat F(n, m);
        for (int i = 0; i < m; ++i)
            for (int r = 0; r < n; ++r) F(r, i) = (*frame_shared)[i][r].eval(q);
        return F;
    };

    if (j.contains("complement")) {
        auto comp_exprs = parse_fields(j.at("complement"), "complement");
        if (static_cast<int>(comp_exprs.size()) != k)
            throw ConfigError("model file: complement must list exactly n-m fields");
        auto comp_shared = std::make_shared<std::vector<std::vector<Expr>>>(std::move(comp_exprs));
        mod.complement = [comp_shared, n, k](const Vec& q, double) {
            Mat C(n, k);
            for (int i = 0; i < k; ++i)
                for (int r = 0; r < n; ++r) C(r, i) = (*comp_shared)[i][r].eval(q);
            return C;
        };
    }

    if (j.contains("domain_box")) {
        const auto& box = j.at("domain_box");
        if (!box.is_array() || static_cast<int>(box.size()) != n)
            throw ConfigError("model file: domain_box needs n [lo,hi] pairs");
        Vec lo(n), hi(n);
        for (int d = 0; d < n; ++d) {
            lo[d] = box[static_cast<size_t>(d)].at(0).get<double>();
            hi[d] = box[static_cast<size_t>(d)].at(1).get<double>();
            if (!(lo[d] < hi[d])) throw ConfigError("model file: domain_box entries need lo < hi");
        }
        mod.domain_box = Box{lo, hi};
    }

    if (j.contains("fd_step")) mod.fd_step_rel = j.at("fd_step").get<double>();
    mod.jacobian_source = JacobianSource::FiniteDifference;

    // Automatic complement: pick the coordinate axes best aligned with the
    // null space of the frame transpose at the chart anchor (box center or
    // origin), in deterministic pivot order.
    if (!mod.complement) {
        Vec anchor = Vec::Zero(n);
        if (mod.domain_box) anchor = 0.5 * (mod.domain_box->lo + mod.domain_box->hi);
        Mat A = mod.frame(anchor, 0.0);  // n x m
        Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullU);
        Mat W = svd.matrixU().rightCols(k);  // null(A^T) basis, n x k
        Eigen::ColPivHouseholderQR<Mat> qr(W.transpose());  // k x n, pivots = axes
        std::vector<int> axes;
        for (int i = 0; i < k; ++i) axes.push_back(qr.colsPermutation().indices()[i]);
        std::sort(axes.begin(), axes.end());
        auto axes_shared = std::make_shared<std::vector<int>>(std::move(axes));
        mod.complement = [axes_shared, n, k](const Vec&, double) {
            Mat C = Mat::Zero(n, k);
            for (int i = 0; i < k; ++i) C((*axes_shared)[static_cast<size_t>(i)], i) = 1.0;
            return C;
        };
    }
    return mod;
}

}  // namespace

ChartModel parse_model_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model file: invalid JSON: ") + e.what());
    }
    return model_from_json(j);
}

ChartModel load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model_json(ss.str());
}

// --- chart operations -----------------------------------------------------------

void check_in_chart(const ChartModel& model, const Vec& q) {
    if (q.size() != model.n) throw ConfigError("point dimension does not match model");
    if (!model.in_chart(q)) {
        std::stringstream ss;
        ss << "point (" << q.transpose() << ") outside domain box of model " << model.name;
        throw OutOfChartError(ss.str(), q);
    }
}

Mat eval_horizontal(const ChartModel& model, const Vec& q, double t) {
    return model.frame(q, t);
}

Mat eval_frame(const ChartModel& model, const Vec& q, double t) {
    check_in_chart(model, q);
    Mat F(model.n, model.n);
    F.leftCols(model.m) = model.frame(q, t);
    F.rightCols(model.k()) = model.complement(q, t);
    Eigen::JacobiSVD<Mat> svd(F);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(model.n - 1);
    if (!(smin > 1e-10 * smax)) {
        std::stringstream ss;
        ss << "frame of model " << model.name << " numerically degenerate at (" << q.transpose()
           << "): sigma_min/sigma_max = " << (smax > 0 ? smin / smax : 0.0);
        throw DegenerateFrameError(ss.str(), q, smin);
    }
    return F;
}

Mat field_jacobian(const ChartModel& model, const Vec& q, int i, double t) {
    if (i < 0 || i >= model.n) throw ConfigError("field index out of range");
    if (model.jacobian_source == JacobianSource::Analytic && model.jacobian)
        return model.jacobian(q, i, t);
    return fd_field_jacobian(model, q, i, t);
}

std::vector<Mat> frame_jacobian(const ChartModel& model, const Vec& q, double t) {
    check_in_chart(model, q);
    std::vector<Mat> out;
    out.reserve(static_cast<size_t>(model.m));
    for (int i = 0; i < model.m; ++i) out.push_back(field_jacobian(model, q, i, t));
    return out;
}

Mat field_hessian_p(const ChartModel& model, const Vec& q, int i, const Vec& p, double t) {
    if (i < 0 || i >= model.n) throw ConfigError("field index out of range");
    if (model.jacobian_source == JacobianSource::Analytic && model.hessian_p)
        return model.hessian_p(q, i, p, t);
    return fd_field_hessian_p(model, q, i, p, t);
}

Mat annihilator_coframe(const ChartModel& model, const Vec& q, double t, bool sign_fixed) {
    const int n = model.n, k = model.k();
    Mat F = eval_frame(model, q, t);  // validated
    // Dual rows: rows m+1..n of F^{-1} annihilate the horizontal columns and
    // pair to identity with the complement.
    Mat theta = F.inverse().bottomRows(k);
    // Gram-Schmidt w.r.t. the dual metric; <a,b> = (aF).(bF) since the full
    // frame is declared orthonormal.  For builtin models this is a no-op up to
    // roundoff (dual rows are already orthonormal in that inner product).
    Mat pairings = theta * F;  // k x n
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < i; ++j) {
            double c = pairings.row(i).dot(pairings.row(j));
            theta.row(i) -= c * theta.row(j);
            pairings.row(i) -= c * pairings.row(j);
        }
        double nrm = pairings.row(i).norm();
        if (!(nrm > 1e-14))
            throw DegenerateFrameError("coframe Gram-Schmidt breakdown", q, nrm);
        theta.row(i) /= nrm;
        pairings.row(i) /= nrm;
    }
    if (sign_fixed) {
        for (int i = 0; i < k; ++i) {
            double scale = theta.row(i).cwiseAbs().maxCoeff();
            for (int c = 0; c < n; ++c) {
                if (std::abs(theta(i, c)) > 1e-12 * scale) {
                    if (theta(i, c) < 0.0) theta.row(i) = -theta.row(i);
                    break;
                }
            }
        }
    }
    return theta;
}

}  // namespace srkit
