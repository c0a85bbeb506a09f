#include "srkit/io.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "srkit/errors.hpp"

namespace srkit::io {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json vec_to_json(const Vec& v) {
    json j = json::array();
    for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
}

json mat_to_json(const Mat& m) {
    json j = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(row);
    }
    return j;
}

Vec vec_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("expected a JSON array of numbers");
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw ConfigError("expected a JSON array of rows");
    Mat m(j.size(), j[0].size());
    for (size_t r = 0; r < j.size(); ++r) {
        if (j[r].size() != j[0].size()) throw ConfigError("ragged JSON matrix");
        for (size_t c = 0; c < j[r].size(); ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
}

// --- trajectories -------------------------------------------------------------

namespace {

std::string meta_comment(const json& meta) {
    return "# meta " + meta.dump() + "\n";
}

}  // namespace

std::string trajectory_csv(const Trajectory& traj, const json& meta) {
    const int n = static_cast<int>(traj.q.cols());
    std::string out = meta_comment(meta);
    out += "t";
    for (int i = 1; i <= n; ++i) out += ",q" + std::to_string(i);
    for (int i = 1; i <= n; ++i) out += ",p" + std::to_string(i);
    out += ",H\n";
    const bool mom = traj.has_momentum();
    for (int j = 0; j < traj.nodes(); ++j) {
        out += format_double(traj.t[static_cast<size_t>(j)]);
        for (int i = 0; i < n; ++i) out += "," + format_double(traj.q(j, i));
        for (int i = 0; i < n; ++i) out += mom ? "," + format_double(traj.p(j, i)) : ",";
        out += mom ? "," + format_double(traj.H[static_cast<size_t>(j)]) : ",";
        out += "\n";
    }
    return out;
}

json trajectory_json(const Trajectory& traj, const json& meta) {
    json j;
    j["meta"] = meta;
    j["model"] = traj.model;
    j["interp_order"] = traj.interp_order;
    j["t"] = json::array();
    for (double tv : traj.t) j["t"].push_back(tv);
    j["q"] = mat_to_json(traj.q);
    if (traj.has_momentum()) {
        j["p"] = mat_to_json(traj.p);
        j["H"] = json::array();
        for (double h : traj.H) j["H"].push_back(h);
        j["energy_drift"] = traj.energy_drift();
    }
    if (traj.exit) {
        j["exit"] = {{"t", traj.exit->t}, {"q", vec_to_json(traj.exit->q)}};
    }
    return j;
}

// --- control curves -----------------------------------------------------------

json controls_json(const ControlCurve& curve, const json& meta) {
    json j;
    if (!meta.is_null()) j["meta"] = meta;
    j["model"] = curve.model;
    j["a"] = curve.a;
    j["b"] = curve.b;
    j["q0"] = vec_to_json(curve.q0);
    j["h"] = mat_to_json(curve.h);
    return j;
}

ControlCurve controls_from_json(const json& j) {
    ControlCurve c;
    if (!j.contains("a") || !j.contains("b") || !j.contains("q0") || !j.contains("h"))
        throw ConfigError("control curve JSON needs fields a, b, q0, h");
    c.a = j["a"].get<double>();
    c.b = j["b"].get<double>();
    if (!(c.b > c.a)) throw ConfigError("control curve needs b > a");
    c.q0 = vec_from_json(j["q0"]);
    c.h = mat_from_json(j["h"]);
    if (c.h.cols() != c.q0.size())
        throw ConfigError("control rows must have one coefficient per frame field");
    if (j.contains("model")) c.model = j["model"].get<std::string>();
    return c;
}

ControlCurve load_controls(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse control curve file '" + path + "': " + e.what());
    }
    return controls_from_json(j);
}

std::string controls_csv(const ControlCurve& curve, const json& meta) {
    const int n = static_cast<int>(curve.h.cols());
    std::string out = meta_comment(meta);
    out += "t_start,t_end";
    for (int i = 1; i <= n; ++i) out += ",h" + std::to_string(i);
    out += "\n";
    for (int j = 0; j < curve.intervals(); ++j) {
        out += format_double(curve.a + j * curve.dt());
        out += "," + format_double(curve.a + (j + 1) * curve.dt());
        for (int i = 0; i < n; ++i) out += "," + format_double(curve.h(j, i));
        out += "\n";
    }
    return out;
}

// --- reports --------------------------------------------------------------------

json abnormal_report_json(const AbnormalReport& report, const json& meta) {
    json j;
    j["meta"] = meta;
    j["rank"] = report.rank;
    j["singular_values"] = vec_to_json(report.singular_values);
    j["threshold"] = report.threshold;
    j["verdict"] = report.verdict;
    j["characteristics"] = json::array();
    for (int s = 0; s < report.seeds.rows(); ++s) {
        json c;
        c["eta_b"] = vec_to_json(report.seeds.row(s).transpose());
        c["max_violation"] = report.max_violations[s];
        j["characteristics"].push_back(c);
    }
    return j;
}

json bvp_solutions_json(const std::vector<BvpSolution>& sols, const json& meta) {
    json j;
    j["meta"] = meta;
    j["solutions"] = json::array();
    for (const auto& s : sols) {
        json e;
        e["q0"] = vec_to_json(s.q0);
        e["p0"] = vec_to_json(s.p0);
        e["action"] = s.action;
        e["length"] = s.length;
        e["residual"] = s.boundary_residuals.norm();
        e["residuals"] = vec_to_json(s.boundary_residuals);
        e["converged"] = s.converged;
        e["newton_iterations"] = s.newton_iterations;
        e["abnormal_verdict"] = s.abnormal_verdict;
        e["endpoint"] = vec_to_json(s.trajectory.q.row(s.trajectory.nodes() - 1).transpose());
        j["solutions"].push_back(e);
    }
    return j;
}

json certificate_json(const MinimalityCertificate& cert, const json& meta) {
    json j;
    j["meta"] = meta;
    j["verdict"] = cert.verdict;
    j["min_abs_det_dF"] = cert.min_abs_det_dF;
    j["calibration_residual"] = cert.calibration_residual;
    j["oracle_gap"] = cert.oracle_gap;
    j["epsilon"] = cert.epsilon;
    j["point_source"] = cert.point_source;
    if (!cert.detail.empty()) j["detail"] = cert.detail;
    return j;
}

json ball_json(const BallSample& ball, const json& meta) {
    json j;
    j["meta"] = meta;
    j["endpoints"] = mat_to_json(ball.endpoints);
    j["p0"] = mat_to_json(ball.p0);
    j["lengths"] = vec_to_json(ball.lengths);
    j["exited"] = json::array();
    for (char e : ball.exited) j["exited"].push_back(static_cast<int>(e));
    return j;
}

std::string ball_csv(const BallSample& ball, const json& meta) {
    const int n = static_cast<int>(ball.endpoints.cols());
    std::string out = meta_comment(meta);
    for (int i = 1; i <= n; ++i) out += (i == 1 ? "q" : ",q") + std::to_string(i);
    for (int i = 1; i <= n; ++i) out += ",p0_" + std::to_string(i);
    out += ",length,exited\n";
    for (int r = 0; r < ball.endpoints.rows(); ++r) {
        for (int i = 0; i < n; ++i)
            out += (i == 0 ? "" : ",") + format_double(ball.endpoints(r, i));
        for (int i = 0; i < n; ++i) out += "," + format_double(ball.p0(r, i));
        out += "," + format_double(ball.lengths[r]);
        out += "," + std::to_string(static_cast<int>(ball.exited[static_cast<size_t>(r)]));
        out += "\n";
    }
    return out;
}

json wavefront_json(const WavefrontChart& chart, const CalibrationReport* calib,
                    const json& meta) {
    json j;
    j["meta"] = meta;
    j["t0"] = chart.t0;
    j["t1"] = chart.t1;
    j["nt"] = chart.nt;
    j["nu"] = chart.nu;
    j["u_lo"] = vec_to_json(chart.surface.u_lo);
    j["u_hi"] = vec_to_json(chart.surface.u_hi);
    j["base"] = mat_to_json(chart.base);
    j["lambda0"] = mat_to_json(chart.lambda0);
    j["F"] = mat_to_json(chart.F);
    j["det_dF"] = vec_to_json(chart.det_dF);
    j["cond_dF"] = vec_to_json(chart.cond_dF);
    j["min_abs_det_dF"] = chart.det_dF.cwiseAbs().minCoeff();
    if (calib) {
        j["calibration"] = {{"max_form_residual", calib->max_form_residual},
                            {"max_norm_residual", calib->max_norm_residual},
                            {"min_abs_det_dF", calib->min_abs_det_dF}};
    }
    return j;
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

void write_text(const std::string& path, const std::string& text) {
    if (path == "-" || path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open output file '" + path + "'");
    f << text;
    if (!f) throw ConfigError("failed writing output file '" + path + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace srkit::io
