// srkit command-line front end: model loading, experiment execution, and
// deterministic CSV/JSON emission for external plotting.
//
// Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 hypothesis violation.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "srkit/endpoint.hpp"
#include "srkit/errors.hpp"
#include "srkit/flow.hpp"
#include "srkit/io.hpp"
#include "srkit/minimality.hpp"
#include "srkit/model.hpp"
#include "srkit/reparam.hpp"
#include "srkit/solver.hpp"

namespace {

using srkit::ChartModel;
using srkit::ConfigError;
using srkit::Mat;
using srkit::Vec;
using json = srkit::io::json;

std::vector<double> split_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError(flag + ": '" + tok + "' is not a number");
        }
    }
    if (out.empty()) throw ConfigError(flag + ": empty list");
    return out;
}

Vec cfg_vec(const json& cfg, const std::string& key) {
    const json& v = cfg.at(key);
    if (v.is_string()) {
        auto lst = split_list(v.get<std::string>(), "--" + key);
        Vec out(static_cast<Eigen::Index>(lst.size()));
        for (size_t i = 0; i < lst.size(); ++i) out[static_cast<Eigen::Index>(i)] = lst[i];
        return out;
    }
    return srkit::io::vec_from_json(v);
}

Vec cfg_vec_n(const json& cfg, const std::string& key, int n) {
    Vec v = cfg_vec(cfg, key);
    if (v.size() != n) {
        std::stringstream ss;
        ss << "--" << key << " needs " << n << " components, got " << v.size();
        throw ConfigError(ss.str());
    }
    return v;
}

/// Merge the --config file on top of the flag-resolved values (config wins).
void apply_config_file(json& cfg, const std::string& path) {
    if (path.empty()) return;
    json file;
    try {
        file = json::parse(srkit::io::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse --config file '" + path + "': " + e.what());
    }
    if (!file.is_object()) throw ConfigError("--config file must hold a JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) {
        if (!cfg.contains(it.key()))
            throw ConfigError("--config file: unknown key '" + it.key() + "'");
        cfg[it.key()] = it.value();
    }
}

ChartModel resolve_model(const json& cfg) {
    std::string name = cfg.at("model").get<std::string>();
    if (std::filesystem::exists(name)) return srkit::load_model_json(name);
    return srkit::make_model(name);
}

srkit::IntegrateOpts integrate_opts(const json& cfg) {
    srkit::IntegrateOpts o;
    int steps = cfg.at("steps").get<int>();
    if (steps > 0) {
        o.mode = srkit::IntegrateOpts::Mode::FixedStep;
        o.fixed_steps = steps;
    } else {
        o.mode = srkit::IntegrateOpts::Mode::Adaptive;
        double tol = cfg.at("tol").get<double>();
        o.abs_tol = tol;
        o.rel_tol = tol;
    }
    if (cfg.contains("nodes")) o.output_nodes = cfg.at("nodes").get<int>();
    return o;
}

int resolve_threads_cfg(json& cfg) {
    int t = cfg.at("threads").get<int>();
    if (t <= 0) {
        if (const char* env = std::getenv("SRKIT_THREADS")) t = std::atoi(env);
        if (t <= 0) t = 1;
        cfg["threads"] = t;
    }
    return t;
}

json make_meta(const std::string& command, const json& cfg) {
    json meta;
    meta["command"] = command;
    meta["model_registry_version"] = srkit::kModelRegistryVersion;
    meta["config"] = cfg;
    return meta;
}

void emit(const json& cfg, const std::string& text) {
    srkit::io::write_text(cfg.at("output").get<std::string>(), text);
}

std::pair<double, double> cfg_span(const json& cfg) {
    Vec s = cfg_vec_n(cfg, "span", 2);
    if (!(s[1] >= s[0])) throw ConfigError("--span needs b >= a");
    return {s[0], s[1]};
}

// --- geodesic ---------------------------------------------------------------------

int cmd_geodesic(json cfg) {
    apply_config_file(cfg, cfg.at("config").get<std::string>());
    ChartModel model = resolve_model(cfg);
    Vec q0 = cfg_vec_n(cfg, "q0", model.n);
    Vec p0 = cfg_vec_n(cfg, "p0", model.n);
    auto [a, b] = cfg_span(cfg);

    srkit::Trajectory traj = integrate_geodesic(model, q0, p0, a, b, integrate_opts(cfg));

    json meta = make_meta("geodesic", cfg);
    std::string format = cfg.at("format").get<std::string>();
    if (format == "csv")
        emit(cfg, srkit::io::trajectory_csv(traj, meta));
    else if (format == "json")
        emit(cfg, srkit::io::dump_json(srkit::io::trajectory_json(traj, meta)));
    else
        throw ConfigError("--format must be csv or json");

    json summary;
    summary["endpoint"] = srkit::io::vec_to_json(traj.q.row(traj.nodes() - 1).transpose());
    summary["H_drift"] = traj.energy_drift();
    summary["nodes"] = traj.nodes();
    summary["exited"] = static_cast<bool>(traj.exit);
    std::cerr << summary.dump() << "\n";
    return 0;
}

// --- bvp --------------------------------------------------------------------------

srkit::SubmanifoldSpec parse_planes(const std::string& spec, int n) {
    // rows "n1,...,nn,c" separated by ';' describe the affine set {N q = c}
    std::vector<std::vector<double>> rows;
    std::stringstream ss(spec);
    std::string row;
    while (std::getline(ss, row, ';')) {
        auto vals = split_list(row, "--submanifold");
        if (static_cast<int>(vals.size()) != n + 1)
            throw ConfigError("--submanifold: each plane needs " + std::to_string(n) +
                              " normal components plus an offset");
        rows.push_back(vals);
    }
    if (rows.empty()) throw ConfigError("--submanifold: no planes given");
    Mat N(rows.size(), n);
    Vec c(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int i = 0; i < n; ++i) N(static_cast<Eigen::Index>(r), i) = rows[r][static_cast<size_t>(i)];
        c[static_cast<Eigen::Index>(r)] = rows[r][static_cast<size_t>(n)];
    }
    Vec anchor = N.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(c);
    return srkit::SubmanifoldSpec::MakeLevelSet(
        [N, c](const Vec& q) { return Vec(N * q - c); }, static_cast<int>(rows.size()), anchor,
        [N](const Vec&) { return N; });
}

int cmd_bvp(json cfg) {
    apply_config_file(cfg, cfg.at("config").get<std::string>());
    ChartModel model = resolve_model(cfg);
    Vec q0 = cfg_vec_n(cfg, "q0", model.n);
    auto [a, b] = cfg_span(cfg);
    int threads = resolve_threads_cfg(cfg);

    srkit::ShootOpts opts;
    opts.integrate = integrate_opts(cfg);
    opts.integrate.output_nodes = 100;
    opts.seed = cfg.at("seed").get<std::uint64_t>();
    opts.num_seeds = cfg.at("seeds").get<int>();
    opts.max_solutions = cfg.at("max-solutions").get<int>();
    opts.threads = threads;

    std::string sub = cfg.at("submanifold").get<std::string>();
    std::vector<srkit::BvpSolution> sols;
    Vec q1;
    bool point_target = sub.empty();
    if (point_target) {
        q1 = cfg_vec_n(cfg, "q1", model.n);
        sols = shoot_point_to_point(model, q0, q1, a, b, opts);
    } else {
        auto Q = parse_planes(sub, model.n);
        sols = shoot_to_submanifolds(model, srkit::SubmanifoldSpec::MakePoint(q0), Q, a, b, opts);
    }

    json out = srkit::io::bvp_solutions_json(sols, make_meta("bvp", cfg));
    if (cfg.at("oracle").get<bool>() && point_target) {
        srkit::DirectOpts dopts;
        dopts.seed = cfg.at("seed").get<std::uint64_t>();
        dopts.intervals = cfg.at("oracle-intervals").get<int>();
        dopts.threads = threads;
        srkit::DirectResult direct = direct_minimize(model, q0, q1, a, b, dopts);
        json o;
        o["action"] = direct.action;
        o["length"] = direct.length;
        o["endpoint_residual"] = direct.endpoint_residual;
        o["converged"] = direct.converged;
        if (!sols.empty() && sols.front().converged)
            o["gap"] = std::abs(sols.front().action - direct.action) /
                       std::max(1e-12, direct.action);
        out["oracle"] = o;
    }
    emit(cfg, srkit::io::dump_json(out));
    return 0;
}

// --- abnormal ---------------------------------------------------------------------

srkit::ControlCurve resolve_controls(const json& cfg, const ChartModel& model) {
    std::string path = cfg.at("controls").get<std::string>();
    if (!path.empty()) {
        srkit::ControlCurve c = srkit::io::load_controls(path);
        if (!c.model.empty() && c.model != model.name)
            throw ConfigError("control file was recorded for model '" + c.model +
                              "', but --model is '" + model.name + "'");
        if (c.h.cols() != model.n || c.q0.size() != model.n)
            throw ConfigError("control file dimensions do not match the model");
        return c;
    }
    // constant-control synthesis from --h
    srkit::ControlCurve c;
    Vec h = cfg_vec_n(cfg, "hconst", model.n);
    auto [a, b] = cfg_span(cfg);
    int N = cfg.at("intervals").get<int>();
    if (N < 1) throw ConfigError("--intervals must be >= 1");
    c.a = a;
    c.b = b;
    c.q0 = cfg_vec_n(cfg, "q0", model.n);
    c.h = h.transpose().replicate(N, 1);
    c.model = model.name;
    return c;
}

int cmd_abnormal(json cfg) {
    apply_config_file(cfg, cfg.at("config").get<std::string>());
    ChartModel model = resolve_model(cfg);
    srkit::ControlCurve curve = resolve_controls(cfg, model);

    json out;
    if (curve.h.cwiseAbs().maxCoeff() <= 1e-14) {
        // constant curve: the endpoint map has no linearization to rank
        srkit::AbnormalReport rep;
        rep.gramian = Mat::Zero(model.n, model.n);
        rep.singular_values = Vec::Zero(model.n);
        rep.rank = 0;
        rep.threshold = 0.0;
        rep.seeds = Mat(0, model.n);
        rep.max_violations = Vec(0);
        rep.verdict = "abnormal";
        out = srkit::io::abnormal_report_json(rep, make_meta("abnormal", cfg));
        out["degenerate"] = "constant curve";
    } else {
        srkit::GramianOpts gopts;
        gopts.substeps = cfg.at("substeps").get<int>();
        srkit::AbnormalReport rep = endpoint_differential_gramian(model, curve, gopts);
        out = srkit::io::abnormal_report_json(rep, make_meta("abnormal", cfg));
    }
    emit(cfg, srkit::io::dump_json(out));
    return 0;
}

// --- reparam ----------------------------------------------------------------------

int cmd_reparam(json cfg) {
    apply_config_file(cfg, cfg.at("config").get<std::string>());
    ChartModel model = resolve_model(cfg);
    std::string path = cfg.at("controls").get<std::string>();
    if (path.empty()) throw ConfigError("--controls file is required");
    srkit::ControlCurve curve = srkit::io::load_controls(path);
    if (curve.h.cols() != model.n) throw ConfigError("control file dimensions do not match");

    srkit::ControlCurve out =
        unit_speed_reparam(model, curve, cfg.at("out-intervals").get<int>());
    json meta = make_meta("reparam", cfg);
    std::string format = cfg.at("format").get<std::string>();
    if (format == "csv") {
        emit(cfg, srkit::io::controls_csv(out, meta));
    } else if (format == "json") {
        json j = srkit::io::controls_json(out, meta);
        j["length"] = out.b - out.a;  // unit-speed output lives on [0, L]
        emit(cfg, srkit::io::dump_json(j));
    } else {
        throw ConfigError("--format must be csv or json");
    }
    return 0;
}

// --- ball -------------------------------------------------------------------------

int cmd_ball(json cfg) {
    apply_config_file(cfg, cfg.at("config").get<std::string>());
    ChartModel model = resolve_model(cfg);
    Vec q0 = cfg_vec_n(cfg, "q0", model.n);
    int threads = resolve_threads_cfg(cfg);

    srkit::BallOpts opts;
    opts.seed = cfg.at("seed").get<std::uint64_t>();
    opts.integrate = integrate_opts(cfg);
    opts.threads = threads;
    srkit::BallSample ball = ball_sample(model, q0, cfg.at("radius").get<double>(),
                                         cfg.at("rays").get<int>(), opts);

    json meta = make_meta("ball", cfg);
    std::string format = cfg.at("format").get<std::string>();
    if (format == "csv")
        emit(cfg, srkit::io::ball_csv(ball, meta));
    else if (format == "json")
        emit(cfg, srkit::io::dump_json(srkit::io::ball_json(ball, meta)));
    else
        throw ConfigError("--format must be csv or json");
    return 0;
}

// --- wavefront --------------------------------------------------------------------

int cmd_wavefront(json cfg) {
    apply_config_file(cfg, cfg.at("config").get<std::string>());
    ChartModel model = resolve_model(cfg);
    const int n = model.n;

    Vec plane = cfg_vec_n(cfg, "plane", 2);
    int axis = static_cast<int>(plane[0]);
    double offset = plane[1];
    if (axis < 1 || axis > n) throw ConfigError("--plane: axis index out of range");
    --axis;
    Vec base = cfg_vec_n(cfg, "base", n);
    if (std::abs(base[axis] - offset) > 1e-9)
        throw ConfigError("--base point does not lie on the plane");

    double ur = cfg.at("uradius").get<double>();
    if (!(ur > 0.0)) throw ConfigError("--uradius must be positive");
    srkit::HypersurfaceParam surf;
    surf.u_lo = Vec::Constant(n - 1, -ur);
    surf.u_hi = Vec::Constant(n - 1, ur);
    surf.x = [n, axis, offset, base](const Vec& u) {
        Vec q(n);
        int k = 0;
        for (int i = 0; i < n; ++i) q[i] = (i == axis) ? offset : base[i] + u[k++];
        return q;
    };

    // seed covector at the base point: +-e_axis, H-normalized
    Vec seed = Vec::Unit(n, axis);
    double H = hamiltonian(model, base, seed);
    if (2.0 * H < 1e-12)
        throw srkit::NormalizationError(
            "no unit-H covector annihilating the plane at the base point "
            "(plane tangent to the distribution)",
            base);
    seed /= std::sqrt(2.0 * H);
    if (cfg.at("orient").get<int>() < 0) seed = -seed;

    auto [t0, t1] = cfg_span(cfg);
    Vec grid = cfg_vec_n(cfg, "grid", 2);
    srkit::WavefrontOpts wopts;
    wopts.nt = static_cast<int>(grid[0]);
    wopts.nu.assign(static_cast<size_t>(n - 1), static_cast<int>(grid[1]));
    wopts.integrate = integrate_opts(cfg);
    wopts.threads = resolve_threads_cfg(cfg);

    srkit::WavefrontChart chart = build_wavefront(model, surf, seed, t0, t1, wopts);
    srkit::CalibrationReport calib = calibration_check(chart);
    emit(cfg, srkit::io::dump_json(
                  srkit::io::wavefront_json(chart, &calib, make_meta("wavefront", cfg))));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"srkit: sub-Riemannian geometry in a coordinate chart"};
    app.require_subcommand(1);

    // flag storage shared across subcommands; each run() reads its own keys
    std::string model = "heisenberg", output = "-", format, config, q0, p0, q1, span = "0,1";
    std::string submanifold, controls, h, plane = "1,0", base, grid = "20,10";
    int steps = 0, nodes = 200, seeds = 32, max_solutions = 8, intervals = 64, substeps = 1;
    int out_intervals = 0, rays = 256, threads = 0, orient = 1, oracle_intervals = 128;
    double tol = 1e-10, radius = 1.0, uradius = 0.1;
    std::uint64_t seed = 12345;
    bool oracle = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--model", model, "builtin model name or model JSON path");
        sub->add_option("--output", output, "output path ('-' = stdout)");
        sub->add_option("--format", format, "csv or json (default depends on the command)");
        sub->add_option("--config", config, "JSON config file overriding flags");
        sub->add_option("--steps", steps, "fixed-step count (0 = adaptive)");
        sub->add_option("--tol", tol, "adaptive tolerance");
        sub->add_option("--threads", threads, "worker threads (0 = SRKIT_THREADS or 1)");
        sub->add_option("--seed", seed, "seed for stochastic multistarts");
    };

    CLI::App* geo = app.add_subcommand("geodesic", "integrate a normal geodesic");
    add_common(geo);
    geo->add_option("--q0", q0, "start point, comma-separated")->required();
    geo->add_option("--p0", p0, "start covector, comma-separated")->required();
    geo->add_option("--span", span, "time span a,b");
    geo->add_option("--nodes", nodes, "output nodes");

    CLI::App* bvp = app.add_subcommand("bvp", "solve a geodesic boundary-value problem");
    add_common(bvp);
    bvp->add_option("--q0", q0, "start point")->required();
    bvp->add_option("--q1", q1, "target point");
    bvp->add_option("--submanifold", submanifold,
                    "target planes 'n1,..,nn,c[;...]' instead of --q1");
    bvp->add_option("--span", span, "time span a,b");
    bvp->add_option("--seeds", seeds, "shooting multistart seeds");
    bvp->add_option("--max-solutions", max_solutions, "solution list cap");
    bvp->add_flag("--oracle", oracle, "cross-run the direct minimizer");
    bvp->add_option("--oracle-intervals", oracle_intervals, "oracle control intervals");

    CLI::App* abn = app.add_subcommand("abnormal", "endpoint-differential rank analysis");
    add_common(abn);
    abn->add_option("--controls", controls, "control curve JSON file");
    abn->add_option("--q0", q0, "start point (with --h)");
    abn->add_option("--hconst", h, "constant control row (with --q0/--span/--intervals)");
    abn->add_option("--span", span, "time span a,b");
    abn->add_option("--intervals", intervals, "control grid intervals");
    abn->add_option("--substeps", substeps, "integration substeps per interval");

    CLI::App* rep = app.add_subcommand("reparam", "unit-speed reparameterization");
    add_common(rep);
    rep->add_option("--controls", controls, "control curve JSON file")->required();
    rep->add_option("--out-intervals", out_intervals, "output interval count (0 = keep)");

    CLI::App* bal = app.add_subcommand("ball", "sample the exponential sphere");
    add_common(bal);
    bal->add_option("--q0", q0, "center point")->required();
    bal->add_option("--radius", radius, "arclength radius");
    bal->add_option("--rays", rays, "number of rays");

    CLI::App* wav = app.add_subcommand("wavefront", "wavefront chart from a plane");
    add_common(wav);
    wav->add_option("--plane", plane, "axis,offset: the plane {q_axis = offset}");
    wav->add_option("--base", base, "base point on the plane")->required();
    wav->add_option("--uradius", uradius, "surface parameter half-width");
    wav->add_option("--span", span, "flow time range t0,t1");
    wav->add_option("--grid", grid, "nt,nu grid intervals");
    wav->add_option("--orient", orient, "+1/-1 seed covector orientation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        json cfg;
        cfg["model"] = model;
        cfg["output"] = output;
        cfg["config"] = config;
        cfg["steps"] = steps;
        cfg["tol"] = tol;
        cfg["threads"] = threads;
        cfg["seed"] = seed;
        if (geo->parsed()) {
            cfg["format"] = format.empty() ? "csv" : format;
            cfg["q0"] = q0;
            cfg["p0"] = p0;
            cfg["span"] = span;
            cfg["nodes"] = nodes;
            return cmd_geodesic(cfg);
        }
        if (bvp->parsed()) {
            cfg["format"] = "json";
            cfg["q0"] = q0;
            cfg["q1"] = q1;
            cfg["submanifold"] = submanifold;
            cfg["span"] = span;
            cfg["seeds"] = seeds;
            cfg["max-solutions"] = max_solutions;
            cfg["oracle"] = oracle;
            cfg["oracle-intervals"] = oracle_intervals;
            return cmd_bvp(cfg);
        }
        if (abn->parsed()) {
            cfg["format"] = "json";
            cfg["controls"] = controls;
            cfg["q0"] = q0;
            cfg["hconst"] = h;
            cfg["span"] = span;
            cfg["intervals"] = intervals;
            cfg["substeps"] = substeps;
            return cmd_abnormal(cfg);
        }
        if (rep->parsed()) {
            cfg["format"] = format.empty() ? "json" : format;
            cfg["controls"] = controls;
            cfg["out-intervals"] = out_intervals;
            return cmd_reparam(cfg);
        }
        if (bal->parsed()) {
            cfg["format"] = format.empty() ? "csv" : format;
            cfg["q0"] = q0;
            cfg["radius"] = radius;
            cfg["rays"] = rays;
            cfg["nodes"] = nodes;
            return cmd_ball(cfg);
        }
        if (wav->parsed()) {
            cfg["format"] = "json";
            cfg["plane"] = plane;
            cfg["base"] = base;
            cfg["uradius"] = uradius;
            cfg["span"] = span;
            cfg["grid"] = grid;
            cfg["orient"] = orient;
            return cmd_wavefront(cfg);
        }
        throw ConfigError("no subcommand given");
    } catch (const srkit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.cls);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
