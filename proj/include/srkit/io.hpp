#pragma once

// Serialization: deterministic CSV/JSON writers for trajectories, control
// curves, and the report types, plus readers for control curves and model
// definitions.  All floating-point output uses shortest round-trip
// formatting, so identical data gives byte-identical files.

#include <string>
#include <vector>

#include <json.hpp>

#include "srkit/endpoint.hpp"
#include "srkit/minimality.hpp"
#include "srkit/solver.hpp"
#include "srkit/types.hpp"

namespace srkit::io {

using json = nlohmann::ordered_json;

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

json vec_to_json(const Vec& v);
json mat_to_json(const Mat& m);
Vec vec_from_json(const json& j);
Mat mat_from_json(const json& j);

// --- trajectories -------------------------------------------------------------

/// CSV with a single `# meta {...}` comment line, then the pinned header
/// `t,q1..qn,p1..pn,H`.  Trajectories without momenta write empty p/H cells.
std::string trajectory_csv(const Trajectory& traj, const json& meta);
json trajectory_json(const Trajectory& traj, const json& meta);

// --- control curves -----------------------------------------------------------

/// Schema: { "model", "a", "b", "q0": [...], "h": [[...], ...] }.
json controls_json(const ControlCurve& curve, const json& meta);
ControlCurve controls_from_json(const json& j);
ControlCurve load_controls(const std::string& path);

/// CSV rows `t_start,t_end,h1..hn`, one per control interval.
std::string controls_csv(const ControlCurve& curve, const json& meta);

// --- reports --------------------------------------------------------------------

json abnormal_report_json(const AbnormalReport& report, const json& meta);
json bvp_solutions_json(const std::vector<BvpSolution>& sols, const json& meta);
json certificate_json(const MinimalityCertificate& cert, const json& meta);
json ball_json(const BallSample& ball, const json& meta);
/// CSV rows `q1..qn,p0_1..p0_n,length,exited`, one per ray.
std::string ball_csv(const BallSample& ball, const json& meta);
json wavefront_json(const WavefrontChart& chart, const CalibrationReport* calib,
                    const json& meta);

/// 2-space indented dump with a trailing newline.
std::string dump_json(const json& j);

/// Write text to a file, or to stdout when path is "-".
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace srkit::io
