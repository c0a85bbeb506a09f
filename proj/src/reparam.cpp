#include "srkit/reparam.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "srkit/errors.hpp"

namespace srkit {

ArclengthProfile arclength_profile(const ChartModel& model, const ControlCurve& curve,
                                   double horizontal_tol) {
    if (curve.intervals() < 1) throw ConfigError("control curve has no intervals");
    double comp = curve.max_complement(model.m);
    if (comp > horizontal_tol) {
        std::stringstream ss;
        ss << "curve is not horizontal: max complement coefficient " << comp << " > "
           << horizontal_tol;
        throw NonHorizontalError(ss.str());
    }
    const int N = curve.intervals();
    const double dt = curve.dt();
    ArclengthProfile prof;
    prof.t.resize(static_cast<size_t>(N) + 1);
    prof.sigma.resize(static_cast<size_t>(N) + 1);
    prof.t[0] = curve.a;
    prof.sigma[0] = 0.0;
    for (int j = 0; j < N; ++j) {
        double speed = curve.h.row(j).head(model.m).norm();
        prof.t[static_cast<size_t>(j) + 1] = (j + 1 == N) ? curve.b : curve.a + (j + 1) * dt;
        // piecewise-constant speed: the cumulative integral of |h| is exact
        prof.sigma[static_cast<size_t>(j) + 1] = prof.sigma[static_cast<size_t>(j)] + speed * dt;
    }
    return prof;
}

ControlCurve unit_speed_reparam(const ChartModel& model, const ControlCurve& curve,
                                int out_intervals, double plateau_tol) {
    ArclengthProfile prof = arclength_profile(model, curve);
    const int N = curve.intervals();
    const double dt = curve.dt();
    const double L = prof.length();
    if (!(L > plateau_tol)) throw ZeroLengthError("cannot reparameterize a zero-length curve");

    // moving intervals only: plateaus (|h| < plateau_tol) carry no arclength
    // and are collapsed by the inverse profile
    struct Piece {
        double s0, s1;  ///< sigma extent
        int j;          ///< source interval
    };
    std::vector<Piece> pieces;
    double s = 0.0;
    for (int j = 0; j < N; ++j) {
        double speed = curve.h.row(j).head(model.m).norm();
        if (speed < plateau_tol) continue;
        pieces.push_back({s, s + speed * dt, j});
        s += speed * dt;
    }
    // `s` now equals L up to roundoff; use it as the authoritative total
    const double total = s;

    const int M = (out_intervals > 0) ? out_intervals : N;
    ControlCurve out;
    out.a = 0.0;
    out.b = total;
    out.q0 = curve.q0;
    out.model = curve.model;
    out.h = Mat::Zero(M, model.n);

    size_t cursor = 0;
    for (int i = 0; i < M; ++i) {
        double target = total * (i + 0.5) / M;  // midpoint of output interval i
        while (cursor + 1 < pieces.size() && pieces[cursor].s1 < target) ++cursor;
        const Piece& pc = pieces[cursor];
        Vec hh = curve.h.row(pc.j).head(model.m).transpose();
        out.h.row(i).head(model.m) = (hh / hh.norm()).transpose();
    }
    return out;
}

}  // namespace srkit
