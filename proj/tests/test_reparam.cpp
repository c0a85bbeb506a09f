#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "srkit/endpoint.hpp"
#include "srkit/errors.hpp"
#include "srkit/model.hpp"
#include "srkit/reparam.hpp"
#include "srkit/solver.hpp"

using namespace srkit;

namespace {

Vec v3(double a, double b, double c) {
    Vec v(3);
    v << a, b, c;
    return v;
}

constexpr double kPi = 3.14159265358979323846;

/// |h(t)| = 2t along a fixed horizontal direction: arclength sigma(t) = t^2.
ControlCurve ramp_curve(const std::string& model, int N, const Vec& dir) {
    ControlCurve c;
    c.a = 0.0;
    c.b = 1.0;
    c.q0 = v3(0, 0, 0);
    c.model = model;
    c.h.resize(N, 3);
    for (int j = 0; j < N; ++j) {
        double tm = (j + 0.5) / N;
        c.h.row(j) = (2.0 * tm) * dir.transpose();
    }
    return c;
}

}  // namespace

TEST_CASE("arclength profile of the |h| = 2t ramp is exactly t^2") {
    ChartModel mod = flat_model();
    const int N = 100;
    ControlCurve c = ramp_curve("flat", N, v3(1, 0, 0));
    ArclengthProfile prof = arclength_profile(mod, c);
    REQUIRE(prof.t.size() == static_cast<size_t>(N + 1));
    REQUIRE(prof.sigma.size() == static_cast<size_t>(N + 1));
    CHECK(prof.sigma.front() == 0.0);
    CHECK(prof.length() == doctest::Approx(1.0).epsilon(1e-14));
    // midpoint speeds integrate the linear profile exactly: sigma(t_j) = t_j^2
    for (int j = 0; j <= N; ++j) {
        double t = static_cast<double>(j) / N;
        CHECK(prof.sigma[static_cast<size_t>(j)] == doctest::Approx(t * t).epsilon(1e-13));
    }
    for (size_t j = 1; j < prof.sigma.size(); ++j) CHECK(prof.sigma[j] >= prof.sigma[j - 1]);
}

TEST_CASE("unit-speed reparameterization of the ramp: closed form to 1e-6") {
    ChartModel mod = heisenberg_model();
    const int N = 500;
    ControlCurve c = ramp_curve("heisenberg", N, v3(1, 0, 0));
    ControlCurve r = unit_speed_reparam(mod, c, N);
    CHECK(r.a == 0.0);
    CHECK(r.b == doctest::Approx(1.0).epsilon(1e-12));  // new span is [0, L]
    REQUIRE(r.intervals() == N);
    // every interval runs at unit speed along the same direction
    for (int j = 0; j < N; ++j) {
        CHECK(r.h.row(j).head(2).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.h(j, 0) == doctest::Approx(1.0).epsilon(1e-9));
    }
    // the geometric path x(sigma) = sigma is reproduced through the chart map
    Trajectory traj = controls_to_curve(mod, r, 2);
    for (int j = 0; j < traj.nodes(); ++j)
        CHECK(traj.q(j, 0) == doctest::Approx(traj.t[static_cast<size_t>(j)]).epsilon(1e-6));
    // length is preserved
    CHECK(length(mod, r) == doctest::Approx(length(mod, c)).epsilon(1e-8));
}

TEST_CASE("idempotence: reparameterizing a unit-speed curve is a fixed point") {
    ChartModel mod = heisenberg_model();
    ControlCurve c = ramp_curve("heisenberg", 200, v3(0.6, 0.8, 0));
    ControlCurve once = unit_speed_reparam(mod, c, 128);
    ControlCurve twice = unit_speed_reparam(mod, once, 128);
    CHECK(std::abs(once.b - twice.b) <= 1e-8);
    CHECK((once.h - twice.h).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((once.q0 - twice.q0).norm() == 0.0);
}

TEST_CASE("curved controls: endpoint and length survive the reparameterization") {
    ChartModel mod = heisenberg_model();
    const int N = 400;
    ControlCurve c;
    c.a = 0.0;
    c.b = 1.0;
    c.q0 = v3(0, 0, 0);
    c.model = "heisenberg";
    c.h.resize(N, 3);
    for (int j = 0; j < N; ++j) {
        double tm = (j + 0.5) / N;
        // rotating direction with non-constant speed 1 + 0.5 sin(2 pi t)
        double s = 1.0 + 0.5 * std::sin(2 * kPi * tm);
        c.h.row(j) << s * std::cos(kPi * tm), s * std::sin(kPi * tm), 0.0;
    }
    ControlCurve r = unit_speed_reparam(mod, c, N);
    CHECK(length(mod, r) == doctest::Approx(length(mod, c)).epsilon(1e-8));
    CHECK(r.b - r.a == doctest::Approx(length(mod, c)).epsilon(1e-10));
    for (int j = 0; j < N; ++j)
        CHECK(r.h.row(j).norm() == doctest::Approx(1.0).epsilon(1e-10));
    Vec end_orig = controls_to_curve(mod, c, 2).q.bottomRows(1).transpose();
    Vec end_rep = controls_to_curve(mod, r, 2).q.bottomRows(1).transpose();
    CHECK((end_orig - end_rep).norm() <= 1e-3);  // same path, resampled controls
}

TEST_CASE("plateaus are collapsed, zero curves are rejected") {
    ChartModel mod = flat_model();
    SUBCASE("an interior stop does not break the monotone inverse") {
        ControlCurve c;
        c.a = 0.0;
        c.b = 3.0;
        c.q0 = v3(0, 0, 0);
        c.model = "flat";
        c.h.resize(3, 3);
        c.h.row(0) << 1, 0, 0;
        c.h.row(1) << 0, 0, 0;  // one-second pause
        c.h.row(2) << 0, 1, 0;
        ControlCurve r = unit_speed_reparam(mod, c, 64);
        CHECK(r.b == doctest::Approx(2.0).epsilon(1e-12));  // pause carries no arclength
        for (int j = 0; j < r.intervals(); ++j)
            CHECK(r.h.row(j).norm() == doctest::Approx(1.0).epsilon(1e-10));
        Vec end = controls_to_curve(mod, r).q.bottomRows(1).transpose();
        CHECK((end - v3(1, 1, 0)).norm() <= 1e-9);
    }
    SUBCASE("zero-length curves throw ZeroLengthError") {
        ControlCurve c;
        c.a = 0.0;
        c.b = 1.0;
        c.q0 = v3(0, 0, 0);
        c.model = "flat";
        c.h = Mat::Zero(8, 3);
        CHECK_THROWS_AS(unit_speed_reparam(mod, c), ZeroLengthError);
        CHECK(arclength_profile(mod, c).length() == 0.0);  // the profile itself is fine
    }
    SUBCASE("non-horizontal curves throw NonHorizontalError") {
        ControlCurve c;
        c.a = 0.0;
        c.b = 1.0;
        c.q0 = v3(0, 0, 0);
        c.model = "flat";
        c.h.resize(4, 3);
        c.h.setOnes();
        CHECK_THROWS_AS(arclength_profile(mod, c), NonHorizontalError);
        CHECK_THROWS_AS(unit_speed_reparam(mod, c), NonHorizontalError);
    }
}
