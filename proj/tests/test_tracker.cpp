#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "curveflow/analysis.hpp"
#include "curveflow/levelset.hpp"
#include "curveflow/tracker.hpp"

using namespace curveflow;
using namespace curveflow::tracker;
using Catch::Approx;
constexpr double pi = std::numbers::pi;

namespace {

PolyCurve ellipse(double cx, double cy, double rx, double ry, std::size_t n)
{
    std::vector<Point2> pts;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = 2.0 * pi * double(k) / double(n);
        pts.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    return make_closed_curve(pts);
}

Profile semicircle(double b0 = 1.0)
{
    CurveFamily f;
    f.kind = CurveFamily::Kind::semicircle;
    f.b0 = b0;
    return make_initial_curve(f);
}

Profile dumbbell()
{
    CurveFamily f;
    f.kind = CurveFamily::Kind::dumbbell;
    f.base = 0.5;
    f.amp = 0.4;
    f.freq = 2.0;
    return make_initial_curve(f);
}

}  // namespace

TEST_CASE("equilibrium polygon does not move", "[tracker]")
{
    const std::size_t n = 512;
    MarkerCurve mc;
    mc.curve = ellipse(0, 0, 1, 1, n);
    mc.target_spacing = 2.0 * std::sin(pi / double(n));
    const double dt = max_marker_dt(mc.target_spacing);
    const auto out = step_markers(mc, 1.0, dt);
    REQUIRE(out.curve.points.size() == n);
    for (const auto& p : out.curve.points) REQUIRE(std::abs(norm(p) - 1.0) < 1e-9 * dt);
}

TEST_CASE("step size is bounded by the marker CFL limit", "[tracker]")
{
    MarkerCurve mc;
    mc.curve = ellipse(0, 0, 1, 1, 200);
    mc.target_spacing = 0.03;
    REQUIRE_THROWS_AS(step_markers(mc, 1.0, 2.0 * max_marker_dt(0.03)), TrackerError);
}

TEST_CASE("circle extinction times", "[tracker]")
{
    const auto c = ellipse(0, 0, 0.5, 0.5, 4000);
    const auto t0 = evolve_closed(c, 0.0, 0.2);
    REQUIRE(t0.extinction_time);
    REQUIRE(*t0.extinction_time == Approx(0.125).epsilon(0.005));
    const auto t1 = evolve_closed(c, 1.0, 0.3);
    REQUIRE(t1.extinction_time);
    REQUIRE(*t1.extinction_time == Approx(-0.5 - std::log(0.5)).epsilon(0.01));
}

TEST_CASE("area rate obeys the turning-angle identity", "[tracker][property]")
{
    // dA/dt = -(total turning) + A L = -2 pi + A L for an embedded curve
    const auto c = ellipse(0.1, -0.2, 0.6, 0.35, 3000);
    for (double A : {0.0, 1.0, 2.5}) {
        EvolveOptions o;
        o.frame_stride = 50;
        const auto tr = evolve_closed(c, A, 0.01, o);
        for (std::size_t k = 1; k < tr.frames.size(); ++k) {
            const auto& f0 = tr.frames[k - 1];
            const auto& f1 = tr.frames[k];
            const double L = 0.5 * (curve_length(f0.curves[0]) + curve_length(f1.curves[0]));
            const double want = (-2.0 * pi + A * L) * (f1.t - f0.t);
            REQUIRE(f1.area - f0.area == Approx(want).epsilon(0.01));
        }
    }
}

TEST_CASE("semicircle lobe under strong forcing grows at the cap", "[tracker]")
{
    EvolveOptions o;
    o.frame_stride = 20;
    const auto tr = evolve_free_halfplane(semicircle(), 3.0, 0.01, o);
    REQUIRE(tr.frames[1].h > tr.frames[0].h);
    REQUIRE(tr.frames.back().b > tr.frames.front().b);
    REQUIRE(tr.frames.back().a < 0.0);
}

TEST_CASE("semicircle lobe with A = 0 dies no later than the enclosing circle", "[tracker]")
{
    // |y| = sqrt(x (1 - x)) is itself the circle of radius 1/2, so the bound is attained
    const auto tr = evolve_free_halfplane(semicircle(), 0.0, 0.2);
    REQUIRE(tr.extinction_time);
    REQUIRE(*tr.extinction_time <= 0.125 * 1.005);

    // a thinner lobe inside the same circle dies strictly earlier
    CurveFamily f;
    f.kind = CurveFamily::Kind::dumbbell;
    f.base = 0.8;
    f.amp = 0.1;
    f.freq = 1.0;
    const auto thin = evolve_free_halfplane(make_initial_curve(f), 0.0, 0.2);
    REQUIRE(thin.extinction_time);
    REQUIRE(*thin.extinction_time < 0.125);
}

TEST_CASE("off-axis circle tracks the ball ODE", "[tracker]")
{
    CurveFamily f;
    f.kind = CurveFamily::Kind::circle;
    f.center = 1.0;
    f.radius = 0.5;
    EvolveOptions o;
    o.frame_dt = 0.02;
    const auto tr = evolve_free_halfplane(make_initial_curve(f), 1.0, 0.1, o);
    for (const auto& fr : tr.frames) REQUIRE(std::abs(fr.a - (1.0 - analysis::ball_radius(1.0, 0.5, fr.t))) <= 2.0 * o.spacing);
}

TEST_CASE("neumann run matches the level-set evolution of the even extension", "[tracker][crossval]")
{
    // A = 3 > kappa(O): the two lobes merge across the axis and the union evolves regularly
    const double A = 3.0;
    const double t = 0.02;
    EvolveOptions o;
    o.frame_dt = t;
    const auto nt = evolve_neumann(semicircle(), A, t, o);
    const Profile ext = even_extend(semicircle());
    const auto grid = levelset::square_grid(0, 0, 1.3, 256);
    const auto lt = levelset::evolve(levelset::signed_distance_init(profile_to_curve(ext), grid), A, t);
    const auto& nc = nt.frames.back().curves;
    const auto& lc = lt.trace.frames.back().curves;
    REQUIRE(lc.size() == 1);
    REQUIRE(hausdorff_distance(nc, lc) <= 3.0 * grid.dx());
}

TEST_CASE("event detection", "[tracker][events]")
{
    SECTION("shrinking circle: one extinction, no minima loss")
    {
        const auto tr = evolve_closed(ellipse(0, 0, 0.3, 0.3, 2000), 0.0, 0.1);
        const auto log = detect_events(tr);
        REQUIRE(log.count(EventKind::extinction) == 1);
        REQUIRE(log.count(EventKind::minima_loss) == 0);
        for (const auto& f : tr.frames) REQUIRE(f.n_minima == 0);
    }
    SECTION("expanding circle: empty log")
    {
        const auto tr = evolve_closed(ellipse(0, 0, 2.0, 2.0, 4000), 1.0, 0.1);
        REQUIRE(detect_events(tr).events.empty());
    }
    SECTION("dumbbell: minima disappear before extinction")
    {
        const auto tr = evolve_neumann(dumbbell(), 0.2, 1.0);
        const auto log = detect_events(tr);
        REQUIRE(tr.frames.front().n_minima > 0);
        const auto loss = log.last(EventKind::minima_loss);
        const auto ext = log.first(EventKind::extinction);
        REQUIRE(loss);
        REQUIRE(ext);
        REQUIRE(loss->t < ext->t);
        REQUIRE(log.count(EventKind::axis_pinch) == 0);
        REQUIRE(tr.frames[tr.frames.size() - 2].n_minima == 0);
    }
}

TEST_CASE("self-intersection detection", "[tracker]")
{
    PolyCurve eight;
    eight.points = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
    eight.closed = true;
    REQUIRE(has_self_intersection(eight));
    REQUIRE_FALSE(has_self_intersection(ellipse(0, 0, 1, 0.5, 300)));
}

TEST_CASE("marker curves respect the target spacing", "[tracker]")
{
    const auto mc = make_marker_curve(ellipse(0, 0, 1, 0.5, 5000), 0.02);
    const double L = curve_length(mc.curve);
    // node count is L / spacing rounded
    REQUIRE(std::abs(L / double(mc.curve.points.size()) - 0.02) <= 0.5 * 0.02 * 0.02 / L * 1.01);
}
