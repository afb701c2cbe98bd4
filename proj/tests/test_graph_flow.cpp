#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "curveflow/graph_flow.hpp"
#include "curveflow/tracker.hpp"

using namespace curveflow;
using namespace curveflow::graph;
using Catch::Approx;
constexpr double pi = std::numbers::pi;

namespace {

GraphState uniform_state(double a, double b, std::size_t n, auto f, int dim = 1)
{
    GraphState s;
    s.n = dim;
    s.profile.a = a;
    s.profile.b = b;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a + (b - a) * double(i) / double(n - 1);
        s.profile.x.push_back(x);
        s.profile.u.push_back(f(x));
    }
    return s;
}

Profile arc(double R, double angle, double center = 0.0)
{
    CurveFamily f;
    f.kind = CurveFamily::Kind::arc;
    f.radius = R;
    f.angle = angle;
    f.center = center;
    return make_initial_curve(f);
}

}  // namespace

TEST_CASE("horizontal graph: constant profile rises at speed A", "[graph]")
{
    const auto s = uniform_state(0, 1, 21, [](double) { return 0.3; });
    const auto r = horizontal_rate(s, 1.7);
    for (std::size_t i = 1; i + 1 < r.size(); ++i) REQUIRE(r[i] == Approx(1.7).epsilon(1e-14));
    REQUIRE(r.front() == 0.0);
}

TEST_CASE("horizontal graph: concave bump decays without forcing", "[graph]")
{
    const auto s = uniform_state(0, 1, 101, [](double x) { return std::sin(pi * x) + 1e-3; });
    REQUIRE(horizontal_rate(s, 0.0)[50] < 0.0);
}

TEST_CASE("horizontal graph: unit arc is an equilibrium at A = 1", "[graph]")
{
    const std::size_t n = 181;
    const auto s = uniform_state(-0.9, 0.9, n, [](double x) { return std::sqrt(1.0 - x * x); });
    const double dx = 1.8 / double(n - 1);
    const auto r = horizontal_rate(s, 1.0);
    for (std::size_t i = 1; i + 1 < n; ++i) REQUIRE(std::abs(r[i]) < 10.0 * dx * dx);
}

TEST_CASE("horizontal graph: sphere in rotational dimension 2", "[graph]")
{
    // a sphere of radius R in R^3 moves with normal speed -2/R + A, so u_t = (-2/R + A) sqrt(1 + u_x^2)
    const double R = 1.0;
    const double A = 0.5;
    const auto s = uniform_state(-0.8, 0.8, 321, [&](double x) { return std::sqrt(R * R - x * x); }, 2);
    const auto r = horizontal_rate(s, A);
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
        const double x = s.profile.x[i];
        const double ux = -x / std::sqrt(R * R - x * x);
        REQUIRE(r[i] == Approx((-2.0 / R + A) * std::sqrt(1 + ux * ux)).epsilon(1e-3));
    }
}

TEST_CASE("horizontal graph: step guards", "[graph]")
{
    auto s = uniform_state(0, 1, 11, [](double x) { return 0.5 + 0.0 * x; });
    REQUIRE_THROWS_AS(step_horizontal(s, 0.0, 1.0), GraphError);
    s.profile.u[5] = 0.0;
    REQUIRE_THROWS_AS(horizontal_rate(s, 0.0), SingularityError);
    // the rotational term -(n - 1) / u pinches a deep dent within one step
    auto d = uniform_state(0, 1, 11, [](double x) { return 0.5 + 0.0 * x; }, 2);
    d.profile.u[5] = 1e-6;
    REQUIRE_THROWS_AS(step_horizontal(d, 0.0, max_horizontal_dt(d.profile)), SingularityError);
}

TEST_CASE("vertical graph: flat front translates at speed A", "[graph]")
{
    const std::vector<double> v(41, 0.2);
    for (double r : vertical_rate(v, 0.025, 1, 1.3, Drift::plus)) REQUIRE(r == Approx(1.3).epsilon(1e-14));
    for (double r : vertical_rate(v, 0.025, 1, 1.3, Drift::minus)) REQUIRE(r == Approx(-1.3).epsilon(1e-14));
}

TEST_CASE("vertical graph: left cap of the unit circle is an equilibrium", "[graph]")
{
    const double dr = 0.005;
    std::vector<double> v;
    for (int i = 0; i <= 180; ++i) v.push_back(-std::sqrt(1.0 - std::pow(i * dr, 2)));
    const auto r = vertical_rate(v, dr, 1, 1.0, Drift::minus);
    for (std::size_t i = 0; i + 1 < r.size(); ++i) REQUIRE(std::abs(r[i]) < 10.0 * dr * dr);
}

TEST_CASE("vertical graph: monotone profiles stay monotone", "[graph][property]")
{
    const double dr = 0.02;
    std::vector<double> v;
    for (int i = 0; i <= 50; ++i) v.push_back(0.3 * std::pow(i * dr, 2) + 0.1 * std::pow(i * dr, 4));
    const double dt = max_vertical_dt(dr, 2);
    for (int n : {1, 2}) {
        auto w = v;
        for (int k = 0; k < 400; ++k) {
            w = step_vertical(w, dr, n, 1.0, Drift::plus, dt);
            for (std::size_t i = 1; i < w.size(); ++i) REQUIRE(w[i] - w[i - 1] >= -1e-12);
        }
    }
    REQUIRE_THROWS_AS(step_vertical(v, dr, 1, 1.0, Drift::plus, 1.0), GraphError);
}

TEST_CASE("problem Q: arc meeting the axis at the prescribed angle with kappa = A is stationary", "[graph][q]")
{
    const auto p = arc(1.0, pi / 4.0);
    QOptions o;
    o.frame_dt = 0.05;
    const auto tr = solve_Q(p, pi / 4.0, pi / 4.0, 1.0, 0.5, o);
    for (const auto& f : tr.frames) {
        REQUIRE(f.a == Approx(p.a).margin(1e-3));
        REQUIRE(f.b == Approx(p.b).margin(1e-3));
        REQUIRE(f.theta_minus == Approx(pi / 4.0).margin(2e-3));
    }
}

TEST_CASE("problem Q: expanding wedge", "[graph][q]")
{
    // radius 2 > 1 / A
    QOptions o;
    o.frame_dt = 0.01;
    const auto tr = solve_Q(arc(2.0, pi / 4.0), pi / 4.0, pi / 4.0, 1.0, 0.1, o);
    for (std::size_t k = 1; k < tr.frames.size(); ++k) REQUIRE(tr.frames[k].b > tr.frames[k - 1].b);
}

TEST_CASE("problem Q: symmetric data keeps its centre", "[graph][q][property]")
{
    QOptions o;
    o.frame_dt = 0.01;
    const auto tr = solve_Q(arc(0.8, 1.0, 0.3), 1.0, 1.0, 0.5, 0.1, o);
    const double c0 = tr.frames.front().a + tr.frames.front().b;
    for (const auto& f : tr.frames) REQUIRE(f.a + f.b == Approx(c0).margin(1e-9));
}

TEST_CASE("problem Q: frames stay graphs", "[graph][q][property]")
{
    QOptions o;
    o.frame_dt = 0.005;
    const auto tr = solve_Q(arc(0.6, 0.9, 0.1), 0.9, 0.9, 0.0, 0.05, o);
    for (const auto& f : tr.frames) {
        REQUIRE(f.profile);
        const auto& p = *f.profile;
        for (std::size_t i = 1; i < p.x.size(); ++i) REQUIRE(p.x[i] > p.x[i - 1]);
        for (std::size_t i = 1; i + 1 < p.u.size(); ++i) REQUIRE(p.u[i] > 0.0);
    }
}

TEST_CASE("problem Q: near-vertical angles approach the vertical-contact tracker", "[graph][q][crossval]")
{
    const double theta = 1.45;
    const auto p = arc(0.5, theta);
    QOptions o;
    o.nodes = 1001;
    o.frame_dt = 0.005;
    const auto q = solve_Q(p, theta, theta, 1.0, 0.02, o);
    tracker::EvolveOptions to;
    to.frame_dt = 0.005;
    const auto t = tracker::evolve_free_halfplane(p, 1.0, 0.02, to);
    REQUIRE(q.frames.size() == t.frames.size());
    for (std::size_t k = 0; k < q.frames.size(); ++k)
        REQUIRE(hausdorff_distance(q.frames[k].curves, t.frames[k].curves) <= 3.0 * to.spacing);
}

TEST_CASE("problem Q: argument checks", "[graph][q]")
{
    const auto p = arc(1.0, pi / 4.0);
    REQUIRE_THROWS_AS(solve_Q(p, pi / 2.0, pi / 4.0, 1.0, 0.1), GraphError);
    REQUIRE_THROWS_AS(solve_Q(p, 1.2, 1.2, 1.0, 0.1), GraphError);  // incompatible initial slope
}

TEST_CASE("extension curves", "[graph]")
{
    Profile p;
    p.a = 0.0;
    p.b = 1.0;
    p.x = {0.0, 0.5, 1.0};
    p.u = {0.0, 0.4, 0.0};
    SECTION("vertical contacts give vertical half-lines")
    {
        const auto e = extension_curve(p, pi / 2.0, pi / 2.0);
        REQUIRE(e.gamma1.front().x == 0.0);
        REQUIRE(e.gamma1.front().y < 0.0);
        REQUIRE(e.gamma2.back().x == 1.0);
        REQUIRE(e.gamma2.back().y < 0.0);
    }
    SECTION("pi/4 at a = 0 gives the ray y = x")
    {
        const auto e = extension_curve(p, pi / 4.0, pi / 3.0);
        const Point2 q = e.gamma1.front();
        REQUIRE(q.y < 0.0);
        REQUIRE(q.y == Approx(q.x).epsilon(1e-12));
    }
    SECTION("mirror symmetry")
    {
        Profile m = p;
        m.a = -1.0;
        m.b = 0.0;
        m.x = {-1.0, -0.5, 0.0};
        const auto e = extension_curve(p, 0.7, 1.1);
        const auto f = extension_curve(m, 1.1, 0.7);
        const auto ep = e.polyline().points;
        const auto fp = f.polyline().points;
        REQUIRE(ep.size() == fp.size());
        for (std::size_t i = 0; i < ep.size(); ++i) {
            const auto& r = fp[fp.size() - 1 - i];
            REQUIRE(ep[i].x == Approx(-r.x).margin(1e-12));
            REQUIRE(ep[i].y == Approx(r.y).margin(1e-12));
        }
    }
    SECTION("contact kinds choose the ray angle")
    {
        Profile q = p;
        q.left = Contact{ContactKind::angle, pi / 4.0};
        const auto e = extension_curve(q);
        REQUIRE(e.gamma1.front().y == Approx(e.gamma1.front().x).epsilon(1e-12));
        REQUIRE(e.gamma2.back().x == 1.0);
    }
}
