#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "curveflow/analysis.hpp"
#include "curveflow/levelset.hpp"

using namespace curveflow;
using namespace curveflow::levelset;
using Catch::Approx;
constexpr double pi = std::numbers::pi;

namespace {

PolyCurve circle(double cx, double cy, double r, std::size_t n = 4096)
{
    std::vector<Point2> pts;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = 2.0 * pi * double(k) / double(n);
        pts.push_back({cx + r * std::cos(t), cy + r * std::sin(t)});
    }
    return make_closed_curve(pts);
}

double mean_radius(const std::vector<PolyCurve>& cs)
{
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& c : cs)
        for (const auto& p : c.points) {
            s += norm(p);
            ++n;
        }
    return s / double(n);
}

ScalarField2D field_from(const GridSpec& g, auto f)
{
    ScalarField2D out;
    out.grid = g;
    out.values.resize(std::size_t(g.nx) * g.ny);
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) out(i, j) = f(g.x(i), g.y(j));
    return out;
}

}  // namespace

TEST_CASE("signed distance initialisation", "[levelset]")
{
    const auto g = square_grid(0, 0, 2.0, 257);  // node at the origin and at (1, 0)
    const auto f = signed_distance_init(circle(0, 0, 1.0), g);
    REQUIRE(f(128, 128) == Approx(1.0).margin(1e-5));
    REQUIRE(std::abs(f(192, 128)) <= g.dx());
    REQUIRE(f(256, 128) == -1.0);
    for (double v : f.values) REQUIRE(std::abs(v) <= 1.0);
}

TEST_CASE("curve must fit inside the grid", "[levelset]")
{
    REQUIRE_THROWS_AS(signed_distance_init(circle(0, 0, 1.0), square_grid(0, 0, 1.0, 64)), LevelSetError);
}

TEST_CASE("straight front with A = 0 is stationary", "[levelset]")
{
    const auto g = square_grid(0, 0, 0.5, 129);
    auto f = field_from(g, [](double x, double) { return x; });
    for (int k = 0; k < 10; ++k) f = step(f, 0.0, default_dt(g, 0.0));
    for (const auto& c : extract_zero_contour(f))
        for (const auto& p : c.points) REQUIRE(std::abs(p.x) < 1e-12);
}

TEST_CASE("constant field is returned unchanged", "[levelset]")
{
    const auto g = square_grid(0, 0, 1.0, 32);
    const auto f = field_from(g, [](double, double) { return 0.25; });
    REQUIRE(step(f, 1.0, default_dt(g, 1.0)).values == f.values);
}

TEST_CASE("steps beyond the stability bound are rejected", "[levelset]")
{
    const auto g = square_grid(0, 0, 1.0, 64);
    const auto f = signed_distance_init(circle(0, 0, 0.5), g);
    EvolveOptions o;
    o.dt = 10.0 * max_stable_dt(g, 1.0);
    REQUIRE_THROWS_AS(evolve(f, 1.0, 0.01, o), CflError);
}

TEST_CASE("shrinking circle follows the ball ODE", "[levelset]")
{
    const auto g = square_grid(0, 0, 0.75, 256);
    const auto f = signed_distance_init(circle(0, 0, 0.5), g);
    const auto r = evolve(f, 1.0, 0.05);
    const double want = analysis::ball_radius(1.0, 0.5, 0.05);
    REQUIRE(std::abs(mean_radius(r.trace.frames.back().curves) - want) <= 2.0 * g.dx());
}

TEST_CASE("expanding circle follows the ball ODE", "[levelset]")
{
    const auto g = square_grid(0, 0, 5.0, 256);
    const auto f = signed_distance_init(circle(0, 0, 2.0), g);
    const auto r = evolve(f, 1.0, 3.0);
    const double want = analysis::ball_radius(1.0, 2.0, 3.0);
    REQUIRE(std::abs(mean_radius(r.trace.frames.back().curves) - want) <= 2.0 * g.dx());
}

TEST_CASE("zero contour extraction", "[levelset]")
{
    const auto g = square_grid(0, 0, 1.5, 256);
    SECTION("single circle")
    {
        const auto cs = extract_zero_contour(signed_distance_init(circle(0, 0, 1.0), g));
        REQUIRE(cs.size() == 1);
        REQUIRE(hausdorff_distance(cs, {circle(0, 0, 1.0)}) <= g.dx());
        REQUIRE(signed_area(cs[0]) > 0.0);
    }
    SECTION("positive field has no contour")
    {
        REQUIRE(extract_zero_contour(field_from(g, [](double, double) { return 1.0; })).empty());
    }
    SECTION("two disjoint circles")
    {
        const auto f = signed_distance_init({circle(-0.7, 0, 0.4), circle(0.7, 0.2, 0.5)}, g);
        const auto cs = extract_zero_contour(f);
        REQUIRE(cs.size() == 2);
        std::vector<double> areas{std::abs(signed_area(cs[0])), std::abs(signed_area(cs[1]))};
        std::sort(areas.begin(), areas.end());
        REQUIRE(areas[0] == Approx(pi * 0.16).epsilon(0.02));
        REQUIRE(areas[1] == Approx(pi * 0.25).epsilon(0.02));
    }
}

TEST_CASE("reinitialisation", "[levelset]")
{
    const auto g = square_grid(0, 0, 1.0, 128);
    SECTION("a planar distance function is a fixed point")
    {
        auto f = field_from(g, [](double x, double y) { return 0.6 * x + 0.8 * y + 0.1; });
        clamp_field(f);
        const auto r = reinitialize(f, 10);
        // edge ghosts are one-sided; their error reaches about one cell per iteration
        for (int j = 12; j < g.ny - 12; ++j)
            for (int i = 12; i < g.nx - 12; ++i) REQUIRE(r(i, j) == Approx(f(i, j)).margin(1e-6));
    }
    SECTION("doubled slope relaxes to unit gradient near the contour")
    {
        auto f = signed_distance_init(circle(0, 0, 0.5), g);
        for (double& v : f.values) v *= 2.0;
        clamp_field(f);
        const auto r = reinitialize(f, 20);
        const double dx = g.dx();
        for (int j = 1; j + 1 < g.ny; ++j)
            for (int i = 1; i + 1 < g.nx; ++i) {
                if (std::abs(r(i, j)) > 4.0 * dx) continue;
                const double gx = (r(i + 1, j) - r(i - 1, j)) / (2 * dx);
                const double gy = (r(i, j + 1) - r(i, j - 1)) / (2 * dx);
                const double n = std::hypot(gx, gy);
                REQUIRE(n >= 0.9);
                REQUIRE(n <= 1.1);
            }
        for (double v : r.values) REQUIRE(std::abs(v) <= r.clamp_scale);
    }
    SECTION("the zero contour does not move")
    {
        const auto f = signed_distance_init(circle(0.1, -0.05, 0.4), g);
        const auto r = reinitialize(f, 5);
        REQUIRE(levelset::detail::contour_displacement(f, r) < 0.1 * g.dx());
    }
}

TEST_CASE("fattening bracket closes for a smooth convex circle", "[levelset]")
{
    const auto g = square_grid(0, 0, 1.0, 128);
    const auto f = signed_distance_init(circle(0, 0, 0.5), g);
    const double dx = g.dx();
    const auto fb = fattening_bracket(f, 1.0, 0.05, {8 * dx, 6 * dx, 4 * dx});
    REQUIRE(fb.verdict == BracketVerdict::regular);
    REQUIRE(fb.gaps.size() == 3);
    REQUIRE_THROWS_AS(fattening_bracket(f, 1.0, 0.05, {4 * dx, 6 * dx}), LevelSetError);
}

TEST_CASE("field csv round trip", "[levelset][io]")
{
    const auto g = square_grid(0, 0, 1.0, 40);
    const auto f = signed_distance_init(circle(0, 0, 0.5, 64), g);
    const auto path = (std::filesystem::temp_directory_path() / "curveflow_field.csv").string();
    write_field_csv(path, f);
    REQUIRE(read_field_csv(path, g).values == f.values);
}
