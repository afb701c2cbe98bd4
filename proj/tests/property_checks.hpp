#pragma once

// Invariant audits shared by the Catch2 property suite and the acceptance binary.
// Each check runs fixed, seeded scenarios and reports the worst observed excess.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "curveflow/analysis.hpp"
#include "curveflow/graph_flow.hpp"
#include "curveflow/levelset.hpp"
#include "curveflow/tracker.hpp"

namespace props {

using namespace curveflow;

struct Result {
    std::string name;
    bool pass = false;
    std::string detail;
};

inline std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(3);
    os << v;
    return os.str();
}

inline PolyCurve ellipse(double cx, double cy, double rx, double ry, std::size_t n = 2000)
{
    std::vector<Point2> pts;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = 2.0 * std::numbers::pi * double(k) / double(n);
        pts.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
    }
    return make_closed_curve(pts);
}

inline Profile family(CurveFamily::Kind kind, double radius = 0.5, double center = 0.0)
{
    CurveFamily f;
    f.kind = kind;
    f.radius = radius;
    f.center = center;
    if (kind == CurveFamily::Kind::dumbbell) {
        f.base = 0.5;
        f.amp = 0.4;
        f.freq = 2.0;
    }
    return make_initial_curve(f);
}

/// Level-set comparison: {phi1 > 0} inside {phi2 > 0} initially stays so. The
/// pointwise excess of phi1 over phi2 is reported too: the curvature term is not a
/// monotone discretisation, so nearly flat clamped plateaus can invert by ~1e-4.
inline Result levelset_order()
{
    Result r{"level-set order preservation", true, ""};
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    const auto g = levelset::square_grid(0, 0, 1.0, 96);
    const double dt = levelset::default_dt(g, 1.0);
    std::size_t escapes = 0;
    double worst = -INFINITY;
    for (int pair = 0; pair < 4; ++pair) {
        const auto base = levelset::signed_distance_init(ellipse(0.5 * U(rng), 0.5 * U(rng), 0.35, 0.3), g);
        auto upper = base;
        const double bx = U(rng), by = U(rng);
        for (int j = 0; j < g.ny; ++j)
            for (int i = 0; i < g.nx; ++i) {
                const double d2 = std::pow(g.x(i) - bx, 2) + std::pow(g.y(j) - by, 2);
                upper(i, j) += 0.2 * std::exp(-d2 / 0.05);
            }
        levelset::clamp_field(upper);
        auto lo = base;
        auto hi = upper;
        const double A = pair % 2 == 0 ? 0.0 : 1.5;
        for (int k = 0; k < 300; ++k) {
            lo = levelset::step(lo, A, dt);
            hi = levelset::step(hi, A, dt);
            for (std::size_t q = 0; q < lo.values.size(); ++q) {
                escapes += lo.values[q] > 0.0 && !(hi.values[q] > 0.0);
                worst = std::max(worst, lo.values[q] - hi.values[q]);
            }
        }
    }
    r.pass = escapes == 0;
    r.detail = std::to_string(escapes) + " nodes of D1 outside D2; pointwise max(phi1 - phi2) = " + fmt(worst);
    return r;
}

/// Tracker comparison: a curve starting inside another stays inside.
inline Result tracker_order()
{
    Result r{"front-tracker order preservation", true, ""};
    tracker::EvolveOptions o;
    o.frame_dt = 0.005;
    double worst = INFINITY;
    for (double A : {0.0, 1.0}) {
        const auto outer = tracker::evolve_closed(ellipse(0, 0, 0.6, 0.45), A, 0.04, o);
        const auto inner = tracker::evolve_closed(ellipse(0.08, 0.02, 0.35, 0.3), A, 0.04, o);
        const std::size_t n = std::min(outer.frames.size(), inner.frames.size());
        for (std::size_t k = 0; k < n; ++k) {
            const auto& oc = outer.frames[k].curves.at(0);
            for (const auto& p : inner.frames[k].curves.at(0).points) {
                const double d = point_curve_distance(p, oc);
                worst = std::min(worst, point_in_polygon(p, oc.points) ? d : -d);
            }
        }
    }
    r.pass = worst > 0.0;
    r.detail = "min signed gap = " + fmt(worst);
    return r;
}

/// Two level-set runs split at a reinitialisation boundary replay one run bit for bit.
inline Result levelset_semigroup()
{
    Result r{"level-set semigroup replay", true, ""};
    const auto g = levelset::square_grid(0, 0, 1.0, 128);
    const auto f0 = levelset::signed_distance_init(ellipse(0.1, 0, 0.5, 0.35), g);
    levelset::EvolveOptions o;
    o.dt = std::ldexp(1.0, -16);  // dyadic, so accumulated times are exact
    const double t1 = 50.0 * o.dt;
    const double t2 = 75.0 * o.dt;
    const auto whole = levelset::evolve(f0, 1.0, t1 + t2, o).final_field;
    const auto first = levelset::evolve(f0, 1.0, t1, o).final_field;
    const auto split = levelset::evolve(first, 1.0, t2, o).final_field;
    std::size_t diff = 0;
    for (std::size_t q = 0; q < whole.values.size(); ++q) diff += whole.values[q] != split.values[q];
    r.pass = diff == 0 && whole.time == split.time;
    r.detail = std::to_string(diff) + " differing nodes";
    return r;
}

/// Far-apart sets evolve independently: the union's contour matches the two separate runs.
inline Result separated_union()
{
    Result r{"separated union", true, ""};
    const auto g = levelset::square_grid(0, 0, 1.2, 160);
    const auto c1 = ellipse(-0.6, 0.0, 0.3, 0.3);
    const auto c2 = ellipse(0.55, 0.1, 0.25, 0.35);
    const double A = 0.5;
    const double t = 0.02;
    const auto both = levelset::evolve(levelset::signed_distance_init({c1, c2}, g), A, t);
    const auto one = levelset::evolve(levelset::signed_distance_init(c1, g), A, t);
    const auto two = levelset::evolve(levelset::signed_distance_init(c2, g), A, t);
    auto parts = one.trace.frames.back().curves;
    for (const auto& c : two.trace.frames.back().curves) parts.push_back(c);
    const auto& joint = both.trace.frames.back().curves;
    const double d = hausdorff_distance(joint, parts);
    r.pass = joint.size() == 2 && d <= g.dx();
    r.detail = std::to_string(joint.size()) + " components, d_H = " + fmt(d / g.dx()) + " dx";
    return r;
}

/// Vertical lines meet each branch of a rotated graph at most once, frame by frame.
inline Result graph_preservation()
{
    Result r{"graph preservation", true, ""};
    tracker::EvolveOptions o;
    o.frame_dt = 0.005;
    int worst = 0;
    std::size_t frames = 0;
    auto audit = [&](const EvolutionTrace& tr) {
        for (const auto& f : tr.frames) {
            if (f.curves.empty()) continue;
            ++frames;
            const auto& P = f.curves[0].points;
            for (int s = 1; s < 200; ++s) {
                const double c = f.a + (f.b - f.a) * double(s) / 200.0;
                int up = 0, down = 0;
                for (std::size_t i = 0; i < P.size(); ++i) {
                    const Point2 p = P[i];
                    const Point2 q = P[(i + 1) % P.size()];
                    if ((p.x - c) * (q.x - c) >= 0.0 && !(p.x == c && q.x != c)) continue;
                    (p.y + q.y > 0.0 ? up : down) += 1;
                }
                worst = std::max({worst, up, down});
            }
        }
    };
    audit(tracker::evolve_free_halfplane(family(CurveFamily::Kind::dumbbell), 0.2, 0.05, o));
    audit(tracker::evolve_free_halfplane(family(CurveFamily::Kind::semicircle), 3.0, 0.02, o));
    audit(tracker::evolve_neumann(family(CurveFamily::Kind::dumbbell), 0.2, 0.05, o));
    r.pass = worst <= 1;
    r.detail = "max crossings per branch = " + std::to_string(worst) + " over " + std::to_string(frames) + " frames";
    return r;
}

/// b(t) - A t never increases.
inline Result b_minus_At()
{
    Result r{"b(t) - A t nonincreasing", true, ""};
    tracker::EvolveOptions o;
    o.frame_stride = 5;
    double worst = -INFINITY;
    auto audit = [&](const EvolutionTrace& tr) {
        for (std::size_t k = 1; k < tr.frames.size(); ++k) {
            const auto& f0 = tr.frames[k - 1];
            const auto& f1 = tr.frames[k];
            if (!std::isfinite(f0.b) || !std::isfinite(f1.b) || f1.curves.empty()) continue;
            worst = std::max(worst, (f1.b - tr.A * f1.t) - (f0.b - tr.A * f0.t));
        }
    };
    audit(tracker::evolve_free_halfplane(family(CurveFamily::Kind::circle, 0.5), 1.0, 0.15, o));
    audit(tracker::evolve_free_halfplane(family(CurveFamily::Kind::semicircle), 3.0, 0.03, o));
    audit(tracker::evolve_neumann(family(CurveFamily::Kind::dumbbell), 0.2, 0.1, o));
    audit(tracker::evolve_free_halfplane(family(CurveFamily::Kind::circle, 2.0), 1.0, 0.1, o));
    r.pass = worst <= 0.0;
    r.detail = "max increase = " + fmt(worst);
    return r;
}

/// Area of a convex shrinking curve decreases strictly while max kappa > A.
inline Result convex_area_decreases()
{
    Result r{"convex area decrease", true, ""};
    tracker::EvolveOptions o;
    o.frame_stride = 10;
    const auto tr = tracker::evolve_closed(ellipse(0, 0, 0.5, 0.3), 1.0, 0.1, o);
    std::size_t bad = 0;
    for (std::size_t k = 1; k < tr.frames.size(); ++k)
        if (tr.frames[k - 1].max_kappa > tr.A && !(tr.frames[k].area < tr.frames[k - 1].area)) ++bad;
    r.pass = bad == 0 && tr.frames.size() > 5;
    r.detail = std::to_string(bad) + " non-decreasing steps";
    return r;
}

/// Curves inside a circle of radius below 1/A die no later than that circle.
inline Result extinction_inside_ball()
{
    Result r{"extinction inside a small ball", true, ""};
    const double A = 1.5;
    const double R = 0.6;
    const double T = analysis::extinction_time_closed_form(A, R);
    const auto tr = tracker::evolve_closed(ellipse(0.05, 0, 0.5, 0.3), A, 1.2 * T);
    r.pass = tr.extinction_time && *tr.extinction_time <= T;
    r.detail = "extinction " + (tr.extinction_time ? fmt(*tr.extinction_time) : std::string("none")) + " vs ball " + fmt(T);
    return r;
}

/// Neumann traces are mirror images of themselves across x = 0, exactly.
inline Result neumann_mirror()
{
    Result r{"neumann mirror symmetry", true, ""};
    tracker::EvolveOptions o;
    o.frame_stride = 50;
    const auto tr = tracker::evolve_neumann(family(CurveFamily::Kind::dumbbell), 0.2, 0.05, o);
    std::size_t bad = 0;
    for (const auto& f : tr.frames)
        for (const auto& c : f.curves) {
            auto pts = c.points;
            auto mir = pts;
            for (auto& p : mir) p.x = -p.x;
            auto key = [](const Point2& a, const Point2& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; };
            std::sort(pts.begin(), pts.end(), key);
            std::sort(mir.begin(), mir.end(), key);
            bad += pts != mir;
        }
    r.pass = bad == 0;
    r.detail = std::to_string(bad) + " asymmetric frames";
    return r;
}

/// n = 1, A = 0: interior max never rises and interior min never falls.
inline Result horizontal_max_principle()
{
    Result r{"horizontal graph maximum principle", true, ""};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.2, 1.0);
    double worst = -INFINITY;
    for (int trial = 0; trial < 5; ++trial) {
        graph::GraphState s;
        for (int i = 0; i <= 60; ++i) {
            s.profile.x.push_back(double(i) / 60.0);
            s.profile.u.push_back(U(rng));
        }
        s.profile.a = 0.0;
        s.profile.b = 1.0;
        const double dt = graph::max_horizontal_dt(s.profile);
        for (int k = 0; k < 300; ++k) {
            const auto [lo0, hi0] = std::minmax_element(s.profile.u.begin(), s.profile.u.end());
            const double lo = *lo0, hi = *hi0;
            s = graph::step_horizontal(s, 0.0, dt);
            const auto [lo1, hi1] = std::minmax_element(s.profile.u.begin(), s.profile.u.end());
            worst = std::max({worst, *hi1 - hi, lo - *lo1});
        }
    }
    r.pass = worst <= 1e-14;
    r.detail = "max excursion = " + fmt(worst);
    return r;
}

/// Ordered horizontal graphs with the same ends stay ordered.
inline Result horizontal_comparison()
{
    Result r{"horizontal graph comparison", true, ""};
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> U(0.0, 0.3);
    double worst = -INFINITY;
    for (int trial = 0; trial < 5; ++trial) {
        graph::GraphState lo, hi;
        lo.profile.a = hi.profile.a = 0.0;
        lo.profile.b = hi.profile.b = 1.0;
        const double bump = U(rng);
        for (int i = 0; i <= 80; ++i) {
            const double x = double(i) / 80.0;
            const double base = 0.3 + 0.5 * std::sin(std::numbers::pi * x) + 0.1 * U(rng);
            lo.profile.x.push_back(x);
            hi.profile.x.push_back(x);
            lo.profile.u.push_back(base);
            hi.profile.u.push_back(base + bump * std::pow(std::sin(std::numbers::pi * x), 2) + 0.05 * U(rng) * (i % 80 != 0));
        }
        const double dt = graph::max_horizontal_dt(lo.profile);
        for (int k = 0; k < 400; ++k) {
            lo = graph::step_horizontal(lo, 0.5, dt);
            hi = graph::step_horizontal(hi, 0.5, dt);
            for (std::size_t i = 0; i < lo.profile.u.size(); ++i) worst = std::max(worst, lo.profile.u[i] - hi.profile.u[i]);
        }
    }
    r.pass = worst <= 1e-12;
    r.detail = "max(u1 - u2) = " + fmt(worst);
    return r;
}

/// The two drift signs of the vertical graph differ by 2 A sqrt(1 + v_r^2) dt.
inline Result vertical_drift_split()
{
    Result r{"vertical graph drift split", true, ""};
    const double dr = 0.02;
    const double A = 0.7;
    std::vector<double> v;
    for (int i = 0; i <= 40; ++i) v.push_back(0.4 * std::pow(i * dr, 2) - 0.1 * std::pow(i * dr, 3));
    const double dt = graph::max_vertical_dt(dr, 1);
    const auto p = graph::step_vertical(v, dr, 1, A, graph::Drift::plus, dt);
    const auto m = graph::step_vertical(v, dr, 1, A, graph::Drift::minus, dt);
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        const double vr = (v[i + 1] - v[i - 1]) / (2.0 * dr);
        worst = std::max(worst, std::abs(p[i] - m[i] - 2.0 * A * std::sqrt(1.0 + vr * vr) * dt));
    }
    r.pass = worst <= 1e-15;
    r.detail = "max deviation = " + fmt(worst);
    return r;
}

/// The gradient bound grows with v0 and with A on a parameter grid.
inline Result es_monotone()
{
    Result r{"Evans-Spruck bound monotonicity", true, ""};
    std::size_t bad = 0;
    for (int n : {1, 2, 3})
        for (double T : {0.05, 0.5, 2.0})
            for (double R : {0.1, 1.0})
                for (double A = 0.0; A <= 2.0; A += 0.25)
                    for (double v0 = 0.01; v0 <= 0.3; v0 += 0.01) {
                        const double b = analysis::evans_spruck_bound(v0, n, A, T, R).bound;
                        bad += analysis::evans_spruck_bound(v0 + 0.01, n, A, T, R).bound < b;
                        bad += analysis::evans_spruck_bound(v0, n, A + 0.25, T, R).bound < b;
                    }
    r.pass = bad == 0;
    r.detail = std::to_string(bad) + " decreasing pairs";
    return r;
}

/// Gradient audit on a shrinking dumbbell: finite sup, below the bound where it applies.
inline Result gradient_audit_finite()
{
    Result r{"gradient audit finiteness", true, ""};
    tracker::EvolveOptions o;
    o.frame_dt = 0.01;
    const auto tr = tracker::evolve_neumann(family(CurveFamily::Kind::dumbbell), 0.2, 0.1, o);
    const auto g = analysis::gradient_bound_audit(tr, 0.1);
    r.pass = g.finite && g.within_bound && !g.frames.empty();
    r.detail = "sup = " + fmt(g.sup) + " over " + std::to_string(g.frames.size()) + " frames";
    return r;
}

inline std::vector<std::function<Result()>> all()
{
    return {levelset_order,         tracker_order,       levelset_semigroup,       separated_union,
            graph_preservation,     b_minus_At,          convex_area_decreases,    extinction_inside_ball,
            neumann_mirror,         horizontal_max_principle, horizontal_comparison, vertical_drift_split,
            es_monotone,            gradient_audit_finite};
}

}  // namespace props
