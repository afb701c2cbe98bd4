#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "trace.hpp"

namespace curveflow::graph {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// u reached zero at an interior node.
class SingularityError : public GraphError {
public:
    SingularityError(double x_, double t_)
        : GraphError("graph singularity: u <= 0 at x = " + format_double(x_) + ", t = " + format_double(t_)), x(x_), t(t_)
    {
    }
    double x;
    double t;
};

class AngleDriftError : public GraphError {
public:
    using GraphError::GraphError;
};

struct GraphState {
    Profile profile;
    int n = 1;  // rotational dimension; 1 is the planar flow
    double time = 0.0;
};

namespace detail {

/// First and second derivative at the middle of three nonuniform nodes.
struct Diff {
    double d1;
    double d2;
};

inline Diff diff3(double hm, double hp, double um, double u0, double up)
{
    const double den = hm * hp * (hm + hp);
    return {(hm * hm * (up - u0) + hp * hp * (u0 - um)) / den, 2.0 * (hm * (up - u0) - hp * (u0 - um)) / den};
}

inline double horizontal_rate(Diff d, double u, int n, double A)
{
    const double g = 1.0 + d.d1 * d.d1;
    return d.d2 / g - double(n - 1) / u + A * std::sqrt(g);
}

}  // namespace detail

/// Largest explicit step for the horizontal equation on the profile's nodes.
inline double max_horizontal_dt(const Profile& p)
{
    double m = INFINITY;
    for (std::size_t i = 1; i + 1 < p.x.size(); ++i) m = std::min(m, (p.x[i] - p.x[i - 1]) * (p.x[i + 1] - p.x[i]));
    return 0.5 * m;
}

/// Pointwise rate u_t of the horizontal graph equation at interior nodes; ends are 0.
inline std::vector<double> horizontal_rate(const GraphState& s, double A)
{
    const auto& x = s.profile.x;
    const auto& u = s.profile.u;
    std::vector<double> r(x.size(), 0.0);
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
        if (!(u[i] > 0.0)) throw SingularityError(x[i], s.time);
        r[i] = detail::horizontal_rate(detail::diff3(x[i] - x[i - 1], x[i + 1] - x[i], u[i - 1], u[i], u[i + 1]), u[i], s.n, A);
    }
    return r;
}

/// Explicit step with both end values pinned.
inline GraphState step_horizontal(const GraphState& s, double A, double dt)
{
    if (s.profile.x.size() < 3) throw GraphError("step_horizontal: need at least 3 nodes");
    if (s.n < 1) throw GraphError("step_horizontal: n must be >= 1");
    if (!(dt > 0.0) || dt > max_horizontal_dt(s.profile)) throw GraphError("step_horizontal: dt violates the CFL bound");
    const auto r = horizontal_rate(s, A);
    GraphState out = s;
    for (std::size_t i = 1; i + 1 < r.size(); ++i) {
        out.profile.u[i] += dt * r[i];
        if (!(out.profile.u[i] > 0.0)) throw SingularityError(s.profile.x[i], s.time + dt);
    }
    out.time = s.time + dt;
    return out;
}

// ------------------------------------------------------------ vertical graph

enum class Drift { plus = 1, minus = -1 };

/// Rate of x = v(r) on r_i = i*dr. Node 0 uses the symmetric ghost v_{-1} = v_1 and
/// the limit (n-1) v_rr of the (n-1)/r v_r term; the last node takes v_r one-sided
/// and v_rr from its neighbour.
inline std::vector<double> vertical_rate(const std::vector<double>& v, double dr, int n, double A, Drift sign)
{
    const std::size_t m = v.size();
    if (m < 3) throw GraphError("vertical_rate: need at least 3 nodes");
    if (!(dr > 0.0)) throw GraphError("vertical_rate: dr must be positive");
    const double s = double(static_cast<int>(sign));
    std::vector<double> rate(m);
    std::vector<double> vrr(m);
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double vm = i == 0 ? v[1] : v[i - 1];
        vrr[i] = (v[i + 1] - 2.0 * v[i] + vm) / (dr * dr);
    }
    vrr[m - 1] = vrr[m - 2];
    for (std::size_t i = 0; i < m; ++i) {
        double vr = 0.0;
        if (i == 0) vr = 0.0;
        else if (i + 1 < m) vr = (v[i + 1] - v[i - 1]) / (2.0 * dr);
        else vr = (3.0 * v[i] - 4.0 * v[i - 1] + v[i - 2]) / (2.0 * dr);
        const double g = 1.0 + vr * vr;
        const double radial = i == 0 ? double(n - 1) * vrr[0] : double(n - 1) / (double(i) * dr) * vr;
        rate[i] = vrr[i] / g + radial + s * A * std::sqrt(g);
    }
    return rate;
}

inline double max_vertical_dt(double dr, int n) { return 0.5 * dr * dr / double(std::max(1, n)); }

inline std::vector<double> step_vertical(const std::vector<double>& v, double dr, int n, double A, Drift sign, double dt)
{
    if (n < 1) throw GraphError("step_vertical: n must be >= 1");
    if (!(dt > 0.0) || dt > max_vertical_dt(dr, n)) throw GraphError("step_vertical: dt violates the CFL bound");
    const auto r = vertical_rate(v, dr, n, A, sign);
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] + dt * r[i];
    return out;
}

// ------------------------------------------------------------- problem (Q)

struct QOptions {
    std::size_t nodes = 201;
    double cfl = 0.4;  // dt = cfl * h^2 / 2 with h the current node spacing
    double frame_dt = 0.0;
    std::size_t frame_stride = 0;  // used when frame_dt == 0; 0 means about 100 frames
    double angle_tol = 1e-3;       // rad, allowed drift grows by this much per unit time
    double compat_tol = 0.05;      // rad, initial data vs requested angles
    double extinction_width = 0.0;  // b - a threshold; 0 means 1e-3 of the initial width
    std::size_t max_steps = 50'000'000;
};

namespace detail {

/// u_xx at the left end from the cubic with u(0) = 0, u'(0) = s through (h, u1), (2h, u2).
inline double end_curvature(double s, double h, double u1, double u2)
{
    const double r1 = (u1 - s * h) / (h * h);
    const double r2 = (u2 - 2.0 * s * h) / (4.0 * h * h);
    return 2.0 * (2.0 * r1 - r2);
}

/// Contact angle read from the data by a second-order one-sided slope.
inline double measured_angle(double h, double u0, double u1, double u2)
{
    return std::atan((-3.0 * u0 + 4.0 * u1 - u2) / (2.0 * h));
}

inline std::vector<double> resample_uniform(const Profile& p, std::size_t nodes)
{
    std::vector<double> u(nodes);
    for (std::size_t i = 0; i < nodes; ++i) {
        const double x = p.a + (p.b - p.a) * double(i) / double(nodes - 1);
        u[i] = profile_value(p, x);
    }
    u.front() = 0.0;
    u.back() = 0.0;
    return u;
}

}  // namespace detail

/// Free-boundary flow with fixed contact angles in (0, pi/2). Runs on a uniform
/// moving grid over [a, b]: the ends move by a' = -u_t / u_x and interior nodes
/// carry the matching grid-velocity term.
inline EvolutionTrace solve_Q(const Profile& p0, double theta_minus, double theta_plus, double A, double t_end,
                              const QOptions& opt = {})
{
    const double half_pi = std::numbers::pi / 2.0;
    if (!(theta_minus > 0.0 && theta_minus < half_pi && theta_plus > 0.0 && theta_plus < half_pi))
        throw GraphError("solve_Q: contact angles must lie in (0, pi/2)");
    if (opt.nodes < 5) throw GraphError("solve_Q: need at least 5 nodes");
    validate_profile(p0);
    const std::size_t N = opt.nodes;
    const double sl = std::tan(theta_minus);
    const double sr = std::tan(theta_plus);
    double a = p0.a;
    double b = p0.b;
    std::vector<double> u = detail::resample_uniform(p0, N);
    const double width0 = b - a;
    const double ext_width = opt.extinction_width > 0.0 ? opt.extinction_width : 1e-3 * width0;

    EvolutionTrace tr;
    tr.solver = "graph_q";
    tr.A = A;
    tr.resolution = width0 / double(N - 1);
    tr.notes["theta_minus"] = theta_minus;
    tr.notes["theta_plus"] = theta_plus;

    auto angles = [&](double h) {
        return std::pair{detail::measured_angle(h, u[0], u[1], u[2]), detail::measured_angle(h, u[N - 1], u[N - 2], u[N - 3])};
    };
    const double h0 = width0 / double(N - 1);
    const auto [m0, p0a] = angles(h0);
    if (std::abs(m0 - theta_minus) > opt.compat_tol || std::abs(p0a - theta_plus) > opt.compat_tol)
        throw GraphError("solve_Q: initial profile incompatible with the contact angles");
    // the t = 0 discretisation error relaxes within a few steps, so it widens the band
    const double off_m = std::abs(m0 - theta_minus);
    const double off_p = std::abs(p0a - theta_plus);

    auto record = [&](double t) {
        Frame f;
        f.t = t;
        Profile pr;
        pr.a = a;
        pr.b = b;
        pr.left = Contact{ContactKind::angle, theta_minus};
        pr.right = Contact{ContactKind::angle, theta_plus};
        for (std::size_t i = 0; i < N; ++i) {
            pr.x.push_back(a + (b - a) * double(i) / double(N - 1));
            pr.u.push_back(u[i]);
        }
        f.curves = {profile_to_curve(pr)};
        fill_diagnostics(f, tr.resolution);
        f.profile = pr;
        const auto [am, ap] = angles((b - a) / double(N - 1));
        f.theta_minus = am;
        f.theta_plus = ap;
        tr.frames.push_back(std::move(f));
    };
    record(0.0);

    std::size_t stride = opt.frame_stride;
    if (opt.frame_dt <= 0.0 && stride == 0) {
        const double dt0 = opt.cfl * h0 * h0 / 2.0;
        stride = std::max<std::size_t>(1, static_cast<std::size_t>(t_end / dt0 / 100.0));
    }
    std::size_t next_frame = 1;
    std::size_t since = 0;
    std::vector<double> rate(N);
    double t = 0.0;
    std::size_t steps = 0;
    while (t < t_end && steps < opt.max_steps) {
        const double h = (b - a) / double(N - 1);
        double dt = std::min(opt.cfl * h * h / 2.0, t_end - t);
        if (opt.frame_dt > 0.0) {
            const double target = std::min(t_end, double(next_frame) * opt.frame_dt);
            if (t + dt * (1.0 + 1e-9) >= target) dt = target - t;
        }
        // end speeds from differentiating u(a(t), t) = 0
        const double gl = 1.0 + sl * sl;
        const double gr = 1.0 + sr * sr;
        const double uxx_l = detail::end_curvature(sl, h, u[1], u[2]);
        const double uxx_r = detail::end_curvature(sr, h, u[N - 2], u[N - 3]);
        const double ut_l = uxx_l / gl + A * std::sqrt(gl);
        const double ut_r = uxx_r / gr + A * std::sqrt(gr);
        const double da = -ut_l / sl;
        const double db = ut_r / sr;
        for (std::size_t i = 1; i + 1 < N; ++i) {
            const double ux = (u[i + 1] - u[i - 1]) / (2.0 * h);
            const double uxx = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
            const double g = 1.0 + ux * ux;
            const double xi = double(i) / double(N - 1);
            rate[i] = uxx / g + A * std::sqrt(g) + (da + xi * (db - da)) * ux;
        }
        for (std::size_t i = 1; i + 1 < N; ++i) {
            u[i] += dt * rate[i];
            if (!(u[i] > 0.0)) throw SingularityError(a + (b - a) * double(i) / double(N - 1), t + dt);
        }
        a += dt * da;
        b += dt * db;
        t += dt;
        ++steps;
        ++since;
        if (b - a < ext_width) {
            tr.extinction_time = t;
            record(t);
            tr.events.events.push_back({t, EventKind::extinction, {{"width", b - a}}});
            break;
        }
        const auto [am, ap] = angles((b - a) / double(N - 1));
        const double allowed = opt.angle_tol * (1.0 + t);
        if (std::abs(am - theta_minus) > off_m + allowed || std::abs(ap - theta_plus) > off_p + allowed) {
            record(t);
            throw AngleDriftError("solve_Q: contact angle drifted beyond tolerance at t = " + format_double(t) +
                                  " (measured " + format_double(am) + ", " + format_double(ap) + ")");
        }
        bool due = false;
        if (opt.frame_dt > 0.0) {
            const double target = std::min(t_end, double(next_frame) * opt.frame_dt);
            if (t >= target - 1e-14 * std::max(1.0, target)) {
                ++next_frame;
                due = true;
            }
        }
        else if (since >= stride) {
            since = 0;
            due = true;
        }
        if (due || t >= t_end) record(t);
    }
    return tr;
}

// ---------------------------------------------------------- extension curve

/// Graph segment plus the two below-axis continuations; an angle of pi/2 gives a
/// vertical half-line. Rays are truncated at `ray_length`.
struct ExtensionCurve {
    std::vector<Point2> gamma1;  // from the far end up to (a, 0)
    std::vector<Point2> gamma2;  // from (b, 0) down to the far end
    std::vector<Point2> gamma3;  // the graph, left to right

    /// One open polyline: gamma1, gamma3, gamma2.
    [[nodiscard]] PolyCurve polyline() const
    {
        PolyCurve c;
        c.closed = false;
        c.points = gamma1;
        for (const auto& q : gamma3)
            if (!(q == c.points.back())) c.points.push_back(q);
        for (const auto& q : gamma2)
            if (!(q == c.points.back())) c.points.push_back(q);
        return c;
    }
};

inline ExtensionCurve extension_curve(const Profile& p, double theta_minus, double theta_plus, double ray_length = 0.0)
{
    if (p.x.size() < 2) throw GeometryError("extension_curve: profile needs samples");
    const double L = ray_length > 0.0 ? ray_length : 50.0 * std::max(1.0, p.b - p.a);
    const double half_pi = std::numbers::pi / 2.0;
    auto dir = [&](double theta, double side) {
        // unit direction going below the axis; side -1 for the left end, +1 for the right
        if (std::abs(theta - half_pi) < 1e-15) return Point2{0.0, -1.0};
        return Point2{side * std::cos(theta), -std::sin(theta)};
    };
    ExtensionCurve e;
    const Point2 pa{p.a, 0.0};
    const Point2 pb{p.b, 0.0};
    e.gamma1 = {pa + L * dir(theta_minus, -1.0), pa};
    e.gamma2 = {pb, pb + L * dir(theta_plus, 1.0)};
    for (std::size_t i = 0; i < p.x.size(); ++i) e.gamma3.push_back({p.x[i], p.u[i]});
    e.gamma3.front() = pa;
    e.gamma3.back() = pb;
    return e;
}

/// Contact angle of a profile end: pi/2 for vertical contacts.
inline double contact_angle(const Contact& c) { return c.kind == ContactKind::vertical ? std::numbers::pi / 2.0 : c.angle; }

inline ExtensionCurve extension_curve(const Profile& p, double ray_length = 0.0)
{
    return extension_curve(p, contact_angle(p.left), contact_angle(p.right), ray_length);
}

}  // namespace curveflow::graph
