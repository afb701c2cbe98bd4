#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "trace.hpp"

namespace curveflow::tracker {

class TrackerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SelfIntersectionError : public TrackerError {
public:
    using TrackerError::TrackerError;
};

struct MarkerCurve {
    PolyCurve curve;
    double target_spacing = 0.01;
};

struct StepOptions {
    bool strict = true;          // throw on self-intersection
    std::size_t min_nodes = 12;  // spacing drops below target once the curve is this small
};

// ------------------------------------------------------------ resampling

namespace detail {

inline Point2 normalized(Point2 v)
{
    const double l = norm(v);
    return l > 0.0 ? (1.0 / l) * v : Point2{0.0, 0.0};
}

/// Second-order arclength tangent at a node from its two neighbours.
inline Point2 node_tangent(Point2 prev, Point2 p, Point2 next)
{
    const double d0 = dist(prev, p);
    const double d1 = dist(p, next);
    if (d0 == 0.0 || d1 == 0.0) return normalized(next - prev);
    const Point2 t0 = (1.0 / d0) * (p - prev);
    const Point2 t1 = (1.0 / d1) * (next - p);
    return (1.0 / (d0 + d1)) * (d1 * t0 + d0 * t1);
}

inline Point2 hermite(Point2 p0, Point2 p1, Point2 m0, Point2 m1, double len, double t)
{
    const double t2 = t * t;
    const double t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    return h00 * p0 + (h10 * len) * m0 + h01 * p1 + (h11 * len) * m1;
}

/// Places `count` points at arclengths `s_targets` on the polyline through `pts`
/// (nodes `0..n-1`, with segment i joining node i to node i+1), using cubic Hermite
/// segments. `prev_of_first` and `next_of_last` are the neighbours used for end tangents.
inline std::vector<Point2> sample_hermite(const std::vector<Point2>& pts, Point2 prev_of_first, Point2 next_of_last,
                                          const std::vector<double>& s_targets)
{
    const std::size_t n = pts.size();
    std::vector<double> s(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) s[i] = s[i - 1] + dist(pts[i - 1], pts[i]);
    std::vector<Point2> tang(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 prev = i == 0 ? prev_of_first : pts[i - 1];
        const Point2 next = i + 1 == n ? next_of_last : pts[i + 1];
        tang[i] = node_tangent(prev, pts[i], next);
    }
    std::vector<Point2> out;
    out.reserve(s_targets.size());
    std::size_t seg = 0;
    for (double st : s_targets) {
        while (seg + 2 < n && s[seg + 1] <= st) ++seg;
        const double len = s[seg + 1] - s[seg];
        const double t = len > 0.0 ? std::clamp((st - s[seg]) / len, 0.0, 1.0) : 0.0;
        out.push_back(hermite(pts[seg], pts[seg + 1], tang[seg], tang[seg + 1], len, t));
    }
    return out;
}

}  // namespace detail

/// Uniform-arclength resampling of a closed curve to `count` nodes, keeping node 0.
inline PolyCurve resample_closed(const PolyCurve& c, std::size_t count)
{
    const std::size_t n = c.points.size();
    if (n < 3 || count < 3) throw TrackerError("resample_closed: too few nodes");
    std::vector<Point2> ring(c.points);
    ring.push_back(c.points.front());
    const double L = curve_length(c);
    std::vector<double> st(count);
    for (std::size_t k = 0; k < count; ++k) st[k] = L * double(k) / double(count);
    PolyCurve r;
    r.points = detail::sample_hermite(ring, c.points[n - 1], c.points[1], st);
    r.points.front() = c.points.front();
    r.closed = true;
    r.orientation = c.orientation;
    return r;
}

/// Uniform-arclength resampling of an open curve to `count` nodes with fixed ends.
inline std::vector<Point2> resample_open(const std::vector<Point2>& pts, Point2 ghost_first, Point2 ghost_last,
                                         std::size_t count)
{
    if (pts.size() < 2 || count < 2) throw TrackerError("resample_open: too few nodes");
    double L = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) L += dist(pts[i - 1], pts[i]);
    std::vector<double> st(count);
    for (std::size_t k = 0; k < count; ++k) st[k] = L * double(k) / double(count - 1);
    auto out = detail::sample_hermite(pts, ghost_first, ghost_last, st);
    out.front() = pts.front();
    out.back() = pts.back();
    return out;
}

inline std::size_t node_count_for(double length, double spacing, std::size_t min_nodes)
{
    const double n = std::round(length / spacing);
    return std::max<std::size_t>(min_nodes, static_cast<std::size_t>(std::max(0.0, n)));
}

inline MarkerCurve make_marker_curve(const PolyCurve& dense, double spacing, std::size_t min_nodes = 12)
{
    if (!(spacing > 0.0)) throw TrackerError("marker spacing must be positive");
    validate_curve(dense);
    MarkerCurve mc;
    mc.target_spacing = spacing;
    mc.curve = resample_closed(dense, node_count_for(curve_length(dense), spacing, min_nodes));
    return mc;
}

// ------------------------------------------------------ self-intersection

namespace detail {

inline bool segments_touch(Point2 p1, Point2 p2, Point2 q1, Point2 q2)
{
    auto orient = [](Point2 a, Point2 b, Point2 c) {
        const double v = cross(b - a, c - a);
        return (v > 0.0) - (v < 0.0);
    };
    auto on_seg = [](Point2 a, Point2 b, Point2 p) {
        return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
               p.y <= std::max(a.y, b.y);
    };
    const int o1 = orient(p1, p2, q1);
    const int o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1);
    const int o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_seg(p1, p2, q1)) return true;
    if (o2 == 0 && on_seg(p1, p2, q2)) return true;
    if (o3 == 0 && on_seg(q1, q2, p1)) return true;
    if (o4 == 0 && on_seg(q1, q2, p2)) return true;
    return false;
}

}  // namespace detail

/// Sweep over x-sorted segments; adjacent segments sharing a node are skipped.
inline bool has_self_intersection(const std::vector<Point2>& pts, bool closed)
{
    const std::size_t n = pts.size();
    if (n < 4) return false;
    const std::size_t m = closed ? n : n - 1;
    struct Seg {
        double x0, x1;
        std::size_t i;
    };
    std::vector<Seg> segs(m);
    for (std::size_t i = 0; i < m; ++i) {
        const Point2 a = pts[i];
        const Point2 b = pts[(i + 1) % n];
        segs[i] = {std::min(a.x, b.x), std::max(a.x, b.x), i};
    }
    std::sort(segs.begin(), segs.end(), [](const Seg& l, const Seg& r) { return l.x0 < r.x0; });
    std::vector<Seg> active;
    for (const auto& s : segs) {
        active.erase(std::remove_if(active.begin(), active.end(), [&](const Seg& a) { return a.x1 < s.x0; }),
                     active.end());
        const Point2 p1 = pts[s.i];
        const Point2 p2 = pts[(s.i + 1) % n];
        for (const auto& a : active) {
            const std::size_t d = s.i > a.i ? s.i - a.i : a.i - s.i;
            if (d <= 1 || (closed && d == m - 1)) continue;
            const Point2 q1 = pts[a.i];
            const Point2 q2 = pts[(a.i + 1) % n];
            if (std::max(std::min(p1.y, p2.y), std::min(q1.y, q2.y)) >
                std::min(std::max(p1.y, p2.y), std::max(q1.y, q2.y)))
                continue;
            if (detail::segments_touch(p1, p2, q1, q2)) return true;
        }
        active.push_back(s);
    }
    return false;
}

inline bool has_self_intersection(const PolyCurve& c) { return has_self_intersection(c.points, c.closed); }

// ------------------------------------------------------------------ stepping

inline double max_marker_dt(double spacing) { return 0.4 * spacing * spacing / 2.0; }

inline double mean_spacing(const PolyCurve& c)
{
    return curve_length(c) / double(c.closed ? c.points.size() : c.points.size() - 1);
}

/// One explicit step of V = -kappa + A along the outward normal, then uniform
/// arclength redistribution anchored at node 0.
inline MarkerCurve step_markers(const MarkerCurve& mc, double A, double dt, const StepOptions& opt = {})
{
    const auto& P = mc.curve.points;
    const std::size_t n = P.size();
    if (n < 3) throw TrackerError("step_markers: degenerate curve");
    const double h = std::min(mc.target_spacing, mean_spacing(mc.curve));
    if (dt > max_marker_dt(h) * (1.0 + 1e-9)) throw TrackerError("step_markers: dt exceeds 0.4*spacing^2/2");
    const double s = mc.curve.orientation == Orientation::ccw ? 1.0 : -1.0;
    const auto kappa = curvature(mc.curve);
    std::vector<Point2> moved(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 prev = P[(i + n - 1) % n];
        const Point2 next = P[(i + 1) % n];
        const Point2 t = detail::normalized(next - prev);
        const Point2 nrm = s > 0.0 ? Point2{t.y, -t.x} : Point2{-t.y, t.x};
        moved[i] = P[i] + (dt * (-kappa[i] + A)) * nrm;
    }
    PolyCurve mv;
    mv.points = std::move(moved);
    mv.closed = true;
    mv.orientation = mc.curve.orientation;
    MarkerCurve out;
    out.target_spacing = mc.target_spacing;
    out.curve = resample_closed(mv, node_count_for(curve_length(mv), mc.target_spacing, opt.min_nodes));
    if (opt.strict && has_self_intersection(out.curve))
        throw SelfIntersectionError("step_markers: curve self-intersects");
    return out;
}

// ----------------------------------------------------------------- evolution

struct EvolveOptions {
    double spacing = 0.01;
    double cfl = 0.4;            // dt = cfl * h^2 / 2
    double frame_dt = 0.0;       // > 0: frames at multiples of frame_dt
    std::size_t frame_stride = 0;  // used when frame_dt == 0; 0 means 100 frames over t_end
    bool strict = true;
    std::size_t min_nodes = 12;
    double extinction_size = 0.0;  // diameter threshold; 0 means half the spacing
    std::size_t max_steps = 50'000'000;
};

namespace detail {

inline double diameter(const PolyCurve& c)
{
    const auto bb = bounding_box(c);
    return std::max(bb.x_max - bb.x_min, bb.y_max - bb.y_min);
}

struct FrameClock {
    double t_end;
    double frame_dt;
    std::size_t stride;
    std::size_t next_index = 1;
    std::size_t steps_since = 0;

    [[nodiscard]] double next_time() const
    {
        return frame_dt > 0.0 ? std::min(t_end, double(next_index) * frame_dt) : t_end;
    }
    /// Caps a proposed step so frame times are hit exactly.
    [[nodiscard]] double cap(double t, double dt) const
    {
        const double target = next_time();
        if (t + dt * (1.0 + 1e-9) >= target) return target - t;
        return dt;
    }
    /// Call after a step; returns true when a frame is due.
    bool due(double t)
    {
        ++steps_since;
        if (frame_dt > 0.0) {
            if (t >= next_time() - 1e-14 * std::max(1.0, t)) {
                ++next_index;
                return true;
            }
            return false;
        }
        if (steps_since >= stride) {
            steps_since = 0;
            return true;
        }
        return false;
    }
};

inline std::size_t default_stride(double t_end, double dt)
{
    return std::max<std::size_t>(1, static_cast<std::size_t>(t_end / dt / 100.0));
}

}  // namespace detail

inline EventLog detect_events(const EvolutionTrace& trace);

/// Free evolution of a closed curve.
inline EvolutionTrace evolve_closed(const PolyCurve& initial, double A, double t_end, const EvolveOptions& opt = {})
{
    EvolutionTrace tr;
    tr.solver = "fronttrack";
    tr.A = A;
    tr.resolution = opt.spacing;
    const double ext = opt.extinction_size > 0.0 ? opt.extinction_size : 0.5 * opt.spacing;
    StepOptions so{opt.strict, opt.min_nodes};
    MarkerCurve mc = make_marker_curve(initial, opt.spacing, opt.min_nodes);
    auto record = [&](double t) {
        Frame f;
        f.t = t;
        f.curves = {mc.curve};
        fill_diagnostics(f, opt.spacing);
        tr.frames.push_back(std::move(f));
    };
    record(0.0);
    const double dt_nom = opt.cfl * opt.spacing * opt.spacing / 2.0;
    detail::FrameClock clock{t_end, opt.frame_dt, opt.frame_stride ? opt.frame_stride : detail::default_stride(t_end, dt_nom)};
    double t = 0.0;
    std::size_t steps = 0;
    while (t < t_end && steps < opt.max_steps) {
        const double h = std::min(opt.spacing, mean_spacing(mc.curve));
        double dt = std::min(opt.cfl * h * h / 2.0, t_end - t);
        dt = clock.cap(t, dt);
        try {
            mc = step_markers(mc, A, dt, so);
        }
        catch (const SelfIntersectionError&) {
            tr.events.events.push_back({t + dt, EventKind::self_intersection, {{"nodes", mc.curve.points.size()}}});
            tr.halted = true;
            record(t);
            break;
        }
        t += dt;
        ++steps;
        if (detail::diameter(mc.curve) < ext) {
            tr.extinction_time = t;
            record(t);
            tr.events.events.push_back(
                {t, EventKind::extinction, {{"h", tr.frames.back().h}, {"width", tr.frames.back().b - tr.frames.back().a}}});
            break;
        }
        if (clock.due(t) || t >= t_end) record(t);
    }
    tr.events = detect_events(tr);
    return tr;
}

/// Evolves the lobe |y| = u(x) as an ordinary closed curve; frame `a` is a_*(t).
inline EvolutionTrace evolve_free_halfplane(const Profile& p, double A, double t_end, const EvolveOptions& opt = {})
{
    validate_profile(p);
    auto tr = evolve_closed(profile_to_curve(p), A, t_end, opt);
    tr.solver = "fronttrack_free";
    return tr;
}

namespace detail {

inline Point2 mirror_x0(Point2 p) { return {-p.x, p.y}; }

/// Right half {x >= 0} of the even extension, CCW from the bottom axis point to the top.
inline std::vector<Point2> neumann_half_from_profile(const Profile& p)
{
    std::vector<Point2> pts;
    for (std::size_t i = 0; i < p.x.size(); ++i) pts.push_back({p.x[i], -p.u[i]});
    for (std::size_t i = p.x.size() - 1; i-- > 0;) pts.push_back({p.x[i], p.u[i]});
    std::vector<Point2> clean;
    for (const auto& q : pts)
        if (clean.empty() || !(clean.back() == q)) clean.push_back(q);
    return clean;
}

inline PolyCurve mirror_closed(const std::vector<Point2>& half)
{
    PolyCurve c;
    c.points = half;
    for (std::size_t i = half.size() - 1; i-- > 1;) c.points.push_back(mirror_x0(half[i]));
    c.closed = true;
    c.orientation = Orientation::ccw;
    return c;
}

inline double open_length(const std::vector<Point2>& pts)
{
    double L = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) L += dist(pts[i - 1], pts[i]);
    return L;
}

}  // namespace detail

/// Evolution with the Neumann condition at x = 0: the right half of the even
/// extension is stepped with mirror ghosts, its ends slide on the axis, and any
/// part pushed across the axis is clipped. Frames hold the mirrored closed curve.
inline EvolutionTrace evolve_neumann(const Profile& p, double A, double t_end, const EvolveOptions& opt = {})
{
    validate_profile(p);
    if (p.a != 0.0) throw TrackerError("evolve_neumann: profile must start at x = 0");
    EvolutionTrace tr;
    tr.solver = "fronttrack_neumann";
    tr.A = A;
    tr.resolution = opt.spacing;
    const double ext = opt.extinction_size > 0.0 ? opt.extinction_size : 0.5 * opt.spacing;
    using detail::mirror_x0;

    std::vector<Point2> half = detail::neumann_half_from_profile(p);
    auto resample = [&](const std::vector<Point2>& pts) {
        const std::size_t segs = node_count_for(detail::open_length(pts), opt.spacing, opt.min_nodes);
        return resample_open(pts, mirror_x0(pts[1]), mirror_x0(pts[pts.size() - 2]), segs + 1);
    };
    half = resample(half);
    auto record = [&](double t) {
        Frame f;
        f.t = t;
        f.curves = {detail::mirror_closed(half)};
        fill_diagnostics(f, opt.spacing);
        tr.frames.push_back(std::move(f));
    };
    record(0.0);
    const double dt_nom = opt.cfl * opt.spacing * opt.spacing / 2.0;
    detail::FrameClock clock{t_end, opt.frame_dt, opt.frame_stride ? opt.frame_stride : detail::default_stride(t_end, dt_nom)};
    double t = 0.0;
    std::size_t steps = 0;
    while (t < t_end && steps < opt.max_steps) {
        const std::size_t n = half.size();
        const double h = std::min(opt.spacing, detail::open_length(half) / double(n - 1));
        double dt = std::min(opt.cfl * h * h / 2.0, t_end - t);
        dt = clock.cap(t, dt);
        std::vector<Point2> moved(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 prev = i == 0 ? mirror_x0(half[1]) : half[i - 1];
            const Point2 next = i + 1 == n ? mirror_x0(half[n - 2]) : half[i + 1];
            const double k = menger_curvature(prev, half[i], next);
            const Point2 tg = detail::normalized(next - prev);
            const Point2 nrm{tg.y, -tg.x};
            moved[i] = half[i] + (dt * (-k + A)) * nrm;
        }
        moved.front().x = 0.0;
        moved.back().x = 0.0;
        // clip portions pushed across the axis next to either end
        auto axis_point = [](Point2 a, Point2 b) {
            const double s = a.x / (a.x - b.x);
            return Point2{0.0, a.y + s * (b.y - a.y)};
        };
        std::size_t j = 1;
        while (j + 1 < n && moved[j].x < 0.0) ++j;
        if (j > 1) {
            const Point2 c = axis_point(moved[j - 1], moved[j]);
            moved.erase(moved.begin(), moved.begin() + std::ptrdiff_t(j - 1));
            moved.front() = c;
        }
        std::size_t m = moved.size();
        std::size_t k = m - 2;
        while (k > 0 && moved[k].x < 0.0) --k;
        if (k + 2 < m) {
            const Point2 c = axis_point(moved[k + 1], moved[k]);
            moved.erase(moved.begin() + std::ptrdiff_t(k + 2), moved.end());
            moved.back() = c;
        }
        t += dt;
        ++steps;
        if (moved.size() < 3 || moved.back().y <= moved.front().y) {
            tr.events.events.push_back({t, EventKind::axis_pinch, {{"reason", "axis points crossed"}}});
            tr.halted = true;
            record(t - dt);
            break;
        }
        bool crossed = false;
        for (std::size_t i = 1; i + 1 < moved.size(); ++i) crossed = crossed || moved[i].x < 0.0;
        half = resample(moved);
        if (crossed || (opt.strict && has_self_intersection(half, false))) {
            tr.events.events.push_back({t, EventKind::self_intersection, {{"nodes", half.size()}}});
            tr.halted = true;
            record(t);
            break;
        }
        double bmax = 0.0;
        double hmax = 0.0;
        for (const auto& q : half) {
            bmax = std::max(bmax, q.x);
            hmax = std::max(hmax, std::abs(q.y));
        }
        if (std::max(2.0 * bmax, 2.0 * hmax) < ext) {
            tr.extinction_time = t;
            record(t);
            tr.events.events.push_back(
                {t, EventKind::extinction, {{"h", tr.frames.back().h}, {"width", tr.frames.back().b - tr.frames.back().a}}});
            break;
        }
        if (clock.due(t) || t >= t_end) record(t);
    }
    tr.events = detect_events(tr);
    return tr;
}

// --------------------------------------------------------------------- events

/// Merges solver-reported events with those read off the frames.
inline EventLog detect_events(const EvolutionTrace& trace)
{
    EventLog log;
    for (const auto& e : trace.events.events)
        if (e.kind == EventKind::extinction || e.kind == EventKind::self_intersection ||
            (e.kind == EventKind::axis_pinch && e.data.contains("reason")))
            log.events.push_back(e);
    const double thr = 2.0 * trace.resolution;
    const auto& F = trace.frames;
    for (std::size_t k = 1; k < F.size(); ++k) {
        const Frame& f0 = F[k - 1];
        const Frame& f1 = F[k];
        if (f1.n_minima < f0.n_minima)
            log.events.push_back({f1.t, EventKind::minima_loss, {{"from", f0.n_minima}, {"to", f1.n_minima}}});
        const bool was_resolved = std::isnan(f0.min_interior_minimum) || f0.min_interior_minimum >= thr;
        if (was_resolved && !std::isnan(f1.min_interior_minimum) && f1.min_interior_minimum < thr && f1.h > 3.0 * thr)
            log.events.push_back({f1.t, EventKind::axis_pinch, {{"u_min", f1.min_interior_minimum}}});
        if (!std::isnan(f0.a) && !std::isnan(f1.a) && ((f0.a > 0.0 && f1.a <= 0.0) || (f0.a < 0.0 && f1.a >= 0.0)))
            log.events.push_back({f1.t, EventKind::boundary_touch, {{"a_before", f0.a}, {"a_after", f1.a}}});
    }
    std::stable_sort(log.events.begin(), log.events.end(), [](const Event& l, const Event& r) { return l.t < r.t; });
    return log;
}

}  // namespace curveflow::tracker
