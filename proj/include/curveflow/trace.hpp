#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csv_io.hpp"
#include "geometry.hpp"

namespace curveflow {

enum class EventKind { axis_pinch, minima_loss, extinction, self_intersection, boundary_touch };

inline const char* to_string(EventKind k)
{
    switch (k) {
    case EventKind::axis_pinch: return "axis_pinch";
    case EventKind::minima_loss: return "minima_loss";
    case EventKind::extinction: return "extinction";
    case EventKind::self_intersection: return "self_intersection";
    case EventKind::boundary_touch: return "boundary_touch";
    }
    return "unknown";
}

struct Event {
    double t = 0.0;
    EventKind kind = EventKind::extinction;
    nlohmann::json data = nlohmann::json::object();
};

struct EventLog {
    std::vector<Event> events;

    [[nodiscard]] std::size_t count(EventKind k) const
    {
        std::size_t n = 0;
        for (const auto& e : events) n += e.kind == k ? 1 : 0;
        return n;
    }
    [[nodiscard]] std::optional<Event> first(EventKind k) const
    {
        for (const auto& e : events)
            if (e.kind == k) return e;
        return std::nullopt;
    }
    [[nodiscard]] std::optional<Event> last(EventKind k) const
    {
        for (auto it = events.rbegin(); it != events.rend(); ++it)
            if (it->kind == k) return *it;
        return std::nullopt;
    }
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Frame {
    double t = 0.0;
    std::vector<PolyCurve> curves;
    std::optional<Profile> profile;  // upper branch, not validated
    double a = kNaN;
    double b = kNaN;
    double h = kNaN;
    double area = 0.0;
    double max_kappa = 0.0;
    int n_minima = 0;
    double min_interior_minimum = kNaN;  // smallest interior local minimum of u
    double theta_minus = kNaN;
    double theta_plus = kNaN;
};

struct EvolutionTrace {
    std::string solver;
    double A = 0.0;
    double resolution = 0.0;  // marker spacing or grid step
    std::vector<Frame> frames;
    EventLog events;
    std::optional<double> extinction_time;
    bool halted = false;  // stopped early on a failure event
    nlohmann::json notes = nlohmann::json::object();
};

/// Extremum of a sampled coordinate refined by a parabola through the extreme node
/// and its neighbours, parameterised by chord length.
inline double refined_extreme(const std::vector<Point2>& pts, bool closed, bool use_x, bool want_max)
{
    const std::size_t n = pts.size();
    auto coord = [&](std::size_t i) { return use_x ? pts[i].x : pts[i].y; };
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (want_max ? coord(i) > coord(best) : coord(i) < coord(best)) best = i;
    const double v1 = coord(best);
    if (n < 3 || (!closed && (best == 0 || best + 1 == n))) return v1;
    const std::size_t ip = (best + n - 1) % n;
    const std::size_t in = (best + 1) % n;
    const double s0 = -dist(pts[ip], pts[best]);
    const double s2 = dist(pts[best], pts[in]);
    const double v0 = coord(ip);
    const double v2 = coord(in);
    // quadratic through (s0, v0), (0, v1), (s2, v2)
    const double d0 = (v0 - v1) / s0;
    const double d2 = (v2 - v1) / s2;
    const double c2 = (d2 - d0) / (s2 - s0);
    const double c1 = d0 - c2 * s0;
    if (c2 == 0.0 || (want_max && c2 > 0.0) || (!want_max && c2 < 0.0)) return v1;
    const double sv = -c1 / (2.0 * c2);
    if (sv < s0 || sv > s2) return v1;
    const double v = v1 + c1 * sv + c2 * sv * sv;
    return want_max ? std::max(v, v1) : std::min(v, v1);
}

/// Arc of a closed curve above the x-axis, clipped at its two y = 0 crossings and
/// ordered left to right. Falls back to the min-x to max-x arc when the curve does
/// not meet the axis.
inline std::optional<Profile> upper_branch(const PolyCurve& c)
{
    const std::size_t n = c.points.size();
    if (n < 3) return std::nullopt;
    const auto& P = c.points;
    std::size_t top = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (P[i].y > P[top].y) top = i;
    std::vector<Point2> arc;
    if (P[top].y > 0.0) {
        std::size_t lo = top;
        std::size_t steps = 0;
        while (P[(lo + n - 1) % n].y > 0.0 && steps < n) {
            lo = (lo + n - 1) % n;
            ++steps;
        }
        std::size_t hi = top;
        steps = 0;
        while (P[(hi + 1) % n].y > 0.0 && steps < n) {
            hi = (hi + 1) % n;
            ++steps;
        }
        if (steps < n) {
            auto crossing = [](Point2 p, Point2 q) {
                const double t = p.y / (p.y - q.y);
                return Point2{p.x + t * (q.x - p.x), 0.0};
            };
            arc.push_back(crossing(P[lo], P[(lo + n - 1) % n]));
            for (std::size_t i = lo;; i = (i + 1) % n) {
                arc.push_back(P[i]);
                if (i == hi) break;
            }
            arc.push_back(crossing(P[hi], P[(hi + 1) % n]));
        }
    }
    if (arc.empty()) {
        std::size_t il = 0;
        std::size_t ir = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (P[i].x < P[il].x) il = i;
            if (P[i].x > P[ir].x) ir = i;
        }
        std::vector<Point2> a1, a2;
        for (std::size_t i = il;; i = (i + 1) % n) {
            a1.push_back(P[i]);
            if (i == ir) break;
        }
        for (std::size_t i = ir;; i = (i + 1) % n) {
            a2.push_back(P[i]);
            if (i == il) break;
        }
        auto mean_y = [](const std::vector<Point2>& v) {
            double s = 0.0;
            for (const auto& p : v) s += p.y;
            return s / double(v.size());
        };
        arc = mean_y(a1) >= mean_y(a2) ? a1 : a2;
    }
    if (arc.front().x > arc.back().x) std::reverse(arc.begin(), arc.end());
    Profile p;
    for (const auto& q : arc) {
        p.x.push_back(q.x);
        p.u.push_back(q.y);
    }
    p.a = p.x.front();
    p.b = p.x.back();
    return p;
}

struct MinimaCount {
    int count = 0;
    double smallest = kNaN;
};

/// Interior local minima of u whose depth on both sides exceeds `prominence`.
inline MinimaCount count_interior_minima(const std::vector<double>& u, double prominence)
{
    MinimaCount mc;
    if (u.size() < 3) return mc;
    bool rising = true;
    double cur_max = u.front();
    double cur_min = 0.0;
    for (std::size_t i = 1; i < u.size(); ++i) {
        const double v = u[i];
        if (rising) {
            if (v > cur_max) cur_max = v;
            else if (v < cur_max - prominence) {
                rising = false;
                cur_min = v;
            }
        }
        else {
            if (v < cur_min) cur_min = v;
            else if (v > cur_min + prominence) {
                ++mc.count;
                mc.smallest = std::isnan(mc.smallest) ? cur_min : std::min(mc.smallest, cur_min);
                rising = true;
                cur_max = v;
            }
        }
    }
    return mc;
}

/// Fills a, b, h, area, max_kappa, profile and minima from the frame's curves.
inline void fill_diagnostics(Frame& f, double resolution)
{
    f.area = 0.0;
    f.max_kappa = 0.0;
    f.a = kNaN;
    f.b = kNaN;
    f.h = kNaN;
    f.n_minima = 0;
    f.min_interior_minimum = kNaN;
    f.profile.reset();
    const PolyCurve* largest = nullptr;
    double largest_area = -1.0;
    for (const auto& c : f.curves) {
        if (c.points.size() < 3) continue;
        const double sa = signed_area(c);
        f.area += sa;
        const double a = refined_extreme(c.points, c.closed, true, false);
        const double b = refined_extreme(c.points, c.closed, true, true);
        const double ymax = refined_extreme(c.points, c.closed, false, true);
        const double ymin = refined_extreme(c.points, c.closed, false, false);
        f.a = std::isnan(f.a) ? a : std::min(f.a, a);
        f.b = std::isnan(f.b) ? b : std::max(f.b, b);
        const double h = std::max(std::abs(ymax), std::abs(ymin));
        f.h = std::isnan(f.h) ? h : std::max(f.h, h);
        if (c.closed) {
            try {
                for (double k : curvature(c)) f.max_kappa = std::max(f.max_kappa, std::abs(k));
            }
            catch (const GeometryError&) {
            }
        }
        if (std::abs(sa) > largest_area) {
            largest_area = std::abs(sa);
            largest = &c;
        }
    }
    if (largest && largest->closed) {
        f.profile = upper_branch(*largest);
        if (f.profile) {
            const auto mc = count_interior_minima(f.profile->u, 0.05 * resolution);
            f.n_minima = mc.count;
            f.min_interior_minimum = mc.smallest;
        }
    }
}

// ------------------------------------------------------------------ output

inline bool trace_has_angles(const EvolutionTrace& tr)
{
    for (const auto& f : tr.frames)
        if (!std::isnan(f.theta_minus)) return true;
    return false;
}

inline void write_trace_csv(const std::string& path, const EvolutionTrace& tr)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    const bool angles = trace_has_angles(tr);
    out << "t,a,b,h,area,max_kappa,n_minima";
    if (angles) out << ",theta_minus,theta_plus";
    out << '\n';
    for (const auto& f : tr.frames) {
        out << format_double(f.t) << ',' << format_double(f.a) << ',' << format_double(f.b) << ','
            << format_double(f.h) << ',' << format_double(f.area) << ',' << format_double(f.max_kappa) << ','
            << f.n_minima;
        if (angles) out << ',' << format_double(f.theta_minus) << ',' << format_double(f.theta_plus);
        out << '\n';
    }
}

inline nlohmann::json event_to_json(const Event& e)
{
    return nlohmann::json{{"t", e.t}, {"kind", to_string(e.kind)}, {"data", e.data}};
}

inline void write_events_jsonl(const std::string& path, const EventLog& log)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    for (const auto& e : log.events) out << event_to_json(e).dump() << '\n';
}

}  // namespace curveflow
