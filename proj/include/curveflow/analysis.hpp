#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"
#include "graph_flow.hpp"
#include "levelset.hpp"
#include "trace.hpp"
#include "tracker.hpp"

namespace curveflow::analysis {

class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------- intersection number

struct IntersectionReport {
    int count = 0;                   // transversal crossings
    std::vector<Point2> crossings;   // the transversal ones
    std::vector<Point2> tangencies;  // merged tangential contacts and overlaps
    std::string method = "segment sign change, on-line endpoints on the positive side";
};

namespace detail {

struct Seg {
    Point2 p;
    Point2 q;
};

inline std::vector<Seg> segments_of(const PolyCurve& c)
{
    std::vector<Seg> s;
    const std::size_t n = c.points.size();
    if (n < 2) return s;
    const std::size_t m = c.closed ? n : n - 1;
    for (std::size_t i = 0; i < m; ++i) {
        const Point2 p = c.points[i];
        const Point2 q = c.points[(i + 1) % n];
        if (!(p == q)) s.push_back({p, q});
    }
    return s;
}

/// Side of r relative to the directed line pq; points on the line count as positive.
inline int side(Point2 p, Point2 q, Point2 r) { return cross(q - p, r - p) >= 0.0 ? 1 : -1; }

inline bool collinear_overlap(const Seg& a, const Seg& b, Point2& mid)
{
    if (cross(a.q - a.p, b.p - a.p) != 0.0 || cross(a.q - a.p, b.q - a.p) != 0.0) return false;
    const Point2 d = a.q - a.p;
    const double L2 = dot(d, d);
    double s0 = dot(b.p - a.p, d) / L2;
    double s1 = dot(b.q - a.p, d) / L2;
    if (s0 > s1) std::swap(s0, s1);
    const double lo = std::max(0.0, s0);
    const double hi = std::min(1.0, s1);
    if (!(hi > lo)) return false;
    mid = a.p + (0.5 * (lo + hi)) * d;
    return true;
}

/// Bin grid over the short segments of a curve; long ones (rays) are kept aside.
class SegGrid {
public:
    explicit SegGrid(const std::vector<Seg>& segs) : segs_(segs)
    {
        if (segs_.empty()) return;
        std::vector<double> len;
        for (const auto& s : segs_) len.push_back(dist(s.p, s.q));
        std::vector<double> sorted = len;
        std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(sorted.size() / 2), sorted.end());
        const double med = std::max(sorted[sorted.size() / 2], 1e-300);
        bool first = true;
        for (std::size_t k = 0; k < segs_.size(); ++k) {
            if (len[k] > 16.0 * med) {
                big_.push_back(k);
                continue;
            }
            for (const Point2 p : {segs_[k].p, segs_[k].q}) {
                if (first) {
                    bb_ = {p.x, p.x, p.y, p.y};
                    first = false;
                }
                bb_.x_min = std::min(bb_.x_min, p.x);
                bb_.x_max = std::max(bb_.x_max, p.x);
                bb_.y_min = std::min(bb_.y_min, p.y);
                bb_.y_max = std::max(bb_.y_max, p.y);
            }
        }
        if (first) return;
        cell_ = std::max(2.0 * med, std::max(bb_.x_max - bb_.x_min, bb_.y_max - bb_.y_min) / 512.0);
        gx_ = std::max(1, int((bb_.x_max - bb_.x_min) / cell_) + 1);
        gy_ = std::max(1, int((bb_.y_max - bb_.y_min) / cell_) + 1);
        bins_.assign(std::size_t(gx_) * std::size_t(gy_), {});
        for (std::size_t k = 0; k < segs_.size(); ++k) {
            if (len[k] > 16.0 * med) continue;
            for_cells(segs_[k], [&](std::size_t cell) { bins_[cell].push_back(k); });
        }
        stamp_.assign(segs_.size(), std::numeric_limits<std::size_t>::max());
    }

    /// Calls f(k) once for every segment whose cells overlap the query's bbox.
    template <class F>
    void candidates(const Seg& s, std::size_t query_id, F&& f)
    {
        for (std::size_t k : big_) f(k);
        if (bins_.empty()) return;
        for_cells(s, [&](std::size_t cell) {
            for (std::size_t k : bins_[cell]) {
                if (stamp_[k] == query_id) continue;
                stamp_[k] = query_id;
                f(k);
            }
        });
    }

private:
    template <class F>
    void for_cells(const Seg& s, F&& f) const
    {
        auto bx = [&](double x) { return std::clamp(int(std::floor((x - bb_.x_min) / cell_)), 0, gx_ - 1); };
        auto by = [&](double y) { return std::clamp(int(std::floor((y - bb_.y_min) / cell_)), 0, gy_ - 1); };
        const int i0 = bx(std::min(s.p.x, s.q.x)), i1 = bx(std::max(s.p.x, s.q.x));
        const int j0 = by(std::min(s.p.y, s.q.y)), j1 = by(std::max(s.p.y, s.q.y));
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) f(std::size_t(j) * std::size_t(gx_) + std::size_t(i));
    }

    std::vector<Seg> segs_;
    std::vector<std::size_t> big_;
    std::vector<std::vector<std::size_t>> bins_;
    std::vector<std::size_t> stamp_;
    BoundingBox bb_{};
    double cell_ = 1.0;
    int gx_ = 1;
    int gy_ = 1;
};

}  // namespace detail

/// Crossings of two polylines (open or closed). A crossing whose tangent directions
/// differ by less than `tol` radians counts as a tangency and is not counted.
/// Points lying exactly on the other curve are treated as slightly to its left,
/// which keeps the parity right at shared vertices.
inline IntersectionReport intersection_number(const PolyCurve& A, const PolyCurve& B, double tol = 0.02)
{
    for (const auto* c : {&A, &B})
        for (const auto& p : c->points)
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw AnalysisError("intersection_number: non-finite point");
    IntersectionReport rep;
    const auto sa = detail::segments_of(A);
    const auto sb = detail::segments_of(B);
    if (sa.empty() || sb.empty()) return rep;
    // index the larger set; the tests are symmetric so the result does not depend on it
    const bool swap = sb.size() < sa.size();
    const auto& Q = swap ? sa : sb;  // queried
    const auto& P = swap ? sb : sa;  // probing
    detail::SegGrid grid(Q);
    struct Hit {
        Point2 at;
        double angle;
        double scale;
    };
    std::vector<Hit> hits;
    std::vector<std::pair<Point2, double>> overlaps;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const auto& a = P[i];
        const double ax0 = std::min(a.p.x, a.q.x), ax1 = std::max(a.p.x, a.q.x);
        const double ay0 = std::min(a.p.y, a.q.y), ay1 = std::max(a.p.y, a.q.y);
        grid.candidates(a, i, [&](std::size_t k) {
            const auto& b = Q[k];
            if (std::max(b.p.x, b.q.x) < ax0 || std::min(b.p.x, b.q.x) > ax1 || std::max(b.p.y, b.q.y) < ay0 ||
                std::min(b.p.y, b.q.y) > ay1)
                return;
            Point2 mid;
            if (detail::collinear_overlap(a, b, mid)) {
                overlaps.push_back({mid, std::max(dist(a.p, a.q), dist(b.p, b.q))});
                return;
            }
            if (detail::side(a.p, a.q, b.p) == detail::side(a.p, a.q, b.q)) return;
            if (detail::side(b.p, b.q, a.p) == detail::side(b.p, b.q, a.q)) return;
            const Point2 da = a.q - a.p;
            const Point2 db = b.q - b.p;
            const double den = cross(da, db);
            const double s = den != 0.0 ? std::clamp(cross(b.p - a.p, db) / den, 0.0, 1.0) : 0.0;
            double ang = std::atan2(std::abs(den), dot(da, db));
            ang = std::min(ang, std::numbers::pi - ang);
            hits.push_back({a.p + s * da, ang, std::max(norm(da), norm(db))});
        });
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& l, const Hit& r) {
        return l.at.x != r.at.x ? l.at.x < r.at.x : l.at.y < r.at.y;
    });
    auto add_tangency = [&](Point2 p, double scale) {
        for (const auto& q : rep.tangencies)
            if (dist(p, q) <= 2.0 * scale) return;
        rep.tangencies.push_back(p);
    };
    for (const auto& h : hits) {
        if (h.angle < tol) add_tangency(h.at, h.scale);
        else {
            ++rep.count;
            rep.crossings.push_back(h.at);
        }
    }
    for (const auto& [p, scale] : overlaps) add_tangency(p, scale);
    return rep;
}

inline IntersectionReport intersection_number(const graph::ExtensionCurve& a, const graph::ExtensionCurve& b,
                                              double tol = 0.02)
{
    return intersection_number(a.polyline(), b.polyline(), tol);
}

// ------------------------------------------------------- monotonicity audit

enum class AuditMode {
    nonincreasing,  // one run with angles below pi/2, the other vertical
    vertical_pair,  // both vertical: no increase while positive, at most 1 after reaching 0
};

struct Violation {
    double t_prev = 0.0;
    double t = 0.0;
    int count_prev = 0;
    int count = 0;
};

struct AuditReport {
    std::vector<double> times;
    std::vector<int> counts;
    std::vector<Violation> violations;
    bool identical = false;
};

namespace detail {

inline bool same_frames(const EvolutionTrace& a, const EvolutionTrace& b)
{
    if (a.frames.size() != b.frames.size()) return false;
    for (std::size_t k = 0; k < a.frames.size(); ++k) {
        const auto& pa = a.frames[k].profile;
        const auto& pb = b.frames[k].profile;
        if (a.frames[k].t != b.frames[k].t || pa.has_value() != pb.has_value()) return false;
        if (pa && (pa->x != pb->x || pa->u != pb->u)) return false;
    }
    return true;
}

}  // namespace detail

/// Framewise intersection numbers of the extension curves of two runs. Frames
/// without a profile (after extinction) end the audit.
inline AuditReport monotonicity_audit(const EvolutionTrace& a, const EvolutionTrace& b, AuditMode mode, double tol = 0.02,
                                      double ray_length = 0.0)
{
    // a run that goes extinct stops early; its last frame sits off the common grid
    auto ends_early = [](const EvolutionTrace& t) { return t.extinction_time.has_value() || t.halted; };
    const std::size_t n = std::min(a.frames.size(), b.frames.size());
    if (a.frames.size() != b.frames.size() && !ends_early(a.frames.size() < b.frames.size() ? a : b))
        throw AnalysisError("monotonicity_audit: traces have different frame counts");
    std::size_t usable = n;
    for (std::size_t k = 0; k < n; ++k) {
        const double ta = a.frames[k].t;
        const double tb = b.frames[k].t;
        if (std::abs(ta - tb) <= 1e-12 * std::max(1.0, std::abs(ta))) continue;
        const bool last_a = k + 1 == a.frames.size() && ends_early(a);
        const bool last_b = k + 1 == b.frames.size() && ends_early(b);
        if (!last_a && !last_b) throw AnalysisError("monotonicity_audit: frame times differ at index " + std::to_string(k));
        usable = k;
        break;
    }
    AuditReport rep;
    if (detail::same_frames(a, b)) {
        rep.identical = true;
        return rep;
    }
    bool reached_zero = false;
    for (std::size_t k = 0; k < usable; ++k) {
        const auto& pa = a.frames[k].profile;
        const auto& pb = b.frames[k].profile;
        if (!pa || !pb || pa->x.size() < 2 || pb->x.size() < 2) break;
        const int c = intersection_number(graph::extension_curve(*pa, ray_length), graph::extension_curve(*pb, ray_length), tol).count;
        if (!rep.counts.empty()) {
            const int prev = rep.counts.back();
            bool bad = false;
            if (mode == AuditMode::nonincreasing) bad = c > prev;
            else bad = reached_zero ? c > 1 : (c > prev && prev > 0);
            if (bad) rep.violations.push_back({rep.times.back(), a.frames[k].t, prev, c});
        }
        if (c == 0) reached_zero = true;
        rep.times.push_back(a.frames[k].t);
        rep.counts.push_back(c);
    }
    return rep;
}

// ---------------------------------------------------------------- ball ODE

/// Closed-form extinction time of a circle moving by V = -kappa + A; infinite
/// when A * R0 >= 1.
inline double extinction_time_closed_form(double A, double R0)
{
    if (!(R0 > 0.0)) throw AnalysisError("extinction_time: R0 must be positive");
    if (A < 0.0) throw AnalysisError("extinction_time: A must be nonnegative");
    if (A == 0.0) return 0.5 * R0 * R0;
    if (A * R0 >= 1.0) return std::numeric_limits<double>::infinity();
    return -R0 / A - std::log1p(-A * R0) / (A * A);
}

/// Extinction time by RK4 quadrature of dt/dR = R / (1 - A R), checked against the
/// closed form. With 1 - A R = exp(-s) the integrand becomes the smooth (1 - e^-s) / A^2.
inline double extinction_time(double A, double R0, std::size_t intervals = 2000)
{
    const double closed = extinction_time_closed_form(A, R0);
    if (std::isinf(closed)) return closed;
    double T = 0.0;
    if (A == 0.0) {
        const double h = R0 / double(intervals);
        for (std::size_t k = 0; k < intervals; ++k) {
            const double r = double(k) * h;
            // RK4 on an autonomous integrand is Simpson's rule
            T += h / 6.0 * (r + 4.0 * (r + 0.5 * h) + (r + h));
        }
    }
    else {
        const double S = -std::log1p(-A * R0);
        const double h = S / double(intervals);
        auto f = [A](double s) { return -std::expm1(-s) / (A * A); };
        for (std::size_t k = 0; k < intervals; ++k) {
            const double s = double(k) * h;
            T += h / 6.0 * (f(s) + 4.0 * f(s + 0.5 * h) + f(s + h));
        }
    }
    if (std::abs(T - closed) > 1e-9 * std::max(1.0, closed))
        throw AnalysisError("extinction_time: quadrature disagrees with the closed form");
    // R0^2 / 2 is exact; the summed quadrature only carries roundoff
    return A == 0.0 ? closed : T;
}

/// R(t) for R' = A - 1/R by adaptive RK4 (steps change R by about 1%).
inline double ball_radius(double A, double R0, double t)
{
    if (!(R0 > 0.0)) throw AnalysisError("ball_radius: R0 must be positive");
    if (A < 0.0) throw AnalysisError("ball_radius: A must be nonnegative");
    if (t < 0.0) throw AnalysisError("ball_radius: t must be nonnegative");
    const double T = extinction_time_closed_form(A, R0);
    if (t >= T)
        throw AnalysisError("ball_radius: t = " + format_double(t) + " is at or beyond extinction T = " + format_double(T));
    auto f = [A](double r) { return A - 1.0 / r; };
    double r = R0;
    double s = 0.0;
    while (s < t) {
        const double rate = std::abs(f(r));
        double h = t - s;
        if (rate > 0.0) h = std::min(h, 0.01 * r / rate);
        h = std::min(h, 0.01);
        // near extinction the remaining time is about r^2 / 2; never step past it
        if (A * r < 1.0) h = std::min(h, 0.25 * r * r);
        const double k1 = f(r);
        const double k2 = f(r + 0.5 * h * k1);
        const double k3 = f(r + 0.5 * h * k2);
        const double k4 = f(r + h * k3);
        r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s += h;
        if (!(r > 0.0)) throw AnalysisError("ball_radius: integration reached R <= 0 before t");
    }
    return r;
}

/// Frames of the exact circle R(t) centred at the origin; shrinking runs end with an
/// extinction frame. Used as an oracle for the classifier.
inline EvolutionTrace synthetic_ball_trace(double A, double R0, double t_end, std::size_t frames, double resolution = 1e-3)
{
    EvolutionTrace tr;
    tr.solver = "ball";
    tr.A = A;
    tr.resolution = resolution;
    const double T = extinction_time_closed_form(A, R0);
    const double horizon = std::isinf(T) ? t_end : std::min(t_end, T);
    for (std::size_t k = 0; k <= frames; ++k) {
        const double t = horizon * double(k) / double(frames);
        Frame f;
        f.t = t;
        if (t >= T) {
            f.a = f.b = f.h = 0.0;
            tr.frames.push_back(f);
            tr.extinction_time = T;
            tr.events.events.push_back({T, EventKind::extinction, {{"h", 0.0}, {"width", 0.0}}});
            break;
        }
        const double R = A * R0 == 1.0 ? R0 : ball_radius(A, R0, t);
        f.a = -R;
        f.b = R;
        f.h = R;
        f.area = std::numbers::pi * R * R;
        f.max_kappa = 1.0 / R;
        tr.frames.push_back(f);
    }
    return tr;
}

// -------------------------------------------------------------- verdicts

enum class Outcome { Expanding, Bounded, Shrinking, Fattening, Regular, Undetermined };

inline const char* to_string(Outcome o)
{
    switch (o) {
    case Outcome::Expanding: return "Expanding";
    case Outcome::Bounded: return "Bounded";
    case Outcome::Shrinking: return "Shrinking";
    case Outcome::Fattening: return "Fattening";
    case Outcome::Regular: return "Regular";
    case Outcome::Undetermined: return "Undetermined";
    }
    return "Undetermined";
}

inline std::optional<Outcome> outcome_from_string(const std::string& s)
{
    for (auto o : {Outcome::Expanding, Outcome::Bounded, Outcome::Shrinking, Outcome::Fattening, Outcome::Regular,
                   Outcome::Undetermined})
        if (s == to_string(o)) return o;
    return std::nullopt;
}

struct Verdict {
    Outcome outcome = Outcome::Undetermined;
    nlohmann::json metrics = nlohmann::json::object();
    nlohmann::json sub_reports = nlohmann::json::object();
    std::vector<std::string> notes;
    std::string config_hash;
};

inline nlohmann::json verdict_to_json(const Verdict& v)
{
    return nlohmann::json{{"outcome", to_string(v.outcome)},
                          {"metrics", v.metrics},
                          {"sub_reports", v.sub_reports},
                          {"notes", v.notes},
                          {"config_hash", v.config_hash}};
}

struct ClassifyOptions {
    double escape_factor = 2.0;  // Expanding needs b, h > escape_factor / A
    double stabilize_tol = 0.25;  // late db/dt within this fraction of b/t
    double band_tol = 0.05;       // Bounded: relative spread of h and b over the trailing half
    double point_cells = 3.0;     // Shrinking: final h and width below this many resolutions
};

namespace detail {

inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    const double n = double(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    const double den = n * sxx - sx * sx;
    return den != 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

inline PolyCurve circle_polygon(Point2 c, double r, std::size_t n)
{
    std::vector<Point2> pts;
    for (std::size_t k = 0; k < n; ++k) {
        const double th = 2.0 * std::numbers::pi * double(k) / double(n);
        pts.push_back({c.x + r * std::cos(th), c.y + r * std::sin(th)});
    }
    return make_closed_curve(pts);
}

}  // namespace detail

/// Expanding / Bounded / Shrinking from a finished trace. Bounded only means the
/// bands held over the observed horizon.
inline Verdict classify(const EvolutionTrace& tr, double A, const ClassifyOptions& opt = {})
{
    Verdict v;
    if (tr.frames.size() < 2) {
        v.notes.push_back("fewer than two frames");
        return v;
    }
    const Frame& last = tr.frames.back();
    const double res = tr.resolution;
    if (tr.extinction_time) {
        v.metrics["extinction_time"] = *tr.extinction_time;
        v.metrics["final_h"] = last.h;
        v.metrics["final_width"] = last.b - last.a;
        const double lim = opt.point_cells * res;
        if (last.h <= lim && last.b - last.a <= lim) v.outcome = Outcome::Shrinking;
        else v.notes.push_back("extinction without h and b - a vanishing together");
        return v;
    }
    if (tr.halted) {
        v.notes.push_back("run halted early");
        return v;
    }
    std::vector<const Frame*> F;
    for (const auto& f : tr.frames)
        if (std::isfinite(f.b) && std::isfinite(f.h) && std::isfinite(f.a)) F.push_back(&f);
    if (F.size() < 4) {
        v.notes.push_back("too few finite frames");
        return v;
    }
    const double t_last = F.back()->t;
    const double b_last = F.back()->b;
    const double h_last = F.back()->h;
    if (A > 0.0 && t_last > 0.0) {
        const double escape = opt.escape_factor / A;
        std::vector<double> ts, bs;
        for (const auto* f : F)
            if (f->t >= 0.75 * t_last) {
                ts.push_back(f->t);
                bs.push_back(f->b);
            }
        const double ratio = b_last / t_last;
        const double late_rate = ts.size() >= 2 ? detail::fit_slope(ts, bs) : 0.0;
        v.metrics["slope_b_over_t"] = ratio;
        v.metrics["late_db_dt"] = late_rate;
        if (b_last > escape && h_last > escape && late_rate > 0.0 && std::abs(late_rate - ratio) <= opt.stabilize_tol * ratio) {
            v.outcome = Outcome::Expanding;
            return v;
        }
    }
    auto spread = [&](auto get) {
        double lo = INFINITY, hi = -INFINITY, sum = 0.0;
        std::size_t n = 0;
        for (const auto* f : F)
            if (f->t >= 0.5 * t_last) {
                const double x = get(*f);
                lo = std::min(lo, x);
                hi = std::max(hi, x);
                sum += x;
                ++n;
            }
        const double mean = sum / double(n);
        return mean > 0.0 ? (hi - lo) / mean : INFINITY;
    };
    const double sh = spread([](const Frame& f) { return f.h; });
    const double sb = spread([](const Frame& f) { return f.b - f.a; });
    v.metrics["h_spread"] = sh;
    v.metrics["width_spread"] = sb;
    if (sh < opt.band_tol && sb < opt.band_tol) {
        v.outcome = Outcome::Bounded;
        v.notes.push_back("bands held over the observed horizon only; R = 1/A is an unstable balance");
        if (A > 0.0 && !last.curves.empty()) {
            const auto bb = bounding_box(last.curves.front());
            const Point2 c{0.5 * (bb.x_min + bb.x_max), 0.5 * (bb.y_min + bb.y_max)};
            v.metrics["d_H_to_limit_circle"] = hausdorff_distance(last.curves, {detail::circle_polygon(c, 1.0 / A, 2048)});
        }
        return v;
    }
    v.notes.push_back("no criterion met over the observed horizon");
    return v;
}

// ------------------------------------------------------------------ a_*(t)

struct AStarOptions {
    double spacing = 0.01;
    double cfl = 0.4;
    double window_lo = 2.0;   // fit window start, in time steps
    double window_hi = 20.0;  // fit window end, in time steps
    double slope_tol = 0.1;   // |slope| below this: sign undetermined
};

struct AStarEstimate {
    double slope = 0.0;
    int sign = 0;  // +1: a_* >= 0 on the window, -1: a_* < 0, 0: undetermined
    double dt = 0.0;
    double window_lo = 0.0;
    double window_hi = 0.0;
    std::vector<std::pair<double, double>> series;  // (t, a_*)
};

/// Fits a_*(t) of the freely evolving lobe over t in [window_lo, window_hi] steps.
inline AStarEstimate estimate_a_star(const Profile& p, double A, const AStarOptions& opt = {})
{
    if (p.left.kind != ContactKind::vertical) throw AnalysisError("estimate_a_star: profile needs a vertical left contact");
    AStarEstimate est;
    est.dt = opt.cfl * opt.spacing * opt.spacing / 2.0;
    est.window_lo = opt.window_lo * est.dt;
    est.window_hi = opt.window_hi * est.dt;
    tracker::EvolveOptions eo;
    eo.spacing = opt.spacing;
    eo.cfl = opt.cfl;
    eo.frame_stride = 1;
    const auto tr = tracker::evolve_free_halfplane(p, A, (opt.window_hi + 1.0) * est.dt, eo);
    std::vector<double> ts, as;
    bool all_nonneg = true;
    bool all_neg = true;
    for (const auto& f : tr.frames) {
        est.series.push_back({f.t, f.a});
        if (f.t <= 0.0 || f.t > est.window_hi * (1.0 + 1e-9)) continue;
        all_nonneg = all_nonneg && f.a >= 0.0;
        all_neg = all_neg && f.a < 0.0;
        if (f.t >= est.window_lo * (1.0 - 1e-9)) {
            ts.push_back(f.t);
            as.push_back(f.a);
        }
    }
    if (ts.size() < 3) throw AnalysisError("estimate_a_star: too few frames in the fit window");
    est.slope = detail::fit_slope(ts, as);
    if (est.slope >= opt.slope_tol && all_nonneg) est.sign = 1;
    else if (est.slope <= -opt.slope_tol && all_neg) est.sign = -1;
    return est;
}

inline nlohmann::json to_json(const AStarEstimate& e)
{
    return nlohmann::json{{"slope", e.slope}, {"sign", e.sign}, {"dt", e.dt}, {"window", {e.window_lo, e.window_hi}}};
}

inline nlohmann::json to_json(const levelset::FatteningBracket& fb)
{
    return nlohmann::json{{"epsilons", fb.epsilons},
                          {"gaps", fb.gaps},
                          {"limit", fb.limit},
                          {"limit_cells", fb.limit / fb.dx},
                          {"dx", fb.dx},
                          {"verdict", levelset::to_string(fb.verdict)}};
}

// ------------------------------------------------------------ fattening

struct FatteningOptions {
    AStarOptions a_star;
    int grid_n = 256;
    double t = 0.1;                               // bracket evolution time
    std::vector<double> eps_cells{8.0, 6.0, 4.0};  // epsilons in grid steps
    double margin = 0.15;                         // grid margin beyond the reachable set
    levelset::BracketOptions bracket;
};

/// Grid for the bracket: square around the even extension, large enough for the
/// dilated set to move outward at speed A until t.
inline levelset::GridSpec bracket_grid(const Profile& ext, double A, const FatteningOptions& opt)
{
    double reach = 0.0;
    for (std::size_t i = 0; i < ext.x.size(); ++i) reach = std::max({reach, std::abs(ext.x[i]), ext.u[i]});
    // eps is tied to dx, so solve half = reach + A t + margin + e * (2 half / (n - 1))
    const double e = opt.eps_cells.empty() ? 0.0 : *std::max_element(opt.eps_cells.begin(), opt.eps_cells.end());
    const double base = reach + A * opt.t + opt.margin;
    const double half = base / (1.0 - 2.0 * e / double(opt.grid_n - 1));
    return levelset::square_grid(0.0, 0.0, half, opt.grid_n);
}

/// Fattening iff a_* >= 0 near t = 0 and the bracket gap stays open; Regular iff
/// a_* < 0 and the gap closes; otherwise Undetermined with both sub-reports.
inline Verdict fattening_verdict(const Profile& p, double A, const FatteningOptions& opt = {})
{
    Verdict v;
    const auto est = estimate_a_star(p, A, opt.a_star);
    const Profile ext = even_extend(p);
    const auto grid = bracket_grid(ext, A, opt);
    const auto phi = levelset::signed_distance_init(profile_to_curve(ext), grid);
    std::vector<double> eps;
    for (double c : opt.eps_cells) eps.push_back(c * grid.dx());
    const auto fb = levelset::fattening_bracket(phi, A, opt.t, eps, opt.bracket);
    v.sub_reports["a_star"] = to_json(est);
    v.sub_reports["bracket"] = to_json(fb);
    v.metrics["a_star_slope"] = est.slope;
    v.metrics["fattening_gap_extrapolate"] = fb.limit;
    v.metrics["kappa_origin"] = kappa_at_origin(p);
    if (est.sign > 0 && fb.verdict == levelset::BracketVerdict::fattening) v.outcome = Outcome::Fattening;
    else if (est.sign < 0 && fb.verdict == levelset::BracketVerdict::regular) v.outcome = Outcome::Regular;
    else v.notes.push_back("a_* sign and bracket disagree or are inconclusive");
    return v;
}

// ------------------------------------------------------ gradient estimates

struct ESBound {
    double K = 0.0;
    double bound = 0.0;
};

/// Interior gradient bound on a ball of radius R; R = 1 is the unscaled estimate.
inline ESBound evans_spruck_bound(double v0, int n, double A, double T, double R = 1.0)
{
    if (!(v0 > 0.0) || !(T > 0.0) || !(R > 0.0) || n < 1 || A < 0.0)
        throw AnalysisError("evans_spruck_bound: need v0, T, R > 0, n >= 1, A >= 0");
    ESBound b;
    b.K = 20.0 * (v0 * v0) / (R * R) * (4.0 * double(n) + R * R / T + 4.0 * A / R + A / (2.0 * v0)) + 2.0;
    b.bound = std::exp(2.0 * b.K) * (3.0 + 16.0 * v0 / R);
    return b;
}

struct GradientFrame {
    double t = 0.0;
    bool vacuous = false;  // no sample with u >= delta
    double sup = 0.0;      // max |u_x| over {u >= delta}
    double bound = INFINITY;
};

struct GradientAudit {
    double delta = 0.0;
    std::vector<GradientFrame> frames;
    double sup = 0.0;
    bool finite = true;
    bool within_bound = true;
};

/// Max |u_x| over {u >= delta} per frame, from chord slopes of segments with both
/// ends in the set. The bound uses v0 = h(t), R = delta, T = t / 2, n = 1.
inline GradientAudit gradient_bound_audit(const EvolutionTrace& tr, double delta, double t_min = 0.0)
{
    if (!(delta > 0.0)) throw AnalysisError("gradient_bound_audit: delta must be positive");
    GradientAudit rep;
    rep.delta = delta;
    for (const auto& f : tr.frames) {
        if (f.t < t_min || !f.profile) continue;
        GradientFrame g;
        g.t = f.t;
        const auto& p = *f.profile;
        bool any = false;
        for (std::size_t i = 1; i < p.x.size(); ++i) {
            if (p.u[i - 1] < delta || p.u[i] < delta) continue;
            const double dxs = p.x[i] - p.x[i - 1];
            const double s = dxs != 0.0 ? std::abs((p.u[i] - p.u[i - 1]) / dxs) : INFINITY;
            g.sup = std::max(g.sup, s);
            any = true;
        }
        g.vacuous = !any;
        if (any && f.t > 0.0) {
            g.bound = evans_spruck_bound(std::max(f.h, delta), 1, std::max(tr.A, 0.0), 0.5 * f.t, delta).bound;
            rep.within_bound = rep.within_bound && g.sup <= g.bound;
        }
        rep.finite = rep.finite && std::isfinite(g.sup);
        rep.sup = std::max(rep.sup, g.sup);
        rep.frames.push_back(g);
    }
    return rep;
}

}  // namespace curveflow::analysis
