#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace curveflow {

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
inline bool operator==(Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double dist(Point2 a, Point2 b) { return norm(a - b); }

enum class Orientation { ccw, cw };

/// Polyline, either closed (last node connects to first) or open.
struct PolyCurve {
    std::vector<Point2> points;
    bool closed = true;
    Orientation orientation = Orientation::ccw;
};

struct BoundingBox {
    double x_min = 0.0;
    double x_max = 0.0;
    double y_min = 0.0;
    double y_max = 0.0;
};

inline double signed_area(const std::vector<Point2>& pts)
{
    double s = 0.0;
    const std::size_t n = pts.size();
    for (std::size_t i = 0; i < n; ++i) s += cross(pts[i], pts[(i + 1) % n]);
    return 0.5 * s;
}

inline double signed_area(const PolyCurve& c) { return c.closed ? signed_area(c.points) : 0.0; }

inline double curve_length(const PolyCurve& c)
{
    double len = 0.0;
    const std::size_t n = c.points.size();
    if (n < 2) return 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) len += dist(c.points[i], c.points[i + 1]);
    if (c.closed) len += dist(c.points.back(), c.points.front());
    return len;
}

inline BoundingBox bounding_box(const std::vector<Point2>& pts)
{
    if (pts.empty()) throw GeometryError("bounding_box: empty point set");
    BoundingBox bb{pts[0].x, pts[0].x, pts[0].y, pts[0].y};
    for (const auto& p : pts) {
        bb.x_min = std::min(bb.x_min, p.x);
        bb.x_max = std::max(bb.x_max, p.x);
        bb.y_min = std::min(bb.y_min, p.y);
        bb.y_max = std::max(bb.y_max, p.y);
    }
    return bb;
}

inline BoundingBox bounding_box(const PolyCurve& c) { return bounding_box(c.points); }

/// Throws GeometryError when the curve breaks its structural invariants.
inline void validate_curve(const PolyCurve& c)
{
    const std::size_t n = c.points.size();
    if (c.closed && n < 3) throw GeometryError("closed curve needs at least 3 points");
    if (!c.closed && n < 2) throw GeometryError("open curve needs at least 2 points");
    for (std::size_t i = 0; i + 1 < n; ++i)
        if (c.points[i] == c.points[i + 1]) throw GeometryError("consecutive duplicate points");
    if (c.closed) {
        if (c.points.back() == c.points.front()) throw GeometryError("closing point duplicates the first point");
        const double a = signed_area(c.points);
        if ((a > 0.0 && c.orientation == Orientation::cw) || (a < 0.0 && c.orientation == Orientation::ccw))
            throw GeometryError("orientation flag disagrees with signed area");
    }
}

/// Builds a closed curve, taking the orientation from the signed area.
inline PolyCurve make_closed_curve(std::vector<Point2> pts)
{
    PolyCurve c;
    c.points = std::move(pts);
    c.closed = true;
    c.orientation = signed_area(c.points) >= 0.0 ? Orientation::ccw : Orientation::cw;
    validate_curve(c);
    return c;
}

inline PolyCurve reversed(const PolyCurve& c)
{
    PolyCurve r = c;
    std::reverse(r.points.begin(), r.points.end());
    if (c.closed) r.orientation = c.orientation == Orientation::ccw ? Orientation::cw : Orientation::ccw;
    return r;
}

/// Signed curvature of the circle through three points; positive for a left turn.
/// Returns 0 for collinear triples and throws on coincident points.
inline double menger_curvature(Point2 a, Point2 b, Point2 c)
{
    const Point2 ab = b - a;
    const Point2 bc = c - b;
    const Point2 ac = c - a;
    const double lab = norm(ab);
    const double lbc = norm(bc);
    const double lac = norm(ac);
    if (lab == 0.0 || lbc == 0.0 || lac == 0.0) throw GeometryError("curvature: coincident points");
    const double cr = cross(ab, bc);
    if (std::abs(cr) <= 1e-14 * lab * lbc) return 0.0;
    return 2.0 * cr / (lab * lbc * lac);
}

/// Per-node curvature of a closed curve, positive on a convex circle of either orientation.
inline std::vector<double> curvature(const PolyCurve& c)
{
    if (!c.closed) throw GeometryError("curvature: curve must be closed");
    const std::size_t n = c.points.size();
    if (n < 3) throw GeometryError("curvature: need at least 3 points");
    const double s = c.orientation == Orientation::ccw ? 1.0 : -1.0;
    std::vector<double> k(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Point2 prev = c.points[(i + n - 1) % n];
        const Point2 next = c.points[(i + 1) % n];
        k[i] = s * menger_curvature(prev, c.points[i], next);
    }
    return k;
}

inline double point_segment_distance(Point2 p, Point2 a, Point2 b)
{
    const Point2 ab = b - a;
    const double l2 = dot(ab, ab);
    if (l2 == 0.0) return dist(p, a);
    const double t = std::clamp(dot(p - a, ab) / l2, 0.0, 1.0);
    return dist(p, a + t * ab);
}

inline double point_curve_distance(Point2 p, const PolyCurve& c)
{
    const std::size_t n = c.points.size();
    if (n == 0) throw GeometryError("distance to empty curve");
    if (n == 1) return dist(p, c.points[0]);
    double best = std::numeric_limits<double>::infinity();
    const std::size_t segs = c.closed ? n : n - 1;
    for (std::size_t i = 0; i < segs; ++i)
        best = std::min(best, point_segment_distance(p, c.points[i], c.points[(i + 1) % n]));
    return best;
}

inline double directed_hausdorff(const std::vector<PolyCurve>& from, const std::vector<PolyCurve>& to)
{
    double worst = 0.0;
    for (const auto& c : from)
        for (const auto& p : c.points) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& d : to) best = std::min(best, point_curve_distance(p, d));
            worst = std::max(worst, best);
        }
    return worst;
}

/// Uniform bin grid over the segments of a set of polylines for nearest-segment queries.
class SegmentIndex {
public:
    explicit SegmentIndex(const std::vector<PolyCurve>& curves)
    {
        for (const auto& c : curves) {
            const std::size_t n = c.points.size();
            if (n == 1) segs_.push_back({c.points[0], c.points[0]});
            if (n < 2) continue;
            const std::size_t m = c.closed ? n : n - 1;
            for (std::size_t i = 0; i < m; ++i) segs_.push_back({c.points[i], c.points[(i + 1) % n]});
        }
        if (segs_.empty()) throw GeometryError("SegmentIndex: empty curve set");
        bb_ = {segs_[0][0].x, segs_[0][0].x, segs_[0][0].y, segs_[0][0].y};
        for (const auto& sg : segs_)
            for (const auto& p : sg) {
                bb_.x_min = std::min(bb_.x_min, p.x);
                bb_.x_max = std::max(bb_.x_max, p.x);
                bb_.y_min = std::min(bb_.y_min, p.y);
                bb_.y_max = std::max(bb_.y_max, p.y);
            }
        const double ext = std::max({bb_.x_max - bb_.x_min, bb_.y_max - bb_.y_min, 1e-12});
        const double g = std::clamp(std::sqrt(double(segs_.size())), 1.0, 256.0);
        cell_ = ext / g;
        gx_ = std::max(1, int(std::ceil((bb_.x_max - bb_.x_min) / cell_)) + 1);
        gy_ = std::max(1, int(std::ceil((bb_.y_max - bb_.y_min) / cell_)) + 1);
        bins_.assign(std::size_t(gx_) * gy_, {});
        for (std::size_t k = 0; k < segs_.size(); ++k) {
            const auto& sg = segs_[k];
            const int i0 = bin_x(std::min(sg[0].x, sg[1].x)), i1 = bin_x(std::max(sg[0].x, sg[1].x));
            const int j0 = bin_y(std::min(sg[0].y, sg[1].y)), j1 = bin_y(std::max(sg[0].y, sg[1].y));
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) bins_[std::size_t(j) * gx_ + i].push_back(k);
        }
    }

    [[nodiscard]] double distance(Point2 p) const
    {
        const int bi = bin_x(p.x);
        const int bj = bin_y(p.y);
        double best = std::numeric_limits<double>::infinity();
        const int rmax = std::max(gx_, gy_);
        for (int r = 0; r <= rmax; ++r) {
            for (int j = bj - r; j <= bj + r; ++j) {
                if (j < 0 || j >= gy_) continue;
                const bool edge_row = (j == bj - r || j == bj + r);
                for (int i = bi - r; i <= bi + r; i += (edge_row || r == 0) ? 1 : 2 * r) {
                    if (i < 0 || i >= gx_) continue;
                    for (std::size_t k : bins_[std::size_t(j) * gx_ + i])
                        best = std::min(best, point_segment_distance(p, segs_[k][0], segs_[k][1]));
                }
            }
            if (best <= double(r) * cell_) break;
        }
        return best;
    }

private:
    [[nodiscard]] int bin_x(double x) const { return std::clamp(int((x - bb_.x_min) / cell_), 0, gx_ - 1); }
    [[nodiscard]] int bin_y(double y) const { return std::clamp(int((y - bb_.y_min) / cell_), 0, gy_ - 1); }

    std::vector<std::array<Point2, 2>> segs_;
    std::vector<std::vector<std::size_t>> bins_;
    BoundingBox bb_;
    double cell_ = 1.0;
    int gx_ = 1;
    int gy_ = 1;
};

inline double directed_hausdorff(const std::vector<PolyCurve>& from, const SegmentIndex& to)
{
    double worst = 0.0;
    for (const auto& c : from)
        for (const auto& p : c.points) worst = std::max(worst, to.distance(p));
    return worst;
}

/// Hausdorff distance between two sets of polylines, nodes projected onto segments.
inline double hausdorff_distance(const std::vector<PolyCurve>& A, const std::vector<PolyCurve>& B)
{
    auto empty = [](const std::vector<PolyCurve>& s) {
        return std::all_of(s.begin(), s.end(), [](const PolyCurve& c) { return c.points.empty(); });
    };
    if (empty(A) || empty(B)) throw GeometryError("hausdorff_distance: empty curve");
    return std::max(directed_hausdorff(A, SegmentIndex(B)), directed_hausdorff(B, SegmentIndex(A)));
}

inline double hausdorff_distance(const PolyCurve& A, const PolyCurve& B)
{
    return hausdorff_distance(std::vector<PolyCurve>{A}, std::vector<PolyCurve>{B});
}

/// Even-odd point-in-polygon test.
inline bool point_in_polygon(Point2 p, const std::vector<Point2>& poly)
{
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Point2 a = poly[i];
        const Point2 b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < xc) inside = !inside;
        }
    }
    return inside;
}

// ---------------------------------------------------------------- profiles

enum class ContactKind { angle, vertical };

struct Contact {
    ContactKind kind = ContactKind::vertical;
    double angle = std::numbers::pi / 2.0;  // radians, meaningful for ContactKind::angle
};

/// Upper branch u(x) >= 0 on [a, b]; the curve is |y| = u(x).
struct Profile {
    double a = 0.0;
    double b = 1.0;
    std::vector<double> x;
    std::vector<double> u;
    Contact left;
    Contact right;
};

inline void validate_profile(const Profile& p, double tol = 1e-9)
{
    if (!(p.a < p.b)) throw GeometryError("profile: need a < b");
    if (p.x.size() != p.u.size()) throw GeometryError("profile: x and u sizes differ");
    if (p.x.size() < 3) throw GeometryError("profile: need at least 3 samples");
    if (p.x.front() != p.a || p.x.back() != p.b) throw GeometryError("profile: samples must span [a, b]");
    for (std::size_t i = 0; i + 1 < p.x.size(); ++i)
        if (!(p.x[i + 1] > p.x[i])) throw GeometryError("profile: x must be strictly increasing");
    const double scale = std::max(1.0, *std::max_element(p.u.begin(), p.u.end()));
    for (double v : p.u)
        if (!std::isfinite(v) || v < -tol * scale) throw GeometryError("profile: u must be finite and >= 0");
    if (std::abs(p.u.front()) > tol * scale || std::abs(p.u.back()) > tol * scale)
        throw GeometryError("profile: u must vanish at both ends");
}

/// Piecewise-linear evaluation; zero outside [a, b].
inline double profile_value(const Profile& p, double xq)
{
    if (xq <= p.x.front() || xq >= p.x.back()) return 0.0;
    const auto it = std::upper_bound(p.x.begin(), p.x.end(), xq);
    const std::size_t i = static_cast<std::size_t>(it - p.x.begin());
    const double t = (xq - p.x[i - 1]) / (p.x[i] - p.x[i - 1]);
    return (1.0 - t) * p.u[i - 1] + t * p.u[i];
}

inline double profile_height(const Profile& p) { return *std::max_element(p.u.begin(), p.u.end()); }

/// Closed CCW curve |y| = u: lower branch left to right, then upper branch back.
/// Starts at (a, 0).
inline PolyCurve profile_to_curve(const Profile& p)
{
    std::vector<Point2> pts;
    const std::size_t n = p.x.size();
    pts.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) pts.push_back({p.x[i], -p.u[i]});
    for (std::size_t i = n - 1; i-- > 1;) pts.push_back({p.x[i], p.u[i]});
    // endpoint samples with u == 0 appear once; interior zeros appear on both branches
    std::vector<Point2> clean;
    clean.reserve(pts.size());
    for (const auto& q : pts)
        if (clean.empty() || !(clean.back() == q)) clean.push_back(q);
    while (clean.size() > 1 && clean.back() == clean.front()) clean.pop_back();
    PolyCurve c;
    c.points = std::move(clean);
    c.closed = true;
    c.orientation = Orientation::ccw;
    return c;
}

/// Reflection of a profile on [0, b0] to [-b0, b0] with 2n - 1 samples.
inline Profile even_extend(const Profile& p)
{
    if (p.a != 0.0) throw GeometryError("even_extend: profile must start at x = 0");
    validate_profile(p);
    Profile e;
    const std::size_t n = p.x.size();
    e.x.reserve(2 * n - 1);
    e.u.reserve(2 * n - 1);
    for (std::size_t i = n; i-- > 1;) {
        e.x.push_back(-p.x[i]);
        e.u.push_back(p.u[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        e.x.push_back(p.x[i]);
        e.u.push_back(p.u[i]);
    }
    e.a = -p.b;
    e.b = p.b;
    e.left = p.right;
    e.right = p.right;
    return e;
}

/// Samples with x >= 0, as a profile on [0, b].
inline Profile restrict_to_right(const Profile& p)
{
    Profile r;
    for (std::size_t i = 0; i < p.x.size(); ++i)
        if (p.x[i] >= 0.0) {
            r.x.push_back(p.x[i]);
            r.u.push_back(p.u[i]);
        }
    if (r.x.empty() || r.x.front() != 0.0) throw GeometryError("restrict_to_right: no sample at x = 0");
    r.a = 0.0;
    r.b = r.x.back();
    r.left.kind = ContactKind::vertical;
    r.right = p.right;
    return r;
}

/// Curvature of the osculating circle at (0, 0), fitted to the first k samples
/// with its center on the x-axis.
inline double kappa_at_origin(const Profile& p, std::size_t k = 8)
{
    if (p.a != 0.0 || p.left.kind != ContactKind::vertical)
        throw GeometryError("kappa_at_origin: need a = 0 with vertical left contact");
    if (k < 3 || p.x.size() < k) throw GeometryError("kappa_at_origin: too few samples near the origin");
    // x^2 + u^2 = 2 c x + e, least squares in (c, e)
    double sxx = 0, sx = 0, s1 = 0, sxr = 0, sr = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double x = p.x[i];
        const double r = x * x + p.u[i] * p.u[i];
        sxx += 4.0 * x * x;
        sx += 2.0 * x;
        s1 += 1.0;
        sxr += 2.0 * x * r;
        sr += r;
    }
    const double det = sxx * s1 - sx * sx;
    if (std::abs(det) < 1e-300) throw GeometryError("kappa_at_origin: degenerate samples");
    const double c = (sxr * s1 - sx * sr) / det;
    const double e = (sxx * sr - sx * sxr) / det;
    const double r2 = e + c * c;
    if (!(r2 > 0.0)) throw GeometryError("kappa_at_origin: fit failed");
    return 1.0 / std::sqrt(r2);
}

struct AlphaReport {
    bool is_alpha_domain = false;
    double alpha = 0.0;
    std::optional<double> witness_rho;
    std::optional<int> witness_crossings;
};

namespace detail {

struct LevelCrossings {
    int count = 0;
    double min_slope = std::numeric_limits<double>::infinity();
};

inline LevelCrossings level_crossings(const Profile& p, double rho)
{
    LevelCrossings lc;
    for (std::size_t i = 0; i + 1 < p.x.size(); ++i) {
        const double d0 = p.u[i] - rho;
        const double d1 = p.u[i + 1] - rho;
        // half-open at the left node so a crossing through a node counts once
        if ((d0 < 0.0 && d1 >= 0.0) || (d0 >= 0.0 && d1 < 0.0)) {
            ++lc.count;
            const double slope = std::abs((p.u[i + 1] - p.u[i]) / (p.x[i + 1] - p.x[i]));
            lc.min_slope = std::min(lc.min_slope, slope);
        }
    }
    return lc;
}

}  // namespace detail

/// Every level u = rho with 0 < rho <= alpha must be met transversally exactly twice.
/// Levels are tested between consecutive distinct sample heights, so the result is
/// exact for the piecewise-linear profile and monotone in alpha.
inline AlphaReport check_alpha_domain(const Profile& p, double alpha, double slope_tol = 1e-6)
{
    AlphaReport rep;
    rep.alpha = alpha;
    if (!(alpha > 0.0)) throw GeometryError("check_alpha_domain: alpha must be positive");
    std::vector<double> levels;
    for (double v : p.u)
        if (v > 0.0 && v < alpha) levels.push_back(v);
    levels.push_back(0.0);
    levels.push_back(alpha);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    std::vector<double> probes;
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) probes.push_back(0.5 * (levels[i] + levels[i + 1]));
    probes.push_back(alpha);
    for (double rho : probes) {
        const auto lc = detail::level_crossings(p, rho);
        if (lc.count != 2 || lc.min_slope < slope_tol) {
            rep.is_alpha_domain = false;
            rep.witness_rho = rho;
            rep.witness_crossings = lc.count;
            return rep;
        }
    }
    rep.is_alpha_domain = true;
    return rep;
}

// ---------------------------------------------------------- initial curves

struct CurveFamily {
    enum class Kind { semicircle, dumbbell, circle, arc, samples };
    Kind kind = Kind::semicircle;
    double b0 = 1.0;
    double base = 0.5;
    double amp = 0.0;
    double freq = 0.0;
    double center = 0.0;  // circle, arc
    double radius = 1.0;  // circle, arc
    double angle = std::numbers::pi / 4.0;  // arc: contact angle with the axis
    std::string file;     // samples
    std::size_t n = 2001;
};

inline Profile read_profile_csv(const std::string& path);

namespace detail {

inline std::vector<double> cosine_nodes(double a, double b, std::size_t n)
{
    std::vector<double> x(n);
    for (std::size_t k = 0; k < n; ++k)
        x[k] = a + 0.5 * (b - a) * (1.0 - std::cos(std::numbers::pi * double(k) / double(n - 1)));
    x.front() = a;
    x.back() = b;
    return x;
}

}  // namespace detail

/// Samples the named family on cosine-spaced nodes (dense near both contacts).
inline Profile make_initial_curve(const CurveFamily& f)
{
    using K = CurveFamily::Kind;
    if (f.kind == K::samples) {
        Profile p = read_profile_csv(f.file);
        validate_profile(p);
        return p;
    }
    if (f.n < 5) throw GeometryError("make_initial_curve: need at least 5 samples");
    Profile p;
    double a = 0.0;
    double b = f.b0;
    if (f.kind == K::circle) {
        if (!(f.radius > 0.0)) throw GeometryError("circle radius must be positive");
        a = f.center - f.radius;
        b = f.center + f.radius;
    }
    else if (f.kind == K::arc) {
        if (!(f.radius > 0.0)) throw GeometryError("arc radius must be positive");
        if (!(f.angle > 0.0 && f.angle < std::numbers::pi / 2.0)) throw GeometryError("arc angle must lie in (0, pi/2)");
        a = f.center - f.radius * std::sin(f.angle);
        b = f.center + f.radius * std::sin(f.angle);
    }
    else if (!(f.b0 > 0.0))
        throw GeometryError("b0 must be positive");
    p.a = a;
    p.b = b;
    p.x = detail::cosine_nodes(a, b, f.n);
    p.u.resize(f.n);
    for (std::size_t i = 0; i < f.n; ++i) {
        const double x = p.x[i];
        if (f.kind == K::arc) {
            // circle of radius R centred R cos(angle) below the axis
            const double d = x - f.center;
            p.u[i] = std::max(0.0, std::sqrt(std::max(0.0, f.radius * f.radius - d * d)) - f.radius * std::cos(f.angle));
            continue;
        }
        const double s = std::sqrt(std::max(0.0, (x - a) * (b - x)));
        double g = 1.0;
        if (f.kind == K::dumbbell) g = f.base + f.amp * std::cos(f.freq * std::numbers::pi * x / f.b0);
        p.u[i] = s * g;
    }
    p.u.front() = 0.0;
    p.u.back() = 0.0;
    if (f.kind == K::dumbbell) {
        // the modulation factor must stay positive on the open interval
        const std::size_t m = 20000;
        for (std::size_t i = 1; i < m; ++i) {
            const double x = f.b0 * double(i) / double(m);
            if (f.base + f.amp * std::cos(f.freq * std::numbers::pi * x / f.b0) <= 0.0)
                throw GeometryError("dumbbell: u0 <= 0 in the interior");
        }
    }
    for (std::size_t i = 1; i + 1 < f.n; ++i)
        if (!(p.u[i] > 0.0)) throw GeometryError("initial curve: u0 <= 0 in the interior");
    p.left = Contact{};
    p.right = Contact{};
    if (f.kind == K::arc) p.left = p.right = Contact{ContactKind::angle, f.angle};
    return p;
}

}  // namespace curveflow

#include "csv_io.hpp"
