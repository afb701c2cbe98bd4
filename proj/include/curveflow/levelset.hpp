#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "csv_io.hpp"
#include "geometry.hpp"
#include "trace.hpp"

namespace curveflow::levelset {

class LevelSetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CflError : public LevelSetError {
public:
    using LevelSetError::LevelSetError;
};

class ReinitError : public LevelSetError {
public:
    using LevelSetError::LevelSetError;
};

/// Node-centred uniform grid; nodes at x_min + i*dx, i < nx.
struct GridSpec {
    double x_min = -1.0;
    double x_max = 1.0;
    double y_min = -1.0;
    double y_max = 1.0;
    int nx = 256;
    int ny = 256;

    [[nodiscard]] double dx() const { return (x_max - x_min) / double(nx - 1); }
    [[nodiscard]] double dy() const { return (y_max - y_min) / double(ny - 1); }
    [[nodiscard]] double x(int i) const { return x_min + double(i) * dx(); }
    [[nodiscard]] double y(int j) const { return y_min + double(j) * dy(); }
};

inline void validate_grid(const GridSpec& g)
{
    if (g.nx < 4 || g.ny < 4) throw LevelSetError("grid: need at least 4 nodes per axis");
    if (!(g.x_max > g.x_min) || !(g.y_max > g.y_min)) throw LevelSetError("grid: empty extent");
    if (std::abs(g.dx() - g.dy()) > 1e-9 * g.dx()) throw LevelSetError("grid: dx must equal dy");
}

/// Square grid centred on `c` with half-width `half`.
inline GridSpec square_grid(double cx, double cy, double half, int n)
{
    return GridSpec{cx - half, cx + half, cy - half, cy + half, n, n};
}

struct ScalarField2D {
    GridSpec grid;
    std::vector<double> values;  // index j * nx + i
    double time = 0.0;
    double clamp_scale = 1.0;

    [[nodiscard]] double operator()(int i, int j) const { return values[std::size_t(j) * grid.nx + i]; }
    double& operator()(int i, int j) { return values[std::size_t(j) * grid.nx + i]; }
};

inline void clamp_field(ScalarField2D& f)
{
    const double c = f.clamp_scale;
    for (double& v : f.values) v = std::clamp(v, -c, c);
}

/// Signed distance to the union of closed curves, positive inside, clamped.
inline ScalarField2D signed_distance_init(const std::vector<PolyCurve>& curves, const GridSpec& grid)
{
    validate_grid(grid);
    if (curves.empty()) throw LevelSetError("signed_distance_init: no curve");
    for (const auto& c : curves) {
        if (c.points.size() < 3) throw LevelSetError("signed_distance_init: degenerate curve");
        const auto bb = bounding_box(c);
        if (bb.x_min <= grid.x_min || bb.x_max >= grid.x_max || bb.y_min <= grid.y_min || bb.y_max >= grid.y_max)
            throw LevelSetError("signed_distance_init: curve leaves the grid");
    }
    ScalarField2D f;
    f.grid = grid;
    f.values.assign(std::size_t(grid.nx) * grid.ny, 0.0);
    const SegmentIndex index(curves);
    std::vector<double> xs;
    for (int j = 0; j < grid.ny; ++j) {
        const double y = grid.y(j);
        // parity per curve along the row, union over curves
        std::vector<char> inside(std::size_t(grid.nx), 0);
        for (const auto& c : curves) {
            xs.clear();
            const std::size_t n = c.points.size();
            for (std::size_t k = 0, l = n - 1; k < n; l = k++) {
                const Point2 a = c.points[k];
                const Point2 b = c.points[l];
                if ((a.y > y) != (b.y > y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
            std::sort(xs.begin(), xs.end());
            std::size_t q = 0;
            bool in = false;
            for (int i = 0; i < grid.nx; ++i) {
                const double x = grid.x(i);
                while (q < xs.size() && xs[q] <= x) {
                    in = !in;
                    ++q;
                }
                if (in) inside[std::size_t(i)] = 1;
            }
        }
        for (int i = 0; i < grid.nx; ++i) {
            const double d = index.distance({grid.x(i), y});
            f(i, j) = inside[std::size_t(i)] ? d : -d;
        }
    }
    clamp_field(f);
    return f;
}

inline ScalarField2D signed_distance_init(const PolyCurve& curve, const GridSpec& grid)
{
    return signed_distance_init(std::vector<PolyCurve>{curve}, grid);
}

// ----------------------------------------------------------------- stepping

inline constexpr double kGradReg = 1e-8;

/// Largest explicit step: parabolic limit and advective limit with the largest
/// resolvable curvature 1/dx.
inline double max_stable_dt(const GridSpec& g, double A)
{
    const double dx = g.dx();
    return std::min(dx * dx / 4.0, dx / (std::abs(A) + 1.0 / dx));
}

inline double default_dt(const GridSpec& g, double A) { return 0.4 * max_stable_dt(g, A); }

namespace detail {

inline double godunov_sq(double dm, double dp, bool outward)
{
    if (outward) {
        const double a = dm < 0.0 ? dm : 0.0;
        const double b = dp > 0.0 ? dp : 0.0;
        return std::max(a * a, b * b);
    }
    const double a = dm > 0.0 ? dm : 0.0;
    const double b = dp < 0.0 ? dp : 0.0;
    return std::max(a * a, b * b);
}

/// Updates interior columns 1..nx-2 of one row; plain loops so the compiler can vectorize.
inline void row_update(const double* __restrict rm, const double* __restrict r0, const double* __restrict rp,
                       double* __restrict out, int nx, double dx, double A, double dt)
{
    const double inv2dx = 1.0 / (2.0 * dx);
    const double invdx = 1.0 / dx;
    const double invdx2 = 1.0 / (dx * dx);
    const double reg2 = kGradReg * kGradReg;
    for (int i = 1; i + 1 < nx; ++i) {
        const double c = r0[i];
        const double px = (r0[i + 1] - r0[i - 1]) * inv2dx;
        const double py = (rp[i] - rm[i]) * inv2dx;
        const double pxx = (r0[i + 1] - 2.0 * c + r0[i - 1]) * invdx2;
        const double pyy = (rp[i] - 2.0 * c + rm[i]) * invdx2;
        const double pxy = (rp[i + 1] - rp[i - 1] - rm[i + 1] + rm[i - 1]) * (0.25 * invdx2);
        out[i] = c + dt * (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (px * px + py * py + reg2);
    }
    if (A == 0.0) return;
    if (A > 0.0) {
        for (int i = 1; i + 1 < nx; ++i) {
            const double c = r0[i];
            const double dmx = std::min((c - r0[i - 1]) * invdx, 0.0);
            const double dpx = std::max((r0[i + 1] - c) * invdx, 0.0);
            const double dmy = std::min((c - rm[i]) * invdx, 0.0);
            const double dpy = std::max((rp[i] - c) * invdx, 0.0);
            out[i] += dt * A * std::sqrt(std::max(dmx * dmx, dpx * dpx) + std::max(dmy * dmy, dpy * dpy));
        }
    }
    else {
        for (int i = 1; i + 1 < nx; ++i) {
            const double c = r0[i];
            const double dmx = std::max((c - r0[i - 1]) * invdx, 0.0);
            const double dpx = std::min((r0[i + 1] - c) * invdx, 0.0);
            const double dmy = std::max((c - rm[i]) * invdx, 0.0);
            const double dpy = std::min((rp[i] - c) * invdx, 0.0);
            out[i] += dt * A * std::sqrt(std::max(dmx * dmx, dpx * dpx) + std::max(dmy * dmy, dpy * dpy));
        }
    }
}

/// Rate at one node with clamped (zero-gradient) neighbours.
inline double node_rate(const ScalarField2D& f, int i, int j, double A)
{
    const GridSpec& g = f.grid;
    auto at = [&](int ii, int jj) { return f(std::clamp(ii, 0, g.nx - 1), std::clamp(jj, 0, g.ny - 1)); };
    const double dx = g.dx();
    const double c = at(i, j);
    const double px = (at(i + 1, j) - at(i - 1, j)) / (2.0 * dx);
    const double py = (at(i, j + 1) - at(i, j - 1)) / (2.0 * dx);
    const double pxx = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (dx * dx);
    const double pyy = (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (dx * dx);
    const double pxy = (at(i + 1, j + 1) - at(i - 1, j + 1) - at(i + 1, j - 1) + at(i - 1, j - 1)) / (4.0 * dx * dx);
    double rate = (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (px * px + py * py + kGradReg * kGradReg);
    if (A != 0.0) {
        const double gx2 = godunov_sq((c - at(i - 1, j)) / dx, (at(i + 1, j) - c) / dx, A > 0.0);
        const double gy2 = godunov_sq((c - at(i, j - 1)) / dx, (at(i, j + 1) - c) / dx, A > 0.0);
        rate += A * std::sqrt(gx2 + gy2);
    }
    return rate;
}

/// Writes the stepped field into `out` and returns its maximum.
inline double step_into(const ScalarField2D& f, ScalarField2D& out, double A, double dt)
{
    const GridSpec& g = f.grid;
    const int nx = g.nx;
    const int ny = g.ny;
    const double dx = g.dx();
    out.grid = g;
    out.clamp_scale = f.clamp_scale;
    out.values.resize(f.values.size());
    const double* v = f.values.data();
    double* w = out.values.data();
    for (int j = 0; j < ny; ++j) {
        const double* r0 = v + std::size_t(j) * nx;
        double* wo = w + std::size_t(j) * nx;
        if (j == 0 || j + 1 == ny) {
            for (int i = 0; i < nx; ++i) wo[i] = r0[i] + dt * node_rate(f, i, j, A);
            continue;
        }
        row_update(r0 - nx, r0, r0 + nx, wo, nx, dx, A, dt);
        wo[0] = r0[0] + dt * node_rate(f, 0, j, A);
        wo[nx - 1] = r0[nx - 1] + dt * node_rate(f, nx - 1, j, A);
    }
    out.time = f.time + dt;
    double vmax = w[0];
    for (std::size_t k = 1; k < out.values.size(); ++k) vmax = w[k] > vmax ? w[k] : vmax;
    return vmax;
}

}  // namespace detail

/// Explicit Euler step of phi_t = |grad phi| div(grad phi/|grad phi|) + A |grad phi|.
/// Curvature term by central differences, A-term by Godunov upwinding; grid edges
/// use zero-gradient ghosts.
inline ScalarField2D step(const ScalarField2D& f, double A, double dt)
{
    if (dt > max_stable_dt(f.grid, A) * (1.0 + 1e-9)) throw CflError("levelset step: dt exceeds the stability bound");
    ScalarField2D out;
    detail::step_into(f, out, A, dt);
    return out;
}

// --------------------------------------------------------- reinitialization

namespace detail {

/// Largest movement of the interpolated zero crossings on grid edges that change
/// sign in `before`.
inline double contour_displacement(const ScalarField2D& before, const ScalarField2D& after)
{
    const GridSpec& g = before.grid;
    const double dx = g.dx();
    double worst = 0.0;
    auto edge = [&](double a0, double b0, double a1, double b1) {
        if ((a0 > 0.0) == (b0 > 0.0)) return;
        const double s0 = a0 / (a0 - b0);
        double d;
        if ((a1 > 0.0) != (b1 > 0.0)) {
            d = std::abs(a1 / (a1 - b1) - s0);
        }
        else {
            // crossing left the edge through the end whose sign flipped
            d = (a1 > 0.0) == (a0 > 0.0) ? 1.0 - s0 : s0;
        }
        worst = std::max(worst, d * dx);
    };
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            if (i + 1 < g.nx) edge(before(i, j), before(i + 1, j), after(i, j), after(i + 1, j));
            if (j + 1 < g.ny) edge(before(i, j), before(i, j + 1), after(i, j), after(i, j + 1));
        }
    return worst;
}

}  // namespace detail

enum class InterfaceNodes { subcell_fix, frozen };

/// Relaxes toward |grad phi| = 1. Nodes next to the zero set either relax to a
/// subcell distance estimate or stay frozen (which cannot move the contour).
/// Throws ReinitError when the zero contour moves by 0.1 dx or more.
inline ScalarField2D reinitialize(const ScalarField2D& f, int iterations, double max_shift_cells = 0.1,
                                  InterfaceNodes mode = InterfaceNodes::subcell_fix)
{
    const GridSpec& g = f.grid;
    const int nx = g.nx;
    const int ny = g.ny;
    const double dx = g.dx();
    const double dtau = 0.5 * dx;
    const ScalarField2D& phi0 = f;
    auto at0 = [&](int i, int j) { return phi0(std::clamp(i, 0, nx - 1), std::clamp(j, 0, ny - 1)); };
    // interface nodes and their distance estimates
    std::vector<char> near(std::size_t(nx) * ny, 0);
    std::vector<double> D(std::size_t(nx) * ny, 0.0);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double c = at0(i, j);
            const double l = at0(i - 1, j), r = at0(i + 1, j), d = at0(i, j - 1), u = at0(i, j + 1);
            const bool pos = c > 0.0;
            if ((l > 0.0) != pos || (r > 0.0) != pos || (d > 0.0) != pos || (u > 0.0) != pos) {
                const double gx = 0.5 * (r - l);
                const double gy = 0.5 * (u - d);
                double dphi = std::sqrt(gx * gx + gy * gy);
                dphi = std::max({dphi, std::abs(r - c), std::abs(c - l), std::abs(u - c), std::abs(c - d), 1e-12});
                near[std::size_t(j) * nx + i] = 1;
                D[std::size_t(j) * nx + i] = dx * c / dphi;
            }
        }
    ScalarField2D cur = f;
    ScalarField2D nxt = f;
    for (int it = 0; it < iterations; ++it) {
        const double* cv = cur.values.data();
        for (int j = 0; j < ny; ++j) {
            const double* rm = cv + std::size_t(j > 0 ? j - 1 : 0) * nx;
            const double* r0 = cv + std::size_t(j) * nx;
            const double* rp = cv + std::size_t(j + 1 < ny ? j + 1 : ny - 1) * nx;
            for (int i = 0; i < nx; ++i) {
                const std::size_t k = std::size_t(j) * nx + i;
                const double s0 = phi0.values[k];
                const double c = r0[i];
                const double sgn = s0 > 0.0 ? 1.0 : (s0 < 0.0 ? -1.0 : 0.0);
                if (near[k]) {
                    nxt.values[k] = mode == InterfaceNodes::frozen ? c : c - (dtau / dx) * (sgn * std::abs(c) - D[k]);
                    continue;
                }
                const int im = i > 0 ? i - 1 : 0;
                const int ip = i + 1 < nx ? i + 1 : nx - 1;
                // information flows away from the zero set: phi > 0 takes the inward stencil
                const double gx2 = detail::godunov_sq((c - r0[im]) / dx, (r0[ip] - c) / dx, s0 < 0.0);
                const double gy2 = detail::godunov_sq((c - rm[i]) / dx, (rp[i] - c) / dx, s0 < 0.0);
                nxt.values[k] = c - dtau * sgn * (std::sqrt(gx2 + gy2) - 1.0);
            }
        }
        std::swap(cur.values, nxt.values);
        clamp_field(cur);
    }
    const double shift = detail::contour_displacement(f, cur);
    if (shift >= max_shift_cells * dx)
        throw ReinitError("reinitialize: zero contour moved by " + std::to_string(shift / dx) + " cells");
    return cur;
}

// ----------------------------------------------------------------- contours

/// Marching squares on {phi > 0}; saddles resolved by the cell-centre average.
/// Closed contours are oriented with {phi > 0} on the left and sorted by |area|,
/// largest first; open contours (touching the grid edge) follow.
inline std::vector<PolyCurve> extract_zero_contour(const ScalarField2D& f)
{
    const GridSpec& g = f.grid;
    const int nx = g.nx;
    const int ny = g.ny;
    // edge ids: horizontal edge (i,j)-(i+1,j) -> 2*(j*nx+i); vertical (i,j)-(i,j+1) -> 2*(j*nx+i)+1
    auto hid = [&](int i, int j) { return 2 * (std::int64_t(j) * nx + i); };
    auto vid = [&](int i, int j) { return 2 * (std::int64_t(j) * nx + i) + 1; };
    auto edge_point = [&](std::int64_t id) {
        const std::int64_t node = id / 2;
        const int i = int(node % nx);
        const int j = int(node / nx);
        const double a = f(i, j);
        if (id % 2 == 0) {
            const double b = f(i + 1, j);
            const double s = a / (a - b);
            return Point2{g.x(i) + s * g.dx(), g.y(j)};
        }
        const double b = f(i, j + 1);
        const double s = a / (a - b);
        return Point2{g.x(i), g.y(j) + s * g.dy()};
    };
    std::map<std::int64_t, std::int64_t> next;  // directed segment: from edge -> to edge
    std::vector<std::int64_t> order;
    for (int j = 0; j + 1 < ny; ++j)
        for (int i = 0; i + 1 < nx; ++i) {
            const double v00 = f(i, j), v10 = f(i + 1, j), v11 = f(i + 1, j + 1), v01 = f(i, j + 1);
            const int code = (v00 > 0.0 ? 1 : 0) | (v10 > 0.0 ? 2 : 0) | (v11 > 0.0 ? 4 : 0) | (v01 > 0.0 ? 8 : 0);
            if (code == 0 || code == 15) continue;
            const std::int64_t eb = hid(i, j), er = vid(i + 1, j), et = hid(i, j + 1), el = vid(i, j);
            // segments directed so the positive side is on the left (walking CCW around positive regions)
            auto add = [&](std::int64_t from, std::int64_t to) {
                next[from] = to;
                order.push_back(from);
            };
            const double centre = 0.25 * (v00 + v10 + v11 + v01);
            switch (code) {
            case 1: add(eb, el); break;
            case 2: add(er, eb); break;
            case 3: add(er, el); break;
            case 4: add(et, er); break;
            case 5:
                if (centre > 0.0) { add(eb, er); add(et, el); }
                else { add(eb, el); add(et, er); }
                break;
            case 6: add(et, eb); break;
            case 7: add(et, el); break;
            case 8: add(el, et); break;
            case 9: add(eb, et); break;
            case 10:
                if (centre > 0.0) { add(el, eb); add(er, et); }
                else { add(er, eb); add(el, et); }
                break;
            case 11: add(er, et); break;
            case 12: add(el, er); break;
            case 13: add(eb, er); break;
            case 14: add(el, eb); break;
            default: break;
            }
        }
    std::map<std::int64_t, std::int64_t> prev;
    for (const auto& [a, b] : next) prev[b] = a;
    std::map<std::int64_t, bool> used;
    std::vector<PolyCurve> closed_curves;
    std::vector<PolyCurve> open_curves;
    auto finish = [&](std::vector<std::int64_t>& ids, bool closed) {
        PolyCurve c;
        for (auto id : ids) {
            const Point2 p = edge_point(id);
            if (c.points.empty() || dist(c.points.back(), p) > 1e-12 * g.dx()) c.points.push_back(p);
        }
        if (closed)
            while (c.points.size() > 1 && dist(c.points.back(), c.points.front()) <= 1e-12 * g.dx()) c.points.pop_back();
        c.closed = closed;
        if (closed) {
            if (c.points.size() < 3) return;
            c.orientation = signed_area(c.points) >= 0.0 ? Orientation::ccw : Orientation::cw;
            closed_curves.push_back(std::move(c));
        }
        else if (c.points.size() >= 2) {
            open_curves.push_back(std::move(c));
        }
    };
    for (auto start : order) {
        if (used[start]) continue;
        // walk back to the start of an open chain, if any
        std::int64_t s = start;
        bool is_closed = false;
        while (true) {
            auto it = prev.find(s);
            if (it == prev.end()) break;
            s = it->second;
            if (s == start) {
                is_closed = true;
                break;
            }
        }
        std::vector<std::int64_t> ids;
        std::int64_t e = s;
        while (true) {
            ids.push_back(e);
            used[e] = true;
            auto it = next.find(e);
            if (it == next.end()) break;
            e = it->second;
            if (e == s) break;
        }
        finish(ids, is_closed);
    }
    std::stable_sort(closed_curves.begin(), closed_curves.end(), [](const PolyCurve& l, const PolyCurve& r) {
        return std::abs(signed_area(l)) > std::abs(signed_area(r));
    });
    std::stable_sort(open_curves.begin(), open_curves.end(),
                     [](const PolyCurve& l, const PolyCurve& r) { return curve_length(l) > curve_length(r); });
    for (auto& c : open_curves) closed_curves.push_back(std::move(c));
    return closed_curves;
}

// ----------------------------------------------------------------- evolution

struct EvolveOptions {
    double dt = 0.0;             // 0: default_dt
    int reinit_every = 25;
    int reinit_iterations = 5;
    double frame_dt = 0.0;       // > 0: frames at multiples of frame_dt
    std::size_t frame_stride = 0;  // used when frame_dt == 0; 0 means about 100 frames
    bool keep_fields = false;
};

struct EvolveResult {
    EvolutionTrace trace;
    ScalarField2D final_field;
    std::vector<ScalarField2D> fields;  // per frame when keep_fields
};

inline double max_value(const ScalarField2D& f) { return *std::max_element(f.values.begin(), f.values.end()); }

/// Steps to t_end with periodic reinitialization; stops when {phi > 0} empties.
inline EvolveResult evolve(const ScalarField2D& initial, double A, double t_end, const EvolveOptions& opt = {})
{
    validate_grid(initial.grid);
    EvolveResult res;
    auto& tr = res.trace;
    tr.solver = "levelset";
    tr.A = A;
    tr.resolution = initial.grid.dx();
    const double dt_nom = opt.dt > 0.0 ? opt.dt : default_dt(initial.grid, A);
    ScalarField2D f = initial;
    auto record = [&](const ScalarField2D& fld) {
        Frame fr;
        fr.t = fld.time;
        fr.curves = extract_zero_contour(fld);
        fill_diagnostics(fr, tr.resolution);
        tr.frames.push_back(std::move(fr));
        if (opt.keep_fields) res.fields.push_back(fld);
    };
    record(f);
    const std::size_t stride =
        opt.frame_stride ? opt.frame_stride : std::max<std::size_t>(1, std::size_t(t_end / dt_nom / 100.0));
    std::size_t next_frame = 1;
    std::size_t steps = 0;
    std::size_t since = 0;
    const double t0 = f.time;
    ScalarField2D g;
    double before_max = max_value(f);
    std::size_t fallbacks = 0;
    while (f.time < t0 + t_end) {
        double dt = std::min(dt_nom, t0 + t_end - f.time);
        if (opt.frame_dt > 0.0) {
            const double target = t0 + std::min(t_end, double(next_frame) * opt.frame_dt);
            if (f.time + dt * (1.0 + 1e-9) >= target) dt = target - f.time;
        }
        if (dt > max_stable_dt(f.grid, A) * (1.0 + 1e-9)) throw CflError("levelset evolve: dt exceeds the stability bound");
        double after_max = detail::step_into(f, g, A, dt);
        ++steps;
        ++since;
        if (opt.reinit_every > 0 && steps % std::size_t(opt.reinit_every) == 0) {
            try {
                g = reinitialize(g, opt.reinit_iterations);
            }
            catch (const ReinitError&) {
                // close interfaces (merging, pinching) defeat the subcell estimate
                g = reinitialize(g, opt.reinit_iterations, 0.1, InterfaceNodes::frozen);
                ++fallbacks;
            }
            after_max = max_value(g);
        }
        if (after_max <= 0.0) {
            // linear interpolation of max phi in time for the vanishing instant
            const double frac = before_max > 0.0 ? before_max / (before_max - after_max) : 0.0;
            tr.extinction_time = f.time + frac * dt;
            std::swap(f, g);
            Frame fr;
            fr.t = f.time;
            fr.a = fr.b = fr.h = 0.0;
            tr.frames.push_back(fr);
            if (opt.keep_fields) res.fields.push_back(f);
            tr.events.events.push_back({*tr.extinction_time, EventKind::extinction, {{"h", 0.0}, {"width", 0.0}}});
            break;
        }
        before_max = after_max;
        std::swap(f, g);
        bool due;
        if (opt.frame_dt > 0.0) {
            const double target = t0 + std::min(t_end, double(next_frame) * opt.frame_dt);
            due = f.time >= target - 1e-14 * std::max(1.0, target);
            if (due) ++next_frame;
        }
        else {
            due = since >= stride;
        }
        if (due || f.time >= t0 + t_end) {
            since = 0;
            record(f);
        }
    }
    tr.notes["reinit_fallbacks"] = fallbacks;
    tr.notes["steps"] = steps;
    res.final_field = std::move(f);
    return res;
}

// ----------------------------------------------------------------- dump format

inline void write_field_csv(const std::string& path, const ScalarField2D& f)
{
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "i,j,phi\n";
    for (int j = 0; j < f.grid.ny; ++j)
        for (int i = 0; i < f.grid.nx; ++i) out << i << ',' << j << ',' << format_double(f(i, j)) << '\n';
}

/// Reads a dump written by write_field_csv onto the given grid.
inline ScalarField2D read_field_csv(const std::string& path, const GridSpec& grid)
{
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "i,j,phi") throw FormatError(path + ": expected header 'i,j,phi'");
    ScalarField2D f;
    f.grid = grid;
    f.values.assign(std::size_t(grid.nx) * grid.ny, 0.0);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) throw FormatError(path + ": malformed row");
        const int i = int(parse_double(std::string_view(line).substr(0, c1)));
        const int j = int(parse_double(std::string_view(line).substr(c1 + 1, c2 - c1 - 1)));
        if (i < 0 || j < 0 || i >= grid.nx || j >= grid.ny) throw FormatError(path + ": index out of range");
        f(i, j) = parse_double(std::string_view(line).substr(c2 + 1));
    }
    return f;
}

// -------------------------------------------------------------- fattening

enum class BracketVerdict { fattening, regular, inconclusive };

inline const char* to_string(BracketVerdict v)
{
    switch (v) {
    case BracketVerdict::fattening: return "fattening";
    case BracketVerdict::regular: return "regular";
    case BracketVerdict::inconclusive: return "inconclusive";
    }
    return "unknown";
}

struct FatteningBracket {
    std::vector<double> epsilons;
    std::vector<double> gaps;
    double limit = 0.0;  // gap extrapolated to eps = 0
    double dx = 0.0;
    BracketVerdict verdict = BracketVerdict::inconclusive;
};

struct BracketOptions {
    EvolveOptions evolve;
    double fattening_cells = 4.0;  // limit above this many dx: fattening
    double regular_cells = 2.0;    // limit below this many dx: regular
};

/// Largest distance from a node of {phi > 0} to the zero contour.
inline double inradius(const ScalarField2D& f, const std::vector<PolyCurve>& contours)
{
    double r = 0.0;
    for (int j = 0; j < f.grid.ny; ++j)
        for (int i = 0; i < f.grid.nx; ++i) {
            if (!(f(i, j) > 0.0) || f(i, j) < 0.8 * r) continue;  // phi is near a distance after reinit
            const Point2 p{f.grid.x(i), f.grid.y(j)};
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : contours) d = std::min(d, point_curve_distance(p, c));
            r = std::max(r, d);
        }
    return r;
}

/// Evolves the eps-dilated and eps-eroded initial sets to time t and extrapolates
/// the Hausdorff gap between their zero sets linearly to eps = 0.
inline FatteningBracket fattening_bracket(const ScalarField2D& initial, double A, double t,
                                          const std::vector<double>& epsilons, const BracketOptions& opt = {})
{
    const double dx = initial.grid.dx();
    if (epsilons.size() < 2) throw LevelSetError("fattening_bracket: need at least two epsilons");
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
        if (!(epsilons[k] > 2.0 * dx)) throw LevelSetError("fattening_bracket: every epsilon must exceed 2 dx");
        if (k > 0 && !(epsilons[k] < epsilons[k - 1]))
            throw LevelSetError("fattening_bracket: epsilons must be strictly decreasing");
    }
    FatteningBracket fb;
    fb.epsilons = epsilons;
    fb.dx = dx;
    EvolveOptions eo = opt.evolve;
    eo.frame_dt = 0.0;
    eo.frame_stride = std::numeric_limits<std::size_t>::max();
    for (double eps : epsilons) {
        ScalarField2D outer = initial;
        ScalarField2D inner = initial;
        for (double& v : outer.values) v += eps;
        for (double& v : inner.values) v -= eps;
        clamp_field(outer);
        clamp_field(inner);
        const auto ro = evolve(outer, A, t, eo);
        const auto ri = evolve(inner, A, t, eo);
        const auto co = extract_zero_contour(ro.final_field);
        const auto ci = extract_zero_contour(ri.final_field);
        double gap;
        if (co.empty()) gap = 0.0;
        else if (ci.empty() || ri.trace.extinction_time) gap = inradius(ro.final_field, co);
        else gap = hausdorff_distance(co, ci);
        fb.gaps.push_back(gap);
    }
    // least-squares line gap = c0 + c1 * eps
    double se = 0, sg = 0, see = 0, seg = 0;
    const double n = double(epsilons.size());
    for (std::size_t k = 0; k < epsilons.size(); ++k) {
        se += epsilons[k];
        sg += fb.gaps[k];
        see += epsilons[k] * epsilons[k];
        seg += epsilons[k] * fb.gaps[k];
    }
    const double c1 = (n * seg - se * sg) / (n * see - se * se);
    fb.limit = (sg - c1 * se) / n;
    if (fb.limit > opt.fattening_cells * dx) fb.verdict = BracketVerdict::fattening;
    else if (fb.limit < opt.regular_cells * dx) fb.verdict = BracketVerdict::regular;
    else fb.verdict = BracketVerdict::inconclusive;
    return fb;
}

}  // namespace curveflow::levelset
