#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "csv_io.hpp"
#include "geometry.hpp"
#include "graph_flow.hpp"
#include "levelset.hpp"
#include "trace.hpp"
#include "tracker.hpp"

namespace curveflow::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ config text

/// Flat `key = value` lines; `#` starts a comment; keys may be dotted.
struct RawConfig {
    std::map<std::string, std::string> values;
    std::map<std::string, int> lines;  // key -> source line
    std::string path;                  // directory-relative references resolve from here
};

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Parse errors (malformed lines, duplicate keys) are returned, not thrown.
inline RawConfig parse_config_text(const std::string& text, std::vector<std::string>& diagnostics)
{
    RawConfig rc;
    std::stringstream ss(text);
    std::string line;
    int no = 0;
    while (std::getline(ss, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            diagnostics.push_back("line " + std::to_string(no) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) {
            diagnostics.push_back("line " + std::to_string(no) + ": empty key");
            continue;
        }
        if (rc.values.count(key)) diagnostics.push_back("line " + std::to_string(no) + ": duplicate key '" + key + "'");
        rc.values[key] = val;
        rc.lines[key] = no;
    }
    return rc;
}

inline RawConfig load_config_file(const std::string& path, std::vector<std::string>& diagnostics)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RawConfig rc = parse_config_text(ss.str(), diagnostics);
    rc.path = fs::path(path).parent_path().string();
    return rc;
}

/// 64-bit FNV-1a over the sorted key = value lines, output_dir excluded.
inline std::string config_hash(const RawConfig& rc)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : rc.values) {
        if (k == "output_dir") continue;
        feed(k);
        feed("=");
        feed(v);
        feed("\n");
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ----------------------------------------------------------- typed config

enum class Solver { levelset, fronttrack, graph_q, both };

struct ExperimentConfig {
    std::string name;
    std::string hash;
    RawConfig raw;
    CurveFamily initial;
    bool even = false;  // closed-curve solvers start from the even extension
    double A = 0.0;
    Solver solver = Solver::fronttrack;
    std::string tracker_mode = "closed";  // closed | neumann
    levelset::GridSpec grid;
    double spacing = 0.01;
    bool fixed_dt = false;
    double dt = 0.0;
    double cfl = 0.4;
    double t_end = 0.0;
    std::size_t frame_stride = 0;
    double frame_dt = 0.0;
    double theta_minus = 0.0;
    double theta_plus = 0.0;
    std::size_t q_nodes = 201;
    std::vector<std::string> analyses;
    double gradient_delta = 0.1;
    std::string intersection_other;
    std::string intersection_mode = "nonincreasing";
    int random_pairs = 0;
    analysis::FatteningOptions fattening;
    analysis::AStarOptions a_star;
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    std::map<std::string, std::string> expect;
};

namespace detail {

inline const std::vector<std::string>& known_keys()
{
    static const std::vector<std::string> keys{
        "name", "solver", "A", "t_end", "spacing", "dt_policy", "dt", "cfl", "frame_stride", "frame_dt",
        "initial.family", "initial.b0", "initial.base", "initial.amp", "initial.freq", "initial.center",
        "initial.radius", "initial.angle", "initial.file", "initial.samples", "initial.extend", "tracker.mode",
        "grid.n", "grid.half", "grid.cx", "grid.cy", "grid.nx", "grid.ny", "grid.x_min", "grid.x_max", "grid.y_min",
        "grid.y_max", "levelset.reinit_every", "levelset.reinit_iterations", "graph_q.theta_minus",
        "graph_q.theta_plus", "graph_q.nodes", "graph_q.theta_schedule", "analyses", "analysis.gradient_delta",
        "analysis.intersection_other", "analysis.intersection_mode", "analysis.random_pairs", "fattening.t",
        "fattening.grid_n", "fattening.eps_cells", "fattening.spacing", "a_star.spacing", "output_dir", "seed",
        "sweep.A"};
    return keys;
}

inline bool known_key(const std::string& k)
{
    if (k.rfind("expect.", 0) == 0) return true;
    const auto& keys = known_keys();
    return std::find(keys.begin(), keys.end(), k) != keys.end();
}

const std::vector<std::string> kExpectKeys{"expect.outcome",         "expect.extinction_time", "expect.extinction_rtol",
                                           "expect.slope_b_over_t",  "expect.slope_rtol",      "expect.event_before",
                                           "expect.no_event",        "expect.crossval_max_cells", "expect.violations",
                                           "expect.a_star_slope",    "expect.a_star_rtol",     "expect.radius_drift_max",
                                           "expect.max_count"};

/// Typed reads that record a diagnostic instead of throwing.
struct Reader {
    const RawConfig& rc;
    std::vector<std::string>& diag;

    [[nodiscard]] bool has(const std::string& k) const { return rc.values.count(k) > 0; }

    double real(const std::string& k, double def, bool required = false)
    {
        if (!has(k)) {
            if (required) diag.push_back("missing field '" + k + "'");
            return def;
        }
        try {
            const double v = parse_double(rc.values.at(k));
            if (!std::isfinite(v)) throw FormatError("not finite");
            return v;
        }
        catch (const FormatError&) {
            diag.push_back("field '" + k + "': not a number ('" + rc.values.at(k) + "')");
            return def;
        }
    }

    long integer(const std::string& k, long def, bool required = false)
    {
        const double v = real(k, double(def), required);
        if (v != std::floor(v)) {
            diag.push_back("field '" + k + "': expected an integer");
            return def;
        }
        return long(v);
    }

    std::string text(const std::string& k, const std::string& def, bool required = false)
    {
        if (!has(k)) {
            if (required) diag.push_back("missing field '" + k + "'");
            return def;
        }
        return rc.values.at(k);
    }
};

inline std::string solver_name(Solver s)
{
    switch (s) {
    case Solver::levelset: return "levelset";
    case Solver::fronttrack: return "fronttrack";
    case Solver::graph_q: return "graph_q";
    case Solver::both: return "both";
    }
    return "?";
}

}  // namespace detail

struct Loaded {
    ExperimentConfig config;
    std::vector<std::string> diagnostics;
};

/// Builds a typed config and lists every problem found; nothing runs here.
inline Loaded interpret(const RawConfig& rc)
{
    Loaded out;
    auto& c = out.config;
    auto& diag = out.diagnostics;
    detail::Reader r{rc, diag};
    c.raw = rc;
    c.hash = config_hash(rc);
    for (const auto& [k, v] : rc.values)
        if (!detail::known_key(k)) diag.push_back("unknown field '" + k + "'");
    for (const auto& [k, v] : rc.values)
        if (k.rfind("expect.", 0) == 0 &&
            std::find(detail::kExpectKeys.begin(), detail::kExpectKeys.end(), k) == detail::kExpectKeys.end())
            diag.push_back("unknown expectation '" + k + "'");

    c.name = r.text("name", "", true);
    for (char ch : c.name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.'))
            diag.push_back("field 'name': only letters, digits, '_', '-', '.' allowed");
    const std::string solver = r.text("solver", "", true);
    if (solver == "levelset") c.solver = Solver::levelset;
    else if (solver == "fronttrack") c.solver = Solver::fronttrack;
    else if (solver == "graph_q") c.solver = Solver::graph_q;
    else if (solver == "both") c.solver = Solver::both;
    else if (!solver.empty()) diag.push_back("field 'solver': expected levelset, fronttrack, graph_q or both");

    if (r.has("sweep.A")) {
        if (r.has("A")) diag.push_back("fields 'A' and 'sweep.A' are mutually exclusive");
        for (const auto& s : split_list(rc.values.at("sweep.A"))) {
            try {
                if (parse_double(s) < 0.0) diag.push_back("sweep.A: A must be >= 0 (got " + s + ")");
            }
            catch (const FormatError&) {
                diag.push_back("sweep.A: not a number ('" + s + "')");
            }
        }
    }
    else {
        c.A = r.real("A", 0.0, true);
        if (c.A < 0.0) diag.push_back("field 'A': must be >= 0");
    }
    c.t_end = r.real("t_end", 0.0, true);
    if (r.has("t_end") && !(c.t_end > 0.0)) diag.push_back("field 't_end': must be > 0");

    // initial curve
    const std::string fam = r.text("initial.family", "", true);
    using K = CurveFamily::Kind;
    if (fam == "semicircle") c.initial.kind = K::semicircle;
    else if (fam == "dumbbell") c.initial.kind = K::dumbbell;
    else if (fam == "circle") c.initial.kind = K::circle;
    else if (fam == "arc") c.initial.kind = K::arc;
    else if (fam == "samples") c.initial.kind = K::samples;
    else if (!fam.empty()) diag.push_back("field 'initial.family': expected semicircle, dumbbell, circle, arc or samples");
    c.initial.b0 = r.real("initial.b0", 1.0);
    c.initial.base = r.real("initial.base", 0.5, fam == "dumbbell");
    c.initial.amp = r.real("initial.amp", 0.0, fam == "dumbbell");
    c.initial.freq = r.real("initial.freq", 0.0, fam == "dumbbell");
    c.initial.center = r.real("initial.center", 0.0);
    c.initial.radius = r.real("initial.radius", 1.0, fam == "circle" || fam == "arc");
    c.initial.angle = r.real("initial.angle", std::numbers::pi / 4.0);
    c.initial.n = std::size_t(std::max(5L, r.integer("initial.samples", 2001)));
    if (fam == "samples") {
        const std::string f = r.text("initial.file", "", true);
        c.initial.file = f.empty() || fs::path(f).is_absolute() ? f : (fs::path(rc.path) / f).string();
        if (!f.empty() && !fs::exists(c.initial.file)) diag.push_back("field 'initial.file': no such file " + c.initial.file);
    }
    const std::string ext = r.text("initial.extend", "none");
    if (ext == "even") c.even = true;
    else if (ext != "none") diag.push_back("field 'initial.extend': expected even or none");
    if (c.even && c.initial.kind == K::circle && c.initial.center - c.initial.radius != 0.0)
        diag.push_back("field 'initial.extend': even extension needs a profile starting at x = 0");
    if (fam != "samples" && !fam.empty()) {
        try {
            (void)make_initial_curve(c.initial);
        }
        catch (const GeometryError& e) {
            diag.push_back(std::string("initial curve: ") + e.what());
        }
    }

    // discretisation
    const std::string pol = r.text("dt_policy", "cfl");
    if (pol == "fixed") {
        c.fixed_dt = true;
        c.dt = r.real("dt", 0.0, true);
        if (r.has("dt") && !(c.dt > 0.0)) diag.push_back("field 'dt': must be > 0");
    }
    else if (pol != "cfl") diag.push_back("field 'dt_policy': expected cfl or fixed");
    c.cfl = r.real("cfl", 0.4);
    if (!(c.cfl > 0.0 && c.cfl <= 1.0)) diag.push_back("field 'cfl': must lie in (0, 1]");
    c.frame_stride = std::size_t(std::max(0L, r.integer("frame_stride", 0)));
    c.frame_dt = r.real("frame_dt", 0.0);
    if (c.frame_dt < 0.0) diag.push_back("field 'frame_dt': must be >= 0");

    const bool need_tracker = c.solver == Solver::fronttrack || c.solver == Solver::both;
    const bool need_grid = c.solver == Solver::levelset || c.solver == Solver::both;
    c.spacing = r.real("spacing", 0.01, need_tracker);
    if (!(c.spacing > 0.0)) diag.push_back("field 'spacing': must be > 0");
    c.tracker_mode = r.text("tracker.mode", "closed");
    if (c.tracker_mode != "closed" && c.tracker_mode != "neumann")
        diag.push_back("field 'tracker.mode': expected closed or neumann");
    if (c.tracker_mode == "neumann" && c.even)
        diag.push_back("field 'initial.extend': neumann mode mirrors the half profile itself; use extend = none");
    if (need_grid) {
        if (r.has("grid.half")) {
            const double half = r.real("grid.half", 1.0);
            const long n = r.integer("grid.n", 256, true);
            if (!(half > 0.0)) diag.push_back("field 'grid.half': must be > 0");
            if (n < 8) diag.push_back("field 'grid.n': must be >= 8");
            if (half > 0.0 && n >= 8) c.grid = levelset::square_grid(r.real("grid.cx", 0.0), r.real("grid.cy", 0.0), half, int(n));
        }
        else {
            levelset::GridSpec g;
            g.x_min = r.real("grid.x_min", 0.0, true);
            g.x_max = r.real("grid.x_max", 0.0, true);
            g.y_min = r.real("grid.y_min", 0.0, true);
            g.y_max = r.real("grid.y_max", 0.0, true);
            g.nx = int(r.integer("grid.nx", 0, true));
            g.ny = int(r.integer("grid.ny", 0, true));
            c.grid = g;
            if (r.has("grid.x_min") && r.has("grid.x_max") && r.has("grid.y_min") && r.has("grid.y_max") && r.has("grid.nx") &&
                r.has("grid.ny")) {
                try {
                    levelset::validate_grid(g);
                }
                catch (const levelset::LevelSetError& e) {
                    diag.push_back(std::string("grid: ") + e.what());
                }
            }
        }
    }
    if (c.solver == Solver::graph_q) {
        c.theta_minus = r.real("graph_q.theta_minus", 0.0, true);
        c.theta_plus = r.real("graph_q.theta_plus", 0.0, true);
        for (const auto& [k, v] : {std::pair{"graph_q.theta_minus", c.theta_minus}, std::pair{"graph_q.theta_plus", c.theta_plus}})
            if (r.has(k) && !(v > 0.0 && v < std::numbers::pi / 2.0)) diag.push_back(std::string("field '") + k + "': must lie in (0, pi/2)");
        if (r.has("graph_q.theta_schedule"))
            diag.push_back("field 'graph_q.theta_schedule': time-dependent contact angles are not implemented");
        c.q_nodes = std::size_t(std::max(0L, r.integer("graph_q.nodes", 201)));
        if (c.fixed_dt) diag.push_back("field 'dt_policy': graph_q steps on its moving grid and needs cfl");
        if (c.q_nodes < 5) diag.push_back("field 'graph_q.nodes': must be >= 5");
    }

    // analyses
    c.analyses = split_list(r.text("analyses", ""));
    for (const auto& a : c.analyses)
        if (a != "classify" && a != "fattening" && a != "a_star" && a != "intersection_audit" && a != "gradient_audit")
            diag.push_back("analyses: unknown analysis '" + a + "'");
    auto wants = [&](const char* a) { return std::find(c.analyses.begin(), c.analyses.end(), a) != c.analyses.end(); };
    c.gradient_delta = r.real("analysis.gradient_delta", 0.1, wants("gradient_audit"));
    if (!(c.gradient_delta > 0.0)) diag.push_back("field 'analysis.gradient_delta': must be > 0");
    c.intersection_other = r.text("analysis.intersection_other", "");
    c.random_pairs = int(r.integer("analysis.random_pairs", 0));
    if (wants("intersection_audit") && c.intersection_other.empty() && c.random_pairs <= 0)
        diag.push_back("intersection_audit needs 'analysis.intersection_other' or 'analysis.random_pairs'");
    if (!c.intersection_other.empty() && !fs::path(c.intersection_other).is_absolute())
        c.intersection_other = (fs::path(rc.path) / c.intersection_other).string();
    if (!c.intersection_other.empty() && !fs::exists(c.intersection_other))
        diag.push_back("field 'analysis.intersection_other': no such file " + c.intersection_other);
    c.intersection_mode = r.text("analysis.intersection_mode", "nonincreasing");
    if (c.intersection_mode != "nonincreasing" && c.intersection_mode != "vertical_pair")
        diag.push_back("field 'analysis.intersection_mode': expected nonincreasing or vertical_pair");
    if ((wants("fattening") || wants("a_star")) && fam != "samples" && !fam.empty() && c.initial.kind != K::semicircle &&
        c.initial.kind != K::dumbbell)
        diag.push_back("fattening and a_star need a profile on [0, b0] with vertical contacts");
    c.fattening.t = r.real("fattening.t", c.fattening.t);
    c.fattening.grid_n = int(r.integer("fattening.grid_n", c.fattening.grid_n));
    if (r.has("fattening.eps_cells")) {
        c.fattening.eps_cells.clear();
        for (const auto& s : split_list(rc.values.at("fattening.eps_cells"))) {
            try {
                c.fattening.eps_cells.push_back(parse_double(s));
            }
            catch (const FormatError&) {
                diag.push_back("fattening.eps_cells: not a number ('" + s + "')");
            }
        }
    }
    c.a_star.spacing = r.real("a_star.spacing", c.a_star.spacing);
    c.fattening.a_star = c.a_star;
    c.output_dir = r.text("output_dir", "out");
    c.seed = std::uint64_t(std::max(0L, r.integer("seed", 1)));

    for (const auto& [k, v] : rc.values)
        if (k.rfind("expect.", 0) == 0) c.expect[k.substr(7)] = v;
    if (c.expect.count("outcome"))
        for (const auto& o : split_list(c.expect["outcome"]))
            if (!analysis::outcome_from_string(o)) diag.push_back("expect.outcome: unknown outcome '" + o + "'");
    return out;
}

/// Pure check of a config; empty when it can run.
inline std::vector<std::string> validate(const RawConfig& rc) { return interpret(rc).diagnostics; }

/// One raw config per swept value of A; `expect.outcome` lists are split in order.
inline std::vector<RawConfig> expand_sweep(const RawConfig& rc)
{
    if (!rc.values.count("sweep.A")) return {rc};
    const auto vals = split_list(rc.values.at("sweep.A"));
    std::vector<std::string> outcomes;
    if (rc.values.count("expect.outcome")) outcomes = split_list(rc.values.at("expect.outcome"));
    std::vector<RawConfig> out;
    for (std::size_t k = 0; k < vals.size(); ++k) {
        RawConfig sub = rc;
        sub.values.erase("sweep.A");
        sub.values["A"] = vals[k];
        sub.values["name"] = rc.values.count("name") ? rc.values.at("name") + "_A" + vals[k] : "A" + vals[k];
        if (outcomes.size() == vals.size()) sub.values["expect.outcome"] = outcomes[k];
        out.push_back(std::move(sub));
    }
    return out;
}

// ------------------------------------------------------------- comparison

struct CompareReport {
    std::vector<double> times;
    std::vector<double> distances;
    double max = 0.0;
    double trend = 0.0;  // least-squares slope of distance in t
    double window_end = 0.0;
};

inline json to_json(const CompareReport& r)
{
    return json{{"times", r.times}, {"d_H", r.distances}, {"max", r.max}, {"trend", r.trend}, {"window_end", r.window_end}};
}

/// Framewise Hausdorff distance at common frame times, restricted to
/// t < window_frac * (earliest extinction) when either run goes extinct.
inline CompareReport compare_traces(const EvolutionTrace& a, const EvolutionTrace& b, double window_frac = 0.9)
{
    if (a.A != b.A) throw analysis::AnalysisError("compare: runs use different A");
    CompareReport rep;
    double end = INFINITY;
    if (a.extinction_time) end = std::min(end, *a.extinction_time);
    if (b.extinction_time) end = std::min(end, *b.extinction_time);
    rep.window_end = std::isinf(end) ? INFINITY : window_frac * end;
    std::size_t j = 0;
    for (const auto& fa : a.frames) {
        if (!(fa.t < rep.window_end)) break;
        while (j < b.frames.size() && b.frames[j].t < fa.t - 1e-12 * std::max(1.0, fa.t)) ++j;
        if (j == b.frames.size()) break;
        const auto& fb = b.frames[j];
        if (std::abs(fb.t - fa.t) > 1e-12 * std::max(1.0, fa.t)) continue;
        if (fa.curves.empty() || fb.curves.empty()) continue;
        const double d = hausdorff_distance(fa.curves, fb.curves);
        rep.times.push_back(fa.t);
        rep.distances.push_back(d);
        rep.max = std::max(rep.max, d);
    }
    if (rep.times.size() >= 2) rep.trend = analysis::detail::fit_slope(rep.times, rep.distances);
    return rep;
}

// ------------------------------------------------- randomized (Q) audits

struct PairAuditResult {
    int pairs = 0;
    int violations = 0;
    int failed_runs = 0;
    std::vector<int> initial_counts;
    std::vector<json> details;  // offending pairs only
};

/// Random smooth profile on [a, b] with u'(a) = s, u'(b) = -s.
inline Profile random_angle_profile(std::mt19937_64& rng, double a, double b, double s, std::size_t n = 401)
{
    std::uniform_real_distribution<double> coef(-0.25, 0.25);
    const double c1 = coef(rng), c2 = coef(rng), c3 = coef(rng);
    Profile p;
    p.a = a;
    p.b = b;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a + (b - a) * double(i) / double(n - 1);
        const double xi = (x - a) / (b - a);
        const double g = 1.0 + c1 * std::sin(std::numbers::pi * xi) + c2 * std::sin(2.0 * std::numbers::pi * xi) +
                         c3 * std::sin(3.0 * std::numbers::pi * xi);
        // (x - a)(b - x) / (b - a) has slope +-1 at the ends; g(a) = g(b) = 1
        p.x.push_back(x);
        p.u.push_back(s * (x - a) * (b - x) / (b - a) * g);
    }
    p.x.back() = b;
    p.u.front() = 0.0;
    p.u.back() = 0.0;
    p.left = p.right = Contact{ContactKind::angle, std::atan(s)};
    return p;
}

/// Random profile on [a, b] with vertical contacts.
inline Profile random_vertical_profile(std::mt19937_64& rng, double a, double b, std::size_t n = 801)
{
    std::uniform_real_distribution<double> coef(-0.2, 0.2);
    std::uniform_real_distribution<double> base(0.5, 1.0);
    const double c0 = base(rng), c1 = coef(rng), c2 = coef(rng);
    CurveFamily f;
    f.kind = CurveFamily::Kind::semicircle;
    f.b0 = b - a;
    f.n = n;
    Profile p = make_initial_curve(f);
    for (std::size_t i = 0; i < p.x.size(); ++i) {
        const double xi = p.x[i] / f.b0;
        p.u[i] *= c0 + c1 * std::cos(std::numbers::pi * xi) + c2 * std::cos(2.0 * std::numbers::pi * xi);
        p.x[i] += a;
    }
    p.x.front() = a;
    p.x.back() = b;
    p.a = a;
    p.b = b;
    return p;
}

/// Pairs of a (Q) run with angles pi/4 and a vertical-contact tracker run from
/// random initial data; every frame-to-frame increase of the extension-curve
/// intersection number is a violation.
inline PairAuditResult random_pair_audit(std::uint64_t seed, int pairs, double A = 1.0, double t_end = 0.05,
                                         double frame_dt = 0.0025)
{
    PairAuditResult res;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(-0.4, 0.4);
    std::uniform_real_distribution<double> width(0.6, 1.2);
    for (int k = 0; k < pairs; ++k) {
        const double a1 = pos(rng), w1 = width(rng);
        const double a2 = pos(rng), w2 = width(rng);
        const Profile q0 = random_angle_profile(rng, a1, a1 + w1, 1.0);
        const Profile v0 = random_vertical_profile(rng, a2, a2 + w2);
        ++res.pairs;
        try {
            graph::QOptions qo;
            qo.nodes = 161;
            qo.frame_dt = frame_dt;
            const auto tq = graph::solve_Q(q0, std::numbers::pi / 4.0, std::numbers::pi / 4.0, A, t_end, qo);
            tracker::EvolveOptions to;
            to.spacing = 0.02;
            to.frame_dt = frame_dt;
            const auto tv = tracker::evolve_free_halfplane(v0, A, t_end, to);
            const auto rep = analysis::monotonicity_audit(tq, tv, analysis::AuditMode::nonincreasing);
            if (!rep.counts.empty()) res.initial_counts.push_back(rep.counts.front());
            if (!rep.violations.empty()) {
                ++res.violations;
                json d{{"pair", k}, {"counts", rep.counts}, {"times", rep.times}};
                res.details.push_back(d);
            }
        }
        catch (const std::exception& e) {
            ++res.failed_runs;
            res.details.push_back(json{{"pair", k}, {"error", e.what()}});
        }
    }
    return res;
}

// --------------------------------------------------------------- running

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct RunSummary {
    std::string name;
    std::string config_hash;
    std::string out_dir;
    double wall_time = 0.0;
    std::size_t frames_written = 0;
    std::vector<analysis::Verdict> verdicts;
    EventLog events;
    std::vector<Check> checks;
    std::string error;
    json extra = json::object();

    [[nodiscard]] bool ok() const
    {
        return error.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
};

inline json to_json(const RunSummary& s)
{
    json v = json::array();
    for (const auto& x : s.verdicts) v.push_back(analysis::verdict_to_json(x));
    json ev = json::array();
    for (const auto& e : s.events.events) ev.push_back(event_to_json(e));
    json ch = json::array();
    for (const auto& c : s.checks) ch.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    json j{{"name", s.name},       {"config_hash", s.config_hash}, {"wall_time", s.wall_time},
           {"frames_written", s.frames_written}, {"verdicts", v}, {"events", ev},
           {"checks", ch},         {"ok", s.ok()}};
    if (!s.error.empty()) j["error"] = s.error;
    for (const auto& [k, x] : s.extra.items()) j[k] = x;
    return j;
}

/// Output root: CURVEFLOW_OUT when set, else the config's output_dir.
inline fs::path output_root(const ExperimentConfig& c)
{
    if (const char* env = std::getenv("CURVEFLOW_OUT"); env && *env) return fs::path(env);
    return fs::path(c.output_dir);
}

namespace detail {

inline std::size_t write_frames(const fs::path& dir, const EvolutionTrace& tr)
{
    fs::create_directories(dir / "frames");
    std::ofstream idx(dir / "frames" / "index.csv");
    idx << "frame,t,file\n";
    std::size_t files = 0;
    for (std::size_t k = 0; k < tr.frames.size(); ++k) {
        const auto& f = tr.frames[k];
        for (std::size_t j = 0; j < f.curves.size(); ++j) {
            std::ostringstream name;
            name << "frame_" << std::setw(5) << std::setfill('0') << k << "_" << j << ".csv";
            write_polyline_csv((dir / "frames" / name.str()).string(), f.curves[j]);
            idx << k << ',' << format_double(f.t) << ',' << name.str() << '\n';
            ++files;
        }
    }
    return files;
}

inline void write_trace_files(const fs::path& dir, const EvolutionTrace& tr, RunSummary& s)
{
    fs::create_directories(dir);
    write_trace_csv((dir / "trace.csv").string(), tr);
    write_events_jsonl((dir / "events.jsonl").string(), tr.events);
    s.frames_written += write_frames(dir, tr);
}

inline Profile initial_profile(const ExperimentConfig& c) { return make_initial_curve(c.initial); }

inline EvolutionTrace run_tracker(const ExperimentConfig& c)
{
    const Profile p = initial_profile(c);
    tracker::EvolveOptions o;
    o.spacing = c.spacing;
    o.cfl = c.fixed_dt ? 2.0 * c.dt / (c.spacing * c.spacing) : c.cfl;
    o.frame_dt = c.frame_dt;
    o.frame_stride = c.frame_stride;
    o.strict = true;
    if (c.tracker_mode == "neumann") return tracker::evolve_neumann(p, c.A, c.t_end, o);
    return tracker::evolve_free_halfplane(c.even ? even_extend(p) : p, c.A, c.t_end, o);
}

inline EvolutionTrace run_levelset(const ExperimentConfig& c)
{
    const Profile p = initial_profile(c);
    const PolyCurve curve = profile_to_curve(c.even ? even_extend(p) : p);
    const auto phi = levelset::signed_distance_init(curve, c.grid);
    levelset::EvolveOptions o;
    o.dt = c.fixed_dt ? c.dt : 0.0;
    o.frame_dt = c.frame_dt;
    o.frame_stride = c.frame_stride;
    const auto& raw = c.raw.values;
    if (raw.count("levelset.reinit_every")) o.reinit_every = int(parse_double(raw.at("levelset.reinit_every")));
    if (raw.count("levelset.reinit_iterations")) o.reinit_iterations = int(parse_double(raw.at("levelset.reinit_iterations")));
    return levelset::evolve(phi, c.A, c.t_end, o).trace;
}

inline EvolutionTrace run_graph_q(const ExperimentConfig& c)
{
    graph::QOptions o;
    o.nodes = c.q_nodes;
    o.frame_dt = c.frame_dt;
    o.frame_stride = c.frame_stride;
    o.cfl = c.cfl;
    return graph::solve_Q(initial_profile(c), c.theta_minus, c.theta_plus, c.A, c.t_end, o);
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

}  // namespace detail

/// Runs one (already expanded) config and writes its outputs. Errors inside the
/// solvers become a partial summary with `error` set.
inline RunSummary run(const ExperimentConfig& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    RunSummary s;
    s.name = c.name;
    s.config_hash = c.hash;
    const fs::path dir = output_root(c) / c.name / c.hash;
    s.out_dir = dir.string();
    fs::create_directories(dir);
    {
        std::ofstream cfg(dir / "config.cfg");
        for (const auto& [k, v] : c.raw.values) cfg << k << " = " << v << '\n';
    }
    auto wants = [&](const char* a) { return std::find(c.analyses.begin(), c.analyses.end(), a) != c.analyses.end(); };
    auto expect = [&](const std::string& k) -> const std::string* {
        auto it = c.expect.find(k);
        return it == c.expect.end() ? nullptr : &it->second;
    };
    std::optional<EvolutionTrace> primary;
    std::optional<EvolutionTrace> second;  // level set when solver = both
    std::optional<analysis::Verdict> headline;
    try {
        switch (c.solver) {
        case Solver::fronttrack: primary = detail::run_tracker(c); break;
        case Solver::levelset: primary = detail::run_levelset(c); break;
        case Solver::graph_q: primary = detail::run_graph_q(c); break;
        case Solver::both:
            primary = detail::run_tracker(c);
            second = detail::run_levelset(c);
            break;
        }
        detail::write_trace_files(dir, *primary, s);
        s.events = primary->events;
        if (second) {
            detail::write_trace_files(dir / "levelset", *second, s);
            const auto cmp = compare_traces(*primary, *second);
            const json cj = to_json(cmp);
            std::ofstream(dir / "compare.json") << cj.dump(2) << '\n';
            s.extra["compare"] = json{{"max", cmp.max}, {"trend", cmp.trend}, {"frames", cmp.times.size()},
                                      {"dx", c.grid.dx()}, {"max_cells", cmp.max / c.grid.dx()}};
            if (auto* e = expect("crossval_max_cells")) {
                const double lim = parse_double(*e) * c.grid.dx();
                s.checks.push_back({"crossval_max_cells", cmp.max <= lim && !cmp.times.empty(),
                                    "max d_H " + format_double(cmp.max) + " vs " + format_double(lim)});
            }
        }
        if (wants("classify") || c.analyses.empty()) {
            auto v = analysis::classify(*primary, c.A);
            v.config_hash = c.hash;
            s.verdicts.push_back(v);
            headline = v;
            if (second) {
                auto v2 = analysis::classify(*second, c.A);
                v2.config_hash = c.hash;
                v2.notes.push_back("level-set run");
                s.verdicts.push_back(v2);
            }
        }
        if (wants("a_star")) {
            const auto est = analysis::estimate_a_star(detail::initial_profile(c), c.A, c.a_star);
            analysis::Verdict v;
            v.metrics["a_star_slope"] = est.slope;
            v.metrics["kappa_origin"] = kappa_at_origin(detail::initial_profile(c));
            v.sub_reports["a_star"] = analysis::to_json(est);
            v.notes.push_back("a_star estimate only");
            v.config_hash = c.hash;
            s.verdicts.push_back(v);
            if (auto* e = expect("a_star_slope")) {
                const double want = parse_double(*e);
                const double tol = expect("a_star_rtol") ? parse_double(*expect("a_star_rtol")) : 0.1;
                s.checks.push_back({"a_star_slope", detail::rel_err(est.slope, want) <= tol,
                                    "slope " + format_double(est.slope) + " vs " + format_double(want)});
            }
        }
        if (wants("fattening")) {
            auto v = analysis::fattening_verdict(detail::initial_profile(c), c.A, c.fattening);
            v.config_hash = c.hash;
            s.verdicts.push_back(v);
            headline = v;
        }
        if (wants("gradient_audit")) {
            const auto g = analysis::gradient_bound_audit(*primary, c.gradient_delta);
            json frames = json::array();
            for (const auto& f : g.frames)
                frames.push_back({{"t", f.t}, {"sup", f.sup}, {"vacuous", f.vacuous}, {"bound", std::isinf(f.bound) ? -1.0 : f.bound}});
            s.extra["gradient_audit"] = json{{"delta", g.delta}, {"sup", g.sup}, {"finite", g.finite},
                                             {"within_bound", g.within_bound}, {"frames", frames}};
            s.checks.push_back({"gradient_audit", g.finite && g.within_bound, "sup " + format_double(g.sup)});
        }
        if (wants("intersection_audit")) {
            json rep = json::object();
            int violations = 0;
            int max_count = 0;
            if (!c.intersection_other.empty()) {
                std::vector<std::string> d;
                const auto other = interpret(load_config_file(c.intersection_other, d));
                if (!d.empty() || !other.diagnostics.empty()) throw ConfigError("intersection_other config is invalid");
                EvolutionTrace ot = other.config.solver == Solver::graph_q ? detail::run_graph_q(other.config)
                                    : other.config.solver == Solver::levelset ? detail::run_levelset(other.config)
                                                                              : detail::run_tracker(other.config);
                const auto mode = c.intersection_mode == "vertical_pair" ? analysis::AuditMode::vertical_pair
                                                                         : analysis::AuditMode::nonincreasing;
                const auto a = analysis::monotonicity_audit(*primary, ot, mode);
                violations += int(a.violations.size());
                for (int k : a.counts) max_count = std::max(max_count, k);
                rep["pair"] = json{{"counts", a.counts}, {"times", a.times}, {"violations", a.violations.size()},
                                   {"identical", a.identical}};
            }
            if (c.random_pairs > 0) {
                const auto r = random_pair_audit(c.seed, c.random_pairs, c.A);
                violations += r.violations + r.failed_runs;
                rep["random_pairs"] = json{{"pairs", r.pairs}, {"violations", r.violations}, {"failed_runs", r.failed_runs},
                                           {"initial_counts", r.initial_counts}, {"details", r.details}, {"seed", c.seed}};
            }
            s.extra["intersection_audit"] = rep;
            if (auto* e = expect("violations"))
                s.checks.push_back({"violations", violations <= std::stol(*e), std::to_string(violations) + " violations"});
            if (auto* e = expect("max_count"))
                s.checks.push_back({"max_count", max_count <= std::stol(*e), "max count " + std::to_string(max_count)});
        }

        // expectations on the primary run
        if (auto* e = expect("outcome")) {
            const std::string got = headline ? analysis::to_string(headline->outcome) : "none";
            s.checks.push_back({"outcome", got == *e, got + " (expected " + *e + ")"});
        }
        if (auto* e = expect("extinction_time")) {
            const double want = parse_double(*e);
            const double tol = expect("extinction_rtol") ? parse_double(*expect("extinction_rtol")) : 0.01;
            const bool ok = primary->extinction_time && detail::rel_err(*primary->extinction_time, want) <= tol;
            s.checks.push_back({"extinction_time", ok,
                                primary->extinction_time ? format_double(*primary->extinction_time) + " vs " + *e : "no extinction"});
        }
        if (auto* e = expect("slope_b_over_t")) {
            const double want = parse_double(*e);
            const double tol = expect("slope_rtol") ? parse_double(*expect("slope_rtol")) : 0.05;
            const auto& f = primary->frames.back();
            const double got = f.t > 0.0 ? f.b / f.t : 0.0;
            s.checks.push_back({"slope_b_over_t", detail::rel_err(got, want) <= tol, format_double(got) + " vs " + *e});
        }
        if (auto* e = expect("event_before")) {
            const auto parts = split_list(*e);
            bool ok = false;
            std::string det = "needs two event kinds";
            if (parts.size() == 2) {
                std::optional<Event> first, second_ev;
                for (const auto& ev : primary->events.events) {
                    if (!first && parts[0] == to_string(ev.kind)) first = ev;
                    if (!second_ev && parts[1] == to_string(ev.kind)) second_ev = ev;
                }
                ok = first && second_ev && first->t < second_ev->t;
                det = (first ? format_double(first->t) : std::string("none")) + " < " +
                      (second_ev ? format_double(second_ev->t) : std::string("none"));
            }
            s.checks.push_back({"event_before", ok, det});
        }
        if (auto* e = expect("no_event")) {
            for (const auto& kind : split_list(*e)) {
                std::size_t n = 0;
                for (const auto& ev : primary->events.events) n += kind == to_string(ev.kind) ? 1 : 0;
                s.checks.push_back({"no_event:" + kind, n == 0, std::to_string(n) + " events"});
            }
        }
        if (auto* e = expect("radius_drift_max")) {
            // area-equivalent radius; exact for circles
            auto radius = [](const Frame& f) { return std::sqrt(std::abs(f.area) / std::numbers::pi); };
            const double r0 = radius(primary->frames.front());
            double worst = 0.0;
            for (const auto& f : primary->frames)
                if (!f.curves.empty()) worst = std::max(worst, std::abs(radius(f) - r0) / r0);
            s.checks.push_back({"radius_drift_max", worst <= parse_double(*e), "drift " + format_double(worst)});
        }
    }
    catch (const std::exception& e) {
        s.error = e.what();
    }
    if (headline) std::ofstream(dir / "verdict.json") << analysis::verdict_to_json(*headline).dump(2) << '\n';
    s.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ofstream(dir / "summary.json") << to_json(s).dump(2) << '\n';
    return s;
}

/// Validates every sub-run of a config file first, then runs them all.
inline std::vector<RunSummary> run_file(const std::string& path, std::vector<std::string>& diagnostics)
{
    const RawConfig rc = load_config_file(path, diagnostics);
    if (!diagnostics.empty()) return {};
    for (const auto& d : interpret(rc).diagnostics) diagnostics.push_back(d);
    std::vector<ExperimentConfig> configs;
    for (const auto& sub : expand_sweep(rc)) {
        auto l = interpret(sub);
        for (const auto& d : l.diagnostics)
            if (std::find(diagnostics.begin(), diagnostics.end(), d) == diagnostics.end()) diagnostics.push_back(d);
        configs.push_back(std::move(l.config));
    }
    if (!diagnostics.empty()) return {};
    std::vector<RunSummary> out;
    for (const auto& c : configs) out.push_back(run(c));
    return out;
}

// ------------------------------------------------------- reading run dirs

/// Rebuilds the frames (time and curves) and A of a finished run directory.
inline EvolutionTrace load_run(const std::string& run_dir, json* config_out = nullptr)
{
    const fs::path dir(run_dir);
    std::vector<std::string> d;
    const RawConfig rc = load_config_file((dir / "config.cfg").string(), d);
    if (!d.empty()) throw ConfigError("unreadable config.cfg in " + run_dir);
    EvolutionTrace tr;
    tr.A = rc.values.count("A") ? parse_double(rc.values.at("A")) : 0.0;
    if (config_out) *config_out = json(rc.values);
    std::ifstream idx(dir / "frames" / "index.csv");
    if (!idx) throw ConfigError("missing frames/index.csv in " + run_dir);
    std::string line;
    std::getline(idx, line);
    long last = -1;
    while (std::getline(idx, line)) {
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos) throw FormatError("bad index line '" + line + "'");
        const long k = std::stol(line.substr(0, c1));
        const double t = parse_double(line.substr(c1 + 1, c2 - c1 - 1));
        if (k != last) {
            tr.frames.push_back(Frame{});
            tr.frames.back().t = t;
            last = k;
        }
        tr.frames.back().curves.push_back(read_polyline_csv((dir / "frames" / line.substr(c2 + 1)).string()));
    }
    std::ifstream ev(dir / "events.jsonl");
    while (std::getline(ev, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        if (j.at("kind") == "extinction") tr.extinction_time = j.at("t").get<double>();
    }
    return tr;
}

/// Cross-validation of two run directories with matching initial data and A.
inline CompareReport compare_runs(const std::string& run_a, const std::string& run_b)
{
    json ca, cb;
    const auto a = load_run(run_a, &ca);
    const auto b = load_run(run_b, &cb);
    for (const auto& [k, v] : ca.items())
        if (k.rfind("initial.", 0) == 0 && (!cb.contains(k) || cb[k] != v))
            throw analysis::AnalysisError("compare: initial data differ in '" + k + "'");
    for (const auto& [k, v] : cb.items())
        if (k.rfind("initial.", 0) == 0 && !ca.contains(k))
            throw analysis::AnalysisError("compare: initial data differ in '" + k + "'");
    return compare_traces(a, b);
}

// ---------------------------------------------------------- exploration

struct BisectStep {
    double A;
    analysis::Outcome outcome;
};

/// Bisection in A for a circle of radius R0 between a shrinking and an
/// expanding end; reports where the classifier switches. Not an acceptance gate.
inline std::vector<BisectStep> bisect_bounded(double R0, double lo, double hi, int iterations, double t_end, double spacing)
{
    std::vector<BisectStep> steps;
    tracker::EvolveOptions o;
    o.spacing = spacing;
    CurveFamily f;
    f.kind = CurveFamily::Kind::circle;
    f.radius = R0;
    f.n = 4001;
    const PolyCurve c = profile_to_curve(make_initial_curve(f));
    for (int k = 0; k < iterations; ++k) {
        const double A = 0.5 * (lo + hi);
        const auto v = analysis::classify(tracker::evolve_closed(c, A, t_end, o), A);
        steps.push_back({A, v.outcome});
        if (v.outcome == analysis::Outcome::Shrinking) lo = A;
        else if (v.outcome == analysis::Outcome::Expanding) hi = A;
        else break;
    }
    return steps;
}

}  // namespace curveflow::experiment
