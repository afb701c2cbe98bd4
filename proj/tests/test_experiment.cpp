#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curveflow/experiment.hpp"

using namespace curveflow;
using namespace curveflow::experiment;
namespace fs = std::filesystem;

namespace {

RawConfig parse(const std::string& text)
{
    std::vector<std::string> d;
    auto rc = parse_config_text(text, d);
    REQUIRE(d.empty());
    return rc;
}

bool mentions(const std::vector<std::string>& diags, const std::string& needle)
{
    for (const auto& d : diags)
        if (d.find(needle) != std::string::npos) return true;
    return false;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kCircle = R"(
name = shrink
solver = fronttrack
A = 1
initial.family = circle
initial.radius = 0.5
spacing = 0.02
t_end = 0.25
analyses = classify
expect.outcome = Shrinking
)";

}  // namespace

TEST_CASE("config parsing", "[experiment][config]")
{
    std::vector<std::string> d;
    const auto rc = parse_config_text("a = 1  # note\n\n  b.c=two words \nbroken line\na = 3\n", d);
    REQUIRE(rc.values.at("a") == "3");
    REQUIRE(rc.values.at("b.c") == "two words");
    REQUIRE(rc.lines.at("b.c") == 3);
    REQUIRE(d.size() == 2);
    REQUIRE(mentions(d, "line 4"));
    REQUIRE(mentions(d, "duplicate key 'a'"));
    REQUIRE(split_list(" 1, 2 ,,3 ") == std::vector<std::string>{"1", "2", "3"});
}

TEST_CASE("valid config has no diagnostics", "[experiment][config]")
{
    REQUIRE(validate(parse(kCircle)).empty());
    const auto l = interpret(parse(kCircle));
    REQUIRE(l.config.solver == Solver::fronttrack);
    REQUIRE(l.config.A == 1.0);
    REQUIRE(l.config.spacing == 0.02);
}

TEST_CASE("invalid configs name the offending field", "[experiment][config]")
{
    SECTION("level set run without a grid")
    {
        auto rc = parse(kCircle);
        rc.values["solver"] = "levelset";
        REQUIRE(mentions(validate(rc), "grid"));
    }
    SECTION("negative driving force")
    {
        auto rc = parse(kCircle);
        rc.values["A"] = "-1";
        REQUIRE(mentions(validate(rc), "A"));
    }
    SECTION("unknown key")
    {
        auto rc = parse(kCircle);
        rc.values["spacin"] = "0.1";
        REQUIRE(mentions(validate(rc), "spacin"));
    }
    SECTION("all problems are reported together")
    {
        auto rc = parse(kCircle);
        rc.values["solver"] = "levelset";
        rc.values["A"] = "-1";
        rc.values["t_end"] = "0";
        REQUIRE(validate(rc).size() >= 3);
    }
    SECTION("neumann tracker on an even extension")
    {
        auto rc = parse(kCircle);
        rc.values["tracker.mode"] = "neumann";
        rc.values["initial.extend"] = "even";
        REQUIRE_FALSE(validate(rc).empty());
    }
}

TEST_CASE("config hash ignores key order and output_dir", "[experiment][config]")
{
    const auto a = parse(kCircle);
    std::string reordered = "t_end = 0.25\nspacing = 0.02\n" + kCircle;
    reordered.erase(reordered.rfind("spacing = 0.02\n"), 15);
    reordered.erase(reordered.rfind("t_end = 0.25\n"), 13);
    auto b = parse(reordered);
    REQUIRE(config_hash(a) == config_hash(b));
    b.values["output_dir"] = "/somewhere/else";
    REQUIRE(config_hash(a) == config_hash(b));
    b.values["A"] = "1.5";
    REQUIRE(config_hash(a) != config_hash(b));
    REQUIRE(config_hash(a).size() == 16);
}

TEST_CASE("sweeps expand into one run per value", "[experiment][config]")
{
    auto rc = parse(kCircle);
    rc.values.erase("A");
    rc.values["sweep.A"] = "0.5, 2";
    rc.values["expect.outcome"] = "Shrinking, Expanding";
    const auto subs = expand_sweep(rc);
    REQUIRE(subs.size() == 2);
    REQUIRE(subs[0].values.at("name") == "shrink_A0.5");
    REQUIRE(subs[1].values.at("A") == "2");
    REQUIRE(subs[1].values.at("expect.outcome") == "Expanding");
    REQUIRE_FALSE(subs[0].values.count("sweep.A"));
    for (const auto& s : subs) REQUIRE(validate(s).empty());
    REQUIRE(config_hash(subs[0]) != config_hash(subs[1]));
}

TEST_CASE("runs are deterministic and write their artefacts", "[experiment][run]")
{
    unsetenv("CURVEFLOW_OUT");
    const auto root = fs::temp_directory_path() / "curveflow_exp_test";
    fs::remove_all(root);
    std::vector<std::string> texts;
    for (const char* sub : {"one", "two"}) texts.push_back(kCircle + "output_dir = " + (root / sub).string() + "\n");
    std::vector<RunSummary> runs;
    for (const auto& t : texts) {
        const auto l = interpret(parse(t));
        REQUIRE(l.diagnostics.empty());
        runs.push_back(run(l.config));
    }
    for (const auto& r : runs) {
        INFO(r.error);
        REQUIRE(r.ok());
        for (const char* f : {"config.cfg", "trace.csv", "events.jsonl", "verdict.json", "summary.json", "frames/index.csv"})
            REQUIRE(fs::exists(fs::path(r.out_dir) / f));
        REQUIRE(r.frames_written > 2);
    }
    REQUIRE(runs[0].config_hash == runs[1].config_hash);
    REQUIRE(slurp(fs::path(runs[0].out_dir) / "trace.csv") == slurp(fs::path(runs[1].out_dir) / "trace.csv"));

    const auto verdict = json::parse(slurp(fs::path(runs[0].out_dir) / "verdict.json"));
    REQUIRE(verdict.dump().find("Shrinking") != std::string::npos);

    SECTION("a run compared with itself has zero distance")
    {
        const auto rep = compare_runs(runs[0].out_dir, runs[1].out_dir);
        REQUIRE_FALSE(rep.times.empty());
        REQUIRE(rep.max == 0.0);
    }
    SECTION("a failed expectation is reported, not thrown")
    {
        auto l = interpret(parse(texts[0] + "expect.extinction_time = 0.3\n"));
        const auto r = run(l.config);
        REQUIRE(r.error.empty());
        REQUIRE_FALSE(r.ok());
    }
}

TEST_CASE("trace comparison", "[experiment][compare]")
{
    const auto p = [] {
        CurveFamily f;
        f.kind = CurveFamily::Kind::circle;
        f.radius = 0.5;
        return make_initial_curve(f);
    }();
    tracker::EvolveOptions o;
    o.frame_dt = 0.02;
    o.spacing = 0.02;
    const auto a = tracker::evolve_free_halfplane(p, 1.0, 0.1, o);
    const auto same = compare_traces(a, a);
    REQUIRE(same.max == 0.0);
    REQUIRE(same.times.size() == a.frames.size());
    const auto b = tracker::evolve_free_halfplane(p, 0.5, 0.1, o);
    REQUIRE_THROWS_AS(compare_traces(a, b), analysis::AnalysisError);
}

TEST_CASE("random pair audit is reproducible", "[experiment][audit]")
{
    const auto r1 = random_pair_audit(7, 3);
    const auto r2 = random_pair_audit(7, 3);
    REQUIRE(r1.pairs == 3);
    REQUIRE(r1.violations == 0);
    REQUIRE(r1.failed_runs == 0);
    REQUIRE(r1.initial_counts == r2.initial_counts);
    REQUIRE(r1.details.empty());
}
