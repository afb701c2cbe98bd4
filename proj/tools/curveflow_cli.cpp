#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curveflow/experiment.hpp"

namespace ex = curveflow::experiment;
namespace fs = std::filesystem;

namespace {

void print_summary(const ex::RunSummary& s)
{
    std::cout << (s.ok() ? "OK   " : "FAIL ") << s.name << "  [" << s.config_hash << "]  " << std::fixed
              << std::setprecision(1) << s.wall_time << " s\n";
    std::cout.unsetf(std::ios::fixed);
    for (const auto& v : s.verdicts) std::cout << "     verdict " << curveflow::analysis::to_string(v.outcome) << '\n';
    for (const auto& c : s.checks) std::cout << "     " << (c.pass ? "pass " : "FAIL ") << c.name << ": " << c.detail << '\n';
    if (!s.error.empty()) std::cout << "     error: " << s.error << '\n';
    std::cout << "     out: " << s.out_dir << '\n';
}

int run_config(const std::string& path, std::vector<ex::RunSummary>* collect = nullptr)
{
    std::vector<std::string> diag;
    std::vector<ex::RunSummary> runs;
    try {
        runs = ex::run_file(path, diag);
    }
    catch (const std::exception& e) {
        diag.push_back(e.what());
    }
    if (!diag.empty()) {
        std::cerr << path << ": invalid config\n";
        for (const auto& d : diag) std::cerr << "  " << d << '\n';
        return 2;
    }
    bool ok = true;
    for (const auto& s : runs) {
        print_summary(s);
        ok = ok && s.ok();
    }
    if (collect) collect->insert(collect->end(), runs.begin(), runs.end());
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"curve flows with a constant forcing term: run, validate and compare experiments"};
    app.require_subcommand(1);

    std::string cfg;
    auto* run = app.add_subcommand("run", "run a config; exit 0 only if every expectation holds");
    run->add_option("config", cfg, "config file")->required()->check(CLI::ExistingFile);

    auto* val = app.add_subcommand("validate", "check a config without running it");
    val->add_option("config", cfg, "config file")->required()->check(CLI::ExistingFile);

    std::string run_a, run_b;
    auto* cmp = app.add_subcommand("compare", "Hausdorff distance between two run directories");
    cmp->add_option("run_a", run_a)->required()->check(CLI::ExistingDirectory);
    cmp->add_option("run_b", run_b)->required()->check(CLI::ExistingDirectory);

    std::string suite_dir, report;
    auto* suite = app.add_subcommand("suite", "run every *.cfg in a directory and write a markdown report");
    suite->add_option("dir", suite_dir)->required()->check(CLI::ExistingDirectory);
    suite->add_option("--report", report, "markdown output (default: stdout)");

    double R0 = 1.0, lo = 0.2, hi = 3.0, t_end = 3.0, spacing = 0.05;
    int iterations = 8;
    auto* bis = app.add_subcommand("bisect", "exploratory search in A for a circle that neither shrinks nor expands");
    bis->add_option("--radius", R0)->capture_default_str();
    bis->add_option("--lo", lo)->capture_default_str();
    bis->add_option("--hi", hi)->capture_default_str();
    bis->add_option("--iterations", iterations)->capture_default_str();
    bis->add_option("--t-end", t_end)->capture_default_str();
    bis->add_option("--spacing", spacing)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (*run) return run_config(cfg);

    if (*val) {
        std::vector<std::string> diag;
        const auto rc = ex::load_config_file(cfg, diag);
        for (const auto& sub : ex::expand_sweep(rc))
            for (const auto& d : ex::validate(sub))
                if (std::find(diag.begin(), diag.end(), d) == diag.end()) diag.push_back(d);
        if (diag.empty()) {
            std::cout << cfg << ": valid  [" << ex::config_hash(rc) << "]\n";
            return 0;
        }
        for (const auto& d : diag) std::cout << cfg << ": " << d << '\n';
        return 2;
    }

    if (*cmp) {
        try {
            const auto r = ex::compare_runs(run_a, run_b);
            std::cout << ex::to_json(r).dump(2) << '\n';
            return 0;
        }
        catch (const std::exception& e) {
            std::cerr << "compare: " << e.what() << '\n';
            return 2;
        }
    }

    if (*suite) {
        std::vector<fs::path> cfgs;
        for (const auto& e : fs::directory_iterator(suite_dir))
            if (e.path().extension() == ".cfg") cfgs.push_back(e.path());
        std::sort(cfgs.begin(), cfgs.end());
        std::ostringstream md;
        md << "| config | run | outcome | checks | seconds |\n|---|---|---|---|---|\n";
        int worst = 0;
        for (const auto& p : cfgs) {
            std::vector<ex::RunSummary> runs;
            const int rc = run_config(p.string(), &runs);
            worst = std::max(worst, rc);
            if (runs.empty()) md << "| " << p.filename().string() << " | - | invalid | - | - |\n";
            for (const auto& s : runs) {
                std::size_t passed = 0;
                for (const auto& c : s.checks) passed += c.pass ? 1 : 0;
                const std::string outcome =
                    s.verdicts.empty() ? "-" : curveflow::analysis::to_string(s.verdicts.front().outcome);
                md << "| " << p.filename().string() << " | " << s.name << " | " << outcome << " | " << passed << "/"
                   << s.checks.size() << (s.error.empty() ? "" : " (error)") << " | " << std::fixed << std::setprecision(1)
                   << s.wall_time << " |\n";
            }
        }
        if (report.empty()) std::cout << '\n' << md.str();
        else std::ofstream(report) << md.str();
        return worst;
    }

    if (*bis) {
        // exploratory: the classifier output is printed, never asserted
        const auto steps = ex::bisect_bounded(R0, lo, hi, iterations, t_end, spacing);
        for (const auto& s : steps)
            std::cout << "A = " << curveflow::format_double(s.A) << "  " << curveflow::analysis::to_string(s.outcome) << '\n';
        return 0;
    }
    return 0;
}
