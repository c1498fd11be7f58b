#include <chrono>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "diracaa/pipeline.hpp"

namespace {

struct Flags {
    std::string scenario;
    double tol_scale = 1.0;
    int samples = 128;
    int grid = 0;
    std::string out;
    std::uint64_t seed = 0;
    bool json = false;
};

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("scenario", f.scenario, "scenario file")->required();
    sub->add_option("--tol-scale", f.tol_scale, "multiply every threshold")->check(CLI::PositiveNumber);
    sub->add_option("--samples", f.samples, "Halton sample count")->check(CLI::Range(2, 1 << 20));
    sub->add_option("--grid", f.grid, "torus quadrature points per angle")->check(CLI::Range(2, 4096));
    sub->add_option("--out", f.out, "output directory (default out/<scenario>)");
    sub->add_option("--seed", f.seed, "Halton scramble and random matrix seed");
    sub->add_flag("--json", f.json, "write the report as JSON");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace diracaa;
    CLI::App app{"Dirac structures and action-angle variables"};
    app.require_subcommand(1);
    Flags flags;
    const std::vector<std::pair<Command, const char*>> commands{
        {Command::CheckDirac, "isotropy, rank, closedness and bi-corank of the structure"},
        {Command::CheckSystem, "integrability, regularity and Hamiltonian binding"},
        {Command::FindTorus, "period lattice and torus chart"},
        {Command::Average, "torus averages and structure preservation"},
        {Command::Actions, "action table by path integral and loop integrals"},
        {Command::VerifyAA, "full and partial action-angle checks, co-affine transitions"},
        {Command::All, "every stage the scenario configures"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [c, help] : commands) {
        subs.push_back(app.add_subcommand(to_string(c), help));
        add_flags(subs.back(), flags);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    Command cmd = Command::All;
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed()) cmd = commands[i].first;

    const auto start = std::chrono::steady_clock::now();
    Scenario sc;
    try {
        sc = load_scenario(flags.scenario);
    } catch (const ScenarioError& e) {
        std::cerr << "dirac-aa: " << e.what() << "\n";
        return 2;
    }
    RunOptions opt;
    opt.tol_scale = flags.tol_scale;
    opt.samples = flags.samples;
    if (flags.grid > 0) opt.grid = flags.grid;
    opt.seed = flags.seed;

    Report rep;
    try {
        rep = run_scenario(sc, cmd, opt);
    } catch (const std::exception& e) {
        std::cerr << "dirac-aa: " << e.what() << "\n";
        return 3;
    }
    std::filesystem::path dir = !flags.out.empty() ? std::filesystem::path(flags.out)
                                : sc.output_dir     ? *sc.output_dir
                                                    : std::filesystem::path("out") / sc.name;
    try {
        write_outputs(rep, dir, flags.json);
    } catch (const std::exception& e) {
        std::cerr << "dirac-aa: " << e.what() << "\n";
        return 3;
    }
    std::cout << (flags.json ? format_json(rep) : format_text(rep));
    for (const auto& c : rep.checks)
        if (c.status == CheckStatus::Error || c.status == CheckStatus::Fail)
            std::cerr << "dirac-aa: " << c.name << " " << to_string(c.status) << ": " << c.detail << "\n";
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "elapsed %.2f s\n", secs);
    return rep.exit_code();
}
