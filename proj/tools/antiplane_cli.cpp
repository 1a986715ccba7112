#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>

#include "antiplane/runner.hpp"
#include "antiplane/suites.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_sigint(int) { g_stop.store(true); }

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitVerify = 4;

void apply_thread_env() {
    if (const char* env = std::getenv("ANTIPLANE_THREADS")) {
        const int n = std::atoi(env);
        Eigen::setNbThreads(n > 0 ? n : 1);  // 0 = deterministic single-worker
    }
}

antiplane::TaggingRule parse_tags(const std::string& spec) {
    using antiplane::Side;
    antiplane::TaggingRule rule = antiplane::TaggingRule::standard();
    if (spec.empty()) return rule;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw antiplane::ConfigError("bad tag assignment '" + item +
                                         "', expected side=TAG");
        const std::string side = item.substr(0, eq);
        const antiplane::SideTag tag = antiplane::detail::parse_side_tag(item.substr(eq + 1));
        if (side == "bottom") rule.bottom = tag;
        else if (side == "top") rule.top = tag;
        else if (side == "left") rule.left = tag;
        else if (side == "right") rule.right = tag;
        else throw antiplane::ConfigError("unknown side '" + side + "'");
    }
    return rule;
}

int cmd_mesh_rect(double width, double height, int nx, int ny, const std::string& tags,
                  const std::string& out_path) {
    const antiplane::TaggingRule rule = parse_tags(tags);
    const antiplane::Mesh mesh = antiplane::generate_rect_mesh(width, height, nx, ny, rule);
    mesh.validate();
    if (out_path.empty() || out_path == "-") antiplane::save_mesh(mesh, std::cout);
    else antiplane::save_mesh(mesh, out_path);
    return kExitOk;
}

int cmd_solve(const std::string& config_path) {
    antiplane::RunConfig cfg;
    try {
        cfg = antiplane::RunConfig::load(config_path);
    } catch (const antiplane::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    }
    std::signal(SIGINT, on_sigint);
    try {
        const antiplane::RunResult res = antiplane::run_solve(cfg, std::cerr, &g_stop);
        if (res.interrupted) return kExitSolver;
        std::cout << "completed " << res.steps_completed << " steps, log at " << cfg.csv_path
                  << "\n";
        return kExitOk;
    } catch (const antiplane::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const antiplane::MeshError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const antiplane::MaterialError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << "solver failure: " << err.what() << "\n";
        return kExitSolver;
    }
}

int cmd_trace_constant(const std::string& mesh_path) {
    const antiplane::Mesh mesh = antiplane::load_mesh(mesh_path);
    mesh.validate();
    const antiplane::FeSpace V = antiplane::build_space(mesh, antiplane::SpaceKind::V);
    const double c = antiplane::estimate_trace_constant(V);
    std::cout << antiplane::format_g17(c) << "\n";
    return kExitOk;
}

int cmd_verify(const std::string& suite) {
    using namespace antiplane;
    bool ok = false;
    if (suite == "mms") {
        bool all = true;
        for (const MmsCase& mc : {mms_case_trig(), mms_case_poly()}) {
            const ConvergenceReport rep = run_mms(mc, 3);
            std::cout << mc.name << ": rate_u = " << rep.rate_u << ", rate_phi = " << rep.rate_phi
                      << ", rate_theta = " << rep.rate_theta << "\n";
            all = all && rep.pass;
        }
        ok = all;
    } else if (suite == "oracles") {
        const OracleReport rep = run_oracle_suite(2024);
        std::cout << "uzawa max diff = " << rep.max_uzawa_diff
                  << ", brute-force max diff = " << rep.max_brute_diff << "\n";
        ok = rep.pass;
    } else if (suite == "gate") {
        const GateStudyReport study = run_gate_suite(8);
        std::cout << "Z0 = " << study.Z0 << "\n";
        for (const auto& pt : study.points)
            std::cout << "L_r = " << pt.L_r << ": contraction = " << pt.measured_contraction
                      << " (bound " << pt.contraction_bound << ")"
                      << (pt.converged ? "" : " diverged") << "\n";
        ok = study.pass;
    } else if (suite == "lemma2") {
        const Lemma2SuiteReport rep = run_lemma2_suite(8, 16);
        std::cout << "stability ratio = " << rep.coarse.sup_ratio << " (coarse), "
                  << rep.fine.sup_ratio << " (fine)\n";
        ok = rep.pass;
    } else if (suite == "invariants") {
        const InvariantReport rep = run_invariant_suite(16);
        for (const auto& [name, pass] : rep.checks)
            std::cout << name << ": " << (pass ? "pass" : "FAIL") << "\n";
        ok = rep.pass;
    } else {
        std::cerr << "unknown verify suite '" << suite
                  << "' (expected mms, oracles, gate, lemma2, or invariants)\n";
        return kExitConfig;
    }
    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_env();
    CLI::App app{"antiplane thermo-piezo contact simulator"};
    app.require_subcommand(1);

    auto* mesh_cmd = app.add_subcommand("mesh", "mesh utilities");
    mesh_cmd->require_subcommand(1);
    auto* rect = mesh_cmd->add_subcommand("rect", "generate a rectangle mesh");
    double width = 1.0, height = 1.0;
    int nx = 8, ny = 8;
    std::string tags, mesh_out;
    rect->add_option("--width", width, "rectangle width");
    rect->add_option("--height", height, "rectangle height");
    rect->add_option("--nx", nx, "cells in x")->required();
    rect->add_option("--ny", ny, "cells in y")->required();
    rect->add_option("--tags", tags, "side tags, e.g. bottom=G3,top=G1:Ga,left=G2:Gb,right=G2:Gb");
    rect->add_option("-o,--output", mesh_out, "output path ('-' for stdout)");

    auto* solve = app.add_subcommand("solve", "run a configured simulation");
    std::string config_path;
    solve->add_option("config", config_path, "TOML configuration file")->required();

    auto* verify = app.add_subcommand("verify", "run a verification suite");
    std::string suite;
    verify->add_option("suite", suite, "mms | oracles | gate | lemma2 | invariants")->required();

    auto* trace = app.add_subcommand("trace-constant", "print the discrete trace constant");
    std::string mesh_path;
    trace->add_option("mesh", mesh_path, "mesh file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (rect->parsed()) return cmd_mesh_rect(width, height, nx, ny, tags, mesh_out);
        if (solve->parsed()) return cmd_solve(config_path);
        if (verify->parsed()) return cmd_verify(suite);
        if (trace->parsed()) return cmd_trace_constant(mesh_path);
    } catch (const antiplane::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const antiplane::MeshError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitSolver;
    }
    return kExitConfig;
}
