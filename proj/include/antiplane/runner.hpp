#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <sstream>

#include "antiplane/io.hpp"

namespace antiplane {

struct RunResult {
    long steps_completed = 0;
    bool interrupted = false;
    SystemState final_state;
    ProvenanceInfo provenance;
    // keep the discretization alive: final_state's fields point into these
    std::shared_ptr<const Mesh> mesh;
    std::shared_ptr<const FeSpace> V, W, E;
};

inline std::uint64_t hash_mesh(const Mesh& mesh) {
    std::ostringstream ss;
    save_mesh(mesh, ss);
    return fnv1a(ss.str());
}

// Runs the full time loop for a configuration. Writes the CSV log row by row
// (rows for completed steps survive a mid-run failure) and optional VTK
// snapshots. `stop` may be polled by a signal handler; a set flag flushes and
// returns early with interrupted = true.
inline RunResult run_solve(const RunConfig& cfg, std::ostream& log,
                           const std::atomic<bool>* stop = nullptr) {
    auto mesh_ptr = std::make_shared<Mesh>(cfg.make_mesh());
    const Mesh& mesh = *mesh_ptr;
    mesh.validate();
    const MaterialField mat = cfg.make_material(mesh);
    auto V_ptr = std::make_shared<FeSpace>(build_space(mesh, SpaceKind::V));
    auto W_ptr = std::make_shared<FeSpace>(build_space(mesh, SpaceKind::W));
    auto E_ptr = std::make_shared<FeSpace>(build_space(mesh, SpaceKind::E));
    const FeSpace& V = *V_ptr;
    const FeSpace& W = *W_ptr;
    const FeSpace& E = *E_ptr;
    const BoundaryData data = cfg.make_data();
    const FrictionLaw law = cfg.make_law();

    const int coupling_iters = cfg.theta_coupling == "iterate" ? cfg.max_coupling_iters : 1;
    CoupledStepper stepper(mesh, V, W, E, mat, data, law, cfg.solver, coupling_iters,
                           cfg.coupling_tol);

    RunResult result;
    result.mesh = mesh_ptr;
    result.V = V_ptr;
    result.W = W_ptr;
    result.E = E_ptr;
    result.provenance.config_hash = cfg.config_hash;
    result.provenance.mesh_hash = hash_mesh(mesh);
    result.provenance.alpha_star = stepper.ops().alpha_star;
    result.provenance.trace_constant = stepper.trace_constant();
    result.provenance.Z0 = stepper.Z0();

    CsvWriter csv(cfg.csv_path, result.provenance);

    const bool snapshots = !cfg.vtk_dir.empty() && cfg.snapshot_stride > 0;
    if (snapshots) std::filesystem::create_directories(cfg.vtk_dir);
    auto snapshot = [&](const SystemState& s, long step) {
        char name[64];
        std::snprintf(name, sizeof(name), "snapshot_%06ld.vtk", step);
        write_vtk(cfg.vtk_dir + "/" + name, mesh,
                  {{"u", nodal_values(s.u)},
                   {"phi", nodal_values(s.phi)},
                   {"theta", nodal_values(s.theta)},
                   {"w", nodal_values(s.w)}});
    };

    const TimeGrid grid(cfg.T, cfg.N);
    const double dt = grid.dt();
    SystemState state = stepper.initialize(NodalField(V), NodalField(E));
    if (snapshots) snapshot(state, 0);

    for (long n = 1; n <= grid.N; ++n) {
        if (stop && stop->load()) {
            csv.flush();
            result.interrupted = true;
            log << "interrupted after step " << result.steps_completed << "\n";
            break;
        }
        StepDiagnostics diag;
        state = stepper.advance(state, dt, &diag);
        StepRecord rec;
        rec.step = n;
        rec.t = state.t;
        rec.outer_iters = diag.outer_iterations;
        rec.newton_iters = diag.newton_iterations;
        rec.vi_residual = diag.vi_residual;
        rec.norm_w_V = seminorm(state.w);
        rec.norm_u_V = seminorm(state.u);
        rec.norm_phi_W = seminorm(state.phi);
        rec.norm_theta_E = seminorm(state.theta);
        rec.stick_count = diag.stick_count;
        rec.slip_count = diag.slip_count;
        rec.max_traction = diag.max_traction;
        rec.gate_margin = diag.gate_margin;
        csv.row(rec);
        result.steps_completed = n;
        if (snapshots && n % cfg.snapshot_stride == 0) snapshot(state, n);
    }
    csv.flush();
    result.final_state = state;
    return result;
}

}  // namespace antiplane
