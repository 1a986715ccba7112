#pragma once

#include <iostream>
#include <memory>

#include "antiplane/vi_solver.hpp"

namespace antiplane {

struct StepperError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SystemState {
    double t = 0.0;
    NodalField u, phi, theta;
    NodalField w;  // velocity of the last step, zero before the first solve
};

struct TimeGrid {
    double T = 1.0;
    int N = 1;

    TimeGrid(double T_, int N_) : T(T_), N(N_) {
        if (T <= 0.0 || N < 1) throw StepperError("time grid requires T > 0 and N >= 1");
    }
    double dt() const { return T / N; }
};

struct StepDiagnostics {
    int outer_iterations = 0;
    int newton_iterations = 0;
    double vi_residual = 0.0;
    int stick_count = 0;
    int slip_count = 0;
    double max_traction = 0.0;
    double gate_margin = 0.0;
    std::vector<double> outer_diffs;
};

// Advances the coupled velocity-VI / potential / temperature system.
// The potential is eliminated exactly through the Schur complement of the
// electric block; the temperature is lagged inside the VI and updated with
// the new velocity (optionally iterated to a coupled fixed point).
class CoupledStepper {
public:
    CoupledStepper(const Mesh& mesh, const FeSpace& V, const FeSpace& W, const FeSpace& E,
                   const MaterialField& mat, const BoundaryData& data, FrictionLaw law,
                   SolverOptions opts = {}, int max_coupling_iters = 1,
                   double coupling_tol = 1e-10)
        : mesh_(&mesh), V_(&V), W_(&W), E_(&E), mat_(&mat), data_(&data),
          law_(std::move(law)), opts_(std::move(opts)),
          max_coupling_iters_(max_coupling_iters), coupling_tol_(coupling_tol),
          ops_(assemble_forms(mesh, V, W, E, mat)) {
        beta_solver_.compute(ops_.A_beta);
        if (beta_solver_.info() != Eigen::Success)
            throw StepperError("electric permittivity matrix factorization failed");
        trace_constant_ = estimate_trace_constant(V);
        // dense Schur complement E_WV^T A_beta^{-1} E_WV; each column is one
        // potential solve
        const Mat ewv = Mat(ops_.E_WV);
        A_eff_ = Mat(ops_.A_mu) + ewv.transpose() * beta_solver_.solve(ewv);
    }

    const AssembledOperators& ops() const { return ops_; }
    double trace_constant() const { return trace_constant_; }
    double Z0() const { return ops_.alpha_star / (trace_constant_ * trace_constant_); }
    const SolverOptions& options() const { return opts_; }

    NodalField solve_potential(const NodalField& u, double t) const {
        const Vec q = assemble_load_q(*mesh_, *W_, *data_, t);
        Vec phi = beta_solver_.solve(ops_.E_WV * u.values + q);
        if (beta_solver_.info() != Eigen::Success)
            throw StepperError("potential solve failed");
        return NodalField(*W_, std::move(phi));
    }

    SystemState initialize(const NodalField& u0, const NodalField& theta0,
                           const NodalField* phi0_supplied = nullptr,
                           double* phi0_inconsistency = nullptr) const {
        SystemState s;
        s.t = 0.0;
        s.u = u0;
        s.theta = theta0;
        s.phi = solve_potential(u0, 0.0);
        s.w = NodalField(*V_);
        if (phi0_supplied) {
            NodalField diff(*W_, Vec(phi0_supplied->values - s.phi.values));
            const double mism = seminorm(diff);
            if (phi0_inconsistency) *phi0_inconsistency = mism;
        }
        return s;
    }

    // VI in the velocity w with u = u_n + dt w and theta frozen at theta_hat.
    StepProblem build_step_problem(const SystemState& state, const NodalField& theta_hat,
                                   double t_next, double dt) const {
        StepProblem p;
        p.B = Mat(ops_.A_alpha) + dt * A_eff_;
        const Vec q = assemble_load_q(*mesh_, *W_, *data_, t_next);
        const Vec f = assemble_load_f(*mesh_, *V_, *data_, t_next);
        p.lin = A_eff_ * state.u.values + ops_.A_M * theta_hat.values +
                ops_.E_WV.transpose() * beta_solver_.solve(q) - f;
        p.contact = ops_.contact;
        p.law = law_;
        p.gram = ops_.Gram_V;
        p.alpha_star = ops_.alpha_star;
        p.trace_constant = trace_constant_;
        p.velocity_scale = opts_.velocity_scale;
        return p;
    }

    StepProblem build_step_problem(const SystemState& state, double t_next, double dt) const {
        return build_step_problem(state, state.theta, t_next, dt);
    }

    // backward Euler on  <theta_dot, mu> + <Ktilde theta, mu> = <Mtilde w + P, mu>
    NodalField step_temperature_be(const NodalField& theta_n, const NodalField& w,
                                   double t_next, double dt) const {
        ensure_thermal_factor(dt);
        const Vec rhs = ops_.Mass_E * theta_n.values +
                        dt * (apply_Mtilde(ops_, w, law_.h_tau) +
                              assemble_thermal_source(*mesh_, *E_, *mat_, *data_, t_next));
        Vec theta = thermal_solver_->solve(rhs);
        if (thermal_solver_->info() != Eigen::Success)
            throw StepperError("temperature solve failed");
        return NodalField(*E_, std::move(theta));
    }

    // Exponential-kernel representation of the temperature: exact slab
    // propagator from the generalized eigendecomposition of (Ktilde, Mass_E),
    // left-endpoint quadrature of the history integrals. Verification path;
    // restricted to dense-solvable sizes.
    NodalField step_temperature_expkernel(const std::vector<NodalField>& w_history, double dt,
                                          const NodalField& theta0,
                                          int dense_threshold = 500) const {
        const int n = E_->n_free();
        if (n > dense_threshold)
            throw StepperError("exponential-kernel path limited to " +
                               std::to_string(dense_threshold) + " temperature dofs");
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(ops_.Ktilde), Mat(ops_.Mass_E));
        if (es.info() != Eigen::Success)
            throw StepperError("thermal eigendecomposition failed");
        const Mat& X = es.eigenvectors();  // Mass_E-orthonormal
        const Vec decay = (-dt * es.eigenvalues().array()).exp().matrix();
        Vec theta = theta0.values;
        for (std::size_t k = 0; k < w_history.size(); ++k) {
            const double t_k = double(k) * dt;
            const Vec b = apply_Mtilde(ops_, w_history[k], law_.h_tau) +
                          assemble_thermal_source(*mesh_, *E_, *mat_, *data_, t_k);
            const Vec modal =
                X.transpose() * (ops_.Mass_E * theta) + dt * (X.transpose() * b);
            theta = X * decay.cwiseProduct(modal).eval();
        }
        return NodalField(*E_, std::move(theta));
    }

    SystemState advance(const SystemState& state, double dt,
                        StepDiagnostics* diag = nullptr) const {
        const double t_next = state.t + dt;
        NodalField theta_hat = state.theta;
        ViSolution sol;
        NodalField theta_next;
        for (int pass = 0;; ++pass) {
            const StepProblem p = build_step_problem(state, theta_hat, t_next, dt);
            sol = solve_step(p, state.w.values, opts_, &std::cerr);
            NodalField w(*V_, sol.w);
            theta_next = step_temperature_be(state.theta, w, t_next, dt);
            NodalField dtheta(*E_, Vec(theta_next.values - theta_hat.values));
            if (pass + 1 >= max_coupling_iters_ || seminorm(dtheta) <= coupling_tol_) break;
            theta_hat = theta_next;
        }

        SystemState next;
        next.t = t_next;
        next.w = NodalField(*V_, sol.w);
        next.u = NodalField(*V_, Vec(state.u.values + dt * sol.w));
        next.phi = solve_potential(next.u, t_next);
        next.theta = theta_next;

        if (diag) {
            diag->outer_iterations = sol.outer_iterations;
            diag->newton_iterations = sol.newton_iterations;
            diag->vi_residual = sol.residual;
            diag->stick_count = sol.stick_count;
            diag->slip_count = sol.slip_count;
            diag->outer_diffs = sol.outer_diffs;
            diag->max_traction = 0.0;
            for (std::size_t i = 0; i < ops_.contact.size(); ++i)
                diag->max_traction = std::max(
                    diag->max_traction, std::abs(sol.lambda[int(i)]) / ops_.contact[i].weight);
            diag->gate_margin = Z0() - law_.L_r;
        }
        return next;
    }

private:
    void ensure_thermal_factor(double dt) const {
        if (thermal_solver_ && thermal_dt_ == dt) return;
        SpMat m = ops_.Mass_E + dt * ops_.Ktilde;
        thermal_solver_ = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(m);
        if (thermal_solver_->info() != Eigen::Success)
            throw StepperError("thermal matrix factorization failed");
        thermal_dt_ = dt;
    }

    const Mesh* mesh_;
    const FeSpace *V_, *W_, *E_;
    const MaterialField* mat_;
    const BoundaryData* data_;
    FrictionLaw law_;
    SolverOptions opts_;
    int max_coupling_iters_;
    double coupling_tol_;
    AssembledOperators ops_;
    Eigen::SimplicialLDLT<SpMat> beta_solver_;
    Mat A_eff_;
    double trace_constant_ = 0.0;
    mutable std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> thermal_solver_;
    mutable double thermal_dt_ = -1.0;
};

}  // namespace antiplane
