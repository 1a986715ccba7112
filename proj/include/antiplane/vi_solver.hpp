#pragma once

#include <cstdio>
#include <optional>

#include "antiplane/friction.hpp"

namespace antiplane {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class GatePolicy { Warn, Abort };

struct SolverOptions {
    double tol = 1e-9;          // outer fixed-point and KKT tolerance
    int max_outer = 100;
    int max_newton = 200;       // per continuation stage
    std::vector<double> eps_schedule = {1e-2, 1e-4, 1e-8};
    double velocity_scale = 1.0;
    double slip_tol = 1e-10;    // times velocity scale; diagnostic only
    GatePolicy gate_policy = GatePolicy::Warn;
};

// One time-step quasi-variational inequality in the velocity w:
//   <B w + lin, v - w> + j(w, v) - j(w, w) >= 0  for all v,
// with j(eta, v) = sum_i weight_i r(x_i, |eta_i|) |v_i| over the contact
// nodes. lin collects the elastic, coupling and load terms of the step.
struct StepProblem {
    Mat B;
    Vec lin;
    std::vector<ContactNode> contact;
    FrictionLaw law;
    SpMat gram;             // inner-product matrix for norms
    double alpha_star = 0;  // coercivity constant of B wrt gram
    double trace_constant = 0;
    double velocity_scale = 1.0;

    double gram_norm(const Vec& v) const { return std::sqrt(v.dot(gram * v)); }
};

struct GateReport {
    bool ok = false;
    double Z0 = 0.0;
    double margin = 0.0;
};

// Solvability threshold Z0 = alpha* / c^2; the fixed point is certified to
// contract when L_r < Z0 (strict).
inline GateReport check_gate(const StepProblem& p, double L_r) {
    GateReport g;
    g.Z0 = p.alpha_star / (p.trace_constant * p.trace_constant);
    g.margin = g.Z0 - L_r;
    g.ok = L_r < g.Z0;
    return g;
}

struct ViSolution {
    Vec w;
    Vec lambda;  // weighted multiplier per contact node, |lambda_i| <= weight_i r_i
    int outer_iterations = 0;
    int newton_iterations = 0;
    double residual = 0.0;  // KKT residual in the dual norm
    std::vector<double> outer_diffs;  // ||w^k - w^{k-1}||_V history
    int stick_count = 0;
    int slip_count = 0;
};

namespace detail {

struct FrozenObjective {
    const StepProblem& p;
    const Vec& c;  // c_i = weight_i g_i per contact node

    double value(const Vec& w, double eps) const {
        const RegularizedAbs reg(eps);
        double j = 0.0;
        for (std::size_t i = 0; i < p.contact.size(); ++i)
            j += c[int(i)] * reg.value(w[p.contact[i].vdof]);
        return 0.5 * w.dot(p.B * w) + p.lin.dot(w) + j;
    }
};

}  // namespace detail

// Semismooth Newton with Armijo backtracking on the eps-regularized convex
// functional, continuing eps down the schedule; g holds the frozen per-node
// friction bounds.
inline ViSolution solve_frozen_bound(const StepProblem& p, const Vec& g, const Vec& w0,
                                     const SolverOptions& opts = {}) {
    const int n = int(p.B.rows());
    Vec c(p.contact.size());
    for (std::size_t i = 0; i < p.contact.size(); ++i) {
        if (g[int(i)] < 0.0) throw SolverError("friction bound must be nonnegative");
        c[int(i)] = p.contact[i].weight * g[int(i)];
    }
    detail::FrozenObjective J{p, c};

    Eigen::SimplicialLDLT<SpMat> gram_solver(p.gram);
    if (gram_solver.info() != Eigen::Success)
        throw SolverError("Gram factorization failed");
    auto dual_norm = [&](const Vec& r) { return std::sqrt(r.dot(gram_solver.solve(r))); };

    const double scale = 1.0 + dual_norm(p.lin);
    ViSolution sol;
    sol.w = w0;

    const double c_max = p.contact.empty() ? 0.0 : c.maxCoeff();
    if (c_max <= 0.0) {
        // frictionless: plain linear solve
        Eigen::LDLT<Mat> ldlt(p.B);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
            throw SolverError("step bilinear form is not positive definite");
        sol.w = ldlt.solve(-p.lin);
    } else {
        for (double eps_raw : opts.eps_schedule) {
            const double eps = eps_raw * opts.velocity_scale;
            const RegularizedAbs reg(eps);
            for (int it = 0; it < opts.max_newton; ++it) {
                Vec grad = p.B * sol.w + p.lin;
                Vec hdiag = Vec::Zero(n);
                for (std::size_t i = 0; i < p.contact.size(); ++i) {
                    const int d = p.contact[i].vdof;
                    grad[d] += c[int(i)] * reg.d1(sol.w[d]);
                    hdiag[d] += c[int(i)] * reg.d2(sol.w[d]);
                }
                if (dual_norm(grad) <= 1e-12 * scale) break;
                Mat H = p.B;
                H.diagonal() += hdiag;
                Eigen::LDLT<Mat> ldlt(H);
                if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
                    throw SolverError("step bilinear form is not positive definite");
                const Vec d = ldlt.solve(-grad);
                double step = 1.0;
                // near the minimum the objective loses the resolution a line
                // search needs; the pure Newton step contracts locally, so take
                // it and let the gradient test terminate
                if (d.norm() > 1e-7 * (1.0 + sol.w.norm())) {
                    // Armijo backtracking, descent enforced
                    const double j0 = J.value(sol.w, eps);
                    const double slope = grad.dot(d);
                    bool accepted = false;
                    for (int ls = 0; ls < 60; ++ls) {
                        if (J.value(sol.w + step * d, eps) <= j0 + 1e-4 * step * slope) {
                            accepted = true;
                            break;
                        }
                        step *= 0.5;
                    }
                    if (!accepted) {
                        // predicted decrease below floating-point resolution:
                        // the iterate cannot be improved at this stage
                        if (std::abs(slope) <= 1e-14 * (1.0 + std::abs(j0))) break;
                        throw SolverError("line search failed in the inner Newton solve");
                    }
                }
                sol.w += step * d;
                ++sol.newton_iterations;
            }
        }
    }

    // unregularized KKT residual and multiplier extraction; the regularized
    // solution leaves sticking nodes at |w| up to ~100 eps, so the stick/slip
    // split must sit well above the final regularization width
    const double eps_min =
        (opts.eps_schedule.empty() ? 0.0 : opts.eps_schedule.back()) * opts.velocity_scale;
    const double slip_tol =
        std::max(opts.slip_tol * opts.velocity_scale, 100.0 * eps_min);
    Vec rho = p.B * sol.w + p.lin;
    sol.lambda = Vec::Zero(int(p.contact.size()));
    Vec res = rho;
    for (std::size_t i = 0; i < p.contact.size(); ++i) {
        const int d = p.contact[i].vdof;
        // the clamped value is the dual-feasible multiplier closest to
        // equilibrium at both sticking and sliding nodes
        const double lam = std::clamp(-rho[d], -c[int(i)], c[int(i)]);
        if (std::abs(sol.w[d]) > slip_tol)
            ++sol.slip_count;
        else
            ++sol.stick_count;
        sol.lambda[int(i)] = lam;
        res[d] = rho[d] + lam;
    }
    sol.residual = dual_norm(res);
    if (sol.residual > std::max(opts.tol, 1e-12 * scale)) {
        char msg[96];
        std::snprintf(msg, sizeof msg, "frozen-bound solve finished with KKT residual %.3e",
                      sol.residual);
        throw SolverError(msg);
    }
    return sol;
}

// Outer Picard fixed point on the friction bound: the bound of iteration k is
// evaluated at the slip rate of iteration k-1, mirroring the frozen-bound
// iteration that certifies uniqueness below the threshold Z0.
inline ViSolution solve_step(const StepProblem& p, const Vec& w_init,
                             const SolverOptions& opts = {},
                             std::ostream* warn_stream = nullptr) {
    const GateReport gate = check_gate(p, p.law.L_r);
    if (!gate.ok) {
        if (opts.gate_policy == GatePolicy::Abort)
            throw SolverError("friction Lipschitz constant exceeds the solvability threshold Z0 = " +
                              std::to_string(gate.Z0));
        if (warn_stream)
            *warn_stream << "warning: L_r >= Z0 = " << gate.Z0
                         << "; fixed point not certified to contract\n";
    }

    auto bounds_at = [&](const Vec& w) {
        Vec g(p.contact.size());
        for (std::size_t i = 0; i < p.contact.size(); ++i) {
            const auto& cn = p.contact[i];
            g[int(i)] = p.law.bound(cn.x, cn.y, std::abs(w[cn.vdof]));
        }
        return g;
    };

    ViSolution sol = solve_frozen_bound(p, bounds_at(w_init), w_init, opts);
    int total_newton = sol.newton_iterations;
    std::vector<double> diffs;
    for (int k = 1; k <= opts.max_outer; ++k) {
        ViSolution next = solve_frozen_bound(p, bounds_at(sol.w), sol.w, opts);
        total_newton += next.newton_iterations;
        const double diff = p.gram_norm(Vec(next.w - sol.w));
        diffs.push_back(diff);
        sol = next;
        sol.outer_iterations = k;
        if (diff <= opts.tol * std::max(1.0, p.gram_norm(sol.w))) {
            sol.newton_iterations = total_newton;
            sol.outer_diffs = diffs;
            return sol;
        }
    }
    std::string hist;
    for (double d : diffs) hist += " " + std::to_string(d);
    throw SolverError("outer fixed point did not converge; iterate diff norms:" + hist);
}

}  // namespace antiplane
