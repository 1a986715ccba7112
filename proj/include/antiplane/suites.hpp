#pragma once

#include <random>

#include "antiplane/verify.hpp"

namespace antiplane {

// ---------------------------------------------------------------------------
// Random frozen-bound instances used to cross-check the Newton path against
// the classical oracles.
// ---------------------------------------------------------------------------

struct RandomInstance {
    StepProblem p;
    Vec g;  // frozen friction bounds per contact node
};

inline RandomInstance random_instance(std::mt19937_64& rng, int n, int m) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.2, 2.0);

    Mat R(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) R(i, j) = unit(rng);
    RandomInstance inst;
    inst.p.B = R * R.transpose() + double(n) * Mat::Identity(n, n);
    inst.p.lin = Vec::NullaryExpr(n, [&](Eigen::Index) { return 3.0 * unit(rng); });

    inst.p.gram = SpMat(n, n);
    inst.p.gram.setIdentity();
    inst.p.alpha_star =
        Eigen::SelfAdjointEigenSolver<Mat>(inst.p.B).eigenvalues().minCoeff();
    inst.p.trace_constant = 1.0;

    inst.g = Vec(m);
    for (int i = 0; i < m; ++i) {
        ContactNode cn;
        cn.node = i;
        cn.vdof = i;  // contact on the leading dofs
        cn.weight = pos(rng);
        cn.x = double(i);
        cn.y = 0.0;
        inst.p.contact.push_back(cn);
        inst.g[i] = pos(rng);
    }
    inst.p.law = FrictionLaw::tresca(1.0);  // bounds come from g, law unused here
    return inst;
}

struct OracleReport {
    int instances = 0;
    double max_uzawa_diff = 0.0;  // gram-norm gap, relative to max(1, ||w||)
    double max_brute_diff = 0.0;  // sup-norm gap on tiny instances
    bool pass = false;
};

inline OracleReport run_oracle_suite(unsigned seed, int n_instances = 20, int n_tiny = 10,
                                     double uzawa_tol = 5e-7, double brute_tol = 2e-4) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dim(4, 30);
    OracleReport rep;
    SolverOptions opts;
    opts.tol = 1e-12;

    for (int k = 0; k < n_instances; ++k) {
        const int n = dim(rng);
        const int m = std::max(1, n / 3);
        const RandomInstance inst = random_instance(rng, n, m);
        const ViSolution mine = solve_frozen_bound(inst.p, inst.g, Vec::Zero(n), opts);
        const ViSolution ref = uzawa_oracle(inst.p, inst.g, 1e-11);
        const double diff = inst.p.gram_norm(Vec(mine.w - ref.w)) /
                            std::max(1.0, inst.p.gram_norm(mine.w));
        rep.max_uzawa_diff = std::max(rep.max_uzawa_diff, diff);
        ++rep.instances;
    }
    std::uniform_int_distribution<int> tiny_dim(1, 3);
    for (int k = 0; k < n_tiny; ++k) {
        const int n = tiny_dim(rng);
        const RandomInstance inst = random_instance(rng, n, n);
        const ViSolution mine = solve_frozen_bound(inst.p, inst.g, Vec::Zero(n), opts);
        const Vec ref = brute_force_oracle(inst.p, inst.g);
        rep.max_brute_diff =
            std::max(rep.max_brute_diff, (mine.w - ref).cwiseAbs().maxCoeff());
        ++rep.instances;
    }
    rep.pass = rep.max_uzawa_diff <= uzawa_tol && rep.max_brute_diff <= brute_tol;
    return rep;
}

// ---------------------------------------------------------------------------
// Mesh-problem suite wrappers with canonical setups
// ---------------------------------------------------------------------------

inline GateStudyReport run_gate_suite(int nx = 8) {
    const Mesh mesh = generate_rect_mesh(1.0, 1.0, nx, nx);
    const FeSpace V = build_space(mesh, SpaceKind::V);
    const FeSpace W = build_space(mesh, SpaceKind::W);
    const FeSpace E = build_space(mesh, SpaceKind::E);
    const MaterialField mat = MaterialField::constant(mesh, 2.0, 1.0, 0.5, 1.3,
                                                      Eigen::Vector2d(0.1, 0.1),
                                                      Eigen::Matrix2d::Identity(), 0.5);
    const AssembledOperators ops = assemble_forms(mesh, V, W, E, mat);
    const double c = estimate_trace_constant(V);

    BoundaryData data = BoundaryData::zeros();
    data.f0 = [](double x, double, double) { return 4.0 + x; };
    data.f2 = [](double, double y, double) { return 1.0 - y; };
    const Vec load = assemble_load_f(mesh, V, data, 1.0);

    return gate_study(ops, c, load, {0.1, 0.3, 0.5, 0.7, 0.9, 1.5, 3.0}, 0.2);
}

struct Lemma2SuiteReport {
    Lemma2Report coarse, fine;
    bool pass = false;
};

inline Lemma2SuiteReport run_lemma2_suite(int nx = 8, int N = 16) {
    BoundaryData d1 = BoundaryData::zeros();
    d1.f0 = [](double x, double, double t) { return (2.0 + x) * std::sin(t); };
    d1.p = [](double, double y, double t) { return y * t; };
    BoundaryData d2 = d1;
    d2.f0 = [](double x, double, double t) { return (2.0 + x) * std::sin(t) + 0.5 * t; };

    FrictionLaw law = FrictionLaw::affine_saturating(0.3, 0.2);
    law.enable_heating();
    SolverOptions opts;
    opts.tol = 1e-11;

    auto run = [&](int n) {
        const Mesh mesh = generate_rect_mesh(1.0, 1.0, n, n);
        const MaterialField mat = MaterialField::constant(mesh, 2.0, 1.0, 0.5, 1.3,
                                                          Eigen::Vector2d(0.2, 0.1),
                                                          Eigen::Matrix2d::Identity(), 0.6);
        return lemma2_stability(mesh, mat, d1, d2, law, TimeGrid(1.0, N), opts);
    };
    Lemma2SuiteReport rep;
    rep.coarse = run(nx);
    rep.fine = run(2 * nx);  // one mesh refinement, same time grid
    const double lo = std::min(rep.coarse.sup_ratio, rep.fine.sup_ratio);
    const double hi = std::max(rep.coarse.sup_ratio, rep.fine.sup_ratio);
    rep.pass = rep.coarse.finite && rep.fine.finite && hi <= 2.0 * lo + 1e-9;
    return rep;
}

// ---------------------------------------------------------------------------
// Structural invariants of the assembled forms
// ---------------------------------------------------------------------------

struct InvariantReport {
    std::vector<std::pair<std::string, bool>> checks;
    bool pass = true;

    void add(const std::string& name, bool ok) {
        checks.emplace_back(name, ok);
        pass = pass && ok;
    }
};

inline InvariantReport run_invariant_suite(int nx = 16, unsigned seed = 7, int samples = 50) {
    const Mesh mesh = generate_rect_mesh(1.0, 1.0, nx, nx);
    const FeSpace V = build_space(mesh, SpaceKind::V);
    const FeSpace W = build_space(mesh, SpaceKind::W);
    const FeSpace E = build_space(mesh, SpaceKind::E);
    const double alpha = 1.7, mu = 0.9, e = 0.4, beta = 1.1, ke = 0.3;
    const Eigen::Vector2d Me(0.2, -0.1);
    Eigen::Matrix2d K;
    K << 1.2, 0.3, 0.3, 0.8;
    const MaterialField mat = MaterialField::constant(mesh, alpha, mu, e, beta, Me, K, ke);
    const AssembledOperators ops = assemble_forms(mesh, V, W, E, mat);

    InvariantReport rep;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    auto rand_vec = [&](int n) {
        return Vec(Vec::NullaryExpr(n, [&](Eigen::Index) { return gauss(rng); }));
    };

    auto sym_gap = [](const SpMat& m) {
        return (Mat(m) - Mat(m).transpose()).cwiseAbs().maxCoeff();
    };
    rep.add("A_alpha symmetric", sym_gap(ops.A_alpha) == 0.0);
    rep.add("A_mu symmetric", sym_gap(ops.A_mu) == 0.0);
    rep.add("A_beta symmetric", sym_gap(ops.A_beta) == 0.0);
    rep.add("Ktilde symmetric", sym_gap(ops.Ktilde) == 0.0);
    rep.add("Mass_E symmetric", sym_gap(ops.Mass_E) == 0.0);

    bool ellip_a = true, ellip_b = true, monotone_k = true, mass_pd = true;
    for (int k = 0; k < samples; ++k) {
        const Vec v = rand_vec(V.n_free());
        const Vec w = rand_vec(W.n_free());
        const Vec th = rand_vec(E.n_free());
        const double vv = v.dot(ops.Gram_V * v);
        const double tt = th.dot(ops.Gram_E * th);
        ellip_a = ellip_a && v.dot(ops.A_alpha * v) >= ops.alpha_star * vv - 1e-12 * vv;
        ellip_b = ellip_b && w.dot(ops.A_beta * w) > 0.0;
        monotone_k =
            monotone_k && th.dot(ops.Ktilde * th) >= ops.m_K * tt - 1e-12 * ops.m_K * tt;
        mass_pd = mass_pd && th.dot(ops.Mass_E * th) > 0.0;
    }
    rep.add("a_alpha elliptic with constant alpha*", ellip_a);
    rep.add("a_beta positive definite", ellip_b);
    rep.add("Ktilde >= m_K Gram_E", monotone_k);
    rep.add("Mass_E positive definite", mass_pd);

    // scaling: assembling with 2x material doubles the forms
    const MaterialField mat2 =
        MaterialField::constant(mesh, 2 * alpha, 2 * mu, 2 * e, 2 * beta, 2 * Me, 2 * K, 2 * ke);
    const AssembledOperators ops2 = assemble_forms(mesh, V, W, E, mat2);
    rep.add("forms scale linearly in the coefficients",
            (Mat(ops2.A_alpha) - 2.0 * Mat(ops.A_alpha)).cwiseAbs().maxCoeff() < 1e-12 &&
                (Mat(ops2.Ktilde) - 2.0 * Mat(ops.Ktilde)).cwiseAbs().maxCoeff() < 1e-12 &&
                (Mat(ops2.E_WV) - 2.0 * Mat(ops.E_WV)).cwiseAbs().maxCoeff() < 1e-12);

    // convexity of the friction functional along random segments
    const FrictionLaw law = FrictionLaw::affine_saturating(0.4, 0.3);
    bool convex = true;
    const NodalField eta(V, rand_vec(V.n_free()));
    for (int k = 0; k < 50; ++k) {
        const NodalField v1(V, rand_vec(V.n_free()));
        const NodalField v2(V, rand_vec(V.n_free()));
        const double s = 0.5;
        const NodalField mid(V, Vec(s * v1.values + (1 - s) * v2.values));
        const double lhs = eval_j(ops, law, eta, mid);
        const double rhs = s * eval_j(ops, law, eta, v1) + (1 - s) * eval_j(ops, law, eta, v2);
        convex = convex && lhs <= rhs + 1e-12 * std::abs(rhs);
    }
    rep.add("j(eta, .) convex", convex);

    // trace inequality at the estimated constant
    const double c = estimate_trace_constant(V);
    bool trace_ok = true;
    for (int k = 0; k < std::max(samples, 100); ++k) {
        const Vec v = rand_vec(V.n_free());
        NodalField f(V, v);
        trace_ok = trace_ok && trace_norm_G3(f) <= c * seminorm(f) * (1.0 + 1e-9);
    }
    rep.add("trace inequality holds at c_Vh", trace_ok);

    return rep;
}

}  // namespace antiplane
