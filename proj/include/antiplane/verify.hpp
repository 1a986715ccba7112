#pragma once

#include "antiplane/stepper.hpp"

namespace antiplane {

struct VerifyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Manufactured solutions
// ---------------------------------------------------------------------------

// Spatial factor of a separable field S(x,y) * t with the derivatives needed
// to manufacture all problem data.
struct SpatialFn {
    std::function<double(double, double)> val, dx, dy, dxx, dxy, dyy;

    double lap(double x, double y) const { return dxx(x, y) + dyy(x, y); }
    Eigen::Vector2d grad(double x, double y) const { return {dx(x, y), dy(x, y)}; }
};

// Exact solution (u, phi, theta) = t * (Su, Sphi, Stheta) on the unit square
// with the standard tagging (G3 bottom, G1/Ga top, G2/Gb sides), constant
// coefficients, and the friction condition replaced by the consistent
// prescribed traction on G3.
struct MmsCase {
    std::string name;
    SpatialFn su, sphi, stheta;
    double alpha = 1.5, mu = 1.0, e = 0.7, beta = 1.2;
    Eigen::Vector2d Me{0.3, 0.2};
    Eigen::Matrix2d K{{1.0, 0.2}, {0.2, 1.3}};
    double ke = 0.8;
    double T = 0.5;

    MaterialField material(const Mesh& mesh) const {
        return MaterialField::constant(mesh, alpha, mu, e, beta, Me, K, ke);
    }

    // outward normal of the unit square at a boundary quadrature point
    static Eigen::Vector2d normal_at(double x, double y) {
        if (x < 1e-12) return {-1.0, 0.0};
        if (x > 1.0 - 1e-12) return {1.0, 0.0};
        if (y < 1e-12) return {0.0, -1.0};
        if (y > 1.0 - 1e-12) return {0.0, 1.0};
        throw VerifyError("boundary quadrature point not on the unit-square boundary");
    }

    BoundaryData data() const {
        BoundaryData d;
        const auto su_ = su, sphi_ = sphi, stheta_ = stheta;
        const double a = alpha, m = mu, ee = e, b = beta, ke_ = ke;
        const Eigen::Vector2d me = Me;
        const Eigen::Matrix2d kk = K;

        d.f0 = [=](double x, double y, double t) {
            return -(a * su_.lap(x, y) + t * (m * su_.lap(x, y) + ee * sphi_.lap(x, y))) +
                   t * me.dot(stheta_.grad(x, y));
        };
        d.q0 = [=](double x, double y, double t) {
            return t * (ee * su_.lap(x, y) - b * sphi_.lap(x, y));
        };
        d.p = [=](double x, double y, double t) {
            const double divK = kk(0, 0) * stheta_.dxx(x, y) + 2.0 * kk(0, 1) * stheta_.dxy(x, y) +
                                kk(1, 1) * stheta_.dyy(x, y);
            return stheta_.val(x, y) - t * divK + me.dot(su_.grad(x, y));
        };
        auto traction = [=](double x, double y, double t) {
            const Eigen::Vector2d nu = normal_at(x, y);
            return a * nu.dot(su_.grad(x, y)) +
                   t * (m * nu.dot(su_.grad(x, y)) + ee * nu.dot(sphi_.grad(x, y))) -
                   t * stheta_.val(x, y) * me.dot(nu);
        };
        d.f2 = traction;
        d.f3 = traction;
        // natural boundary condition of the weak electric equation:
        // (beta grad(phi) - e grad(u)) . nu = q2 on Gamma_b
        d.q2 = [=](double x, double y, double t) {
            const Eigen::Vector2d nu = normal_at(x, y);
            return t * (b * nu.dot(sphi_.grad(x, y)) - ee * nu.dot(su_.grad(x, y)));
        };
        d.theta_R = [=](double x, double y, double t) {
            const Eigen::Vector2d nu = normal_at(x, y);
            return t * (stheta_.val(x, y) + nu.dot(kk * stheta_.grad(x, y)) / ke_);
        };
        return d;
    }
};

namespace detail {

inline SpatialFn sine_strip() {  // sin(pi x)(1 - y)
    const double pi = M_PI;
    SpatialFn s;
    s.val = [pi](double x, double y) { return std::sin(pi * x) * (1.0 - y); };
    s.dx = [pi](double x, double y) { return pi * std::cos(pi * x) * (1.0 - y); };
    s.dy = [pi](double x, double) { return -std::sin(pi * x); };
    s.dxx = [pi](double x, double y) { return -pi * pi * std::sin(pi * x) * (1.0 - y); };
    s.dxy = [pi](double x, double) { return -pi * std::cos(pi * x); };
    s.dyy = [](double, double) { return 0.0; };
    return s;
}

inline SpatialFn sine_parabola() {  // sin(pi x)(1 - y^2): flux-free on y=0
    const double pi = M_PI;
    SpatialFn s;
    s.val = [pi](double x, double y) { return std::sin(pi * x) * (1.0 - y * y); };
    s.dx = [pi](double x, double y) { return pi * std::cos(pi * x) * (1.0 - y * y); };
    s.dy = [pi](double x, double y) { return -2.0 * y * std::sin(pi * x); };
    s.dxx = [pi](double x, double y) { return -pi * pi * std::sin(pi * x) * (1.0 - y * y); };
    s.dxy = [pi](double x, double y) { return -2.0 * pi * y * std::cos(pi * x); };
    s.dyy = [pi](double x, double) { return -2.0 * std::sin(pi * x); };
    return s;
}

inline SpatialFn combine(const SpatialFn& f, double cf, const SpatialFn& g, double cg) {
    SpatialFn s;
    s.val = [=](double x, double y) { return cf * f.val(x, y) + cg * g.val(x, y); };
    s.dx = [=](double x, double y) { return cf * f.dx(x, y) + cg * g.dx(x, y); };
    s.dy = [=](double x, double y) { return cf * f.dy(x, y) + cg * g.dy(x, y); };
    s.dxx = [=](double x, double y) { return cf * f.dxx(x, y) + cg * g.dxx(x, y); };
    s.dxy = [=](double x, double y) { return cf * f.dxy(x, y) + cg * g.dxy(x, y); };
    s.dyy = [=](double x, double y) { return cf * f.dyy(x, y) + cg * g.dyy(x, y); };
    return s;
}

inline SpatialFn poly_strip() {  // x(1 - y)
    SpatialFn s;
    s.val = [](double x, double y) { return x * (1.0 - y); };
    s.dx = [](double, double y) { return 1.0 - y; };
    s.dy = [](double x, double) { return -x; };
    s.dxx = [](double, double) { return 0.0; };
    s.dxy = [](double, double) { return -1.0; };
    s.dyy = [](double, double) { return 0.0; };
    return s;
}

inline SpatialFn poly_parabola() {  // x(1 - y^2)
    SpatialFn s;
    s.val = [](double x, double y) { return x * (1.0 - y * y); };
    s.dx = [](double, double y) { return 1.0 - y * y; };
    s.dy = [](double x, double y) { return -2.0 * x * y; };
    s.dxx = [](double, double) { return 0.0; };
    s.dxy = [](double, double y) { return -2.0 * y; };
    s.dyy = [](double x, double) { return -2.0 * x; };
    return s;
}

inline SpatialFn poly_bubble() {  // x(1-x)(1-y)
    SpatialFn s;
    s.val = [](double x, double y) { return x * (1.0 - x) * (1.0 - y); };
    s.dx = [](double x, double y) { return (1.0 - 2.0 * x) * (1.0 - y); };
    s.dy = [](double x, double) { return -x * (1.0 - x); };
    s.dxx = [](double, double y) { return -2.0 * (1.0 - y); };
    s.dxy = [](double x, double) { return -(1.0 - 2.0 * x); };
    s.dyy = [](double, double) { return 0.0; };
    return s;
}

}  // namespace detail

inline MmsCase mms_case_trig() {
    MmsCase c;
    c.name = "trig";
    c.su = detail::sine_strip();
    c.sphi = detail::combine(detail::sine_strip(), c.e / c.beta, detail::sine_parabola(), 1.0);
    c.stheta = detail::sine_strip();
    return c;
}

inline MmsCase mms_case_poly() {
    MmsCase c;
    c.name = "poly";
    c.su = detail::poly_strip();
    c.sphi = detail::combine(detail::poly_strip(), c.e / c.beta, detail::poly_parabola(), 1.0);
    c.stheta = detail::poly_bubble();
    return c;
}

// H1-seminorm distance between a discrete field and t * S, 3-point quadrature.
inline double h1_error(const NodalField& fh, const SpatialFn& s, double t) {
    const Mesh& mesh = *fh.space->mesh;
    double acc = 0.0;
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        const auto& tri = mesh.triangles[k];
        Eigen::Vector2d gh = Eigen::Vector2d::Zero();
        for (int a = 0; a < 3; ++a) gh += fh.at_node(tri[a]) * g.grads.col(a);
        const Node* p[3] = {&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]};
        for (int q = 0; q < 3; ++q) {
            double x = 0.0, y = 0.0;
            for (int a = 0; a < 3; ++a) {
                x += antiplane::detail::kMid[q][a] * p[a]->x;
                y += antiplane::detail::kMid[q][a] * p[a]->y;
            }
            acc += g.area / 3.0 * (gh - t * s.grad(x, y)).squaredNorm();
        }
    }
    return std::sqrt(acc);
}

struct ConvergenceReport {
    std::vector<double> h;
    std::vector<double> err_u, err_phi, err_theta;
    double rate_u = 0.0, rate_phi = 0.0, rate_theta = 0.0;
    bool pass = false;
};

inline double fit_rate(const std::vector<double>& h, const std::vector<double>& err) {
    // least-squares slope of log err against log h
    const int n = int(h.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double x = std::log(h[i]), y = std::log(std::max(err[i], 1e-300));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Runs the full coupled scheme on the manufactured case over `levels`
// refinements with dt proportional to h and fits convergence rates.
inline ConvergenceReport run_mms(const MmsCase& mms, int levels, int nx0 = 4,
                                 double rate_threshold = 0.9) {
    if (levels < 3) throw VerifyError("convergence study needs at least 3 levels");
    ConvergenceReport rep;
    for (int lvl = 0; lvl < levels; ++lvl) {
        const int nx = nx0 << lvl;
        const Mesh mesh = generate_rect_mesh(1.0, 1.0, nx, nx);
        const FeSpace V = build_space(mesh, SpaceKind::V);
        const FeSpace W = build_space(mesh, SpaceKind::W);
        const FeSpace E = build_space(mesh, SpaceKind::E);
        const MaterialField mat = mms.material(mesh);
        const BoundaryData data = mms.data();
        SolverOptions opts;
        opts.tol = 1e-11;
        CoupledStepper stepper(mesh, V, W, E, mat, data, FrictionLaw::tresca(0.0), opts);

        const TimeGrid grid(mms.T, nx);  // dt = T/nx, proportional to h
        SystemState state = stepper.initialize(NodalField(V), NodalField(E));
        for (int n = 0; n < grid.N; ++n) state = stepper.advance(state, grid.dt());

        rep.h.push_back(1.0 / nx);
        rep.err_u.push_back(h1_error(state.u, mms.su, mms.T));
        rep.err_phi.push_back(h1_error(state.phi, mms.sphi, mms.T));
        rep.err_theta.push_back(h1_error(state.theta, mms.stheta, mms.T));
    }
    rep.rate_u = fit_rate(rep.h, rep.err_u);
    rep.rate_phi = fit_rate(rep.h, rep.err_phi);
    rep.rate_theta = fit_rate(rep.h, rep.err_theta);
    rep.pass = rep.rate_u >= rate_threshold && rep.rate_phi >= rate_threshold &&
               rep.rate_theta >= rate_threshold;
    return rep;
}

// ---------------------------------------------------------------------------
// Oracles for the frozen-bound problem
// ---------------------------------------------------------------------------

// Classical dual ascent on the contact multipliers with projection onto
// [-w_i g_i, w_i g_i], step alpha*/2.
inline ViSolution uzawa_oracle(const StepProblem& p, const Vec& g, double tol,
                               int max_iters = 200000) {
    Vec c(p.contact.size());
    for (std::size_t i = 0; i < p.contact.size(); ++i)
        c[int(i)] = p.contact[i].weight * g[int(i)];

    Eigen::LDLT<Mat> ldlt(p.B);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
        throw VerifyError("Uzawa oracle requires a positive definite form");
    const double rho = 0.5 * p.alpha_star;

    ViSolution sol;
    sol.lambda = Vec::Zero(int(p.contact.size()));
    Vec w_prev = Vec::Zero(p.B.rows());
    for (int it = 0; it < max_iters; ++it) {
        Vec rhs = -p.lin;
        for (std::size_t i = 0; i < p.contact.size(); ++i)
            rhs[p.contact[i].vdof] -= sol.lambda[int(i)];
        sol.w = ldlt.solve(rhs);
        for (std::size_t i = 0; i < p.contact.size(); ++i) {
            const double next = sol.lambda[int(i)] + rho * sol.w[p.contact[i].vdof];
            sol.lambda[int(i)] = std::clamp(next, -c[int(i)], c[int(i)]);
        }
        if (it > 0 && p.gram_norm(Vec(sol.w - w_prev)) <= tol * std::max(1.0, p.gram_norm(sol.w))) {
            sol.outer_iterations = it + 1;
            return sol;
        }
        w_prev = sol.w;
    }
    throw VerifyError("Uzawa iteration cap exceeded");
}

// Exhaustive grid minimization of the frozen-bound objective over a box
// bracketing the solution, with interior refinement. Tiny instances only.
inline Vec brute_force_oracle(const StepProblem& p, const Vec& g, int grid_n = 41,
                              int passes = 10) {
    const int n = int(p.B.rows());
    if (n > 3) throw VerifyError("brute-force oracle limited to 3 dofs");
    Vec c = Vec::Zero(n);
    for (std::size_t i = 0; i < p.contact.size(); ++i)
        c[p.contact[i].vdof] += p.contact[i].weight * g[int(i)];
    auto J = [&](const Vec& w) {
        return 0.5 * w.dot(p.B * w) + p.lin.dot(w) + c.dot(w.cwiseAbs());
    };

    const Vec w_lin = p.B.ldlt().solve(-p.lin);
    const double half = 2.0 * (w_lin.cwiseAbs().maxCoeff() + 1.0);
    Vec lo = (w_lin.array() - half).matrix();
    Vec hi = (w_lin.array() + half).matrix();

    Vec best = w_lin;
    for (int pass = 0; pass < passes; ++pass) {
        Vec idx_best = Vec::Zero(n);
        double j_best = std::numeric_limits<double>::infinity();
        std::vector<int> idx(n, 0);
        const long total = long(std::pow(double(grid_n), n));
        for (long flat = 0; flat < total; ++flat) {
            long rem = flat;
            Vec w(n);
            for (int d = 0; d < n; ++d) {
                idx[d] = int(rem % grid_n);
                rem /= grid_n;
                w[d] = lo[d] + (hi[d] - lo[d]) * idx[d] / (grid_n - 1);
            }
            const double j = J(w);
            if (j < j_best) {
                j_best = j;
                best = w;
                for (int d = 0; d < n; ++d) idx_best[d] = idx[d];
            }
        }
        if (pass == 0)
            for (int d = 0; d < n; ++d)
                if (idx_best[d] == 0 || idx_best[d] == grid_n - 1)
                    throw VerifyError("brute-force box too small; argmin on the boundary");
        // shrink to +-2 cells around the argmin
        for (int d = 0; d < n; ++d) {
            const double cell = (hi[d] - lo[d]) / (grid_n - 1);
            const double center = best[d];
            lo[d] = center - 2.0 * cell;
            hi[d] = center + 2.0 * cell;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Gate and stability studies
// ---------------------------------------------------------------------------

struct GateSweepPoint {
    double L_r = 0.0;
    bool converged = false;
    int outer_iterations = 0;
    double measured_contraction = 0.0;
    double contraction_bound = 0.0;  // c^2 L_r / alpha*
};

struct GateStudyReport {
    double Z0 = 0.0;
    std::vector<GateSweepPoint> points;
    bool pass = false;  // all certified points converged within the bound + slack
};

// Sweeps the friction Lipschitz constant across the threshold and measures
// the outer Picard contraction. Convergence is asserted only for
// L_r <= 0.9 Z0; beyond the threshold behavior is recorded.
inline GateStudyReport gate_study(const AssembledOperators& ops, double trace_constant,
                                  const Vec& load, const std::vector<double>& lr_fractions,
                                  double r0, SolverOptions opts = {}) {
    GateStudyReport rep;
    const double Z0 = ops.alpha_star / (trace_constant * trace_constant);
    rep.Z0 = Z0;
    rep.pass = true;
    opts.max_outer = 2000;
    for (double frac : lr_fractions) {
        GateSweepPoint pt;
        pt.L_r = frac * Z0;
        pt.contraction_bound =
            trace_constant * trace_constant * pt.L_r / ops.alpha_star;  // = frac

        StepProblem p;
        p.B = Mat(ops.A_alpha);
        p.lin = -load;
        p.contact = ops.contact;
        p.law = FrictionLaw::linear_capped(r0, pt.L_r, std::numeric_limits<double>::infinity());
        p.gram = ops.Gram_V;
        p.alpha_star = ops.alpha_star;
        p.trace_constant = trace_constant;

        try {
            const ViSolution sol = solve_step(p, Vec::Zero(p.B.rows()), opts);
            pt.converged = true;
            pt.outer_iterations = sol.outer_iterations;
            const auto& d = sol.outer_diffs;
            const double floor = 1e3 * opts.tol * std::max(1.0, p.gram_norm(sol.w));
            for (std::size_t k = 1; k < d.size(); ++k)
                if (d[k - 1] > floor)
                    pt.measured_contraction = std::max(pt.measured_contraction, d[k] / d[k - 1]);
        } catch (const SolverError&) {
            pt.converged = false;
        }
        if (frac <= 0.9 &&
            (!pt.converged || pt.measured_contraction > pt.contraction_bound + 0.1))
            rep.pass = false;
        rep.points.push_back(pt);
    }
    return rep;
}

struct Lemma2Report {
    double sup_ratio = 0.0;   // sup_t ||theta1 - theta2||_E / int ||w1 - w2||_V^2
    bool finite = false;
};

// Two full runs differing only in the data; measures the constant of the
// temperature stability estimate with a left-rectangle time integral.
inline Lemma2Report lemma2_stability(const Mesh& mesh, const MaterialField& mat,
                                     const BoundaryData& d1, const BoundaryData& d2,
                                     const FrictionLaw& law, const TimeGrid& grid,
                                     SolverOptions opts = {}) {
    const FeSpace V = build_space(mesh, SpaceKind::V);
    const FeSpace W = build_space(mesh, SpaceKind::W);
    const FeSpace E = build_space(mesh, SpaceKind::E);
    CoupledStepper s1(mesh, V, W, E, mat, d1, law, opts);
    CoupledStepper s2(mesh, V, W, E, mat, d2, law, opts);
    SystemState x1 = s1.initialize(NodalField(V), NodalField(E));
    SystemState x2 = s2.initialize(NodalField(V), NodalField(E));

    Lemma2Report rep;
    double rhs = 0.0;
    const double dt = grid.dt();
    for (int n = 0; n < grid.N; ++n) {
        x1 = s1.advance(x1, dt);
        x2 = s2.advance(x2, dt);
        NodalField dw(V, Vec(x1.w.values - x2.w.values));
        const double dwn = seminorm(dw);
        rhs += dt * dwn * dwn;
        NodalField dtheta(E, Vec(x1.theta.values - x2.theta.values));
        const double lhs = seminorm(dtheta);
        rep.sup_ratio = std::max(rep.sup_ratio, lhs / std::max(rhs, 1e-14));
    }
    rep.finite = std::isfinite(rep.sup_ratio);
    return rep;
}

}  // namespace antiplane
