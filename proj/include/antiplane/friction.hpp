#pragma once

#include <random>

#include "antiplane/assembly.hpp"

namespace antiplane {

// Slip-rate-dependent friction bound r(x, s) with Lipschitz constant L_r in s,
// plus the frictional heat generation h_tau fed to the thermal operator.
struct FrictionLaw {
    std::function<double(double x, double y, double s)> r;
    double L_r = 0.0;
    std::function<double(double s)> h_tau;  // empty means no frictional heating

    double bound(double x, double y, double s) const { return r(x, y, s); }

    static FrictionLaw tresca(double r0) {
        FrictionLaw law;
        law.r = [r0](double, double, double) { return r0; };
        law.L_r = 0.0;
        return law;
    }

    // r(s) = a + b s / (1 + s), L_r = b
    static FrictionLaw affine_saturating(double a, double b) {
        FrictionLaw law;
        law.r = [a, b](double, double, double s) { return a + b * s / (1.0 + s); };
        law.L_r = b;
        return law;
    }

    // r(s) = min(a + b s, r_max), L_r = b
    static FrictionLaw linear_capped(double a, double b, double r_max) {
        FrictionLaw law;
        law.r = [a, b, r_max](double, double, double s) { return std::min(a + b * s, r_max); };
        law.L_r = b;
        return law;
    }

    // heating power r(s) * s
    void enable_heating() {
        auto rr = r;
        h_tau = [rr](double s) { return rr(0.0, 0.0, s) * s; };
    }
};

// Shifted smooth absolute value sqrt(s^2 + eps^2) - eps.
struct RegularizedAbs {
    double eps;

    explicit RegularizedAbs(double e) : eps(e) {}
    double value(double s) const { return std::sqrt(s * s + eps * eps) - eps; }
    double d1(double s) const { return s / std::sqrt(s * s + eps * eps); }
    double d2(double s) const {
        const double q = std::sqrt(s * s + eps * eps);
        return eps * eps / (q * q * q);
    }
};

// j(eta, v) = sum over G3 nodes of w_i r(x_i, |eta_i|) |v_i|  (nodal lumping)
inline double eval_j(const AssembledOperators& ops, const FrictionLaw& law,
                     const NodalField& eta, const NodalField& v) {
    double s = 0.0;
    for (const auto& c : ops.contact)
        s += c.weight * law.bound(c.x, c.y, std::abs(eta.values[c.vdof])) *
             std::abs(v.values[c.vdof]);
    return s;
}

inline double eval_j_regularized(const AssembledOperators& ops, const FrictionLaw& law,
                                 const NodalField& eta, const NodalField& v, double eps) {
    const RegularizedAbs reg(eps);
    double s = 0.0;
    for (const auto& c : ops.contact)
        s += c.weight * law.bound(c.x, c.y, std::abs(eta.values[c.vdof])) *
             reg.value(v.values[c.vdof]);
    return s;
}

struct FourTermReport {
    double max_ratio = 0.0;
    bool pass = false;
};

// Samples the exchange bound
//   j(e1,v2)-j(e1,v1)+j(e2,v1)-j(e2,v2) <= c^2 L_r ||e1-e2||_V ||v1-v2||_V
// over random quadruples; passes when the max ratio stays <= 1 + 1e-9.
inline FourTermReport check_four_term_bound(const AssembledOperators& ops, const FrictionLaw& law,
                                            double trace_constant, int samples,
                                            unsigned seed = 1234) {
    FourTermReport rep;
    if (law.L_r <= 0.0) {  // bound is 0 <= 0; trivially satisfied
        rep.pass = true;
        return rep;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const FeSpace& V = *ops.V;
    const double c2Lr = trace_constant * trace_constant * law.L_r;
    auto draw = [&] {
        NodalField f(V);
        for (int i = 0; i < V.n_free(); ++i) f.values[i] = gauss(rng);
        return f;
    };
    for (int s = 0; s < samples; ++s) {
        const NodalField e1 = draw(), e2 = draw(), v1 = draw(), v2 = draw();
        const double lhs = eval_j(ops, law, e1, v2) - eval_j(ops, law, e1, v1) +
                           eval_j(ops, law, e2, v1) - eval_j(ops, law, e2, v2);
        NodalField de(V, Vec(e1.values - e2.values));
        NodalField dv(V, Vec(v1.values - v2.values));
        const double den = c2Lr * seminorm(de) * seminorm(dv);
        if (den > 0.0) rep.max_ratio = std::max(rep.max_ratio, lhs / den);
    }
    rep.pass = rep.max_ratio <= 1.0 + 1e-9;
    return rep;
}

struct JGradient {
    Vec grad;       // over V free dofs
    Vec hess_diag;  // over V free dofs
};

// Gradient and diagonal Hessian of sum_i w_i g_i (sqrt(v_i^2 + eps^2) - eps),
// where g_i are frozen per-contact-node bounds.
inline JGradient regularized_j_gradient(const AssembledOperators& ops, const Vec& g,
                                        const NodalField& v, double eps) {
    const RegularizedAbs reg(eps);
    JGradient out;
    out.grad = Vec::Zero(v.values.size());
    out.hess_diag = Vec::Zero(v.values.size());
    for (std::size_t i = 0; i < ops.contact.size(); ++i) {
        const auto& c = ops.contact[i];
        const double wgi = c.weight * g[int(i)];
        out.grad[c.vdof] += wgi * reg.d1(v.values[c.vdof]);
        out.hess_diag[c.vdof] += wgi * reg.d2(v.values[c.vdof]);
    }
    return out;
}

}  // namespace antiplane
