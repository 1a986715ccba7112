#pragma once

#include <functional>
#include <limits>

#include "antiplane/fe_space.hpp"

namespace antiplane {

struct MaterialError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Piecewise-constant-per-element coefficients of the antiplane reduction:
// alpha (viscosity), mu (shear modulus), e (piezoelectric), beta (electric
// permittivity), Me (thermal expansion couple), K (conductivity tensor),
// plus the exchange coefficient K_e per boundary edge (used on G3).
struct MaterialField {
    std::vector<double> alpha, mu, e, beta;
    std::vector<Eigen::Vector2d> Me;
    std::vector<Eigen::Matrix2d> K;
    std::vector<double> ke;  // aligned with mesh.boundary_edges

    static MaterialField constant(const Mesh& mesh, double alpha_, double mu_, double e_,
                                  double beta_, Eigen::Vector2d Me_, Eigen::Matrix2d K_,
                                  double ke_) {
        MaterialField m;
        const std::size_t n = mesh.triangles.size();
        m.alpha.assign(n, alpha_);
        m.mu.assign(n, mu_);
        m.e.assign(n, e_);
        m.beta.assign(n, beta_);
        m.Me.assign(n, Me_);
        m.K.assign(n, K_);
        m.ke.assign(mesh.boundary_edges.size(), ke_);
        return m;
    }

    double alpha_star() const {
        double v = std::numeric_limits<double>::infinity();
        for (double a : alpha) v = std::min(v, a);
        return v;
    }
    double beta_star() const {
        double v = std::numeric_limits<double>::infinity();
        for (double b : beta) v = std::min(v, b);
        return v;
    }
    double m_K() const {
        double v = std::numeric_limits<double>::infinity();
        for (const auto& k : K) {
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(k);
            v = std::min(v, es.eigenvalues().minCoeff());
        }
        return v;
    }

    void validate() const {
        if (alpha_star() <= 0.0)
            throw MaterialError("viscosity alpha must be bounded below by a positive constant");
        if (beta_star() <= 0.0)
            throw MaterialError("permittivity beta must be bounded below by a positive constant");
        for (double m : mu)
            if (m <= 0.0) throw MaterialError("shear modulus mu must be positive");
        for (const auto& k : K)
            if ((k - k.transpose()).cwiseAbs().maxCoeff() != 0.0)
                throw MaterialError("conductivity tensor must be symmetric");
        if (m_K() <= 0.0)
            throw MaterialError("conductivity tensor must be uniformly positive definite");
        for (double k : ke)
            if (k < 0.0) throw MaterialError("exchange coefficient must be nonnegative");
    }
};

using ScalarData = std::function<double(double x, double y, double t)>;

// Time-dependent problem data, each evaluable at quadrature points.
// f3 is an optional prescribed traction on G3 replacing the friction
// condition (manufactured-solution runs); empty otherwise.
struct BoundaryData {
    ScalarData f0, f2, q0, q2, p, theta_R;
    ScalarData f3;

    static ScalarData zero() {
        return [](double, double, double) { return 0.0; };
    }
    static BoundaryData zeros() {
        BoundaryData d;
        d.f0 = d.f2 = d.q0 = d.q2 = d.p = d.theta_R = zero();
        return d;
    }
};

struct ContactNode {
    int node = -1;
    int vdof = -1;       // index into the V free dofs
    double weight = 0.0;  // half-sum of incident G3 edge lengths
    double x = 0.0, y = 0.0;
};

struct AssembledOperators {
    const Mesh* mesh = nullptr;
    const FeSpace *V = nullptr, *W = nullptr, *E = nullptr;
    const MaterialField* mat = nullptr;

    SpMat A_alpha, A_mu, Gram_V;  // V x V
    SpMat A_beta;                 // W x W
    SpMat E_WV;                   // W x V : int e grad u . grad psi
    SpMat A_M;                    // V x E : -int theta (Me . grad v)
    SpMat Ktilde, Gram_E, Mass_E; // E x E

    std::vector<ContactNode> contact;  // free contact dofs on G3

    double alpha_star = 0.0;
    double m_K = 0.0;

    double contact_measure() const {
        double s = 0.0;
        for (const auto& c : contact) s += c.weight;
        return s;
    }
};

namespace detail {

// basis values at the three edge midpoints (degree-2 exact volume rule)
inline constexpr double kMid[3][3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};

inline void scatter(std::vector<Triplet>& out, const FeSpace& rows, const FeSpace& cols,
                    const std::array<int, 3>& tri, const Eigen::Matrix3d& local) {
    for (int a = 0; a < 3; ++a) {
        const int ia = rows.node_to_free[tri[a]];
        if (ia < 0) continue;
        for (int b = 0; b < 3; ++b) {
            const int ib = cols.node_to_free[tri[b]];
            if (ib < 0) continue;
            out.emplace_back(ia, ib, local(a, b));
        }
    }
}

struct EdgeQuadPoint {
    double x, y, wgt;  // weight includes edge length
    double la, lb;     // P1 trace values of the edge endpoints
};

inline std::array<EdgeQuadPoint, 2> edge_gauss2(const Mesh& mesh, const BoundaryEdge& e) {
    const Node& pa = mesh.nodes[e.a];
    const Node& pb = mesh.nodes[e.b];
    const double L = mesh.edge_length(e);
    const double s = 0.5 / std::sqrt(3.0);
    std::array<EdgeQuadPoint, 2> q{};
    int i = 0;
    for (double t : {0.5 - s, 0.5 + s}) {
        q[i].x = pa.x + t * (pb.x - pa.x);
        q[i].y = pa.y + t * (pb.y - pa.y);
        q[i].wgt = 0.5 * L;
        q[i].la = 1.0 - t;
        q[i].lb = t;
        ++i;
    }
    return q;
}

}  // namespace detail

inline AssembledOperators assemble_forms(const Mesh& mesh, const FeSpace& V, const FeSpace& W,
                                         const FeSpace& E, const MaterialField& mat) {
    mat.validate();
    AssembledOperators ops;
    ops.mesh = &mesh;
    ops.V = &V;
    ops.W = &W;
    ops.E = &E;
    ops.mat = &mat;
    ops.alpha_star = mat.alpha_star();
    ops.m_K = mat.m_K();

    std::vector<Triplet> t_alpha, t_mu, t_gv, t_beta, t_ewv, t_am, t_kt, t_ge, t_me;
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        const auto& tri = mesh.triangles[k];
        Eigen::Matrix3d stiff;  // unit-coefficient gradient products
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                stiff(a, b) = g.area * g.grads.col(a).dot(g.grads.col(b));

        detail::scatter(t_alpha, V, V, tri, mat.alpha[k] * stiff);
        detail::scatter(t_mu, V, V, tri, mat.mu[k] * stiff);
        detail::scatter(t_gv, V, V, tri, stiff);
        detail::scatter(t_beta, W, W, tri, mat.beta[k] * stiff);
        detail::scatter(t_ewv, W, V, tri, mat.e[k] * stiff);
        detail::scatter(t_ge, E, E, tri, stiff);

        Eigen::Matrix3d kstiff;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                kstiff(a, b) = g.area * g.grads.col(a).dot(mat.K[k] * g.grads.col(b));
        detail::scatter(t_kt, E, E, tri, kstiff);

        Eigen::Matrix3d mass;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) mass(a, b) = g.area / 12.0 * (a == b ? 2.0 : 1.0);
        detail::scatter(t_me, E, E, tri, mass);

        // a_M(theta, v) = -int theta (Me . grad v): rows V, cols E
        for (int a = 0; a < 3; ++a) {
            const int ia = V.node_to_free[tri[a]];
            if (ia < 0) continue;
            const double coupled = -mat.Me[k].dot(g.grads.col(a)) * g.area / 3.0;
            for (int b = 0; b < 3; ++b) {
                const int jb = E.node_to_free[tri[b]];
                if (jb >= 0) t_am.emplace_back(ia, jb, coupled);
            }
        }
    }

    // Robin exchange term of Ktilde on G3 (exact P1 edge mass scaled by K_e)
    for (std::size_t i = 0; i < mesh.boundary_edges.size(); ++i) {
        const auto& e = mesh.boundary_edges[i];
        if (e.mech != MechTag::G3) continue;
        const double c = mat.ke[i] * mesh.edge_length(e);
        const int ia = E.node_to_free[e.a], ib = E.node_to_free[e.b];
        if (ia >= 0) t_kt.emplace_back(ia, ia, c / 3.0);
        if (ib >= 0) t_kt.emplace_back(ib, ib, c / 3.0);
        if (ia >= 0 && ib >= 0) {
            t_kt.emplace_back(ia, ib, c / 6.0);
            t_kt.emplace_back(ib, ia, c / 6.0);
        }
    }

    auto build = [](int rows, int cols, std::vector<Triplet>& trips) {
        SpMat m(rows, cols);
        m.setFromTriplets(trips.begin(), trips.end());
        return m;
    };
    const int nv = V.n_free(), nw = W.n_free(), ne = E.n_free();
    ops.A_alpha = build(nv, nv, t_alpha);
    ops.A_mu = build(nv, nv, t_mu);
    ops.Gram_V = build(nv, nv, t_gv);
    ops.A_beta = build(nw, nw, t_beta);
    ops.E_WV = build(nw, nv, t_ewv);
    ops.A_M = build(nv, ne, t_am);
    ops.Ktilde = build(ne, ne, t_kt);
    ops.Gram_E = build(ne, ne, t_ge);
    ops.Mass_E = build(ne, ne, t_me);

    // lumped G3 weights per free contact node
    std::map<int, double> weight;
    for (const auto& e : mesh.boundary_edges) {
        if (e.mech != MechTag::G3) continue;
        const double half = 0.5 * mesh.edge_length(e);
        weight[e.a] += half;
        weight[e.b] += half;
    }
    for (const auto& [node, w] : weight) {
        const int dof = V.node_to_free[node];
        if (dof < 0) continue;
        ops.contact.push_back({node, dof, w, mesh.nodes[node].x, mesh.nodes[node].y});
    }
    return ops;
}

// (f, v)_V = int_Omega f0 v + int_{G2} f2 v (+ int_{G3} f3 v when prescribed)
inline Vec assemble_load_f(const Mesh& mesh, const FeSpace& V, const BoundaryData& data,
                           double t) {
    Vec f = Vec::Zero(V.n_free());
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        const auto& tri = mesh.triangles[k];
        const Node* p[3] = {&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]};
        for (int q = 0; q < 3; ++q) {
            double x = 0.0, y = 0.0;
            for (int a = 0; a < 3; ++a) {
                x += detail::kMid[q][a] * p[a]->x;
                y += detail::kMid[q][a] * p[a]->y;
            }
            const double val = data.f0(x, y, t) * g.area / 3.0;
            for (int a = 0; a < 3; ++a) {
                const int ia = V.node_to_free[tri[a]];
                if (ia >= 0) f[ia] += val * detail::kMid[q][a];
            }
        }
    }
    for (const auto& e : mesh.boundary_edges) {
        const ScalarData* datum = nullptr;
        if (e.mech == MechTag::G2) datum = &data.f2;
        else if (e.mech == MechTag::G3 && data.f3) datum = &data.f3;
        if (!datum) continue;
        for (const auto& q : detail::edge_gauss2(mesh, e)) {
            const double val = (*datum)(q.x, q.y, t) * q.wgt;
            const int ia = V.node_to_free[e.a], ib = V.node_to_free[e.b];
            if (ia >= 0) f[ia] += val * q.la;
            if (ib >= 0) f[ib] += val * q.lb;
        }
    }
    return f;
}

// (q, psi)_W = int_{Gb} q2 psi + int_Omega q0 psi
inline Vec assemble_load_q(const Mesh& mesh, const FeSpace& W, const BoundaryData& data,
                           double t) {
    Vec q = Vec::Zero(W.n_free());
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        const auto& tri = mesh.triangles[k];
        const Node* p[3] = {&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]};
        for (int qp = 0; qp < 3; ++qp) {
            double x = 0.0, y = 0.0;
            for (int a = 0; a < 3; ++a) {
                x += detail::kMid[qp][a] * p[a]->x;
                y += detail::kMid[qp][a] * p[a]->y;
            }
            const double val = data.q0(x, y, t) * g.area / 3.0;
            for (int a = 0; a < 3; ++a) {
                const int ia = W.node_to_free[tri[a]];
                if (ia >= 0) q[ia] += val * detail::kMid[qp][a];
            }
        }
    }
    for (const auto& e : mesh.boundary_edges) {
        if (e.elec != ElecTag::Gb) continue;
        for (const auto& qp : detail::edge_gauss2(mesh, e)) {
            const double val = data.q2(qp.x, qp.y, t) * qp.wgt;
            const int ia = W.node_to_free[e.a], ib = W.node_to_free[e.b];
            if (ia >= 0) q[ia] += val * qp.la;
            if (ib >= 0) q[ib] += val * qp.lb;
        }
    }
    return q;
}

// <P(t), mu> = int_Omega p mu + int_{G3} K_e theta_R mu
inline Vec assemble_thermal_source(const Mesh& mesh, const FeSpace& E, const MaterialField& mat,
                                   const BoundaryData& data, double t) {
    Vec out = Vec::Zero(E.n_free());
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        const auto& tri = mesh.triangles[k];
        const Node* pt[3] = {&mesh.nodes[tri[0]], &mesh.nodes[tri[1]], &mesh.nodes[tri[2]]};
        for (int qp = 0; qp < 3; ++qp) {
            double x = 0.0, y = 0.0;
            for (int a = 0; a < 3; ++a) {
                x += detail::kMid[qp][a] * pt[a]->x;
                y += detail::kMid[qp][a] * pt[a]->y;
            }
            const double val = data.p(x, y, t) * g.area / 3.0;
            for (int a = 0; a < 3; ++a) {
                const int ia = E.node_to_free[tri[a]];
                if (ia >= 0) out[ia] += val * detail::kMid[qp][a];
            }
        }
    }
    for (std::size_t i = 0; i < mesh.boundary_edges.size(); ++i) {
        const auto& e = mesh.boundary_edges[i];
        if (e.mech != MechTag::G3) continue;
        for (const auto& qp : detail::edge_gauss2(mesh, e)) {
            const double val = mat.ke[i] * data.theta_R(qp.x, qp.y, t) * qp.wgt;
            const int ia = E.node_to_free[e.a], ib = E.node_to_free[e.b];
            if (ia >= 0) out[ia] += val * qp.la;
            if (ib >= 0) out[ib] += val * qp.lb;
        }
    }
    return out;
}

// <Mtilde v, mu> = -int_Omega (Me . grad v) mu + int_{G3} h_tau(|v|) mu
inline Vec apply_Mtilde(const AssembledOperators& ops, const NodalField& vdot,
                        const std::function<double(double)>& h_tau) {
    Vec out = ops.A_M.transpose() * vdot.values;
    if (h_tau) {
        const Mesh& mesh = *ops.mesh;
        const FeSpace& E = *ops.E;
        for (const auto& e : mesh.boundary_edges) {
            if (e.mech != MechTag::G3) continue;
            const double va = vdot.at_node(e.a), vb = vdot.at_node(e.b);
            for (const auto& qp : detail::edge_gauss2(mesh, e)) {
                const double speed = std::abs(qp.la * va + qp.lb * vb);
                const double val = h_tau(speed) * qp.wgt;
                const int ia = E.node_to_free[e.a], ib = E.node_to_free[e.b];
                if (ia >= 0) out[ia] += val * qp.la;
                if (ib >= 0) out[ib] += val * qp.lb;
            }
        }
    }
    return out;
}

}  // namespace antiplane
