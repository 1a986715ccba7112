#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/Eigenvalues>
#include <set>
#include <stdexcept>
#include <vector>

#include "antiplane/mesh.hpp"

namespace antiplane {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct SpaceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// V: zero on G1 (displacement), W: zero on Ga (potential),
// E: zero on G1 u G2 (temperature).
enum class SpaceKind { V, W, E };

// P1 element geometry: area and the constant gradients of the three
// barycentric basis functions.
struct ElementGeometry {
    double area = 0.0;
    Eigen::Matrix<double, 2, 3> grads;  // column k = grad of basis at vertex k
};

inline ElementGeometry element_geometry(const Mesh& mesh, int k) {
    const auto& t = mesh.triangles[k];
    const Node& p0 = mesh.nodes[t[0]];
    const Node& p1 = mesh.nodes[t[1]];
    const Node& p2 = mesh.nodes[t[2]];
    ElementGeometry g;
    g.area = Mesh::signed_area(p0, p1, p2);
    const double inv2A = 1.0 / (2.0 * g.area);
    // grad lambda_k is orthogonal to the opposite edge
    g.grads.col(0) << (p1.y - p2.y) * inv2A, (p2.x - p1.x) * inv2A;
    g.grads.col(1) << (p2.y - p0.y) * inv2A, (p0.x - p2.x) * inv2A;
    g.grads.col(2) << (p0.y - p1.y) * inv2A, (p1.x - p0.x) * inv2A;
    return g;
}

// Scalar P1 space with homogeneous Dirichlet constraints determined by kind.
// A node on a tag interface is constrained if any incident boundary edge is
// Dirichlet for the space (conforming subspace).
struct FeSpace {
    const Mesh* mesh = nullptr;
    SpaceKind kind = SpaceKind::V;
    std::vector<int> free_dofs;     // ascending node indices
    std::vector<int> node_to_free;  // -1 when constrained

    int n_free() const { return int(free_dofs.size()); }
    bool is_free(int node) const { return node_to_free[node] >= 0; }
};

inline bool dirichlet_edge(SpaceKind kind, const BoundaryEdge& e) {
    switch (kind) {
        case SpaceKind::V: return e.mech == MechTag::G1;
        case SpaceKind::W: return e.elec == ElecTag::Ga;
        case SpaceKind::E: return e.mech == MechTag::G1 || e.mech == MechTag::G2;
    }
    return false;
}

inline FeSpace build_space(const Mesh& mesh, SpaceKind kind) {
    FeSpace s;
    s.mesh = &mesh;
    s.kind = kind;
    std::set<int> constrained;
    for (const auto& e : mesh.boundary_edges) {
        if (dirichlet_edge(kind, e)) {
            constrained.insert(e.a);
            constrained.insert(e.b);
        }
    }
    s.node_to_free.assign(mesh.nodes.size(), -1);
    for (int i = 0; i < int(mesh.nodes.size()); ++i) {
        if (!constrained.count(i)) {
            s.node_to_free[i] = int(s.free_dofs.size());
            s.free_dofs.push_back(i);
        }
    }
    if (s.free_dofs.empty()) throw SpaceError("space has no free dofs");
    return s;
}

// Values on free dofs only; constrained nodes are implicitly zero.
struct NodalField {
    const FeSpace* space = nullptr;
    Vec values;

    NodalField() = default;
    explicit NodalField(const FeSpace& s) : space(&s), values(Vec::Zero(s.n_free())) {}
    NodalField(const FeSpace& s, Vec v) : space(&s), values(std::move(v)) {
        if (values.size() != s.n_free()) throw SpaceError("field size mismatch");
    }

    double at_node(int node) const {
        const int f = space->node_to_free[node];
        return f >= 0 ? values[f] : 0.0;
    }

    // Interpolate g at the free nodes.
    template <class F>
    static NodalField interpolate(const FeSpace& s, F&& g) {
        NodalField field(s);
        for (int k = 0; k < s.n_free(); ++k) {
            const Node& p = s.mesh->nodes[s.free_dofs[k]];
            field.values[k] = g(p.x, p.y);
        }
        return field;
    }
};

// sqrt(int_Omega |grad v|^2), exact for P1.
inline double seminorm(const NodalField& v) {
    const Mesh& mesh = *v.space->mesh;
    double acc = 0.0;
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        Eigen::Vector2d grad = Eigen::Vector2d::Zero();
        for (int a = 0; a < 3; ++a) grad += v.at_node(mesh.triangles[k][a]) * g.grads.col(a);
        acc += g.area * grad.squaredNorm();
    }
    return std::sqrt(acc);
}

// sqrt(int_{G3} v^2), exact per-edge integration of the P1 trace.
inline double trace_norm_G3(const NodalField& v) {
    const Mesh& mesh = *v.space->mesh;
    if (mesh.boundary_measure(MechTag::G3) <= 0.0)
        throw SpaceError("measure(Gamma_3) = 0");
    double acc = 0.0;
    for (const auto& e : mesh.boundary_edges) {
        if (e.mech != MechTag::G3) continue;
        const double va = v.at_node(e.a), vb = v.at_node(e.b);
        acc += mesh.edge_length(e) * (va * va + va * vb + vb * vb) / 3.0;
    }
    return std::sqrt(acc);
}

// Unit-coefficient stiffness on the free dofs of a space (the Gram matrix of
// the gradient inner product).
inline SpMat assemble_gram(const FeSpace& s) {
    const Mesh& mesh = *s.mesh;
    std::vector<Triplet> trips;
    for (int k = 0; k < int(mesh.triangles.size()); ++k) {
        const auto g = element_geometry(mesh, k);
        const auto& t = mesh.triangles[k];
        for (int a = 0; a < 3; ++a) {
            const int ia = s.node_to_free[t[a]];
            if (ia < 0) continue;
            for (int b = 0; b < 3; ++b) {
                const int ib = s.node_to_free[t[b]];
                if (ib < 0) continue;
                trips.emplace_back(ia, ib, g.area * g.grads.col(a).dot(g.grads.col(b)));
            }
        }
    }
    SpMat m(s.n_free(), s.n_free());
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

// Exact P1 mass matrix of the G3 boundary trace on the free dofs.
inline SpMat assemble_g3_boundary_mass(const FeSpace& s) {
    const Mesh& mesh = *s.mesh;
    std::vector<Triplet> trips;
    for (const auto& e : mesh.boundary_edges) {
        if (e.mech != MechTag::G3) continue;
        const double L = mesh.edge_length(e);
        const int ia = s.node_to_free[e.a], ib = s.node_to_free[e.b];
        if (ia >= 0) trips.emplace_back(ia, ia, L / 3.0);
        if (ib >= 0) trips.emplace_back(ib, ib, L / 3.0);
        if (ia >= 0 && ib >= 0) {
            trips.emplace_back(ia, ib, L / 6.0);
            trips.emplace_back(ib, ia, L / 6.0);
        }
    }
    SpMat m(s.n_free(), s.n_free());
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

// Discrete trace constant c_{V,h}: square root of the largest eigenvalue of
// the generalized problem (G3 boundary mass) x = lambda (gradient Gram) x.
// Dense solve up to 500 free dofs, power iteration above.
inline double estimate_trace_constant(const FeSpace& s, int max_iters = 10000,
                                      double tol = 1e-10) {
    if (s.kind != SpaceKind::V) throw SpaceError("trace constant is defined on the V space");
    const SpMat gram = assemble_gram(s);
    const SpMat bmass = assemble_g3_boundary_mass(s);
    const int n = s.n_free();
    if (n <= 500) {
        const Mat bdense(bmass), gdense(gram);
        Eigen::GeneralizedSelfAdjointEigenSolver<Mat> solver(bdense, gdense);
        if (solver.info() != Eigen::Success)
            throw SpaceError("generalized eigensolve failed");
        return std::sqrt(solver.eigenvalues().maxCoeff());
    }
    Eigen::SimplicialLDLT<SpMat> gram_solver(gram);
    if (gram_solver.info() != Eigen::Success) throw SpaceError("Gram factorization failed");
    Vec x = Vec::Ones(n);
    x /= std::sqrt(x.dot(gram * x));
    double lambda = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        Vec y = gram_solver.solve(bmass * x);
        const double norm = std::sqrt(y.dot(gram * y));
        if (norm == 0.0) throw SpaceError("G3 boundary mass is zero on the free dofs");
        y /= norm;
        const double next = y.dot(bmass * y) / y.dot(gram * y);
        const bool done = std::abs(next - lambda) <= tol * std::max(1.0, std::abs(next));
        lambda = next;
        x = y;
        if (done) return std::sqrt(lambda);
    }
    throw SpaceError("power iteration for the trace constant did not converge");
}

}  // namespace antiplane
