#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "antiplane/runner.hpp"
#include "antiplane/suites.hpp"

using namespace antiplane;

namespace {

Mesh mesh_from_text(const std::string& text) {
    std::istringstream in(text);
    return load_mesh(in);
}

// single right triangle with no Dirichlet edges for any space kind except E
const char* kFreeTriangle =
    "nodes 3\n0 0\n1 0\n0 1\n"
    "triangles 1\n0 1 2\n"
    "bedges 3\n0 1 G2 Gb\n1 2 G2 Gb\n2 0 G2 Gb\n";

// unit square, every side G3 (no constraints at all; invalid for validate())
std::string all_g3_square(int n) {
    std::ostringstream cfg;
    const Mesh m = generate_rect_mesh(1.0, 1.0, n, n);
    save_mesh(m, cfg);
    std::string text = cfg.str();
    // retag every boundary edge G3 with no elec tag
    std::istringstream in(text);
    Mesh mm = load_mesh(in);
    for (auto& e : mm.boundary_edges) {
        e.mech = MechTag::G3;
        e.elec = ElecTag::None;
    }
    std::ostringstream out;
    save_mesh(mm, out);
    std::istringstream rein(out.str());
    return out.str();
}

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("rect mesh generation: counts, measures, areas") {
    const Mesh m1 = generate_rect_mesh(1.0, 1.0, 1, 1);
    CHECK(m1.nodes.size() == 4);
    CHECK(m1.triangles.size() == 2);
    CHECK(m1.boundary_edges.size() == 4);
    m1.validate();

    const Mesh m2 = generate_rect_mesh(2.0, 1.0, 2, 1);
    CHECK(m2.nodes.size() == 6);
    CHECK(m2.triangles.size() == 4);
    CHECK(m2.boundary_edges.size() == 6);

    const Mesh m8 = generate_rect_mesh(1.0, 1.0, 8, 8);
    CHECK(m8.total_area() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(m8.boundary_measure(MechTag::G3) == doctest::Approx(1.0));
    CHECK(m8.boundary_measure(ElecTag::Gb) == doctest::Approx(2.0));

    // refinement: 4x triangles, identical boundary measures
    const Mesh m16 = generate_rect_mesh(1.0, 1.0, 16, 16);
    CHECK(m16.triangles.size() == 4 * m8.triangles.size());
    for (MechTag t : {MechTag::G1, MechTag::G2, MechTag::G3})
        CHECK(m16.boundary_measure(t) ==
              doctest::Approx(m8.boundary_measure(t)).epsilon(1e-12));

    CHECK_THROWS_AS(generate_rect_mesh(1.0, 1.0, 0, 1), MeshError);
    CHECK_THROWS_AS(generate_rect_mesh(-1.0, 1.0, 1, 1), MeshError);
}

TEST_CASE("mesh save/load round trip") {
    const Mesh m = generate_rect_mesh(1.0, 2.0, 3, 2);
    std::ostringstream out;
    save_mesh(m, out);
    std::istringstream in(out.str());
    const Mesh r = load_mesh(in);
    REQUIRE(r.nodes.size() == m.nodes.size());
    REQUIRE(r.triangles.size() == m.triangles.size());
    REQUIRE(r.boundary_edges.size() == m.boundary_edges.size());
    for (std::size_t i = 0; i < m.nodes.size(); ++i) {
        CHECK(r.nodes[i].x == m.nodes[i].x);
        CHECK(r.nodes[i].y == m.nodes[i].y);
    }
    for (std::size_t i = 0; i < m.triangles.size(); ++i) CHECK(r.triangles[i] == m.triangles[i]);
    r.validate();
}

TEST_CASE("mesh validation errors name the violated invariant") {
    // clockwise triangle
    const std::string cw =
        "nodes 3\n0 0\n1 0\n0 1\n"
        "triangles 1\n0 2 1\n"
        "bedges 3\n0 1 G3 -\n1 2 G2 Gb\n2 0 G1 Ga\n";
    CHECK_THROWS_WITH_AS(mesh_from_text(cw).validate(), "nonpositive area, triangle 0",
                         MeshError);

    // contact edge carrying an elec tag
    const std::string bad_elec =
        "nodes 3\n0 0\n1 0\n0 1\n"
        "triangles 1\n0 1 2\n"
        "bedges 3\n0 1 G3 Ga\n1 2 G2 Gb\n2 0 G1 Ga\n";
    CHECK_THROWS_WITH_AS(mesh_from_text(bad_elec).validate(), "elec tag on contact boundary",
                         MeshError);

    // no clamped part
    const std::string no_g1 =
        "nodes 3\n0 0\n1 0\n0 1\n"
        "triangles 1\n0 1 2\n"
        "bedges 3\n0 1 G3 -\n1 2 G2 Gb\n2 0 G2 Ga\n";
    CHECK_THROWS_WITH_AS(mesh_from_text(no_g1).validate(), "measure(Gamma_1) = 0", MeshError);

    // parse error carries the line number
    try {
        mesh_from_text("nodes 2\n0 0\n1 junk\n");
        FAIL("expected a parse error");
    } catch (const MeshError& err) {
        CHECK(std::string(err.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("space construction and dof counts") {
    const Mesh m1 = generate_rect_mesh(1.0, 1.0, 1, 1);
    const FeSpace V = build_space(m1, SpaceKind::V);
    CHECK(V.n_free() == 2);  // the two bottom nodes; top is clamped

    CHECK_THROWS_WITH_AS(build_space(m1, SpaceKind::E), "space has no free dofs", SpaceError);

    const Mesh m2 = generate_rect_mesh(1.0, 1.0, 2, 2);
    const FeSpace E2 = build_space(m2, SpaceKind::E);
    REQUIRE(E2.n_free() == 2);  // bottom mid-edge node and the interior node
    CHECK(E2.free_dofs[0] == 1);
    CHECK(E2.free_dofs[1] == 4);
}

TEST_CASE("seminorm of interpolated linear fields") {
    // zero field
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    CHECK(seminorm(NodalField(V)) == 0.0);

    // v = x with the clamped side on x = 0 so the interpolant is exact
    TaggingRule left_clamped = TaggingRule::standard();
    left_clamped.left = {MechTag::G1, ElecTag::Ga};
    left_clamped.top = {MechTag::G2, ElecTag::Gb};
    const Mesh ml = generate_rect_mesh(1.0, 1.0, 4, 4, left_clamped);
    ml.validate();
    const FeSpace Vl = build_space(ml, SpaceKind::V);
    const auto vx = NodalField::interpolate(Vl, [](double x, double) { return x; });
    CHECK(seminorm(vx) == doctest::Approx(1.0).epsilon(1e-14));

    // v = x + 2y on a unit-area parallelogram whose clamped edge lies on x + 2y = 0
    const std::string para =
        "nodes 4\n0 0\n2 -1\n2.5 -0.75\n0.5 0.25\n"
        "triangles 2\n0 1 2\n0 2 3\n"
        "bedges 4\n0 1 G1 Ga\n1 2 G2 Gb\n2 3 G3 -\n3 0 G2 Gb\n";
    const Mesh mp = mesh_from_text(para);
    mp.validate();
    CHECK(mp.total_area() == doctest::Approx(1.0));
    const FeSpace Vp = build_space(mp, SpaceKind::V);
    const auto vxy = NodalField::interpolate(Vp, [](double x, double y) { return x + 2 * y; });
    CHECK(seminorm(vxy) == doctest::Approx(std::sqrt(5.0)).epsilon(1e-14));

    // parallelogram law: induced by an inner product
    const Mesh mq = generate_rect_mesh(1.0, 1.0, 3, 3);
    const FeSpace Vq = build_space(mq, SpaceKind::V);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    Vec a = Vec::NullaryExpr(Vq.n_free(), [&](Eigen::Index) { return gauss(rng); });
    Vec b = Vec::NullaryExpr(Vq.n_free(), [&](Eigen::Index) { return gauss(rng); });
    const double lhs = std::pow(seminorm(NodalField(Vq, Vec(a + b))), 2) +
                       std::pow(seminorm(NodalField(Vq, Vec(a - b))), 2);
    const double rhs = 2.0 * std::pow(seminorm(NodalField(Vq, a)), 2) +
                       2.0 * std::pow(seminorm(NodalField(Vq, b)), 2);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(seminorm(NodalField(Vq, Vec(3.0 * a))) ==
          doctest::Approx(3.0 * seminorm(NodalField(Vq, a))).epsilon(1e-12));
}

TEST_CASE("trace norm on the contact boundary") {
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    CHECK(trace_norm_G3(NodalField(V)) == 0.0);

    // v = 1 along the whole contact side of length 1
    NodalField one(V);
    for (int k = 0; k < V.n_free(); ++k)
        if (m.nodes[V.free_dofs[k]].y == 0.0) one.values[k] = 1.0;
    CHECK(trace_norm_G3(one) == doctest::Approx(1.0).epsilon(1e-14));

    // linear ramp 0 -> 1 along a single unit contact edge
    const Mesh m1 = generate_rect_mesh(1.0, 1.0, 1, 1);
    const FeSpace V1 = build_space(m1, SpaceKind::V);
    const auto ramp = NodalField::interpolate(V1, [](double x, double) { return x; });
    CHECK(trace_norm_G3(ramp) == doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("discrete trace constant matches the frozen oracle values") {
    const Mesh m4 = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V4 = build_space(m4, SpaceKind::V);
    const double c4 = estimate_trace_constant(V4);
    CHECK(c4 == doctest::Approx(1.0).epsilon(1e-9));

    const Mesh m8 = generate_rect_mesh(1.0, 1.0, 8, 8);
    const FeSpace V8 = build_space(m8, SpaceKind::V);
    const double c8 = estimate_trace_constant(V8);
    CHECK(std::abs(c8 - c4) <= 0.1 * c4);

    // the linear field v = 1 - y attains the maximum on this geometry
    const auto vmax = NodalField::interpolate(V4, [](double, double y) { return 1.0 - y; });
    CHECK(trace_norm_G3(vmax) / seminorm(vmax) == doctest::Approx(c4).epsilon(1e-6));

    // operator-norm property over random fields
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss;
    for (int k = 0; k < 100; ++k) {
        NodalField v(V4, Vec(Vec::NullaryExpr(V4.n_free(),
                                              [&](Eigen::Index) { return gauss(rng); })));
        CHECK(trace_norm_G3(v) <= c4 * seminorm(v) * (1.0 + 1e-9));
    }
}

TEST_CASE("assembled local matrices and form identities") {
    // local electric stiffness on the reference triangle, beta = 1
    const Mesh tri = mesh_from_text(kFreeTriangle);
    const FeSpace Wt = build_space(tri, SpaceKind::W);
    REQUIRE(Wt.n_free() == 3);
    const Mat g(assemble_gram(Wt));
    Mat ref(3, 3);
    ref << 2, -1, -1, -1, 1, 0, -1, 0, 1;
    ref *= 0.5;
    CHECK((g - ref).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));

    const Mesh m = generate_rect_mesh(1.0, 1.0, 3, 3);
    const FeSpace V = build_space(m, SpaceKind::V);
    const FeSpace W = build_space(m, SpaceKind::W);
    const FeSpace E = build_space(m, SpaceKind::E);

    // constant alpha: A_alpha = alpha * Gram_V exactly
    const double alpha = 2.75;
    const MaterialField mat = MaterialField::constant(m, alpha, 1.0, 0.3, 1.2,
                                                      Eigen::Vector2d(0.1, 0.2),
                                                      Eigen::Matrix2d::Identity(), 0.4);
    const AssembledOperators ops = assemble_forms(m, V, W, E, mat);
    CHECK((Mat(ops.A_alpha) - alpha * Mat(ops.Gram_V)).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(ops.alpha_star == doctest::Approx(alpha));

    // constant beta: A_beta = beta * Gram_W
    CHECK((Mat(ops.A_beta) - 1.2 * Mat(assemble_gram(W))).cwiseAbs().maxCoeff() <= 1e-14);

    // zero thermal couple kills the coupling operator
    const MaterialField mat0 = MaterialField::constant(m, alpha, 1.0, 0.3, 1.2,
                                                       Eigen::Vector2d::Zero(),
                                                       Eigen::Matrix2d::Identity(), 0.4);
    const AssembledOperators ops0 = assemble_forms(m, V, W, E, mat0);
    CHECK(Mat(ops0.A_M).cwiseAbs().maxCoeff() == 0.0);

    // material invariants are enforced by name
    CHECK_THROWS_AS(MaterialField::constant(m, 0.0, 1.0, 0.3, 1.2, Eigen::Vector2d::Zero(),
                                            Eigen::Matrix2d::Identity(), 0.4)
                        .validate(),
                    MaterialError);
    Eigen::Matrix2d indef;
    indef << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(MaterialField::constant(m, 1.0, 1.0, 0.3, 1.2, Eigen::Vector2d::Zero(),
                                            indef, 0.4)
                        .validate(),
                    MaterialError);
}

TEST_CASE("load vectors integrate the data exactly") {
    // unconstrained square: every side tagged G3
    const Mesh free_sq = mesh_from_text(all_g3_square(3));
    const FeSpace Vf = build_space(free_sq, SpaceKind::V);
    const FeSpace Wf = build_space(free_sq, SpaceKind::W);
    const FeSpace Ef = build_space(free_sq, SpaceKind::E);
    REQUIRE(Vf.n_free() == int(free_sq.nodes.size()));

    BoundaryData d = BoundaryData::zeros();
    CHECK(assemble_load_f(free_sq, Vf, d, 0.3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(assemble_load_q(free_sq, Wf, d, 0.3).cwiseAbs().maxCoeff() == 0.0);

    d.f0 = [](double, double, double) { return 1.0; };
    CHECK(assemble_load_f(free_sq, Vf, d, 0.0).sum() == doctest::Approx(1.0).epsilon(1e-12));

    d.q0 = [](double, double, double) { return 1.0; };
    CHECK(assemble_load_q(free_sq, Wf, d, 0.0).sum() == doctest::Approx(1.0).epsilon(1e-12));

    // surface loads: left+right = G2 of length 2, top moved into G3
    TaggingRule tr = TaggingRule::standard();
    tr.top = {MechTag::G3, ElecTag::None};
    tr.left = {MechTag::G2, ElecTag::Gb};
    tr.right = {MechTag::G2, ElecTag::Gb};
    const Mesh ms = generate_rect_mesh(1.0, 1.0, 3, 3, tr);  // no G1: skip validate
    const FeSpace Vs = build_space(ms, SpaceKind::V);
    const FeSpace Ws = build_space(ms, SpaceKind::W);
    BoundaryData surf = BoundaryData::zeros();
    surf.f2 = [](double, double, double) { return 1.0; };
    CHECK(assemble_load_f(ms, Vs, surf, 0.0).sum() == doctest::Approx(2.0).epsilon(1e-12));
    surf.q2 = [](double, double, double) { return 1.0; };
    CHECK(assemble_load_q(ms, Ws, surf, 0.0).sum() == doctest::Approx(2.0).epsilon(1e-12));

    // thermal source: Robin inflow over the G3 perimeter plus a volume term
    const MaterialField matf = MaterialField::constant(free_sq, 1.0, 1.0, 0.0, 1.0,
                                                       Eigen::Vector2d::Zero(),
                                                       Eigen::Matrix2d::Identity(), 1.0);
    BoundaryData th = BoundaryData::zeros();
    th.theta_R = [](double, double, double) { return 1.0; };
    CHECK(assemble_thermal_source(free_sq, Ef, matf, th, 0.0).sum() ==
          doctest::Approx(4.0).epsilon(1e-12));
    th.theta_R = BoundaryData::zero();
    th.p = [](double, double, double) { return 2.0; };
    CHECK(assemble_thermal_source(free_sq, Ef, matf, th, 0.0).sum() ==
          doctest::Approx(2.0).epsilon(1e-12));

    // on the standard square the clamped corners carry h/2 of boundary mass each
    const Mesh std4 = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace E4 = build_space(std4, SpaceKind::E);
    const MaterialField m4 = MaterialField::constant(std4, 1.0, 1.0, 0.0, 1.0,
                                                     Eigen::Vector2d::Zero(),
                                                     Eigen::Matrix2d::Identity(), 1.0);
    BoundaryData th4 = BoundaryData::zeros();
    th4.theta_R = [](double, double, double) { return 1.0; };
    CHECK(assemble_thermal_source(std4, E4, m4, th4, 0.0).sum() ==
          doctest::Approx(1.0 - 0.25).epsilon(1e-12));
}

TEST_CASE("thermal coupling operator") {
    const Mesh free_sq = mesh_from_text(all_g3_square(3));
    const FeSpace Vf = build_space(free_sq, SpaceKind::V);
    const FeSpace Wf = build_space(free_sq, SpaceKind::W);
    const FeSpace Ef = build_space(free_sq, SpaceKind::E);
    const MaterialField mat = MaterialField::constant(free_sq, 1.0, 1.0, 0.0, 1.0,
                                                      Eigen::Vector2d(1.0, 0.0),
                                                      Eigen::Matrix2d::Identity(), 0.0);
    const AssembledOperators ops = assemble_forms(free_sq, Vf, Wf, Ef, mat);

    // zero velocity, h_tau(0) = 0 -> zero vector
    CHECK(apply_Mtilde(ops, NodalField(Vf), [](double) { return 0.0; }).cwiseAbs().maxCoeff() ==
          0.0);

    // volume part: Me = (1,0), v = x -> entries sum to -1
    const auto vx = NodalField::interpolate(Vf, [](double x, double) { return x; });
    CHECK(apply_Mtilde(ops, vx, nullptr).sum() == doctest::Approx(-1.0).epsilon(1e-12));

    // boundary part: h_tau(s) = s, v = 1 on the G3 perimeter of length 4
    const MaterialField mat0 = MaterialField::constant(free_sq, 1.0, 1.0, 0.0, 1.0,
                                                       Eigen::Vector2d::Zero(),
                                                       Eigen::Matrix2d::Identity(), 0.0);
    const AssembledOperators ops0 = assemble_forms(free_sq, Vf, Wf, Ef, mat0);
    NodalField one(Vf, Vec(Vec::Ones(Vf.n_free())));
    CHECK(apply_Mtilde(ops0, one, [](double s) { return s; }).sum() ==
          doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("friction functional: values, homogeneity, regularization") {
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    const FeSpace W = build_space(m, SpaceKind::W);
    const FeSpace E = build_space(m, SpaceKind::E);
    const MaterialField mat = MaterialField::constant(m, 1.0, 1.0, 0.0, 1.0,
                                                      Eigen::Vector2d::Zero(),
                                                      Eigen::Matrix2d::Identity(), 0.0);
    const AssembledOperators ops = assemble_forms(m, V, W, E, mat);

    const double r0 = 0.7;
    const FrictionLaw tresca = FrictionLaw::tresca(r0);
    NodalField eta(V), one(V);
    for (int k = 0; k < V.n_free(); ++k)
        if (m.nodes[V.free_dofs[k]].y == 0.0) one.values[k] = 1.0;

    CHECK(eval_j(ops, tresca, eta, NodalField(V)) == 0.0);
    CHECK(eval_j(ops, tresca, eta, one) == doctest::Approx(r0).epsilon(1e-14));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    const FrictionLaw law = FrictionLaw::affine_saturating(0.4, 0.3);
    for (int k = 0; k < 20; ++k) {
        NodalField e1(V, Vec(Vec::NullaryExpr(V.n_free(),
                                              [&](Eigen::Index) { return gauss(rng); })));
        NodalField v(V, Vec(Vec::NullaryExpr(V.n_free(),
                                             [&](Eigen::Index) { return gauss(rng); })));
        CHECK(eval_j(ops, law, e1, NodalField(V, Vec(2.0 * v.values))) ==
              doctest::Approx(2.0 * eval_j(ops, law, e1, v)).epsilon(1e-12));
        // regularized value within eps * sum of weighted bounds
        double bound_mass = 0.0;
        for (const auto& c : ops.contact)
            bound_mass += c.weight * law.bound(c.x, c.y, std::abs(e1.values[c.vdof]));
        for (double eps : {1e-2, 1e-4}) {
            const double gap =
                std::abs(eval_j_regularized(ops, law, e1, v, eps) - eval_j(ops, law, e1, v));
            CHECK(gap <= eps * bound_mass + 1e-15);
        }
    }

    // four-term exchange bound: degenerate quadruples vanish, random ones obey it
    const double c = estimate_trace_constant(V);
    const FourTermReport rep = check_four_term_bound(ops, law, c, 200, 99);
    CHECK(rep.pass);
    CHECK(rep.max_ratio <= 1.0 + 1e-9);
    const FourTermReport trivial = check_four_term_bound(ops, FrictionLaw::tresca(1.0), c, 10);
    CHECK(trivial.pass);  // L_r = 0
}

TEST_CASE("regularized gradient: closed forms and finite differences") {
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    const FeSpace W = build_space(m, SpaceKind::W);
    const FeSpace E = build_space(m, SpaceKind::E);
    const MaterialField mat = MaterialField::constant(m, 1.0, 1.0, 0.0, 1.0,
                                                      Eigen::Vector2d::Zero(),
                                                      Eigen::Matrix2d::Identity(), 0.0);
    const AssembledOperators ops = assemble_forms(m, V, W, E, mat);

    Vec g = Vec::Constant(int(ops.contact.size()), 0.9);
    const double eps = 1e-2;

    // at zero: gradient vanishes, Hessian diag is w_i g_i / eps
    const JGradient at0 = regularized_j_gradient(ops, g, NodalField(V), eps);
    CHECK(at0.grad.cwiseAbs().maxCoeff() == 0.0);
    for (std::size_t i = 0; i < ops.contact.size(); ++i)
        CHECK(at0.hess_diag[ops.contact[i].vdof] ==
              doctest::Approx(ops.contact[i].weight * g[int(i)] / eps).epsilon(1e-12));

    // saturation for large velocities
    NodalField big(V, Vec(Vec::Constant(V.n_free(), 1e9)));
    const JGradient sat = regularized_j_gradient(ops, g, big, eps);
    for (std::size_t i = 0; i < ops.contact.size(); ++i)
        CHECK(sat.grad[ops.contact[i].vdof] ==
              doctest::Approx(ops.contact[i].weight * g[int(i)]).epsilon(1e-9));

    // finite-difference check of the gradient
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss;
    NodalField v(V, Vec(Vec::NullaryExpr(V.n_free(), [&](Eigen::Index) { return gauss(rng); })));
    auto value = [&](const Vec& x) {
        const RegularizedAbs reg(eps);
        double s = 0.0;
        for (std::size_t i = 0; i < ops.contact.size(); ++i)
            s += ops.contact[i].weight * g[int(i)] * reg.value(x[ops.contact[i].vdof]);
        return s;
    };
    const JGradient an = regularized_j_gradient(ops, g, v, eps);
    const double h = 1e-6;
    for (const auto& c : ops.contact) {
        Vec xp = v.values, xm = v.values;
        xp[c.vdof] += h;
        xm[c.vdof] -= h;
        const double fd = (value(xp) - value(xm)) / (2.0 * h);
        CHECK(an.grad[c.vdof] == doctest::Approx(fd).epsilon(1e-6));
    }
}

namespace {

StepProblem two_dof_surrogate() {
    StepProblem p;
    p.B = Mat(2, 2);
    p.B << 2, 0, 0, 2;
    p.lin = Vec(2);
    p.lin << -3, 0;
    ContactNode cn;
    cn.node = 0;
    cn.vdof = 0;
    cn.weight = 1.0;
    cn.x = 0.5;
    cn.y = 0.0;
    p.contact = {cn};
    p.law = FrictionLaw::tresca(1.0);
    p.gram = SpMat(2, 2);
    p.gram.setIdentity();
    p.alpha_star = 2.0;
    p.trace_constant = 1.0;
    return p;
}

}  // namespace

TEST_CASE("gate check") {
    StepProblem p = two_dof_surrogate();
    p.alpha_star = 4.0;
    p.trace_constant = 2.0;
    const GateReport g = check_gate(p, 0.5);
    CHECK(g.Z0 == doctest::Approx(1.0));
    CHECK(g.ok);
    CHECK(g.margin == doctest::Approx(0.5));
    CHECK(check_gate(p, 0.0).ok);          // Tresca always passes
    CHECK_FALSE(check_gate(p, g.Z0).ok);   // threshold itself is excluded
}

TEST_CASE("frozen-bound solver: closed forms and KKT structure") {
    SolverOptions opts;
    opts.tol = 1e-12;

    // soft-threshold surrogate: w = ((3 - 1)/2, 0)
    const StepProblem p = two_dof_surrogate();
    Vec g(1);
    g << 1.0;
    const ViSolution sol = solve_frozen_bound(p, g, Vec::Zero(2), opts);
    CHECK(sol.w[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(sol.w[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(std::abs(sol.lambda[0]) <= 1.0 + 1e-9);  // |lambda| <= w_i r_i
    CHECK(sol.lambda[0] == doctest::Approx(1.0).epsilon(1e-8));  // slipping: at the bound

    // frictionless reduction
    const Vec w_lin = p.B.ldlt().solve(-p.lin);
    const ViSolution fl = solve_frozen_bound(p, Vec::Zero(1), Vec::Zero(2), opts);
    CHECK((fl.w - w_lin).norm() <= 1e-12 * w_lin.norm());

    // zero forcing minimizes at the origin
    StepProblem p0 = two_dof_surrogate();
    p0.lin.setZero();
    CHECK(solve_frozen_bound(p0, g, Vec::Ones(2), opts).w.cwiseAbs().maxCoeff() <= 1e-10);

    // indefinite forms are rejected
    StepProblem bad = two_dof_surrogate();
    bad.B << 1, 0, 0, -1;
    CHECK_THROWS_AS(solve_frozen_bound(bad, g, Vec::Zero(2), opts), SolverError);

    // sampled variational inequality residual
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss;
    auto j = [&](const Vec& v) { return g[0] * std::abs(v[0]); };
    for (int k = 0; k < 200; ++k) {
        Vec v = Vec::NullaryExpr(2, [&](Eigen::Index) { return 3.0 * gauss(rng); });
        const double resid =
            (p.B * sol.w + p.lin).dot(v - sol.w) + j(v) - j(sol.w);
        CHECK(resid >= -1e-9 * (1.0 + v.norm()));
    }
}

TEST_CASE("outer fixed point: Tresca takes one correction, uniqueness under the gate") {
    SolverOptions opts;
    opts.tol = 1e-10;
    const StepProblem p = two_dof_surrogate();  // Tresca law, L_r = 0
    const ViSolution a = solve_step(p, Vec::Zero(2), opts);
    CHECK(a.outer_iterations == 1);

    StepProblem ps = two_dof_surrogate();
    ps.law = FrictionLaw::affine_saturating(0.5, 0.4);  // L_r = 0.4 < Z0 = 2
    const ViSolution s1 = solve_step(ps, Vec::Zero(2), opts);
    Vec w0(2);
    w0 << 5.0, -7.0;
    const ViSolution s2 = solve_step(ps, w0, opts);
    CHECK(ps.gram_norm(Vec(s1.w - s2.w)) <= 10.0 * opts.tol);

    // abort policy rejects an uncertified Lipschitz constant up front
    StepProblem pb = two_dof_surrogate();
    pb.law = FrictionLaw::linear_capped(0.1, 10.0, 100.0);  // L_r = 10 > Z0 = 2
    SolverOptions abort_opts = opts;
    abort_opts.gate_policy = GatePolicy::Abort;
    CHECK_THROWS_AS(solve_step(pb, Vec::Zero(2), abort_opts), SolverError);
}

TEST_CASE("oracles agree with the primal solver") {
    SolverOptions opts;
    opts.tol = 1e-12;
    const StepProblem p = two_dof_surrogate();
    Vec g(1);
    g << 1.0;

    const ViSolution uz = uzawa_oracle(p, g, 1e-11);
    CHECK(uz.w[0] == doctest::Approx(1.0).epsilon(1e-8));

    const Vec bf = brute_force_oracle(p, g);
    CHECK(bf[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(std::abs(bf[1]) <= 1e-7);

    // 1-dof soft threshold: min 0.5*3*w^2 - 2w + 0.8|w| -> w = (2-0.8)/3
    StepProblem p1;
    p1.B = Mat::Constant(1, 1, 3.0);
    p1.lin = Vec::Constant(1, -2.0);
    ContactNode cn;
    cn.vdof = 0;
    cn.weight = 1.0;
    p1.contact = {cn};
    p1.law = FrictionLaw::tresca(0.8);
    p1.gram = SpMat(1, 1);
    p1.gram.setIdentity();
    p1.alpha_star = 3.0;
    p1.trace_constant = 1.0;
    Vec g1 = Vec::Constant(1, 0.8);
    CHECK(brute_force_oracle(p1, g1)[0] == doctest::Approx(0.4).epsilon(1e-7));
    CHECK(solve_frozen_bound(p1, g1, Vec::Zero(1), opts).w[0] ==
          doctest::Approx(0.4).epsilon(1e-10));

    // frictionless 3-dof brute force matches the linear solve
    std::mt19937_64 rng(31);
    const RandomInstance inst = random_instance(rng, 3, 3);
    const Vec lin_sol = inst.p.B.ldlt().solve(-inst.p.lin);
    const Vec bf3 = brute_force_oracle(inst.p, Vec::Zero(3));
    CHECK((bf3 - lin_sol).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + lin_sol.norm()));
}

TEST_CASE("coupled stepper: zero data stays zero, potential identities") {
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    const FeSpace W = build_space(m, SpaceKind::W);
    const FeSpace E = build_space(m, SpaceKind::E);
    const double e = 0.7, beta = 1.4;
    const MaterialField mat = MaterialField::constant(m, 1.5, 1.0, e, beta,
                                                      Eigen::Vector2d(0.2, 0.1),
                                                      Eigen::Matrix2d::Identity(), 0.3);
    const BoundaryData zero = BoundaryData::zeros();
    CoupledStepper stepper(m, V, W, E, mat, zero, FrictionLaw::tresca(0.0));

    SystemState s = stepper.initialize(NodalField(V), NodalField(E));
    CHECK(seminorm(s.phi) == 0.0);  // q = 0, u0 = 0
    for (int n = 0; n < 3; ++n) s = stepper.advance(s, 0.1);
    CHECK(seminorm(s.u) == 0.0);
    CHECK(seminorm(s.theta) == 0.0);
    CHECK(seminorm(s.w) == 0.0);

    // phi0 = (e/beta) u0 for constant coefficients, aligned constraints, q = 0
    std::mt19937_64 rng(41);
    std::normal_distribution<double> gauss;
    NodalField u0(V, Vec(Vec::NullaryExpr(V.n_free(), [&](Eigen::Index) { return gauss(rng); })));
    const SystemState si = stepper.initialize(u0, NodalField(E));
    Vec expect(W.n_free());
    for (int k = 0; k < W.n_free(); ++k)
        expect[k] = (e / beta) * u0.at_node(W.free_dofs[k]);
    CHECK((si.phi.values - expect).cwiseAbs().maxCoeff() <= 1e-10);

    // linearity of the potential in q
    BoundaryData dq = BoundaryData::zeros();
    dq.q0 = [](double x, double, double) { return 1.0 + x; };
    CoupledStepper stq(m, V, W, E, mat, dq, FrictionLaw::tresca(0.0));
    const NodalField phi_u = stepper.solve_potential(u0, 0.0);   // q = 0
    const NodalField phi_q1 = stq.solve_potential(u0, 0.0);
    BoundaryData dq2 = BoundaryData::zeros();
    dq2.q0 = [](double x, double, double) { return 2.0 * (1.0 + x); };
    CoupledStepper stq2(m, V, W, E, mat, dq2, FrictionLaw::tresca(0.0));
    const NodalField phi_q2 = stq2.solve_potential(u0, 0.0);
    CHECK(((phi_q2.values - phi_u.values) - 2.0 * (phi_q1.values - phi_u.values))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
}

TEST_CASE("temperature step: backward Euler identities and limits") {
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    const FeSpace W = build_space(m, SpaceKind::W);
    const FeSpace E = build_space(m, SpaceKind::E);
    const MaterialField mat = MaterialField::constant(m, 1.5, 1.0, 0.4, 1.2,
                                                      Eigen::Vector2d(0.2, 0.1),
                                                      Eigen::Matrix2d::Identity(), 0.5);
    BoundaryData data = BoundaryData::zeros();
    data.p = [](double x, double y, double) { return x + y; };
    data.theta_R = [](double, double, double) { return 2.0; };
    CoupledStepper stepper(m, V, W, E, mat, data, FrictionLaw::tresca(0.0));
    const AssembledOperators& ops = stepper.ops();

    std::mt19937_64 rng(53);
    std::normal_distribution<double> gauss;
    NodalField th0(E, Vec(Vec::NullaryExpr(E.n_free(), [&](Eigen::Index) { return gauss(rng); })));
    NodalField w(V, Vec(Vec::NullaryExpr(V.n_free(), [&](Eigen::Index) { return gauss(rng); })));

    // one step against an independent dense solve of the same discretization
    const double dt = 0.05, t1 = dt;
    const NodalField th1 = stepper.step_temperature_be(th0, w, t1, dt);
    const Mat A = Mat(ops.Mass_E) + dt * Mat(ops.Ktilde);
    const Vec rhs = ops.Mass_E * th0.values +
                    dt * (apply_Mtilde(ops, w, nullptr) +
                          assemble_thermal_source(m, E, mat, data, t1));
    const Vec dense = A.ldlt().solve(rhs);
    CHECK((th1.values - dense).cwiseAbs().maxCoeff() <= 1e-11);

    // dissipativity without sources
    BoundaryData nosrc = BoundaryData::zeros();
    CoupledStepper diss(m, V, W, E, mat, nosrc, FrictionLaw::tresca(0.0));
    NodalField th = th0;
    auto mass_norm = [&](const NodalField& f) {
        return std::sqrt(f.values.dot(ops.Mass_E * f.values));
    };
    for (int n = 0; n < 5; ++n) {
        const NodalField next = diss.step_temperature_be(th, NodalField(V), 0.0, 0.1);
        CHECK(mass_norm(next) <= mass_norm(th) * (1.0 + 1e-12));
        th = next;
    }

    // long-run Robin equilibrium: theta -> Ktilde^{-1} P
    NodalField eq(E);
    BoundaryData robin = BoundaryData::zeros();
    robin.theta_R = [](double, double, double) { return 2.0; };
    CoupledStepper rstep(m, V, W, E, mat, robin, FrictionLaw::tresca(0.0));
    const Vec p_inf = assemble_thermal_source(m, E, mat, robin, 0.0);
    const Vec theta_inf = Mat(ops.Ktilde).ldlt().solve(p_inf);
    for (int n = 0; n < 400; ++n) eq = rstep.step_temperature_be(eq, NodalField(V), 0.0, 0.5);
    CHECK((eq.values - theta_inf).cwiseAbs().maxCoeff() <= 1e-8);

    // exponential-kernel path agrees with backward Euler to first order
    std::vector<NodalField> hist;
    const int N = 16;
    const double T = 0.4;
    hist.assign(N, w);
    NodalField be = th0;
    for (int n = 0; n < N; ++n) be = stepper.step_temperature_be(be, w, (n + 1) * T / N, T / N);
    const NodalField ek = stepper.step_temperature_expkernel(hist, T / N, th0);
    NodalField gap(E, Vec(be.values - ek.values));
    CHECK(seminorm(gap) <= 0.5 * std::max(1.0, seminorm(be)));  // same trajectory, O(dt) apart
}

TEST_CASE("full advance: stick under a large Tresca bound") {
    const Mesh m = generate_rect_mesh(1.0, 1.0, 4, 4);
    const FeSpace V = build_space(m, SpaceKind::V);
    const FeSpace W = build_space(m, SpaceKind::W);
    const FeSpace E = build_space(m, SpaceKind::E);
    const MaterialField mat = MaterialField::constant(m, 1.5, 1.0, 0.3, 1.2,
                                                      Eigen::Vector2d(0.1, 0.1),
                                                      Eigen::Matrix2d::Identity(), 0.4);
    BoundaryData data = BoundaryData::zeros();
    data.f0 = [](double x, double, double) { return 1.0 + x; };

    CoupledStepper stick(m, V, W, E, mat, data, FrictionLaw::tresca(100.0));
    SystemState s = stick.initialize(NodalField(V), NodalField(E));
    StepDiagnostics diag;
    for (int n = 0; n < 3; ++n) {
        s = stick.advance(s, 0.1, &diag);
        CHECK(diag.slip_count == 0);
        for (const auto& c : stick.ops().contact)
            CHECK(std::abs(s.w.values[c.vdof]) <= 1e-8);
    }

    // potential consistency after advance
    const Vec q = assemble_load_q(m, W, data, s.t);
    const Vec resid = stick.ops().A_beta * s.phi.values - stick.ops().E_WV * s.u.values - q;
    CHECK(resid.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("toml subset parser") {
    std::istringstream in(
        "# comment\n"
        "[mesh]\n"
        "nx = 8  # trailing comment\n"
        "source = \"generated\"\n"
        "[solver]\n"
        "tol = 1e-10\n"
        "eps_schedule = [1e-2, 1e-4, 1e-8]\n"
        "flag = true\n");
    const toml::Table t = toml::parse(in);
    CHECK(t.at("mesh").at("nx").as_number("nx") == 8.0);
    CHECK(t.at("mesh").at("source").as_string("source") == "generated");
    CHECK(t.at("solver").at("eps_schedule").as_array("eps_schedule").size() == 3);
    CHECK(t.at("solver").at("flag").as_bool("flag"));

    std::istringstream bad("[a]\nx 3\n");
    CHECK_THROWS_WITH_AS(toml::parse(bad), "line 2: expected 'key = value'", ConfigError);
    std::istringstream badv("[a]\nx = oops\n");
    CHECK_THROWS_AS(toml::parse(badv), ConfigError);
}

TEST_CASE("run configuration loading") {
    const std::string path = tmp_path("antiplane_cfg_test.toml");
    {
        std::ofstream out(path);
        out << "[mesh]\nnx = 4\nny = 4\n"
               "[material]\nalpha = 2.0\nme = [0.1, 0.2]\nk = [1.0, 0.1, 1.5]\n"
               "[friction]\nfamily = \"affine_saturating\"\na = 0.3\nb = 0.2\n"
               "[time]\nT = 0.5\nN = 5\n"
               "[solver]\ngate_policy = \"abort\"\n"
               "[data]\nf0_family = \"ramp\"\nf0_amp = 2.5\n";
    }
    const RunConfig cfg = RunConfig::load(path);
    CHECK(cfg.nx == 4);
    CHECK(cfg.alpha == 2.0);
    CHECK(cfg.K(0, 1) == 0.1);
    CHECK(cfg.friction_family == "affine_saturating");
    CHECK(cfg.solver.gate_policy == GatePolicy::Abort);
    CHECK(cfg.N == 5);
    CHECK(cfg.f0.make()(0.0, 0.0, 2.0) == doctest::Approx(5.0));
    CHECK(cfg.config_hash != 0);
    const FrictionLaw law = cfg.make_law();
    CHECK(law.L_r == doctest::Approx(0.2));

    {
        std::ofstream out(path);
        out << "[time]\nT = -1.0\n";
    }
    CHECK_THROWS_AS(RunConfig::load(path), ConfigError);
    CHECK_THROWS_AS(RunConfig::load(tmp_path("no_such_config.toml")), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("csv and vtk emission") {
    const std::string csv_path = tmp_path("antiplane_test.csv");
    ProvenanceInfo prov;
    prov.config_hash = 0xabcdef;
    prov.alpha_star = 1.5;
    {
        CsvWriter csv(csv_path, prov);
        StepRecord r;
        r.step = 1;
        r.t = 0.1;
        r.norm_w_V = 0.25;
        csv.row(r);
    }
    std::ifstream in(csv_path);
    std::string line;
    int comments = 0, rows = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#') {
            ++comments;
        } else if (line.rfind("step,", 0) == 0) {
            saw_header = true;
            CHECK(line ==
                  "step,t,outer_iters,newton_iters,vi_residual,norm_w_V,norm_u_V,norm_phi_W,"
                  "norm_theta_E,stick_count,slip_count,max_traction,gate_margin");
        } else if (!line.empty()) {
            ++rows;
            CHECK(line.rfind("1,0.1", 0) == 0);
        }
    }
    CHECK(comments == 5);
    CHECK(saw_header);
    CHECK(rows == 1);
    std::filesystem::remove(csv_path);

    const std::string vtk_path = tmp_path("antiplane_test.vtk");
    const Mesh m = generate_rect_mesh(1.0, 1.0, 2, 2);
    std::vector<double> field(m.nodes.size(), 1.0);
    write_vtk(vtk_path, m, {{"u", field}});
    std::ifstream vin(vtk_path);
    std::string all((std::istreambuf_iterator<char>(vin)), std::istreambuf_iterator<char>());
    CHECK(all.find("# vtk DataFile Version 3.0") == 0);
    CHECK(all.find("POINTS 9 double") != std::string::npos);
    CHECK(all.find("CELLS 8 32") != std::string::npos);
    CHECK(all.find("SCALARS u double 1") != std::string::npos);
    std::filesystem::remove(vtk_path);
}

TEST_CASE("run_solve: zero data produces all-zero records") {
    RunConfig cfg;
    cfg.nx = cfg.ny = 3;
    cfg.N = 3;
    cfg.T = 0.3;
    cfg.csv_path = tmp_path("antiplane_zero_run.csv");
    std::ostringstream log;
    const RunResult res = run_solve(cfg, log);
    CHECK(res.steps_completed == 3);
    CHECK_FALSE(res.interrupted);
    CHECK(seminorm(res.final_state.u) == 0.0);
    CHECK(seminorm(res.final_state.theta) == 0.0);

    std::ifstream in(cfg.csv_path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
        ++rows;
        // norms (fields 6-9) must all be zero
        std::stringstream ss(line);
        std::string item;
        int col = 0;
        while (std::getline(ss, item, ',')) {
            ++col;
            if (col >= 6 && col <= 9) CHECK(std::stod(item) == 0.0);
        }
    }
    CHECK(rows == 3);
    std::filesystem::remove(cfg.csv_path);
}
