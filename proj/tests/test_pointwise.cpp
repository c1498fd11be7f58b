#include <random>

#include "doctest.h"
#include "diracaa/pointwise.hpp"

using namespace diracaa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd e(int n, int i) { return VectorXd::Unit(n, i); }
VectorXd zero(int n) { return VectorXd::Zero(n); }

DiracPointFrame frame(const std::vector<DoubleVector>& cols) {
    return DiracPointFrame::from_columns(cols, VectorXd::Zero(static_cast<Eigen::Index>(cols.size())));
}

// graph of c dx^dy on R^2 under alpha_X = i_X omega
DiracPointFrame symplectic_plane(double c = 1.0) {
    return frame({{e(2, 0), c * e(2, 1)}, {e(2, 1), -c * e(2, 0)}});
}

// graph of the bivector dx^dy on R^3: X = Pi(alpha)
DiracPointFrame poisson_r3() { return frame({{-e(3, 1), e(3, 0)}, {e(3, 0), e(3, 1)}, {zero(3), e(3, 2)}}); }

// (th1, th2, z, w) with frame {(d_th1, dz), (d_th2, 0), (d_z, -dth1), (0, dw)}
DiracPointFrame t2r2() {
    return frame({{e(4, 0), e(4, 2)}, {e(4, 1), zero(4)}, {e(4, 2), -e(4, 0)}, {zero(4), e(4, 3)}});
}

MatrixXd cols(std::initializer_list<VectorXd> vs) {
    MatrixXd m(vs.begin()->size(), static_cast<Eigen::Index>(vs.size()));
    Eigen::Index j = 0;
    for (const auto& v : vs) m.col(j++) = v;
    return m;
}

DiracPointFrame recombine(const DiracPointFrame& f, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    MatrixXd r(f.n(), f.n());
    for (;;) {
        for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = g(rng);
        if (std::abs(r.determinant()) > 0.1) break;
    }
    return DiracPointFrame(f.matrix() * r, f.point());
}

}  // namespace

TEST_CASE("pairing values") {
    DoubleVector a{e(2, 0), e(2, 1)}, b{e(2, 1), e(2, 0)}, c{e(2, 1), -e(2, 0)};
    CHECK(pairing(a, b) == 1.0);
    CHECK(pairing(a, a) == 0.0);
    CHECK(pairing(a, c) == 0.0);
    CHECK_THROWS(pairing(a, DoubleVector{e(3, 0), e(3, 1)}));
}

TEST_CASE("pairing is symmetric and bilinear") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    auto rnd = [&] {
        DoubleVector v{VectorXd(5), VectorXd(5)};
        for (int i = 0; i < 5; ++i) v.x[i] = g(rng), v.a[i] = g(rng);
        return v;
    };
    for (int t = 0; t < 50; ++t) {
        DoubleVector u = rnd(), v = rnd(), w = rnd();
        double s = g(rng);
        CHECK(std::abs(pairing(u, v) - pairing(v, u)) <= 1e-12);
        DoubleVector lin{u.x * s + w.x, u.a * s + w.a};
        CHECK(std::abs(pairing(lin, v) - (s * pairing(u, v) + pairing(w, v))) <= 1e-12);
    }
}

TEST_CASE("isotropy gram") {
    CHECK(isotropy_defect(symplectic_plane()) == 0.0);
    DiracPointFrame bad = frame({{e(1, 0), e(1, 0)}});
    CHECK(isotropy_gram(bad)(0, 0) == 1.0);
    CHECK_THROWS(require_dirac_frame(bad));
    MatrixXd g = isotropy_gram(t2r2());
    CHECK(g.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.rows() == 4);
}

TEST_CASE("bi-corank") {
    CHECK(bi_corank(symplectic_plane()) == BiCorank{0, 0, 1});
    CHECK(bi_corank(poisson_r3()) == BiCorank{0, 1, 1});
    CHECK(bi_corank(t2r2()) == BiCorank{1, 1, 1});
    std::mt19937_64 rng(11);
    for (const auto& f : {symplectic_plane(), poisson_r3(), t2r2()})
        for (int t = 0; t < 5; ++t) CHECK(bi_corank(recombine(f, rng)) == bi_corank(f));
}

TEST_CASE("projections") {
    Projections p = projections(poisson_r3());
    CHECK(p.tangent.cols() == 2);
    CHECK(p.cotangent.cols() == 3);
    // span{d_x, d_y}: no z component
    CHECK(p.tangent.row(2).norm() <= 1e-14);
    CHECK(projections(symplectic_plane()).tangent.cols() == 2);
    Projections q = projections(t2r2());
    CHECK(q.tangent.cols() == 3);
    CHECK(q.tangent.row(3).norm() <= 1e-14);
}

TEST_CASE("leaf two-form") {
    MatrixXd w = leaf_form_on(symplectic_plane(), MatrixXd::Identity(2, 2));
    CHECK((w - (MatrixXd(2, 2) << 0, 1, -1, 0).finished()).norm() <= 1e-14);
    MatrixXd pw = leaf_form_on(poisson_r3(), cols({e(3, 0), e(3, 1)}));
    CHECK(pw(0, 1) == doctest::Approx(1.0));
    CHECK(pw(1, 0) == doctest::Approx(-1.0));
    MatrixXd tw = leaf_form_on(t2r2(), cols({e(4, 0), e(4, 1), e(4, 2)}));
    MatrixXd expect = MatrixXd::Zero(3, 3);
    expect(0, 2) = 1;
    expect(2, 0) = -1;
    CHECK((tw - expect).norm() <= 1e-14);
    LeafTwoForm lf = leaf_two_form(t2r2());
    CHECK(lf.rank == 2);
    CHECK((lf.omega + lf.omega.transpose()).norm() <= 1e-14);
    CHECK_THROWS(leaf_form_on(poisson_r3(), cols({e(3, 2)})));
}

TEST_CASE("leaf two-form does not depend on the frame basis") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    for (const auto& f : {symplectic_plane(2.5), poisson_r3(), t2r2()}) {
        Projections p = projections(f);
        MatrixXd test = p.tangent * MatrixXd::NullaryExpr(p.tangent.cols(), 4, [&] { return g(rng); });
        MatrixXd w0 = leaf_form_on(f, test);
        for (int t = 0; t < 5; ++t) {
            MatrixXd w1 = leaf_form_on(recombine(f, rng), test);
            CHECK((w1 - w0).cwiseAbs().maxCoeff() <= 1e-9);
        }
        // antisymmetry
        CHECK((w0 + w0.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("lagrangian check") {
    LagrangianVerdict a = lagrangian_check(cols({e(2, 0)}), symplectic_plane());
    CHECK(a.isotropic);
    CHECK(a.lagrangian);
    CHECK(a.expected_dim == 1);
    LagrangianVerdict b = lagrangian_check(cols({e(4, 0), e(4, 1)}), t2r2());
    CHECK(b.lagrangian);
    CHECK(b.expected_dim == 2);
    LagrangianVerdict c = lagrangian_check(cols({e(2, 0), e(2, 1)}), symplectic_plane());
    CHECK_FALSE(c.isotropic);
    CHECK(c.residual == doctest::Approx(1.0));
    LagrangianVerdict d = lagrangian_check(cols({e(3, 2)}), poisson_r3());
    CHECK_FALSE(d.in_leaf);
}

TEST_CASE("co-lagrangian check") {
    CoLagrangianVerdict a = colagrangian_check(cols({e(4, 3), e(4, 2)}), t2r2());
    CHECK(a.spanning);
    CHECK(a.transversal);
    CHECK(a.isotropic);
    CHECK(a.dimension_ok);
    CHECK(a.colagrangian);
    CoLagrangianVerdict b = colagrangian_check(cols({e(4, 1), e(4, 3)}), t2r2());
    CHECK_FALSE(b.transversal);
    CHECK_FALSE(b.colagrangian);
    CoLagrangianVerdict c = colagrangian_check(cols({e(2, 1)}), symplectic_plane());
    CHECK(c.colagrangian);
    CHECK(c.expected_dim == 1);
    // a leaf-isotropy failure: both d_th1 and d_z inside L
    CoLagrangianVerdict d = colagrangian_check(cols({e(4, 0), e(4, 2), e(4, 3)}), t2r2());
    CHECK_FALSE(d.isotropic);
}

TEST_CASE("lagrangian and co-lagrangian dimensions are complementary") {
    struct Case {
        DiracPointFrame f;
        MatrixXd n, l;
    };
    std::vector<Case> cases{
        {symplectic_plane(), cols({e(2, 0)}), cols({e(2, 1)})},
        {t2r2(), cols({e(4, 0), e(4, 1)}), cols({e(4, 2), e(4, 3)})},
        {poisson_r3(), cols({e(3, 0)}), cols({e(3, 1), e(3, 2)})},
    };
    for (const auto& c : cases) {
        auto lv = lagrangian_check(c.n, c.f);
        auto cv = colagrangian_check(c.l, c.f);
        REQUIRE(lv.lagrangian);
        REQUIRE(cv.colagrangian);
        CHECK(lv.dim + cv.dim == c.f.n());
    }
}

TEST_CASE("linear darboux") {
    LinearDarboux a = linear_darboux(symplectic_plane(2.0));
    CHECK(a.corank == BiCorank{0, 0, 1});
    CHECK(a.residual <= 1e-10);
    LinearDarboux b = linear_darboux(t2r2());
    CHECK(b.corank == BiCorank{1, 1, 1});
    CHECK(b.residual <= 1e-10);
    // kernel vector is +-d_th2, transversal is +-d_w
    CHECK(std::abs(b.basis(1, 2)) == doctest::Approx(1.0));
    CHECK(std::abs(b.basis(3, 3)) == doctest::Approx(1.0));
    LinearDarboux c = linear_darboux(poisson_r3());
    CHECK(c.corank == BiCorank{0, 1, 1});
    CHECK(c.residual <= 1e-10);

    // in the new coordinates D cap T*M is spanned by the dz covectors
    DiracPointFrame g = change_basis(t2r2(), b.basis);
    MatrixXd ann = g.cotangent() * null_basis(g.tangent());
    CHECK(ann.rows() == 4);
    CHECK(ann.topRows(3).norm() <= 1e-12);

    std::mt19937_64 rng(5);
    for (int t = 0; t < 5; ++t) {
        LinearDarboux r = linear_darboux(recombine(t2r2(), rng));
        CHECK(r.residual <= 1e-10);
    }
}
