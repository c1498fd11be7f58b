#include <functional>
#include <random>

#include "doctest.h"
#include "diracaa/fields.hpp"
#include "diracaa/sampling.hpp"
#include "oracles.hpp"

using namespace diracaa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ChartPtr xy() { return make_chart(Chart::euclidean({"x", "y"}, {{-1, 1}, {-1, 1}})); }
ChartPtr xyz() { return make_chart(Chart::euclidean({"x", "y", "z"}, {{-1, 1}, {-1, 1}, {-1, 1}})); }

Expression P(const ChartPtr& c, const std::string& s) { return expr::parse(s, *c); }

KForm two_form(const ChartPtr& c, int i, int j, const std::string& coef) {
    KForm f(c, 2);
    f.add({i, j}, P(c, coef));
    return f;
}

double max_abs_diff(const KForm& a, const KForm& b, const std::vector<VectorXd>& pts) {
    KForm d = a - b;
    double worst = 0.0;
    for (const auto& p : pts)
        for (const auto& [idx, c] : d.terms()) worst = std::max(worst, std::abs(expr::eval(c, {p.data(), static_cast<std::size_t>(p.size())})));
    return worst;
}

bool vf_zero(const VectorField& v, const std::vector<VectorXd>& pts, double tol) {
    for (const auto& p : pts)
        if (v.at(p).cwiseAbs().maxCoeff() > tol) return false;
    return true;
}

}  // namespace

TEST_CASE("lie bracket examples") {
    auto c = xy();
    auto dx = VectorField::coordinate(c, 0), dy = VectorField::coordinate(c, 1);
    auto b = lie_bracket(dx, dy);
    CHECK(b[0].is_zero_constant());
    CHECK(b[1].is_zero_constant());
    auto xdy = VectorField::parse(c, {"0", "x"});
    auto r = lie_bracket(xdy, dx);
    CHECK(r[0].is_zero_constant());
    CHECK(r[1].same_as(Expression::integer(-1)));
    // flow-commutator oracle: [X,Y] = L_X Y
    VectorXd p(2);
    p << 0.3, -0.2;
    VectorXd lf = oracle::lie_by_flow(TensorField::from(dx), xdy, p);
    CHECK((lf - r.at(p)).norm() <= 1e-9);
    std::mt19937_64 rng(1);
    auto rx = oracle::random_field(rng, xyz());
    auto z = lie_bracket(rx, rx);
    for (int i = 0; i < 3; ++i) CHECK(z[i].is_zero_constant());
}

TEST_CASE("exterior derivative examples") {
    auto c = xyz();
    KForm a = KForm::parse_one_form(c, {"0", "x", "0"});
    KForm d = exterior_d(a);
    CHECK(d.terms().size() == 1);
    CHECK(d.coefficient({0, 1}).is_one_constant());
    KForm b = two_form(c, 0, 1, "z");
    KForm db = exterior_d(b);
    // dz^dx^dy = dx^dy^dz
    CHECK(db.coefficient({2, 0, 1}).is_one_constant());
    CHECK(db.coefficient({0, 1, 2}).is_one_constant());
    KForm dh = KForm::differential(c, P(c, "x^2*y"));
    CHECK(exterior_d(dh).is_symbolically_zero());
    // top degree
    auto line = make_chart(Chart::euclidean({"t"}, {{0, 1}}));
    KForm top = KForm::one_form(line, {P(line, "t^2")});
    CHECK(exterior_d(top).degree() == 2);
    CHECK(exterior_d(top).is_symbolically_zero());
}

TEST_CASE("interior product examples") {
    auto c = xy();
    KForm w = two_form(c, 0, 1, "1");
    KForm a = interior(VectorField::coordinate(c, 0), w);
    CHECK(a.coefficient({1}).is_one_constant());
    CHECK(a.coefficient({0}).is_zero_constant());
    KForm b = interior(VectorField::parse(c, {"y", "-x"}), w);
    CHECK(b.coefficient({0}).same_as(P(c, "x")));
    CHECK(b.coefficient({1}).same_as(P(c, "y")));
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t) {
        auto x = oracle::random_field(rng, xyz());
        auto om = oracle::random_form(rng, xyz(), 2);
        KForm ii = interior(x, interior(x, om));
        auto pts = sample_chart(*xyz(), 16);
        for (const auto& p : pts) CHECK(std::abs(ii.scalar_at({p.data(), 3})) <= 1e-12);
    }
    CHECK_THROWS(interior(VectorField::coordinate(c, 0), KForm::function(c, P(c, "x"))));
}

TEST_CASE("lie derivative examples") {
    auto c = xy();
    KForm a = KForm::parse_one_form(c, {"0", "x"});
    KForm l = lie_derivative(VectorField::coordinate(c, 0), a);
    CHECK(l.coefficient({1}).is_one_constant());
    CHECK(l.coefficient({0}).is_zero_constant());
    KForm w = two_form(c, 0, 1, "1");
    CHECK(lie_derivative(VectorField::parse(c, {"y", "-x"}), w).is_symbolically_zero());
}

TEST_CASE("lie derivative of tensors agrees with the flow oracle") {
    std::mt19937_64 rng(9);
    auto c = xyz();
    auto pts = sample_chart(*c, 4, 3);
    for (int t = 0; t < 3; ++t) {
        auto x = oracle::random_field(rng, c, 1);
        auto a = oracle::random_form(rng, c, 1);
        auto w = oracle::random_form(rng, c, 2);
        TensorField mixed(c, 1, 1);
        for (std::size_t f = 0; f < mixed.size(); ++f) mixed[f] = oracle::random_expression(rng, 3, 1);
        for (const auto& p : pts) {
            VectorXd p2 = 0.5 * p;
            std::span<const double> sp(p2.data(), 3);
            CHECK((oracle::lie_by_flow(TensorField::from(a), x, p2) - TensorField::from(lie_derivative(x, a)).values_at(sp)).cwiseAbs().maxCoeff() <= 1e-8);
            CHECK((oracle::lie_by_flow(TensorField::from(w), x, p2) - TensorField::from(lie_derivative(x, w)).values_at(sp)).cwiseAbs().maxCoeff() <= 1e-8);
            CHECK((oracle::lie_by_flow(mixed, x, p2) - lie_derivative(x, mixed).values_at(sp)).cwiseAbs().maxCoeff() <= 1e-8);
            // the tensor and form paths agree
            CHECK((lie_derivative(x, TensorField::from(w)).values_at(sp) - TensorField::from(lie_derivative(x, w)).values_at(sp)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("schouten examples") {
    auto c = xy();
    BivectorField pi(c);
    pi.add(0, 1, Expression::integer(1));
    CHECK(schouten(VectorField::coordinate(c, 0), pi).terms().empty());
    BivectorField s = schouten(VectorField::parse(c, {"x", "0"}), pi);
    CHECK(s.coefficient(0, 1).same_as(Expression::integer(-1)));
    CHECK(schouten(VectorField::parse(c, {"-y", "x"}), pi).terms().empty());
}

TEST_CASE("schouten agrees with the flow oracle") {
    std::mt19937_64 rng(21);
    auto c = xyz();
    for (int t = 0; t < 3; ++t) {
        auto x = oracle::random_field(rng, c, 1);
        BivectorField pi(c);
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) pi.add(i, j, oracle::random_expression(rng, 3, 2));
        for (const auto& p : sample_chart(*c, 4, 5)) {
            VectorXd p2 = 0.5 * p;
            VectorXd flow = oracle::lie_by_flow(TensorField::from(pi), x, p2);
            VectorXd sym = TensorField::from(schouten(x, pi)).values_at({p2.data(), 3});
            CHECK((flow - sym).cwiseAbs().maxCoeff() <= 1e-9);
        }
    }
}

TEST_CASE("calculus identities on random fixtures") {
    std::mt19937_64 rng(4);
    auto c = xyz();
    auto pts = sample_chart(*c, 32);
    for (int t = 0; t < 6; ++t) {
        auto x = oracle::random_field(rng, c), y = oracle::random_field(rng, c), z = oracle::random_field(rng, c);
        // Jacobi
        VectorField jac = lie_bracket(x, lie_bracket(y, z)) + lie_bracket(y, lie_bracket(z, x)) + lie_bracket(z, lie_bracket(x, y));
        CHECK(vf_zero(jac, pts, 1e-9));
        for (int k = 0; k <= 2; ++k) {
            auto a = oracle::random_form(rng, c, k);
            // d^2 = 0
            KForm dd = exterior_d(exterior_d(a));
            CHECK(max_abs_diff(dd, KForm(c, k + 2), pts) <= 1e-10);
            if (k >= 1) {
                // Cartan
                KForm cartan = interior(x, exterior_d(a)) + exterior_d(interior(x, a));
                KForm lie = lie_derivative(x, a);
                auto lt = lie_derivative(x, TensorField::from(a));
                for (const auto& p : pts) {
                    std::span<const double> sp(p.data(), 3);
                    CHECK((TensorField::from(cartan).values_at(sp) - lt.values_at(sp)).cwiseAbs().maxCoeff() <= 1e-10);
                }
                CHECK(max_abs_diff(cartan, lie, pts) <= 1e-10);
            }
            // Leibniz over the wedge
            auto b = oracle::random_form(rng, c, 1);
            KForm lhs = lie_derivative(x, wedge(a, b));
            KForm rhs = wedge(lie_derivative(x, a), b) + wedge(a, lie_derivative(x, b));
            CHECK(max_abs_diff(lhs, rhs, pts) <= 1e-9);
        }
    }
}

TEST_CASE("pullback to coordinate slices") {
    auto c = xy();
    KForm w = two_form(c, 0, 1, "1");
    CHECK(pullback_to_slice(w, {{1, 0.0}}).is_symbolically_zero());
    auto c4 = make_chart(Chart({"th1", "z", "w"}, {true, false, false}, {{0, 1}, {-1, 1}, {-1, 5}}));
    KForm f(c4, 2);
    f.add({0, 1}, Expression::integer(1));
    f.add({1, 2}, Expression::integer(1));
    KForm s = pullback_to_slice(f, {{2, 3.0}});
    CHECK(s.chart()->dim() == 2);
    CHECK(s.chart()->name(1) == "z");
    CHECK(s.terms().size() == 1);
    CHECK(s.coefficient({0, 1}).is_one_constant());
    // dA^dth with A = A(z) on {z = c}
    auto cz = make_chart(Chart({"th", "z"}, {true, false}, {{0, 1}, {0, 2}}));
    KForm da = KForm::differential(cz, P(cz, "pi*z^2"));
    KForm dth = KForm::differential(cz, P(cz, "th"));
    CHECK(pullback_to_slice(wedge(da, dth), {{1, 0.7}}).is_symbolically_zero());
    // coefficients are restricted too
    KForm g = KForm::parse_one_form(cz, {"z^2", "th"});
    KForm gs = pullback_to_slice(g, {{1, 2.0}});
    CHECK(gs.coefficient({0}).same_as(Expression::integer(4)));
}

TEST_CASE("tensor conversions") {
    auto c = xy();
    KForm w = two_form(c, 0, 1, "x");
    TensorField t = TensorField::from(w);
    CHECK(t.at({0, 1}).same_as(Expression::var(0)));
    CHECK(expr::simplify(t.at({1, 0}) + Expression::var(0)).is_zero_constant());
    CHECK(t.at({0, 0}).is_zero_constant());
    BivectorField pi(c);
    pi.add(1, 0, Expression::integer(2));
    CHECK(pi.coefficient(0, 1).same_as(Expression::integer(-2)));
    CHECK(TensorField::from(pi).at({1, 0}).same_as(Expression::integer(2)));
}
