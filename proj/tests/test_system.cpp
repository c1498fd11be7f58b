#include "doctest.h"
#include "diracaa/sampling.hpp"
#include "diracaa/system.hpp"

using namespace diracaa;
using Eigen::VectorXd;

namespace {

ChartPtr plane() { return make_chart(Chart::euclidean({"x", "y"}, {{-2, 2}, {-2, 2}})); }

ChartPtr t2r(int extra) {
    std::vector<std::string> names{"th1", "th2", "z"};
    std::vector<bool> per{true, true, false};
    std::vector<Interval> box{{0, 1}, {0, 1}, {-1, 1}};
    if (extra) {
        names.push_back("w");
        per.push_back(false);
        box.push_back({-1, 1});
    }
    return make_chart(Chart(names, per, box));
}

Expression P(const ChartPtr& c, const std::string& s) { return expr::parse(s, *c); }
VectorField vf(const ChartPtr& c, std::vector<std::string> comps) { return VectorField::parse(c, comps); }

KForm two_form(const ChartPtr& c, int i, int j) {
    KForm f(c, 2);
    f.add({i, j}, Expression::rational(1, 1));
    return f;
}

IntegrableSystem oscillator() {
    auto c = plane();
    return IntegrableSystem(c, {vf(c, {"y", "-x"})}, {P(c, "(x^2 + y^2)/2")});
}

}  // namespace

TEST_CASE("system dimensions are validated") {
    auto c = plane();
    CHECK_THROWS_AS(IntegrableSystem(c, {vf(c, {"1", "0"})}, {}), std::invalid_argument);
    CHECK_THROWS_AS(IntegrableSystem(c, {}, {P(c, "x"), P(c, "y")}), std::invalid_argument);
    CHECK_NOTHROW(oscillator());
}

TEST_CASE("integrability of the oscillator and the flat torus family") {
    IntegrableSystem osc = oscillator();
    SampleSet s = default_samples(*osc.chart());
    IntegrabilityReport r = check_integrability(osc, s);
    CHECK(r.pass());
    CHECK(r.regular);
    CHECK(r.worst.commutator_residual == 0.0);
    CHECK(r.worst.invariance_residual <= 1e-12);
    // the equilibrium only warns
    s.push_back(VectorXd::Zero(2));
    IntegrabilityReport z = check_integrability(osc, s);
    CHECK(z.pass());
    CHECK(z.irregular_samples == 1);
    CHECK_FALSE(z.regular);
    CHECK(z.wedge_point.norm() == 0.0);

    auto c = t2r(0);
    IntegrableSystem flat(c, {vf(c, {"1", "0", "0"}), vf(c, {"0", "1", "0"})}, {P(c, "z")});
    IntegrabilityReport f = check_integrability(flat, default_samples(*c));
    CHECK(f.pass());
    CHECK(f.regular);
    CHECK(f.irregular_samples == 0);
}

TEST_CASE("non-commuting fields are reported") {
    auto c = make_chart(Chart::euclidean({"x", "y", "z"}, {{-1, 1}, {-1, 1}, {-1, 1}}));
    IntegrableSystem s(c, {vf(c, {"1", "0", "0"}), vf(c, {"0", "x", "0"})}, {P(c, "z")});
    IntegrabilityReport r = check_integrability(s, default_samples(*c));
    CHECK_FALSE(r.commuting);
    CHECK(r.worst.commutator_residual == doctest::Approx(1.0));
    CHECK(r.commutator_point.size() == 3);
}

TEST_CASE("non-invariant integrals are reported") {
    auto c = plane();
    IntegrableSystem s(c, {vf(c, {"1", "0"})}, {P(c, "x")});
    IntegrabilityReport r = check_integrability(s, default_samples(*c));
    CHECK_FALSE(r.invariant);
    CHECK(r.worst.invariance_residual == doctest::Approx(1.0));
}

TEST_CASE("regularity at a point") {
    IntegrableSystem osc = oscillator();
    CHECK(is_regular_at(osc, VectorXd::Unit(2, 0)));
    CHECK_FALSE(is_regular_at(osc, VectorXd::Zero(2)));
    RegularityReport r = regularity_at(osc, (VectorXd(2) << 0.6, 0.8).finished());
    CHECK(r.wedge_x_norm == doctest::Approx(1.0));
    CHECK(r.wedge_df_norm == doctest::Approx(1.0));
}

TEST_CASE("binding Hamiltonians") {
    IntegrableSystem osc = oscillator();
    DiracField d = from_presymplectic(two_form(osc.chart(), 0, 1));
    SampleSet s = default_samples(*osc.chart());
    IntegrableSystem bound = bind_hamiltonians(osc, d, {P(osc.chart(), "(x^2 + y^2)/2")}, s);
    CHECK(bound.hamiltonian());
    CHECK_FALSE(osc.hamiltonian());
    CHECK_THROWS_AS(bind_hamiltonians(osc, d, {P(osc.chart(), "x")}, s), std::domain_error);
    CHECK_THROWS_AS(bind_hamiltonians(osc, d, {}, s), std::invalid_argument);
    try {
        bind_hamiltonians(osc, d, {P(osc.chart(), "x")}, s);
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("X_1") != std::string::npos);
    }

    // T^2 x R^2 with leaf form dth1 ^ dz: H = (z, 0)
    auto c = t2r(1);
    KForm w = two_form(c, 0, 2);
    DiracField dd = from_presymplectic(w);
    IntegrableSystem sys(c, {vf(c, {"1", "0", "0", "0"}), vf(c, {"0", "1", "0", "0"})}, {P(c, "z"), P(c, "w")});
    SampleSet sc = default_samples(*c);
    IntegrableSystem b = bind_hamiltonians(sys, dd, {P(c, "z"), Expression::rational(0, 1)}, sc);
    CHECK(b.hamiltonians().size() == 2);
    CHECK_THROWS_AS(bind_hamiltonians(sys, dd, {P(c, "w"), Expression::rational(0, 1)}, sc), std::domain_error);
}

TEST_CASE("integrability is invariant under constant recombination") {
    auto c = t2r(0);
    IntegrableSystem a(c, {vf(c, {"1", "0", "0"}), vf(c, {"0", "1", "0"})}, {P(c, "z")});
    IntegrableSystem b(c, {vf(c, {"2", "1", "0"}), vf(c, {"1", "1", "0"})}, {P(c, "3*z + 1")});
    SampleSet s = default_samples(*c);
    CHECK(check_integrability(a, s).pass() == check_integrability(b, s).pass());
    CHECK(check_integrability(b, s).regular);
}

TEST_CASE("bound Hamiltonians are in involution") {
    auto c = t2r(1);
    DiracField dd = from_presymplectic(two_form(c, 0, 2));
    IntegrableSystem sys(c, {vf(c, {"1", "0", "0", "0"}), vf(c, {"0", "1", "0", "0"})}, {P(c, "z"), P(c, "w")});
    SampleSet sc = default_samples(*c);
    IntegrableSystem b = bind_hamiltonians(sys, dd, {P(c, "z"), Expression::rational(0, 1)}, sc);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            Expression br = sys.fields()[static_cast<std::size_t>(i)].apply(b.hamiltonians()[static_cast<std::size_t>(j)]);
            for (const auto& p : sc) CHECK(std::abs(expr::eval(br, {p.data(), 4})) <= 1e-12);
        }
}
