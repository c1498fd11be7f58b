#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "doctest.h"
#include "diracaa/expr.hpp"
#include "diracaa/sampling.hpp"
#include "corpus.hpp"

using namespace diracaa;
using namespace diracaa::expr;

namespace {

Chart xyz() { return Chart::euclidean({"x", "y", "z"}, {{0.5, 2.0}, {0.5, 2.0}, {0.5, 2.0}}); }

Chart torus_chart() { return Chart({"th1", "th2", "z"}, {true, true, false}, {{0, 1}, {0, 1}, {-1, 1}}); }

double at(const Expression& e, std::vector<double> p) { return eval(e, p); }

double central(const Expression& e, std::vector<double> p, int i, double h) {
    auto a = p, b = p;
    a[static_cast<std::size_t>(i)] += h;
    b[static_cast<std::size_t>(i)] -= h;
    return (eval(e, a) - eval(e, b)) / (2 * h);
}

}  // namespace

TEST_CASE("parse builds the expected trees") {
    Chart c = Chart::euclidean({"x", "y"}, {{-1, 1}, {-1, 1}});
    Expression e = parse("x^2 + y^2", c);
    CHECK(e.same_as(pow(Expression::var(0), 2) + pow(Expression::var(1), 2)));
    Chart t({"th1"}, {true}, {{0, 1}});
    Expression s = parse("sin(2*pi*th1)", t);
    CHECK(s.same_as(sin(Expression::integer(2) * Expression::pi() * Expression::var(0))));
}

TEST_CASE("parse errors carry offsets") {
    Chart c = Chart::euclidean({"x", "y"}, {{-1, 1}, {-1, 1}});
    try {
        parse("x + ", c);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 4);
    }
    CHECK_THROWS_AS(parse("q + 1", c), ParseError);
    CHECK_THROWS_AS(parse("sin(x, y)", c), ParseError);
    CHECK_THROWS_AS(parse("sin x", c), ParseError);
    CHECK_THROWS_AS(parse("sin()", c), ParseError);
    CHECK_THROWS_AS(parse("x^1.5", c), ParseError);
    CHECK_THROWS_AS(parse("(x + y", c), ParseError);
    CHECK_THROWS_AS(parse("x y", c), ParseError);
}

TEST_CASE("chart validation") {
    CHECK_THROWS(Chart::euclidean({"x", "x"}, {{0, 1}, {0, 1}}));
    CHECK_THROWS(Chart::euclidean({"pi"}, {{0, 1}}));
    CHECK_THROWS(Chart::euclidean({}, {}));
    Chart t({"th", "z"}, {true, false}, {{-5, 5}, {-1, 1}});
    CHECK(t.interval(0).lo == 0.0);
    CHECK(t.interval(0).hi == 1.0);
}

TEST_CASE("eval") {
    Chart c = Chart::euclidean({"x", "y"}, {{-1, 1}, {-1, 1}});
    CHECK(at(parse("x^2 + y^2", c), {3, 4}) == 25.0);
    Chart t({"th"}, {true}, {{0, 1}});
    CHECK(at(parse("sin(2*pi*th)", t), {0.25}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(at(parse("1/x", c), {0, 1}), EvalError);
    CHECK_THROWS_AS(at(parse("x^-2", c), {0, 1}), EvalError);
    CHECK(at(parse("-x^2", c), {3, 0}) == 9.0);
    CHECK(at(parse("-(x^2)", c), {3, 0}) == -9.0);
    CHECK(at(parse("2^-1", c), {0, 0}) == 0.5);
    CHECK(at(parse("1.5e1 - x/2", c), {1, 0}) == 14.5);
}

TEST_CASE("exact rationals are preserved") {
    Chart c = Chart::euclidean({"x"}, {{-1, 1}});
    Expression e = simplify(parse("1/3 + 1/6", c));
    REQUIRE(e.is_constant());
    CHECK(e.number().exact);
    CHECK(e.number().num == 1);
    CHECK(e.number().den == 2);
    Expression f = simplify(parse("0.5 + 1/2", c));
    REQUIRE(f.is_constant());
    CHECK_FALSE(f.number().exact);
    CHECK(f.number().value == 1.0);
    Number big = Number::integer(INT64_MAX) * Number::integer(4);
    CHECK_FALSE(big.exact);
}

TEST_CASE("diff matches closed forms") {
    Chart c = Chart::euclidean({"x", "y"}, {{-1, 1}, {-1, 1}});
    CHECK(diff(parse("x^2 + y^2", c), "x", c).same_as(simplify(parse("2*x", c))));
    Chart t({"th"}, {true}, {{0, 1}});
    Expression d = diff(parse("sin(2*pi*th)", t), "th", t);
    for (double th : {0.0, 0.1, 0.37, 0.8})
        CHECK(at(d, {th}) == doctest::Approx(2 * std::numbers::pi * std::cos(2 * std::numbers::pi * th)));
    CHECK(diff(parse("pi*3 + 7", c), "x", c).is_zero_constant());
    CHECK_THROWS(diff(parse("x", c), "q", c));
}

TEST_CASE("simplify") {
    Chart c = Chart::euclidean({"x", "y", "u"}, {{-1, 1}, {-1, 1}, {-3, 3}});
    CHECK(simplify(parse("x*1 + 0", c)).same_as(Expression::var(0)));
    CHECK(simplify(parse("x - x", c)).is_zero_constant());
    CHECK(simplify(parse("(x + 1)*(x + 1)/(1 + x)^2", c)).is_one_constant());
    CHECK(simplify(parse("sin(0) + cos(0)*exp(0)", c)).is_one_constant());
    Expression trig = parse("sin(u)^2 + cos(u)^2 - 1", c);
    ZeroCheck z = is_zero(trig, c);
    CHECK(z.zero);
    CHECK_FALSE(z.symbolic);
    ZeroCheck s = is_zero(parse("x*y - y*x", c), c);
    CHECK(s.zero);
    CHECK(s.symbolic);
    CHECK_FALSE(is_zero(parse("x*y", c), c).zero);
    // division by a literal zero stays symbolic and still fails at evaluation
    Expression dz = simplify(parse("x/0", c));
    CHECK_THROWS_AS(at(dz, {1, 1, 1}), EvalError);
}

TEST_CASE("simplify preserves values on the corpus") {
    Chart c = xyz();
    auto pts = sample_chart(c, 32);
    for (const auto& src : test_corpus::expressions()) {
        Expression e = parse(src, c);
        Expression s = simplify(e);
        for (const auto& p : pts) {
            double a = eval(e, {p.data(), 3});
            double b = eval(s, {p.data(), 3});
            CHECK_MESSAGE(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)), src);
        }
    }
}

TEST_CASE("render/parse round trip on the corpus") {
    Chart c = xyz();
    REQUIRE(test_corpus::expressions().size() >= 50);
    for (const auto& src : test_corpus::expressions()) {
        Expression e = parse(src, c);
        std::string text = render(e, c);
        CHECK_MESSAGE(parse(text, c).same_as(e), src << " -> " << text);
        // derived trees also survive the trip
        Expression s = simplify(e);
        CHECK_MESSAGE(parse(render(s, c), c).same_as(s), src);
        Expression d = diff(e, 0);
        CHECK_MESSAGE(parse(render(d, c), c).same_as(d), src);
    }
}

TEST_CASE("diff agrees with central differences") {
    Chart c = xyz();
    auto pts = sample_chart(c, 16);
    for (const auto& src : test_corpus::expressions()) {
        Expression e = parse(src, c);
        for (int i = 0; i < 3; ++i) {
            Expression d = diff(e, i);
            for (const auto& p : pts) {
                std::vector<double> v(p.data(), p.data() + 3);
                double exact = eval(d, v);
                // Richardson over h and h/2 removes the O(h^2) term
                double h = 1e-3;
                double fd = (4 * central(e, v, i, h / 2) - central(e, v, i, h)) / 3;
                CHECK_MESSAGE(std::abs(exact - fd) <= 1e-6 * std::max(1.0, std::abs(exact)), src << " d/" << i);
            }
        }
    }
}

TEST_CASE("diff is linear, obeys the product rule and Clairaut") {
    Chart c = xyz();
    auto pts = sample_chart(c, 64);
    const auto& corpus = test_corpus::expressions();
    for (std::size_t k = 0; k + 1 < corpus.size(); k += 3) {
        Expression e1 = parse(corpus[k], c), e2 = parse(corpus[k + 1], c);
        Expression a = Expression::rational(3, 7), b = Expression::integer(-2);
        Expression lin = diff(a * e1 + b * e2, 1);
        Expression lin_ref = a * diff(e1, 1) + b * diff(e2, 1);
        Expression prod = diff(e1 * e2, 2);
        Expression prod_ref = diff(e1, 2) * e2 + e1 * diff(e2, 2);
        Expression xy = diff(diff(e1, 0), 1), yx = diff(diff(e1, 1), 0);
        for (const auto& p : pts) {
            std::span<const double> v(p.data(), 3);
            double l = eval(lin, v), lr = eval(lin_ref, v);
            CHECK(std::abs(l - lr) <= 1e-12 * std::max(1.0, std::abs(lr)));
            double q = eval(prod, v), qr = eval(prod_ref, v);
            CHECK(std::abs(q - qr) <= 1e-12 * std::max(1.0, std::abs(qr)));
            double m1 = eval(xy, v), m2 = eval(yx, v);
            CHECK(std::abs(m1 - m2) <= 1e-10 * std::max(1.0, std::abs(m1)));
        }
    }
}

TEST_CASE("program matches tree evaluation") {
    Chart c = xyz();
    auto pts = sample_chart(c, 16);
    for (const auto& src : test_corpus::expressions()) {
        Expression e = parse(src, c);
        Program prog(e);
        for (const auto& p : pts) CHECK(prog({p.data(), 3}) == eval(e, {p.data(), 3}));
    }
    Chart t = torus_chart();
    Program tp(parse("z + sin(2*pi*th1)", t));
    std::vector<double> v{0.25, 0.0, 0.5};
    CHECK(tp(v) == doctest::Approx(1.5));
}

TEST_CASE("substitute") {
    Chart c = Chart::euclidean({"x", "y"}, {{-1, 1}, {-1, 1}});
    std::vector<Expression> rep{Expression::integer(3), Expression::var(0)};
    Expression e = simplify(substitute(parse("x*y + y^2", c), rep));
    CHECK(e.same_as(simplify(parse("3*x + x^2", c))));
}
