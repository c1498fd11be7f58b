#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace diracaa {

/// Closed interval used to describe the sampling box of a chart.
struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// A coordinate chart: named coordinates, periodicity flags and a sampling box.
/// Periodic coordinates are taken mod 1 and always have the box [0,1).
class Chart {
public:
    Chart() = default;
    Chart(std::vector<std::string> names, std::vector<bool> periodic, std::vector<Interval> box);

    /// All coordinates non-periodic.
    static Chart euclidean(std::vector<std::string> names, std::vector<Interval> box);

    int dim() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
    bool periodic(int i) const { return periodic_.at(static_cast<std::size_t>(i)); }
    const std::vector<bool>& periodic_flags() const { return periodic_; }
    const Interval& interval(int i) const { return box_.at(static_cast<std::size_t>(i)); }
    const std::vector<Interval>& box() const { return box_; }

    /// Index of a coordinate name, or -1.
    int index_of(std::string_view name) const;

    /// Chart obtained by deleting the given coordinate indices.
    Chart drop(const std::vector<int>& removed) const;

    bool operator==(const Chart& other) const;

private:
    std::vector<std::string> names_;
    std::vector<bool> periodic_;
    std::vector<Interval> box_;
};

using ChartPtr = std::shared_ptr<const Chart>;

inline ChartPtr make_chart(Chart c) { return std::make_shared<const Chart>(std::move(c)); }

namespace expr {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t offset, const std::string& what);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class EvalError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Numeric constant. Rationals stay exact while both operands are exact and
/// the result fits in 64 bits; everything else is an IEEE double.
struct Number {
    double value = 0.0;
    bool exact = true;
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Number integer(std::int64_t n);
    static Number rational(std::int64_t n, std::int64_t d);
    static Number real(double v);

    bool is_zero() const { return exact ? num == 0 : value == 0.0; }
    bool is_one() const { return exact ? (num == 1 && den == 1) : value == 1.0; }
    bool is_negative() const { return exact ? num < 0 : value < 0.0; }
    bool operator==(const Number& o) const;
};

Number operator+(const Number& a, const Number& b);
Number operator-(const Number& a);
Number operator-(const Number& a, const Number& b);
Number operator*(const Number& a, const Number& b);
Number operator/(const Number& a, const Number& b);
Number pow(const Number& a, int k);

enum class Op { Const, Var, Pi, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp };

struct Node;

/// Immutable expression tree. Coordinates are referenced by chart index;
/// containers that own expressions (fields, forms) carry the chart.
class Expression {
public:
    Expression();  // the integer 0

    static Expression constant(Number n);
    static Expression integer(std::int64_t n) { return constant(Number::integer(n)); }
    static Expression rational(std::int64_t n, std::int64_t d) { return constant(Number::rational(n, d)); }
    static Expression real(double v) { return constant(Number::real(v)); }
    static Expression var(int index);
    static Expression pi();

    Op op() const;
    const Number& number() const;  // Const only
    int var_index() const;          // Var only
    int exponent() const;           // Pow only
    const Expression& lhs() const;  // unary/binary operand
    const Expression& rhs() const;  // binary operand

    bool is_constant() const { return op() == Op::Const; }
    bool is_zero_constant() const { return is_constant() && number().is_zero(); }
    bool is_one_constant() const { return is_constant() && number().is_one(); }

    /// Structural (tree) equality.
    bool same_as(const Expression& other) const;

    /// Largest coordinate index referenced, or -1.
    int max_var() const;
    std::size_t node_count() const;

    friend Expression operator+(const Expression& a, const Expression& b);
    friend Expression operator-(const Expression& a, const Expression& b);
    friend Expression operator*(const Expression& a, const Expression& b);
    friend Expression operator/(const Expression& a, const Expression& b);
    friend Expression operator-(const Expression& a);
    friend Expression pow(const Expression& a, int k);
    friend Expression sin(const Expression& a);
    friend Expression cos(const Expression& a);
    friend Expression exp(const Expression& a);

private:
    friend struct Node;
    explicit Expression(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    static Expression unary(Op op, const Expression& a);
    static Expression binary(Op op, const Expression& a, const Expression& b);
    std::shared_ptr<const Node> node_;
};

Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);
Expression pow(const Expression& a, int k);
Expression sin(const Expression& a);
Expression cos(const Expression& a);
Expression exp(const Expression& a);

struct Node {
    Op op = Op::Const;
    Number num{};
    int index = 0;  // variable index or power exponent
    Expression a{std::shared_ptr<const Node>()};
    Expression b{std::shared_ptr<const Node>()};
};

/// Parses the closed grammar
///   expr := term (("+"|"-") term)* ; term := factor (("*"|"/") factor)* ;
///   factor := base ("^" integer)? ;
///   base := number | ident | "pi" | "(" expr ")" | ("sin"|"cos"|"exp") "(" expr ")" | "-" base
Expression parse(std::string_view src, const Chart& chart);

/// Text form that parses back to a structurally equal tree.
std::string render(const Expression& e, const Chart& chart);

double eval(const Expression& e, std::span<const double> point);

Expression diff(const Expression& e, int coord);
Expression diff(const Expression& e, std::string_view coord, const Chart& chart);

/// Terminating rewrite: constant folding, 0/1 absorption, like-term merge on
/// flattened sums and products. Not a canonical form.
Expression simplify(const Expression& e);

/// Replaces every Var(i) by replacement[i].
Expression substitute(const Expression& e, std::span<const Expression> replacement);

/// Outcome of a zero test: symbolic when the simplifier reaches 0, otherwise
/// decided by sampling.
struct ZeroCheck {
    bool zero = false;
    bool symbolic = false;
    double max_abs = 0.0;
};

ZeroCheck is_zero(const Expression& e, const Chart& chart, int samples = 128, double tol = 1e-10);

/// Flat stack program for repeated evaluation in hot loops (flows, quadrature).
class Program {
public:
    Program() = default;
    explicit Program(const Expression& e);
    double operator()(std::span<const double> point) const;

private:
    struct Instr {
        Op op;
        int arg;
        double value;
    };
    std::vector<Instr> code_;
    std::size_t max_stack_ = 0;
};

}  // namespace expr

using expr::Expression;

}  // namespace diracaa
