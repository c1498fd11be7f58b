#include "diracaa/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "diracaa/sampling.hpp"

namespace diracaa {

// ---------------------------------------------------------------- Chart

Chart::Chart(std::vector<std::string> names, std::vector<bool> periodic, std::vector<Interval> box)
    : names_(std::move(names)), periodic_(std::move(periodic)), box_(std::move(box)) {
    if (names_.empty()) throw std::invalid_argument("chart: dimension must be at least 1");
    if (periodic_.size() != names_.size() || box_.size() != names_.size())
        throw std::invalid_argument("chart: names, periodic flags and box must have equal length");
    for (std::size_t i = 0; i < names_.size(); ++i) {
        const auto& n = names_[i];
        if (n.empty() || !(std::isalpha(static_cast<unsigned char>(n[0])) || n[0] == '_'))
            throw std::invalid_argument("chart: invalid coordinate name '" + n + "'");
        if (n == "pi" || n == "sin" || n == "cos" || n == "exp")
            throw std::invalid_argument("chart: reserved coordinate name '" + n + "'");
        for (std::size_t j = 0; j < i; ++j)
            if (names_[j] == n) throw std::invalid_argument("chart: duplicate coordinate name '" + n + "'");
        if (periodic_[i]) {
            box_[i] = Interval{0.0, 1.0};
        } else if (!(box_[i].lo < box_[i].hi)) {
            throw std::invalid_argument("chart: empty domain interval for '" + n + "'");
        }
    }
}

Chart Chart::euclidean(std::vector<std::string> names, std::vector<Interval> box) {
    std::vector<bool> periodic(names.size(), false);
    return Chart(std::move(names), std::move(periodic), std::move(box));
}

int Chart::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    return -1;
}

Chart Chart::drop(const std::vector<int>& removed) const {
    std::vector<std::string> n;
    std::vector<bool> p;
    std::vector<Interval> b;
    for (int i = 0; i < dim(); ++i) {
        if (std::find(removed.begin(), removed.end(), i) != removed.end()) continue;
        n.push_back(names_[static_cast<std::size_t>(i)]);
        p.push_back(periodic_[static_cast<std::size_t>(i)]);
        b.push_back(box_[static_cast<std::size_t>(i)]);
    }
    return Chart(std::move(n), std::move(p), std::move(b));
}

bool Chart::operator==(const Chart& other) const {
    if (names_ != other.names_ || periodic_ != other.periodic_) return false;
    for (std::size_t i = 0; i < box_.size(); ++i)
        if (box_[i].lo != other.box_[i].lo || box_[i].hi != other.box_[i].hi) return false;
    return true;
}

namespace expr {

ParseError::ParseError(std::size_t offset, const std::string& what)
    : std::runtime_error("parse error at offset " + std::to_string(offset) + ": " + what), offset_(offset) {}

// ---------------------------------------------------------------- Number

namespace {

using i128 = __int128;

i128 gcd128(i128 a, i128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        i128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

Number from_wide(i128 n, i128 d) {
    if (d < 0) {
        n = -n;
        d = -d;
    }
    i128 g = gcd128(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    constexpr i128 lim = static_cast<i128>(INT64_MAX);
    if (n > lim || n < -lim || d > lim) return Number::real(static_cast<double>(n) / static_cast<double>(d));
    Number r;
    r.exact = true;
    r.num = static_cast<std::int64_t>(n);
    r.den = static_cast<std::int64_t>(d);
    r.value = static_cast<double>(r.num) / static_cast<double>(r.den);
    return r;
}

}  // namespace

Number Number::integer(std::int64_t n) { return from_wide(n, 1); }

Number Number::rational(std::int64_t n, std::int64_t d) {
    if (d == 0) throw std::invalid_argument("rational with zero denominator");
    return from_wide(n, d);
}

Number Number::real(double v) {
    Number r;
    r.exact = false;
    r.value = v;
    return r;
}

bool Number::operator==(const Number& o) const {
    if (exact != o.exact) return false;
    return exact ? (num == o.num && den == o.den) : value == o.value;
}

Number operator+(const Number& a, const Number& b) {
    if (a.exact && b.exact) return from_wide(static_cast<i128>(a.num) * b.den + static_cast<i128>(b.num) * a.den,
                                             static_cast<i128>(a.den) * b.den);
    return Number::real(a.value + b.value);
}

Number operator-(const Number& a) {
    if (a.exact) return from_wide(-static_cast<i128>(a.num), a.den);
    return Number::real(-a.value);
}

Number operator-(const Number& a, const Number& b) { return a + (-b); }

Number operator*(const Number& a, const Number& b) {
    if (a.exact && b.exact)
        return from_wide(static_cast<i128>(a.num) * b.num, static_cast<i128>(a.den) * b.den);
    return Number::real(a.value * b.value);
}

Number operator/(const Number& a, const Number& b) {
    if (b.is_zero()) throw EvalError("division by zero in constant folding");
    if (a.exact && b.exact)
        return from_wide(static_cast<i128>(a.num) * b.den, static_cast<i128>(a.den) * b.num);
    return Number::real(a.value / b.value);
}

Number pow(const Number& a, int k) {
    if (k < 0) return Number::integer(1) / pow(a, -k);
    Number r = Number::integer(1);
    Number base = a;
    while (k > 0) {
        if (k & 1) r = r * base;
        base = base * base;
        k >>= 1;
    }
    return r;
}

// ---------------------------------------------------------------- Expression

namespace {
const std::shared_ptr<const Node>& zero_node() {
    static const std::shared_ptr<const Node> z = [] {
        auto n = std::make_shared<Node>();
        n->op = Op::Const;
        n->num = Number::integer(0);
        return n;
    }();
    return z;
}
}  // namespace

Expression::Expression() : node_(zero_node()) {}

Expression Expression::constant(Number n) {
    auto node = std::make_shared<Node>();
    node->op = Op::Const;
    node->num = n;
    return Expression(std::move(node));
}

Expression Expression::var(int index) {
    if (index < 0) throw std::invalid_argument("negative coordinate index");
    auto node = std::make_shared<Node>();
    node->op = Op::Var;
    node->index = index;
    return Expression(std::move(node));
}

Expression Expression::pi() {
    auto node = std::make_shared<Node>();
    node->op = Op::Pi;
    return Expression(std::move(node));
}

Expression Expression::unary(Op op, const Expression& a) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->a = a;
    return Expression(std::move(node));
}

Expression Expression::binary(Op op, const Expression& a, const Expression& b) {
    auto node = std::make_shared<Node>();
    node->op = op;
    node->a = a;
    node->b = b;
    return Expression(std::move(node));
}

Op Expression::op() const { return node_->op; }
const Number& Expression::number() const { return node_->num; }
int Expression::var_index() const { return node_->index; }
int Expression::exponent() const { return node_->index; }
const Expression& Expression::lhs() const { return node_->a; }
const Expression& Expression::rhs() const { return node_->b; }

bool Expression::same_as(const Expression& other) const {
    if (node_ == other.node_) return true;
    if (op() != other.op()) return false;
    switch (op()) {
        case Op::Const: return number() == other.number();
        case Op::Var: return var_index() == other.var_index();
        case Op::Pi: return true;
        case Op::Neg:
        case Op::Sin:
        case Op::Cos:
        case Op::Exp: return lhs().same_as(other.lhs());
        case Op::Pow: return exponent() == other.exponent() && lhs().same_as(other.lhs());
        default: return lhs().same_as(other.lhs()) && rhs().same_as(other.rhs());
    }
}

int Expression::max_var() const {
    switch (op()) {
        case Op::Const:
        case Op::Pi: return -1;
        case Op::Var: return var_index();
        case Op::Neg:
        case Op::Sin:
        case Op::Cos:
        case Op::Exp:
        case Op::Pow: return lhs().max_var();
        default: return std::max(lhs().max_var(), rhs().max_var());
    }
}

std::size_t Expression::node_count() const {
    switch (op()) {
        case Op::Const:
        case Op::Pi:
        case Op::Var: return 1;
        case Op::Neg:
        case Op::Sin:
        case Op::Cos:
        case Op::Exp:
        case Op::Pow: return 1 + lhs().node_count();
        default: return 1 + lhs().node_count() + rhs().node_count();
    }
}

Expression operator+(const Expression& a, const Expression& b) { return Expression::binary(Op::Add, a, b); }
Expression operator-(const Expression& a, const Expression& b) { return Expression::binary(Op::Sub, a, b); }
Expression operator*(const Expression& a, const Expression& b) { return Expression::binary(Op::Mul, a, b); }
Expression operator/(const Expression& a, const Expression& b) { return Expression::binary(Op::Div, a, b); }
Expression operator-(const Expression& a) { return Expression::unary(Op::Neg, a); }
Expression sin(const Expression& a) { return Expression::unary(Op::Sin, a); }
Expression cos(const Expression& a) { return Expression::unary(Op::Cos, a); }
Expression exp(const Expression& a) { return Expression::unary(Op::Exp, a); }

Expression pow(const Expression& a, int k) {
    auto node = std::make_shared<Node>();
    node->op = Op::Pow;
    node->a = a;
    node->index = k;
    return Expression(std::move(node));
}

// ---------------------------------------------------------------- parse

namespace {

class Parser {
public:
    Parser(std::string_view src, const Chart& chart) : src_(src), chart_(chart) {}

    Expression run() {
        Expression e = expr();
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(pos_, msg); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expression expr() {
        Expression e = term();
        for (;;) {
            if (accept('+'))
                e = e + term();
            else if (accept('-'))
                e = e - term();
            else
                return e;
        }
    }

    Expression term() {
        Expression e = factor();
        for (;;) {
            if (accept('*')) {
                e = e * factor();
            } else if (accept('/')) {
                Expression d = factor();
                // exact literal quotients are rational constants, so rendered rationals read back as such
                if (e.is_constant() && d.is_constant() && e.number().exact && d.number().exact && !d.number().is_zero())
                    e = Expression::constant(e.number() / d.number());
                else
                    e = e / d;
            } else
                return e;
        }
    }

    Expression factor() {
        Expression b = base();
        if (accept('^')) {
            skip_ws();
            bool neg = false;
            if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+')) {
                neg = src_[pos_] == '-';
                ++pos_;
            }
            std::size_t start = pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            if (start == pos_) fail("integer exponent expected");
            if (pos_ < src_.size() && (src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E'))
                fail("integer exponent expected");
            int k = 0;
            auto [p, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, k);
            if (ec != std::errc()) fail("exponent out of range");
            return pow(b, neg ? -k : k);
        }
        return b;
    }

    Expression base() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        char c = src_[pos_];
        if (c == '-') {
            ++pos_;
            skip_ws();
            if (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
                return Expression::constant(-number().number());
            return -base();
        }
        if (c == '(') {
            ++pos_;
            Expression e = expr();
            if (!accept(')')) fail("')' expected");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            std::string id(src_.substr(start, pos_ - start));
            if (id == "sin" || id == "cos" || id == "exp") {
                if (!accept('(')) fail("function '" + id + "' expects 1 argument in parentheses");
                skip_ws();
                if (pos_ < src_.size() && src_[pos_] == ')') fail("function '" + id + "' expects 1 argument");
                Expression arg = expr();
                if (accept(',')) fail("function '" + id + "' expects 1 argument");
                if (!accept(')')) fail("')' expected");
                if (id == "sin") return sin(arg);
                if (id == "cos") return cos(arg);
                return exp(arg);
            }
            if (id == "pi") return Expression::pi();
            int idx = chart_.index_of(id);
            if (idx < 0) {
                pos_ = start;
                fail("unknown identifier '" + id + "'");
            }
            return Expression::var(idx);
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    Expression number() {
        std::size_t start = pos_;
        bool real = false;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            real = true;
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                real = true;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string_view text = src_.substr(start, pos_ - start);
        if (text == ".") {
            pos_ = start;
            fail("malformed number");
        }
        if (!real) {
            std::int64_t v = 0;
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec == std::errc()) return Expression::integer(v);
        }
        double v = 0.0;
        auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc()) {
            pos_ = start;
            fail("malformed number");
        }
        return Expression::real(v);
    }

    std::string_view src_;
    const Chart& chart_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression parse(std::string_view src, const Chart& chart) { return Parser(src, chart).run(); }

// ---------------------------------------------------------------- render

namespace {

std::string render_number(const Number& n) {
    if (n.exact) {
        if (n.den == 1) {
            if (n.num < 0) return "(" + std::to_string(n.num) + ")";
            return std::to_string(n.num);
        }
        return "(" + std::to_string(n.num) + "/" + std::to_string(n.den) + ")";
    }
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), n.value);
    std::string s(buf, p);
    if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos &&
        s.find("nan") == std::string::npos)
        s += ".0";
    if (n.value < 0 || std::signbit(n.value)) return "(" + s + ")";
    return s;
}

int level(const Expression& e) {
    switch (e.op()) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Pow: return 3;
        default: return 4;
    }
}

template <class NameFn>
void render_to(std::string& out, const Expression& e, int min_level, const NameFn& name) {
    const bool wrap = level(e) < min_level;
    if (wrap) out += '(';
    switch (e.op()) {
        case Op::Const: out += render_number(e.number()); break;
        case Op::Var: out += name(e.var_index()); break;
        case Op::Pi: out += "pi"; break;
        case Op::Neg:
            out += '-';
            if (e.lhs().op() == Op::Const && !e.lhs().number().is_negative()) {
                out += '(';
                out += render_number(e.lhs().number());
                out += ')';
            } else {
                render_to(out, e.lhs(), 4, name);
            }
            break;
        case Op::Add:
        case Op::Sub:
            render_to(out, e.lhs(), 1, name);
            out += e.op() == Op::Add ? " + " : " - ";
            render_to(out, e.rhs(), 2, name);
            break;
        case Op::Mul:
        case Op::Div:
            render_to(out, e.lhs(), 2, name);
            out += e.op() == Op::Mul ? "*" : "/";
            render_to(out, e.rhs(), 3, name);
            break;
        case Op::Pow:
            render_to(out, e.lhs(), 4, name);
            out += '^';
            out += std::to_string(e.exponent());
            break;
        case Op::Sin:
        case Op::Cos:
        case Op::Exp:
            out += e.op() == Op::Sin ? "sin(" : e.op() == Op::Cos ? "cos(" : "exp(";
            render_to(out, e.lhs(), 1, name);
            out += ')';
            break;
    }
    if (wrap) out += ')';
}

std::string key_of(const Expression& e) {
    std::string s;
    render_to(s, e, 1, [](int i) { return "#" + std::to_string(i); });
    return s;
}

}  // namespace

std::string render(const Expression& e, const Chart& chart) {
    std::string s;
    render_to(s, e, 1, [&](int i) {
        if (i >= chart.dim()) throw std::out_of_range("render: coordinate index outside chart");
        return chart.name(i);
    });
    return s;
}

// ---------------------------------------------------------------- eval

namespace {
double ipow(double x, int k) {
    if (k < 0) {
        if (x == 0.0) throw EvalError("negative power of zero");
        return 1.0 / ipow(x, -k);
    }
    double r = 1.0;
    while (k > 0) {
        if (k & 1) r *= x;
        x *= x;
        k >>= 1;
    }
    return r;
}
}  // namespace

double eval(const Expression& e, std::span<const double> point) {
    switch (e.op()) {
        case Op::Const: return e.number().value;
        case Op::Var:
            if (static_cast<std::size_t>(e.var_index()) >= point.size())
                throw std::out_of_range("eval: point has too few coordinates");
            return point[static_cast<std::size_t>(e.var_index())];
        case Op::Pi: return std::numbers::pi;
        case Op::Neg: return -eval(e.lhs(), point);
        case Op::Add: return eval(e.lhs(), point) + eval(e.rhs(), point);
        case Op::Sub: return eval(e.lhs(), point) - eval(e.rhs(), point);
        case Op::Mul: return eval(e.lhs(), point) * eval(e.rhs(), point);
        case Op::Div: {
            double d = eval(e.rhs(), point);
            if (d == 0.0) throw EvalError("division by zero");
            return eval(e.lhs(), point) / d;
        }
        case Op::Pow: return ipow(eval(e.lhs(), point), e.exponent());
        case Op::Sin: return std::sin(eval(e.lhs(), point));
        case Op::Cos: return std::cos(eval(e.lhs(), point));
        case Op::Exp: return std::exp(eval(e.lhs(), point));
    }
    return 0.0;
}

// ---------------------------------------------------------------- simplify

namespace {

struct Factor {
    Expression base;
    int exp = 0;
};

using FactorMap = std::map<std::string, Factor>;

struct Term {
    Number coef;
    Expression mono;
};

using TermMap = std::map<std::string, Term>;

void add_factor(FactorMap& fac, const Expression& base, int k) {
    auto key = key_of(base);
    auto it = fac.find(key);
    if (it == fac.end())
        fac.emplace(std::move(key), Factor{base, k});
    else
        it->second.exp += k;
}

// s is already simplified.
void collect_factors(const Expression& s, int sign, Number& coef, FactorMap& fac) {
    switch (s.op()) {
        case Op::Const:
            if (sign > 0)
                coef = coef * s.number();
            else if (s.number().is_zero())
                add_factor(fac, s, -1);  // kept symbolic; eval reports the division
            else
                coef = coef / s.number();
            return;
        case Op::Neg:
            coef = -coef;
            collect_factors(s.lhs(), sign, coef, fac);
            return;
        case Op::Mul:
            collect_factors(s.lhs(), sign, coef, fac);
            collect_factors(s.rhs(), sign, coef, fac);
            return;
        case Op::Div:
            collect_factors(s.lhs(), sign, coef, fac);
            collect_factors(s.rhs(), -sign, coef, fac);
            return;
        case Op::Pow:
            if (s.lhs().op() == Op::Const) {
                if (s.lhs().number().is_zero()) {
                    add_factor(fac, s.lhs(), sign * s.exponent());
                } else {
                    coef = coef * pow(s.lhs().number(), sign * s.exponent());
                }
                return;
            }
            if (s.lhs().op() == Op::Mul || s.lhs().op() == Op::Div || s.lhs().op() == Op::Neg ||
                s.lhs().op() == Op::Pow) {
                Number inner = Number::integer(1);
                FactorMap sub;
                collect_factors(s.lhs(), 1, inner, sub);
                coef = coef * pow(inner, sign * s.exponent());
                for (auto& [k, f] : sub) add_factor(fac, f.base, f.exp * sign * s.exponent());
                return;
            }
            add_factor(fac, s.lhs(), sign * s.exponent());
            return;
        default: add_factor(fac, s, sign); return;
    }
}

Expression power_of(const Factor& f, int k) { return k == 1 ? f.base : pow(f.base, k); }

// Product of factors without numeric coefficient; integer 1 if empty.
Expression monomial(const FactorMap& fac) {
    Expression num, den;
    bool has_num = false, has_den = false;
    for (const auto& [key, f] : fac) {
        if (f.exp > 0) {
            num = has_num ? num * power_of(f, f.exp) : power_of(f, f.exp);
            has_num = true;
        } else if (f.exp < 0) {
            den = has_den ? den * power_of(f, -f.exp) : power_of(f, -f.exp);
            has_den = true;
        }
    }
    if (!has_den) return has_num ? num : Expression::integer(1);
    return (has_num ? num : Expression::integer(1)) / den;
}

Expression scaled(const Number& c, const Expression& mono, bool mono_is_one) {
    if (mono_is_one) return Expression::constant(c);
    if (c.is_one()) return mono;
    if ((-c).is_one()) return -mono;
    return Expression::constant(c) * mono;
}

Expression rebuild_product(const Number& coef, const FactorMap& fac) {
    if (coef.is_zero()) return Expression::integer(0);
    bool empty = std::all_of(fac.begin(), fac.end(), [](const auto& kv) { return kv.second.exp == 0; });
    return scaled(coef, empty ? Expression::integer(1) : monomial(fac), empty);
}

void collect_terms(const Expression& s, const Number& sign, TermMap& terms) {
    switch (s.op()) {
        case Op::Add:
            collect_terms(s.lhs(), sign, terms);
            collect_terms(s.rhs(), sign, terms);
            return;
        case Op::Sub:
            collect_terms(s.lhs(), sign, terms);
            collect_terms(s.rhs(), -sign, terms);
            return;
        case Op::Neg: collect_terms(s.lhs(), -sign, terms); return;
        default: break;
    }
    Number coef = Number::integer(1);
    FactorMap fac;
    collect_factors(s, 1, coef, fac);
    std::erase_if(fac, [](const auto& kv) { return kv.second.exp == 0; });
    Expression mono = fac.empty() ? Expression::integer(1) : monomial(fac);
    std::string key = fac.empty() ? std::string() : key_of(mono);
    auto it = terms.find(key);
    if (it == terms.end())
        terms.emplace(std::move(key), Term{coef * sign, mono});
    else
        it->second.coef = it->second.coef + coef * sign;
}

Expression rebuild_sum(const TermMap& terms) {
    std::vector<const Term*> order;
    const Term* constant = nullptr;
    for (const auto& [key, t] : terms) {
        if (t.coef.is_zero()) continue;
        if (key.empty())
            constant = &t;
        else
            order.push_back(&t);
    }
    if (constant) order.push_back(constant);
    if (order.empty()) return Expression::integer(0);
    Expression acc;
    bool first = true;
    for (const Term* t : order) {
        const bool is_const = t == constant;
        if (first) {
            acc = scaled(t->coef, t->mono, is_const);
            first = false;
        } else if (t->coef.is_negative()) {
            acc = acc - scaled(-t->coef, t->mono, is_const);
        } else {
            acc = acc + scaled(t->coef, t->mono, is_const);
        }
    }
    return acc;
}

}  // namespace

Expression simplify(const Expression& e) {
    switch (e.op()) {
        case Op::Const:
        case Op::Var:
        case Op::Pi: return e;
        case Op::Neg:
        case Op::Add:
        case Op::Sub: {
            TermMap terms;
            if (e.op() == Op::Neg) {
                collect_terms(simplify(e.lhs()), Number::integer(-1), terms);
            } else {
                collect_terms(simplify(e.lhs()), Number::integer(1), terms);
                collect_terms(simplify(e.rhs()), Number::integer(e.op() == Op::Add ? 1 : -1), terms);
            }
            return rebuild_sum(terms);
        }
        case Op::Mul:
        case Op::Div: {
            Number coef = Number::integer(1);
            FactorMap fac;
            collect_factors(simplify(e.lhs()), 1, coef, fac);
            collect_factors(simplify(e.rhs()), e.op() == Op::Mul ? 1 : -1, coef, fac);
            return rebuild_product(coef, fac);
        }
        case Op::Pow: {
            if (e.exponent() == 0) return Expression::integer(1);
            Expression s = simplify(e.lhs());
            if (s.op() == Op::Const && s.number().is_zero() && e.exponent() < 0) return pow(s, e.exponent());
            Number coef = Number::integer(1);
            FactorMap fac;
            collect_factors(pow(s, e.exponent()), 1, coef, fac);
            return rebuild_product(coef, fac);
        }
        case Op::Sin:
        case Op::Cos:
        case Op::Exp: {
            Expression s = simplify(e.lhs());
            if (s.op() == Op::Const) {
                if (s.number().is_zero()) return Expression::integer(e.op() == Op::Sin ? 0 : 1);
                double v = s.number().value;
                return Expression::real(e.op() == Op::Sin ? std::sin(v) : e.op() == Op::Cos ? std::cos(v) : std::exp(v));
            }
            if (e.op() == Op::Sin) return sin(s);
            if (e.op() == Op::Cos) return cos(s);
            return exp(s);
        }
    }
    return e;
}

// ---------------------------------------------------------------- diff

namespace {

Expression add(const Expression& a, const Expression& b) {
    if (a.is_zero_constant()) return b;
    if (b.is_zero_constant()) return a;
    return a + b;
}

Expression mul(const Expression& a, const Expression& b) {
    if (a.is_zero_constant() || b.is_zero_constant()) return Expression::integer(0);
    if (a.is_one_constant()) return b;
    if (b.is_one_constant()) return a;
    return a * b;
}

Expression raw_diff(const Expression& e, int c) {
    switch (e.op()) {
        case Op::Const:
        case Op::Pi: return Expression::integer(0);
        case Op::Var: return Expression::integer(e.var_index() == c ? 1 : 0);
        case Op::Neg: {
            Expression d = raw_diff(e.lhs(), c);
            return d.is_zero_constant() ? d : -d;
        }
        case Op::Add: return add(raw_diff(e.lhs(), c), raw_diff(e.rhs(), c));
        case Op::Sub: {
            Expression da = raw_diff(e.lhs(), c), db = raw_diff(e.rhs(), c);
            if (db.is_zero_constant()) return da;
            if (da.is_zero_constant()) return -db;
            return da - db;
        }
        case Op::Mul: return add(mul(raw_diff(e.lhs(), c), e.rhs()), mul(e.lhs(), raw_diff(e.rhs(), c)));
        case Op::Div: {
            Expression da = raw_diff(e.lhs(), c), db = raw_diff(e.rhs(), c);
            if (db.is_zero_constant()) return da.is_zero_constant() ? da : da / e.rhs();
            Expression num = mul(da, e.rhs());
            Expression sub = mul(e.lhs(), db);
            Expression top = num.is_zero_constant() ? -sub : num - sub;
            return top / pow(e.rhs(), 2);
        }
        case Op::Pow: {
            Expression d = raw_diff(e.lhs(), c);
            if (d.is_zero_constant()) return d;
            const int k = e.exponent();
            Expression lower = k - 1 == 1 ? e.lhs() : pow(e.lhs(), k - 1);
            return mul(mul(Expression::integer(k), k - 1 == 0 ? Expression::integer(1) : lower), d);
        }
        case Op::Sin: return mul(cos(e.lhs()), raw_diff(e.lhs(), c));
        case Op::Cos: {
            Expression d = raw_diff(e.lhs(), c);
            if (d.is_zero_constant()) return d;
            return -mul(sin(e.lhs()), d);
        }
        case Op::Exp: return mul(e, raw_diff(e.lhs(), c));
    }
    return Expression::integer(0);
}

}  // namespace

Expression diff(const Expression& e, int coord) {
    if (coord < 0) throw std::invalid_argument("diff: negative coordinate index");
    return simplify(raw_diff(e, coord));
}

Expression diff(const Expression& e, std::string_view coord, const Chart& chart) {
    int idx = chart.index_of(coord);
    if (idx < 0) throw std::invalid_argument("diff: unknown coordinate '" + std::string(coord) + "'");
    return diff(e, idx);
}

// ---------------------------------------------------------------- substitute / zero test

Expression substitute(const Expression& e, std::span<const Expression> replacement) {
    switch (e.op()) {
        case Op::Const:
        case Op::Pi: return e;
        case Op::Var:
            if (static_cast<std::size_t>(e.var_index()) >= replacement.size())
                throw std::out_of_range("substitute: coordinate index without replacement");
            return replacement[static_cast<std::size_t>(e.var_index())];
        case Op::Neg: return -substitute(e.lhs(), replacement);
        case Op::Add: return substitute(e.lhs(), replacement) + substitute(e.rhs(), replacement);
        case Op::Sub: return substitute(e.lhs(), replacement) - substitute(e.rhs(), replacement);
        case Op::Mul: return substitute(e.lhs(), replacement) * substitute(e.rhs(), replacement);
        case Op::Div: return substitute(e.lhs(), replacement) / substitute(e.rhs(), replacement);
        case Op::Pow: return pow(substitute(e.lhs(), replacement), e.exponent());
        case Op::Sin: return sin(substitute(e.lhs(), replacement));
        case Op::Cos: return cos(substitute(e.lhs(), replacement));
        case Op::Exp: return exp(substitute(e.lhs(), replacement));
    }
    return e;
}

ZeroCheck is_zero(const Expression& e, const Chart& chart, int samples, double tol) {
    Expression s = simplify(e);
    if (s.is_zero_constant()) return {true, true, 0.0};
    ZeroCheck out;
    Program prog(s);
    for (const auto& p : sample_chart(chart, samples)) {
        try {
            out.max_abs = std::max(out.max_abs, std::abs(prog(std::span<const double>(p.data(), p.size()))));
        } catch (const EvalError&) {
            // singular sample point: no information
        }
    }
    out.zero = out.max_abs <= tol;
    return out;
}

// ---------------------------------------------------------------- Program

Program::Program(const Expression& e) {
    std::size_t depth = 0;
    auto rec = [&](auto&& self, const Expression& x) -> void {
        switch (x.op()) {
            case Op::Const:
                code_.push_back({Op::Const, 0, x.number().value});
                max_stack_ = std::max(max_stack_, ++depth);
                return;
            case Op::Pi:
                code_.push_back({Op::Const, 0, std::numbers::pi});
                max_stack_ = std::max(max_stack_, ++depth);
                return;
            case Op::Var:
                code_.push_back({Op::Var, x.var_index(), 0.0});
                max_stack_ = std::max(max_stack_, ++depth);
                return;
            case Op::Neg:
            case Op::Sin:
            case Op::Cos:
            case Op::Exp:
                self(self, x.lhs());
                code_.push_back({x.op(), 0, 0.0});
                return;
            case Op::Pow:
                self(self, x.lhs());
                code_.push_back({Op::Pow, x.exponent(), 0.0});
                return;
            default:
                self(self, x.lhs());
                self(self, x.rhs());
                code_.push_back({x.op(), 0, 0.0});
                --depth;
                return;
        }
    };
    rec(rec, e);
}

double Program::operator()(std::span<const double> point) const {
    constexpr std::size_t kInline = 64;
    double inline_stack[kInline];
    std::vector<double> heap;
    double* st = inline_stack;
    if (max_stack_ > kInline) {
        heap.resize(max_stack_);
        st = heap.data();
    }
    std::size_t sp = 0;
    for (const Instr& in : code_) {
        switch (in.op) {
            case Op::Const: st[sp++] = in.value; break;
            case Op::Var:
                if (static_cast<std::size_t>(in.arg) >= point.size())
                    throw std::out_of_range("eval: point has too few coordinates");
                st[sp++] = point[static_cast<std::size_t>(in.arg)];
                break;
            case Op::Neg: st[sp - 1] = -st[sp - 1]; break;
            case Op::Sin: st[sp - 1] = std::sin(st[sp - 1]); break;
            case Op::Cos: st[sp - 1] = std::cos(st[sp - 1]); break;
            case Op::Exp: st[sp - 1] = std::exp(st[sp - 1]); break;
            case Op::Pow: st[sp - 1] = ipow(st[sp - 1], in.arg); break;
            case Op::Add: --sp; st[sp - 1] += st[sp]; break;
            case Op::Sub: --sp; st[sp - 1] -= st[sp]; break;
            case Op::Mul: --sp; st[sp - 1] *= st[sp]; break;
            case Op::Div:
                --sp;
                if (st[sp] == 0.0) throw EvalError("division by zero");
                st[sp - 1] /= st[sp];
                break;
            case Op::Pi: break;
        }
    }
    return sp == 1 ? st[0] : 0.0;
}

}  // namespace expr
}  // namespace diracaa
