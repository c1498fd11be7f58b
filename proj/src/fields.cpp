#include "diracaa/fields.hpp"

#include <algorithm>
#include <stdexcept>

namespace diracaa {

using expr::diff;
using expr::simplify;

void require_same_chart(const ChartPtr& a, const ChartPtr& b, const char* where) {
    if (!a || !b) throw std::invalid_argument(std::string(where) + ": missing chart");
    if (a != b && !(*a == *b)) throw std::invalid_argument(std::string(where) + ": chart mismatch");
}

namespace {

// Sorts idx in place and returns the permutation sign, or 0 on a repeated index.
int sort_sign(IndexTuple& idx) {
    int sign = 1;
    for (std::size_t i = 1; i < idx.size(); ++i)
        for (std::size_t j = i; j > 0 && idx[j - 1] >= idx[j]; --j) {
            if (idx[j - 1] == idx[j]) return 0;
            std::swap(idx[j - 1], idx[j]);
            sign = -sign;
        }
    return sign;
}

Expression clean(const Expression& e) { return simplify(e); }

double det_rows(const std::vector<Eigen::VectorXd>& vectors, const IndexTuple& rows) {
    const auto k = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd m(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) m(i, j) = vectors[static_cast<std::size_t>(j)][rows[static_cast<std::size_t>(i)]];
    return k == 0 ? 1.0 : m.determinant();
}

}  // namespace

// ---------------------------------------------------------------- VectorField

VectorField::VectorField(ChartPtr chart, std::vector<Expression> components)
    : chart_(std::move(chart)), comp_(std::move(components)) {
    if (!chart_) throw std::invalid_argument("vector field: missing chart");
    if (static_cast<int>(comp_.size()) != chart_->dim())
        throw std::invalid_argument("vector field: expected " + std::to_string(chart_->dim()) + " components");
    for (const auto& c : comp_)
        if (c.max_var() >= chart_->dim()) throw std::invalid_argument("vector field: coordinate outside chart");
}

VectorField VectorField::zero(ChartPtr chart) {
    std::vector<Expression> c(static_cast<std::size_t>(chart->dim()));
    return VectorField(std::move(chart), std::move(c));
}

VectorField VectorField::coordinate(ChartPtr chart, int i) {
    std::vector<Expression> c(static_cast<std::size_t>(chart->dim()));
    c.at(static_cast<std::size_t>(i)) = Expression::integer(1);
    return VectorField(std::move(chart), std::move(c));
}

VectorField VectorField::parse(ChartPtr chart, const std::vector<std::string>& components) {
    std::vector<Expression> c;
    for (const auto& s : components) c.push_back(expr::parse(s, *chart));
    return VectorField(std::move(chart), std::move(c));
}

Eigen::VectorXd VectorField::at(std::span<const double> point) const {
    Eigen::VectorXd v(dim());
    for (int i = 0; i < dim(); ++i) v[i] = expr::eval(comp_[static_cast<std::size_t>(i)], point);
    return v;
}

Expression VectorField::apply(const Expression& f) const {
    Expression acc;
    for (int i = 0; i < dim(); ++i) {
        const auto& c = comp_[static_cast<std::size_t>(i)];
        if (c.is_zero_constant()) continue;
        Expression d = diff(f, i);
        if (d.is_zero_constant()) continue;
        acc = acc + c * d;
    }
    return clean(acc);
}

VectorField VectorField::simplified() const {
    std::vector<Expression> c;
    for (const auto& e : comp_) c.push_back(clean(e));
    return VectorField(chart_, std::move(c));
}

VectorField operator+(const VectorField& a, const VectorField& b) {
    require_same_chart(a.chart_, b.chart_, "vector field sum");
    std::vector<Expression> c;
    for (int i = 0; i < a.dim(); ++i) c.push_back(clean(a[i] + b[i]));
    return VectorField(a.chart_, std::move(c));
}

VectorField operator-(const VectorField& a, const VectorField& b) {
    require_same_chart(a.chart_, b.chart_, "vector field difference");
    std::vector<Expression> c;
    for (int i = 0; i < a.dim(); ++i) c.push_back(clean(a[i] - b[i]));
    return VectorField(a.chart_, std::move(c));
}

VectorField operator*(const Expression& f, const VectorField& a) {
    std::vector<Expression> c;
    for (int i = 0; i < a.dim(); ++i) c.push_back(clean(f * a[i]));
    return VectorField(a.chart_, std::move(c));
}

// ---------------------------------------------------------------- KForm

KForm::KForm(ChartPtr chart, int degree) : chart_(std::move(chart)), degree_(degree) {
    if (!chart_) throw std::invalid_argument("form: missing chart");
    if (degree_ < 0 || degree_ > chart_->dim() + 1) throw std::invalid_argument("form: invalid degree");
}

KForm KForm::function(ChartPtr chart, const Expression& f) {
    KForm k(std::move(chart), 0);
    k.add({}, f);
    return k;
}

KForm KForm::differential(ChartPtr chart, const Expression& f) {
    KForm k(chart, 1);
    for (int i = 0; i < chart->dim(); ++i) k.add({i}, diff(f, i));
    return k;
}

KForm KForm::one_form(ChartPtr chart, const std::vector<Expression>& components) {
    if (static_cast<int>(components.size()) != chart->dim())
        throw std::invalid_argument("one-form: expected " + std::to_string(chart->dim()) + " components");
    KForm k(chart, 1);
    for (int i = 0; i < chart->dim(); ++i) k.add({i}, components[static_cast<std::size_t>(i)]);
    return k;
}

KForm KForm::parse_one_form(ChartPtr chart, const std::vector<std::string>& components) {
    std::vector<Expression> c;
    for (const auto& s : components) c.push_back(expr::parse(s, *chart));
    return one_form(std::move(chart), c);
}

void KForm::add(IndexTuple idx, const Expression& c) {
    if (static_cast<int>(idx.size()) != degree_) throw std::invalid_argument("form: index tuple has wrong length");
    for (int i : idx)
        if (i < 0 || i >= dim()) throw std::invalid_argument("form: index outside chart");
    if (c.max_var() >= dim()) throw std::invalid_argument("form: coordinate outside chart");
    int sign = sort_sign(idx);
    if (sign == 0) return;
    Expression term = sign > 0 ? c : -c;
    auto it = terms_.find(idx);
    Expression sum = it == terms_.end() ? clean(term) : clean(it->second + term);
    if (sum.is_zero_constant()) {
        if (it != terms_.end()) terms_.erase(it);
    } else {
        terms_[idx] = sum;
    }
}

Expression KForm::coefficient(IndexTuple idx) const {
    int sign = sort_sign(idx);
    if (sign == 0) return Expression();
    auto it = terms_.find(idx);
    if (it == terms_.end()) return Expression();
    return sign > 0 ? it->second : clean(-it->second);
}

double KForm::evaluate(std::span<const double> point, const std::vector<Eigen::VectorXd>& vectors) const {
    if (static_cast<int>(vectors.size()) != degree_) throw std::invalid_argument("form: wrong number of vectors");
    double acc = 0.0;
    for (const auto& [idx, c] : terms_) acc += expr::eval(c, point) * det_rows(vectors, idx);
    return acc;
}

Eigen::VectorXd KForm::covector_at(std::span<const double> point) const {
    if (degree_ != 1) throw std::invalid_argument("covector_at: degree must be 1");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim());
    for (const auto& [idx, c] : terms_) v[idx[0]] = expr::eval(c, point);
    return v;
}

Eigen::MatrixXd KForm::matrix_at(std::span<const double> point) const {
    if (degree_ != 2) throw std::invalid_argument("matrix_at: degree must be 2");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim(), dim());
    for (const auto& [idx, c] : terms_) {
        double v = expr::eval(c, point);
        m(idx[0], idx[1]) = v;
        m(idx[1], idx[0]) = -v;
    }
    return m;
}

double KForm::scalar_at(std::span<const double> point) const {
    if (degree_ != 0) throw std::invalid_argument("scalar_at: degree must be 0");
    auto it = terms_.find({});
    return it == terms_.end() ? 0.0 : expr::eval(it->second, point);
}

KForm KForm::simplified() const {
    KForm out(chart_, degree_);
    for (const auto& [idx, c] : terms_) out.add(idx, c);
    return out;
}

bool KForm::is_symbolically_zero() const { return terms_.empty(); }

KForm operator+(const KForm& a, const KForm& b) {
    require_same_chart(a.chart_, b.chart_, "form sum");
    if (a.degree_ != b.degree_) throw std::invalid_argument("form sum: degree mismatch");
    KForm out = a;
    for (const auto& [idx, c] : b.terms_) out.add(idx, c);
    return out;
}

KForm operator-(const KForm& a, const KForm& b) {
    require_same_chart(a.chart_, b.chart_, "form difference");
    if (a.degree_ != b.degree_) throw std::invalid_argument("form difference: degree mismatch");
    KForm out = a;
    for (const auto& [idx, c] : b.terms_) out.add(idx, -c);
    return out;
}

KForm operator*(const Expression& f, const KForm& a) {
    KForm out(a.chart_, a.degree_);
    for (const auto& [idx, c] : a.terms_) out.add(idx, f * c);
    return out;
}

// ---------------------------------------------------------------- BivectorField

BivectorField::BivectorField(ChartPtr chart) : chart_(std::move(chart)) {
    if (!chart_) throw std::invalid_argument("bivector: missing chart");
}

void BivectorField::add(int i, int j, const Expression& c) {
    if (i < 0 || j < 0 || i >= dim() || j >= dim()) throw std::invalid_argument("bivector: index outside chart");
    if (i == j) return;
    Expression term = c;
    if (i > j) {
        std::swap(i, j);
        term = -c;
    }
    auto key = std::make_pair(i, j);
    auto it = terms_.find(key);
    Expression sum = it == terms_.end() ? clean(term) : clean(it->second + term);
    if (sum.is_zero_constant()) {
        if (it != terms_.end()) terms_.erase(it);
    } else {
        terms_[key] = sum;
    }
}

Expression BivectorField::coefficient(int i, int j) const {
    if (i == j) return Expression();
    bool flip = i > j;
    if (flip) std::swap(i, j);
    auto it = terms_.find({i, j});
    if (it == terms_.end()) return Expression();
    return flip ? clean(-it->second) : it->second;
}

Eigen::MatrixXd BivectorField::matrix_at(std::span<const double> point) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim(), dim());
    for (const auto& [ij, c] : terms_) {
        double v = expr::eval(c, point);
        m(ij.first, ij.second) = v;
        m(ij.second, ij.first) = -v;
    }
    return m;
}

BivectorField BivectorField::simplified() const {
    BivectorField out(chart_);
    for (const auto& [ij, c] : terms_) out.add(ij.first, ij.second, c);
    return out;
}

// ---------------------------------------------------------------- TensorField

TensorField::TensorField(ChartPtr chart, int upper, int lower) : chart_(std::move(chart)), k_(upper), h_(lower) {
    if (!chart_) throw std::invalid_argument("tensor: missing chart");
    if (k_ < 0 || h_ < 0) throw std::invalid_argument("tensor: negative order");
    std::size_t sz = 1;
    for (int i = 0; i < k_ + h_; ++i) sz *= static_cast<std::size_t>(chart_->dim());
    comp_.assign(sz, Expression());
}

std::size_t TensorField::flat(const IndexTuple& idx) const {
    if (static_cast<int>(idx.size()) != k_ + h_) throw std::invalid_argument("tensor: index tuple has wrong length");
    std::size_t f = 0, stride = 1;
    for (int i : idx) {
        if (i < 0 || i >= dim()) throw std::invalid_argument("tensor: index outside chart");
        f += static_cast<std::size_t>(i) * stride;
        stride *= static_cast<std::size_t>(dim());
    }
    return f;
}

IndexTuple TensorField::unflat(std::size_t f) const {
    IndexTuple idx(static_cast<std::size_t>(k_ + h_));
    for (auto& i : idx) {
        i = static_cast<int>(f % static_cast<std::size_t>(dim()));
        f /= static_cast<std::size_t>(dim());
    }
    return idx;
}

TensorField TensorField::scalar(ChartPtr chart, const Expression& f) {
    TensorField t(std::move(chart), 0, 0);
    t.comp_[0] = f;
    return t;
}

TensorField TensorField::from(const VectorField& x) {
    TensorField t(x.chart(), 1, 0);
    for (int i = 0; i < x.dim(); ++i) t.comp_[static_cast<std::size_t>(i)] = x[i];
    return t;
}

TensorField TensorField::from(const KForm& a) {
    TensorField t(a.chart(), 0, a.degree());
    for (std::size_t f = 0; f < t.size(); ++f) t.comp_[f] = a.coefficient(t.unflat(f));
    return t;
}

TensorField TensorField::from(const BivectorField& p) {
    TensorField t(p.chart(), 2, 0);
    for (std::size_t f = 0; f < t.size(); ++f) {
        auto idx = t.unflat(f);
        t.comp_[f] = p.coefficient(idx[0], idx[1]);
    }
    return t;
}

Eigen::VectorXd TensorField::values_at(std::span<const double> point) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(comp_.size()));
    for (std::size_t f = 0; f < comp_.size(); ++f) v[static_cast<Eigen::Index>(f)] = expr::eval(comp_[f], point);
    return v;
}

TensorField TensorField::simplified() const {
    TensorField t = *this;
    for (auto& c : t.comp_) c = clean(c);
    return t;
}

// ---------------------------------------------------------------- operations

VectorField lie_bracket(const VectorField& x, const VectorField& y) {
    require_same_chart(x.chart(), y.chart(), "lie_bracket");
    std::vector<Expression> c;
    for (int k = 0; k < x.dim(); ++k) c.push_back(clean(x.apply(y[k]) - y.apply(x[k])));
    return VectorField(x.chart(), std::move(c));
}

KForm wedge(const KForm& a, const KForm& b) {
    require_same_chart(a.chart(), b.chart(), "wedge");
    KForm out(a.chart(), a.degree() + b.degree());
    if (out.degree() > a.dim()) return out;
    for (const auto& [i, ca] : a.terms())
        for (const auto& [j, cb] : b.terms()) {
            IndexTuple idx = i;
            idx.insert(idx.end(), j.begin(), j.end());
            out.add(idx, ca * cb);
        }
    return out;
}

KForm exterior_d(const KForm& a) {
    KForm out(a.chart(), a.degree() + 1);
    if (a.degree() >= a.dim()) return out;
    for (const auto& [idx, c] : a.terms())
        for (int j = 0; j < a.dim(); ++j) {
            if (std::find(idx.begin(), idx.end(), j) != idx.end()) continue;
            Expression d = diff(c, j);
            if (d.is_zero_constant()) continue;
            IndexTuple t{j};
            t.insert(t.end(), idx.begin(), idx.end());
            out.add(t, d);
        }
    return out;
}

KForm interior(const VectorField& x, const KForm& a) {
    require_same_chart(x.chart(), a.chart(), "interior");
    if (a.degree() < 1) throw std::invalid_argument("interior: degree-0 form");
    KForm out(a.chart(), a.degree() - 1);
    for (const auto& [idx, c] : a.terms())
        for (std::size_t m = 0; m < idx.size(); ++m) {
            const auto& xm = x[idx[m]];
            if (xm.is_zero_constant()) continue;
            IndexTuple rest;
            for (std::size_t l = 0; l < idx.size(); ++l)
                if (l != m) rest.push_back(idx[l]);
            Expression t = xm * c;
            out.add(rest, m % 2 == 0 ? t : -t);
        }
    return out;
}

KForm lie_derivative(const VectorField& x, const KForm& a) {
    require_same_chart(x.chart(), a.chart(), "lie_derivative");
    if (a.degree() == 0) {
        KForm out(a.chart(), 0);
        auto it = a.terms().find({});
        if (it != a.terms().end()) out.add({}, x.apply(it->second));
        return out;
    }
    KForm out = interior(x, exterior_d(a));
    return out + exterior_d(interior(x, a));
}

VectorField lie_derivative(const VectorField& x, const VectorField& y) { return lie_bracket(x, y); }

BivectorField lie_derivative(const VectorField& x, const BivectorField& p) { return schouten(x, p); }

BivectorField schouten(const VectorField& x, const BivectorField& p) {
    require_same_chart(x.chart(), p.chart(), "schouten");
    const int n = x.dim();
    // dX[m][i] = d_m X^i
    std::vector<std::vector<Expression>> dx(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m)
        for (int i = 0; i < n; ++i) dx[static_cast<std::size_t>(m)].push_back(diff(x[i], m));
    BivectorField out(p.chart());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Expression acc = x.apply(p.coefficient(i, j));
            for (int m = 0; m < n; ++m) {
                const auto& dmi = dx[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
                const auto& dmj = dx[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)];
                if (!dmi.is_zero_constant()) acc = acc - p.coefficient(m, j) * dmi;
                if (!dmj.is_zero_constant()) acc = acc - p.coefficient(i, m) * dmj;
            }
            out.add(i, j, acc);
        }
    return out;
}

TensorField lie_derivative(const VectorField& x, const TensorField& t) {
    require_same_chart(x.chart(), t.chart(), "lie_derivative");
    const int n = x.dim();
    std::vector<std::vector<Expression>> dx(static_cast<std::size_t>(n));
    for (int m = 0; m < n; ++m)
        for (int i = 0; i < n; ++i) dx[static_cast<std::size_t>(m)].push_back(diff(x[i], m));
    auto dX = [&](int m, int i) -> const Expression& { return dx[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)]; };

    TensorField out(t.chart(), t.upper(), t.lower());
    for (std::size_t f = 0; f < t.size(); ++f) {
        IndexTuple idx = t.unflat(f);
        Expression acc = x.apply(t[f]);
        for (int a = 0; a < t.upper() + t.lower(); ++a) {
            const bool up = a < t.upper();
            const int orig = idx[static_cast<std::size_t>(a)];
            for (int m = 0; m < n; ++m) {
                IndexTuple j = idx;
                j[static_cast<std::size_t>(a)] = m;
                const Expression& tm = t.at(j);
                if (tm.is_zero_constant()) continue;
                if (up) {
                    if (!dX(m, orig).is_zero_constant()) acc = acc - tm * dX(m, orig);
                } else {
                    if (!dX(orig, m).is_zero_constant()) acc = acc + tm * dX(orig, m);
                }
            }
        }
        out[f] = clean(acc);
    }
    return out;
}

namespace {

std::vector<Expression> slice_replacement(const Chart& chart, const std::vector<std::pair<int, double>>& fixed) {
    std::vector<Expression> rep(static_cast<std::size_t>(chart.dim()));
    int next = 0;
    for (int i = 0; i < chart.dim(); ++i) {
        auto it = std::find_if(fixed.begin(), fixed.end(), [&](const auto& p) { return p.first == i; });
        if (it != fixed.end())
            rep[static_cast<std::size_t>(i)] = Expression::real(it->second);
        else
            rep[static_cast<std::size_t>(i)] = Expression::var(next++);
    }
    return rep;
}

// Exact constants stay exact when the fixed value is an integer.
std::vector<Expression> tidy(std::vector<Expression> rep) {
    for (auto& e : rep)
        if (e.is_constant()) {
            double v = e.number().value;
            if (v == static_cast<double>(static_cast<std::int64_t>(v))) e = Expression::integer(static_cast<std::int64_t>(v));
        }
    return rep;
}

}  // namespace

Expression restrict_to_slice(const Expression& e, const Chart& chart, const std::vector<std::pair<int, double>>& fixed) {
    auto rep = tidy(slice_replacement(chart, fixed));
    return simplify(expr::substitute(e, rep));
}

KForm pullback_to_slice(const KForm& a, const std::vector<std::pair<int, double>>& fixed) {
    const Chart& chart = *a.chart();
    std::vector<int> removed;
    for (const auto& [i, v] : fixed) {
        if (i < 0 || i >= chart.dim()) throw std::invalid_argument("pullback: fixed index outside chart");
        removed.push_back(i);
    }
    auto sub = make_chart(chart.drop(removed));
    auto rep = tidy(slice_replacement(chart, fixed));
    std::vector<int> newidx(static_cast<std::size_t>(chart.dim()), -1);
    for (int i = 0, next = 0; i < chart.dim(); ++i)
        if (std::find(removed.begin(), removed.end(), i) == removed.end()) newidx[static_cast<std::size_t>(i)] = next++;
    KForm out(sub, a.degree());
    for (const auto& [idx, c] : a.terms()) {
        IndexTuple t;
        bool keep = true;
        for (int i : idx) {
            if (newidx[static_cast<std::size_t>(i)] < 0) {
                keep = false;
                break;
            }
            t.push_back(newidx[static_cast<std::size_t>(i)]);
        }
        if (keep) out.add(t, expr::substitute(c, rep));
    }
    return out;
}

}  // namespace diracaa
