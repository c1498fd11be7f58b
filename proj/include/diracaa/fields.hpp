#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/expr.hpp"

namespace diracaa {

using IndexTuple = std::vector<int>;

/// Throws unless both charts are the same object or compare equal.
void require_same_chart(const ChartPtr& a, const ChartPtr& b, const char* where);

class VectorField {
public:
    VectorField() = default;
    VectorField(ChartPtr chart, std::vector<Expression> components);

    static VectorField zero(ChartPtr chart);
    static VectorField coordinate(ChartPtr chart, int i);
    static VectorField parse(ChartPtr chart, const std::vector<std::string>& components);

    const ChartPtr& chart() const { return chart_; }
    int dim() const { return static_cast<int>(comp_.size()); }
    const Expression& operator[](int i) const { return comp_.at(static_cast<std::size_t>(i)); }
    const std::vector<Expression>& components() const { return comp_; }

    Eigen::VectorXd at(std::span<const double> point) const;
    Eigen::VectorXd at(const Eigen::VectorXd& point) const { return at(std::span<const double>(point.data(), static_cast<std::size_t>(point.size()))); }

    /// X(f) = sum X^i d_i f
    Expression apply(const Expression& f) const;

    VectorField simplified() const;

    friend VectorField operator+(const VectorField& a, const VectorField& b);
    friend VectorField operator-(const VectorField& a, const VectorField& b);
    friend VectorField operator*(const Expression& f, const VectorField& a);

private:
    ChartPtr chart_;
    std::vector<Expression> comp_;
};

/// Differential form stored on strictly increasing index tuples.
class KForm {
public:
    KForm() = default;
    KForm(ChartPtr chart, int degree);

    static KForm function(ChartPtr chart, const Expression& f);
    /// df for a scalar f
    static KForm differential(ChartPtr chart, const Expression& f);
    /// 1-form from n components
    static KForm one_form(ChartPtr chart, const std::vector<Expression>& components);
    /// Parses a 1-form from component strings.
    static KForm parse_one_form(ChartPtr chart, const std::vector<std::string>& components);

    const ChartPtr& chart() const { return chart_; }
    int degree() const { return degree_; }
    int dim() const { return chart_->dim(); }
    const std::map<IndexTuple, Expression>& terms() const { return terms_; }

    /// Adds c * dx^{idx[0]} ^ ... ; idx in any order.
    void add(IndexTuple idx, const Expression& c);
    /// Coefficient on an arbitrary index tuple (antisymmetric).
    Expression coefficient(IndexTuple idx) const;

    /// Value on the given tangent vectors (one per degree).
    double evaluate(std::span<const double> point, const std::vector<Eigen::VectorXd>& vectors) const;
    Eigen::VectorXd covector_at(std::span<const double> point) const;  // degree 1
    Eigen::MatrixXd matrix_at(std::span<const double> point) const;    // degree 2
    double scalar_at(std::span<const double> point) const;             // degree 0

    KForm simplified() const;
    bool is_symbolically_zero() const;

    friend KForm operator+(const KForm& a, const KForm& b);
    friend KForm operator-(const KForm& a, const KForm& b);
    friend KForm operator*(const Expression& f, const KForm& a);

private:
    ChartPtr chart_;
    int degree_ = 0;
    std::map<IndexTuple, Expression> terms_;
};

/// Contravariant antisymmetric 2-tensor on increasing pairs.
class BivectorField {
public:
    BivectorField() = default;
    explicit BivectorField(ChartPtr chart);

    const ChartPtr& chart() const { return chart_; }
    int dim() const { return chart_->dim(); }
    const std::map<std::pair<int, int>, Expression>& terms() const { return terms_; }

    void add(int i, int j, const Expression& c);
    Expression coefficient(int i, int j) const;
    Eigen::MatrixXd matrix_at(std::span<const double> point) const;
    BivectorField simplified() const;

private:
    ChartPtr chart_;
    std::map<std::pair<int, int>, Expression> terms_;
};

/// Dense tensor of type (k upper, h lower). Components are stored with the
/// upper indices first; flat index = sum idx[l] * n^l.
class TensorField {
public:
    TensorField() = default;
    TensorField(ChartPtr chart, int upper, int lower);

    static TensorField scalar(ChartPtr chart, const Expression& f);
    static TensorField from(const VectorField& x);
    static TensorField from(const KForm& a);
    static TensorField from(const BivectorField& p);

    const ChartPtr& chart() const { return chart_; }
    int dim() const { return chart_->dim(); }
    int upper() const { return k_; }
    int lower() const { return h_; }
    std::size_t size() const { return comp_.size(); }

    std::size_t flat(const IndexTuple& idx) const;
    IndexTuple unflat(std::size_t f) const;
    const Expression& operator[](std::size_t f) const { return comp_[f]; }
    Expression& operator[](std::size_t f) { return comp_[f]; }
    const Expression& at(const IndexTuple& idx) const { return comp_[flat(idx)]; }
    void set(const IndexTuple& idx, const Expression& e) { comp_[flat(idx)] = e; }

    Eigen::VectorXd values_at(std::span<const double> point) const;
    TensorField simplified() const;

private:
    ChartPtr chart_;
    int k_ = 0;
    int h_ = 0;
    std::vector<Expression> comp_;
};

VectorField lie_bracket(const VectorField& x, const VectorField& y);

KForm wedge(const KForm& a, const KForm& b);
KForm exterior_d(const KForm& a);
KForm interior(const VectorField& x, const KForm& a);

KForm lie_derivative(const VectorField& x, const KForm& a);
VectorField lie_derivative(const VectorField& x, const VectorField& y);
BivectorField lie_derivative(const VectorField& x, const BivectorField& p);
TensorField lie_derivative(const VectorField& x, const TensorField& t);

/// [X, Pi] = L_X Pi
BivectorField schouten(const VectorField& x, const BivectorField& p);

/// A form restricted to the slice where the given coordinates are fixed. The
/// result lives on chart->drop(fixed indices).
KForm pullback_to_slice(const KForm& a, const std::vector<std::pair<int, double>>& fixed);

/// Same substitution for a scalar; the map from old to new coordinate indices is implied by drop().
Expression restrict_to_slice(const Expression& e, const Chart& chart, const std::vector<std::pair<int, double>>& fixed);

}  // namespace diracaa
