#pragma once

#include <vector>

#include <Eigen/Dense>

#include "diracaa/dirac.hpp"

namespace diracaa {

/// Commuting fields X_1..X_p with joint first integrals F_1..F_q, p + q = n.
class IntegrableSystem {
public:
    IntegrableSystem() = default;
    IntegrableSystem(ChartPtr chart, std::vector<VectorField> x, std::vector<Expression> f);

    const ChartPtr& chart() const { return chart_; }
    int n() const { return chart_->dim(); }
    int p() const { return static_cast<int>(x_.size()); }
    int q() const { return static_cast<int>(f_.size()); }
    const std::vector<VectorField>& fields() const { return x_; }
    const std::vector<Expression>& integrals() const { return f_; }

    /// Empty until bind_hamiltonians succeeds.
    const std::vector<Expression>& hamiltonians() const { return h_; }
    bool hamiltonian() const { return !h_.empty(); }

    friend IntegrableSystem bind_hamiltonians(const IntegrableSystem&, const DiracField&, const std::vector<Expression>&,
                                              const SampleSet&);

private:
    ChartPtr chart_;
    std::vector<VectorField> x_;
    std::vector<Expression> f_;
    std::vector<Expression> h_;
};

struct RegularityThresholds {
    double wedge = 1e-6;
    double residual = 1e-9;
};

struct RegularityReport {
    Eigen::VectorXd point;
    double wedge_x_norm = 0.0;   // smallest singular value of the p x n matrix of X components
    double wedge_df_norm = 0.0;  // same for dF; 1 when q = 0
    double commutator_residual = 0.0;
    double invariance_residual = 0.0;  // max |X_i(F_j)|
};

RegularityReport regularity_at(const IntegrableSystem& sys, const Eigen::VectorXd& point);

struct IntegrabilityReport {
    RegularityReport worst;  // min wedge norms, max residuals over the samples
    Eigen::VectorXd commutator_point, invariance_point, wedge_point;
    int irregular_samples = 0;  // wedge below threshold; warnings only
    bool commuting = false;
    bool invariant = false;
    bool regular = false;
    bool pass() const { return commuting && invariant; }
};

IntegrabilityReport check_integrability(const IntegrableSystem& sys, const SampleSet& samples,
                                        const RegularityThresholds& t = {});

bool is_regular_at(const IntegrableSystem& sys, const Eigen::VectorXd& point, double wedge = 1e-6);

/// Verifies every (X_i, dH_i) in D; throws std::domain_error naming the first
/// failing pair and its worst sample otherwise.
IntegrableSystem bind_hamiltonians(const IntegrableSystem& sys, const DiracField& d, const std::vector<Expression>& h,
                                   const SampleSet& samples);

}  // namespace diracaa
