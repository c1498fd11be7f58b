#include "diracaa/system.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace diracaa {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& p) { return {p.data(), static_cast<std::size_t>(p.size())}; }

double smallest_singular(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return 1.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    return m.rows() > m.cols() ? 0.0 : s[s.size() - 1];
}

}  // namespace

IntegrableSystem::IntegrableSystem(ChartPtr chart, std::vector<VectorField> x, std::vector<Expression> f)
    : chart_(std::move(chart)), x_(std::move(x)), f_(std::move(f)) {
    if (!chart_) throw std::invalid_argument("system: missing chart");
    if (x_.empty()) throw std::invalid_argument("system: at least one vector field is required");
    if (p() + q() != n())
        throw std::invalid_argument("system: p + q = " + std::to_string(p() + q()) + " but the chart has dimension " +
                                    std::to_string(n()));
    for (const auto& v : x_) require_same_chart(chart_, v.chart(), "system field");
    for (const auto& e : f_)
        if (e.max_var() >= n()) throw std::invalid_argument("system: first integral uses an unknown coordinate");
}

RegularityReport regularity_at(const IntegrableSystem& sys, const Eigen::VectorXd& point) {
    RegularityReport r;
    r.point = point;
    const int n = sys.n();
    Eigen::MatrixXd xm(sys.p(), n), fm(sys.q(), n);
    for (int i = 0; i < sys.p(); ++i) xm.row(i) = sys.fields()[static_cast<std::size_t>(i)].at(point).transpose();
    for (int j = 0; j < sys.q(); ++j) {
        KForm df = KForm::differential(sys.chart(), sys.integrals()[static_cast<std::size_t>(j)]);
        fm.row(j) = df.covector_at(as_span(point)).transpose();
    }
    r.wedge_x_norm = smallest_singular(xm);
    r.wedge_df_norm = smallest_singular(fm);
    for (int i = 0; i < sys.p(); ++i) {
        const auto& xi = sys.fields()[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < sys.p(); ++k)
            r.commutator_residual = std::max(
                r.commutator_residual, lie_bracket(xi, sys.fields()[static_cast<std::size_t>(k)]).at(point).cwiseAbs().maxCoeff());
        for (const auto& f : sys.integrals())
            r.invariance_residual = std::max(r.invariance_residual, std::abs(expr::eval(xi.apply(f), as_span(point))));
    }
    return r;
}

IntegrabilityReport check_integrability(const IntegrableSystem& sys, const SampleSet& samples,
                                        const RegularityThresholds& t) {
    IntegrabilityReport out;
    // symbolic residual fields, compiled once
    std::vector<expr::Program> comm, inv;
    for (int i = 0; i < sys.p(); ++i) {
        const auto& xi = sys.fields()[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < sys.p(); ++k) {
            VectorField b = lie_bracket(xi, sys.fields()[static_cast<std::size_t>(k)]);
            for (const auto& c : b.components()) comm.emplace_back(c);
        }
        for (const auto& f : sys.integrals()) inv.emplace_back(xi.apply(f));
    }
    std::vector<expr::Program> xs, grads;
    for (const auto& x : sys.fields())
        for (const auto& c : x.components()) xs.emplace_back(c);
    for (const auto& f : sys.integrals())
        for (int k = 0; k < sys.n(); ++k) grads.emplace_back(expr::diff(f, k));
    out.worst.wedge_x_norm = out.worst.wedge_df_norm = std::numeric_limits<double>::infinity();
    for (const auto& p : samples) {
        auto sp = as_span(p);
        for (const auto& c : comm) {
            double v = std::abs(c(sp));
            if (v > out.worst.commutator_residual || out.commutator_point.size() == 0) {
                out.worst.commutator_residual = std::max(out.worst.commutator_residual, v);
                out.commutator_point = p;
            }
        }
        for (const auto& c : inv) {
            double v = std::abs(c(sp));
            if (v > out.worst.invariance_residual || out.invariance_point.size() == 0) {
                out.worst.invariance_residual = std::max(out.worst.invariance_residual, v);
                out.invariance_point = p;
            }
        }
        RegularityReport r;
        const int n = sys.n();
        Eigen::MatrixXd xm(sys.p(), n), fm(sys.q(), n);
        for (int i = 0; i < sys.p(); ++i)
            for (int k = 0; k < n; ++k) xm(i, k) = xs[static_cast<std::size_t>(i * n + k)](sp);
        for (int j = 0; j < sys.q(); ++j)
            for (int k = 0; k < n; ++k) fm(j, k) = grads[static_cast<std::size_t>(j * n + k)](sp);
        r.wedge_x_norm = smallest_singular(xm);
        r.wedge_df_norm = smallest_singular(fm);
        if (r.wedge_x_norm <= t.wedge || r.wedge_df_norm <= t.wedge) ++out.irregular_samples;
        double w = std::min(r.wedge_x_norm, r.wedge_df_norm);
        if (w < std::min(out.worst.wedge_x_norm, out.worst.wedge_df_norm)) out.wedge_point = p;
        out.worst.wedge_x_norm = std::min(out.worst.wedge_x_norm, r.wedge_x_norm);
        out.worst.wedge_df_norm = std::min(out.worst.wedge_df_norm, r.wedge_df_norm);
    }
    if (samples.empty()) out.worst.wedge_x_norm = out.worst.wedge_df_norm = 0.0;
    out.commuting = out.worst.commutator_residual <= t.residual;
    out.invariant = out.worst.invariance_residual <= t.residual;
    out.regular = out.irregular_samples == 0 && !samples.empty();
    return out;
}

bool is_regular_at(const IntegrableSystem& sys, const Eigen::VectorXd& point, double wedge) {
    RegularityReport r = regularity_at(sys, point);
    return r.wedge_x_norm > wedge && r.wedge_df_norm > wedge;
}

IntegrableSystem bind_hamiltonians(const IntegrableSystem& sys, const DiracField& d, const std::vector<Expression>& h,
                                   const SampleSet& samples) {
    if (static_cast<int>(h.size()) != sys.p())
        throw std::invalid_argument("bind_hamiltonians: expected " + std::to_string(sys.p()) + " Hamiltonians");
    require_same_chart(sys.chart(), d.chart(), "bind_hamiltonians");
    for (int i = 0; i < sys.p(); ++i) {
        MembershipVerdict v = is_hamiltonian_pair(sys.fields()[static_cast<std::size_t>(i)], h[static_cast<std::size_t>(i)], d, samples);
        if (!v.pass) {
            std::ostringstream os;
            os << "bind_hamiltonians: (X_" << i + 1 << ", dH_" << i + 1 << ") is not in D, residual " << v.worst.value
               << " at (";
            for (Eigen::Index k = 0; k < v.worst.point.size(); ++k) os << (k ? ", " : "") << v.worst.point[k];
            os << ")";
            throw std::domain_error(os.str());
        }
    }
    IntegrableSystem out = sys;
    out.h_ = h;
    return out;
}

}  // namespace diracaa
