#include "diracaa/action.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "diracaa/sampling.hpp"

namespace diracaa {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& p) { return {p.data(), static_cast<std::size_t>(p.size())}; }

std::string point_text(const Eigen::VectorXd& p) {
    std::ostringstream os;
    os.precision(6);
    os << '(';
    for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ')';
    return os.str();
}

void keep_worst(PointResidual& r, double v, const Eigen::VectorXd& p, const std::string& where) {
    if (v > r.value || r.point.size() == 0) {
        r.value = std::max(r.value, v);
        r.point = p;
        r.where = where;
    }
}

// 5-point Gauss-Legendre on [0, 1]
constexpr double kGlX1 = 0.9061798459386639927976269, kGlX2 = 0.5384693101056830910363144;
constexpr double kGlW0 = 128.0 / 225, kGlW1 = 0.4786286704993664680412915, kGlW2 = 0.2369268850561890875142640;
constexpr std::array<double, 5> kGlNodes{0.5 * (1 - kGlX1), 0.5 * (1 - kGlX2), 0.5, 0.5 * (1 + kGlX2),
                                         0.5 * (1 + kGlX1)};
constexpr std::array<double, 5> kGlWeights{0.5 * kGlW2, 0.5 * kGlW1, 0.5 * kGlW0, 0.5 * kGlW1, 0.5 * kGlW2};

constexpr double kQuadTol = 1e-10;
constexpr int kMaxPanels = 64;

// Integrand evaluated at a sorted list of parameters in [0, 1].
using BatchIntegrand = std::function<std::vector<Eigen::VectorXd>(const std::vector<double>&)>;

struct Quadrature {
    Eigen::VectorXd value;
    int panels = 0;
};

Quadrature integrate_panels(const BatchIntegrand& f, int panels) {
    std::vector<double> s;
    s.reserve(static_cast<std::size_t>(panels) * kGlNodes.size());
    for (int k = 0; k < panels; ++k)
        for (double x : kGlNodes) s.push_back((k + x) / panels);
    std::vector<Eigen::VectorXd> v = f(s);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(v.front().size());
    for (std::size_t i = 0; i < v.size(); ++i) sum += kGlWeights[i % kGlWeights.size()] * v[i];
    return {sum / panels, panels};
}

Quadrature integrate_adaptive(const BatchIntegrand& f) {
    Quadrature prev = integrate_panels(f, 1);
    for (int panels = 2; panels <= kMaxPanels; panels *= 2) {
        Quadrature next = integrate_panels(f, panels);
        const double change = (next.value - prev.value).cwiseAbs().maxCoeff();
        if (change <= kQuadTol * std::max(1.0, next.value.cwiseAbs().maxCoeff())) return next;
        prev = std::move(next);
    }
    throw std::runtime_error("path integral: quadrature did not converge with " + std::to_string(kMaxPanels) +
                             " panels");
}

// Points Phi_{s t}(x0) for sorted s, marching from node to node.
std::vector<Eigen::VectorXd> orbit(const Flow& flow, const Eigen::VectorXd& t, const Eigen::VectorXd& x0,
                                   const std::vector<double>& s) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(s.size());
    Eigen::VectorXd cur = x0;
    double at = 0.0;
    for (double si : s) {
        cur = flow.raw((si - at) * t, cur);
        at = si;
        out.push_back(cur);
    }
    return out;
}

Eigen::MatrixXd leaf_basis(const DiracPointFrame& f) { return column_basis(f.tangent(), f.scale()); }

}  // namespace

const char* to_string(Hypothesis h) {
    return h == Hypothesis::ConstantIntersection ? "constant-intersection" : "regular-foliation";
}

HypothesisCheck check_hypotheses(const IntegrableSystem& sys, const DiracField& d,
                                 const std::vector<Eigen::VectorXd>& points, Hypothesis declared) {
    HypothesisCheck out;
    out.declared = declared;
    if (points.empty()) return out;
    out.intersection_min = out.leaf_dim_min = std::numeric_limits<int>::max();
    out.intersection_max = out.leaf_dim_max = -1;
    for (const auto& y : points) {
        DiracPointFrame f = d.frame_at(y);
        Eigen::MatrixXd k = kernel_directions(f);
        Eigen::MatrixXd x(sys.n(), sys.p());
        for (int i = 0; i < sys.p(); ++i) x.col(i) = sys.fields()[static_cast<std::size_t>(i)].at(y);
        Eigen::MatrixXd both(sys.n(), x.cols() + k.cols());
        both << x, k;
        const int inter = static_cast<int>(x.cols() + k.cols()) - numeric_rank(both);
        const int leaf = numeric_rank(f.tangent(), f.scale());
        out.intersection_min = std::min(out.intersection_min, inter);
        out.intersection_max = std::max(out.intersection_max, inter);
        out.leaf_dim_min = std::min(out.leaf_dim_min, leaf);
        out.leaf_dim_max = std::max(out.leaf_dim_max, leaf);
    }
    out.intersection_constant = out.intersection_min == out.intersection_max;
    out.foliation_regular = out.leaf_dim_min == out.leaf_dim_max;
    const bool declared_ok =
        declared == Hypothesis::ConstantIntersection ? out.intersection_constant : out.foliation_regular;
    const bool other_ok =
        declared == Hypothesis::ConstantIntersection ? out.foliation_regular : out.intersection_constant;
    if (declared_ok)
        out.verified = declared;
    else if (other_ok)
        out.verified = declared == Hypothesis::ConstantIntersection ? Hypothesis::RegularFoliation
                                                                    : Hypothesis::ConstantIntersection;
    return out;
}

ActionSetup::ActionSetup(IntegrableSystem sys, DiracField d, std::shared_ptr<const TorusFamily> family,
                         Hypothesis declared, int levels, int per_torus)
    : sys_(std::move(sys)), d_(std::move(d)), family_(std::move(family)) {
    if (!sys_.hamiltonian()) throw std::invalid_argument("actions: the system has no bound Hamiltonians");
    if (!family_) throw std::invalid_argument("actions: missing torus family");
    require_same_chart(sys_.chart(), d_.chart(), "actions");
    require_same_chart(sys_.chart(), family_->flow().system().chart(), "actions");
    for (const auto& h : sys_.hamiltonians())
        for (int k = 0; k < sys_.n(); ++k) grad_h_.emplace_back(expr::diff(h, k));
    samples_ = family_->samples(levels, per_torus);
    hyp_ = check_hypotheses(sys_, d_, samples_, declared);
    if (!hyp_.verified)
        throw std::domain_error(
            "actions: neither the constant-intersection nor the regular-foliation hypothesis holds; the singular "
            "case is not handled");
    const Eigen::VectorXd& base = family_->reference().base_point;
    DiracPointFrame f = d_.frame_at(base);
    for (int j = 0; j < family_->disk_dim(); ++j) {
        const int coord = family_->reference().disk[static_cast<std::size_t>(j)];
        if (in_characteristic(f, Eigen::VectorXd::Unit(sys_.n(), coord)))
            leaf_disk_.push_back(j);
        else
            transverse_disk_.push_back(j);
    }
}

Eigen::MatrixXd ActionSetup::dh(const Eigen::VectorXd& y) const {
    const int n = sys_.n();
    Eigen::MatrixXd g(n, p());
    for (int i = 0; i < p(); ++i)
        for (int k = 0; k < n; ++k) g(k, i) = grad_h_[static_cast<std::size_t>(i * n + k)](as_span(y));
    return g;
}

Eigen::MatrixXd ActionSetup::beta(const Eigen::VectorXd& y, const Eigen::MatrixXd& u) const {
    TorusChart tc = family_->chart_through(y);
    return dh(y) * (u * tc.lattice).transpose();
}

Eigen::MatrixXd ActionSetup::beta(const Eigen::VectorXd& y) const {
    return beta(y, Eigen::MatrixXd::Identity(p(), p()));
}

Eigen::VectorXd ActionSetup::leaf_base(const Eigen::VectorXd& y) const {
    Eigen::VectorXd c = family_->disk_coordinates(family_->disk_point(y));
    Eigen::VectorXd r = family_->disk_coordinates(family_->reference().base_point);
    for (int j : leaf_disk_) c[j] = r[j];
    return family_->disk_point_at(c);
}

namespace {

// Integral of beta along the straight disk segment between disk coordinates.
Quadrature disk_segment(const ActionSetup& s, const Eigen::VectorXd& c0, const Eigen::VectorXd& c1,
                        const Eigen::MatrixXd& u) {
    const TorusFamily& fam = s.family();
    if ((c1 - c0).norm() == 0.0) return {Eigen::VectorXd::Zero(s.p()), 0};
    Eigen::VectorXd tangent = Eigen::VectorXd::Zero(s.system().n());
    for (int j = 0; j < fam.disk_dim(); ++j) tangent[fam.reference().disk[static_cast<std::size_t>(j)]] = c1[j] - c0[j];
    BatchIntegrand f = [&](const std::vector<double>& ss) {
        std::vector<Eigen::VectorXd> out;
        for (double si : ss) {
            Eigen::VectorXd y = fam.disk_point_at(c0 + si * (c1 - c0));
            out.push_back(s.beta(y, u).transpose() * tangent);
        }
        return out;
    };
    return integrate_adaptive(f);
}

// Integral of beta along t -> Phi_{s t}(x0); L is the lattice of that torus.
Quadrature flow_segment(const ActionSetup& s, const Eigen::VectorXd& t, const Eigen::VectorXd& x0,
                        const Eigen::MatrixXd& ul) {
    if (t.norm() == 0.0) return {Eigen::VectorXd::Zero(s.p()), 0};
    BatchIntegrand f = [&](const std::vector<double>& ss) {
        std::vector<Eigen::VectorXd> pts = orbit(s.flow(), t, x0, ss), out;
        for (const auto& y : pts) {
            Eigen::VectorXd tangent = s.flow().fields_at(y) * t;
            out.push_back(ul * (s.dh(y).transpose() * tangent));
        }
        return out;
    };
    return integrate_adaptive(f);
}

struct PathSetup {
    Eigen::VectorXd c0, c1, d, t;
    Eigen::MatrixXd ul;
};

PathSetup path_setup(const ActionSetup& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& u) {
    const TorusFamily& fam = s.family();
    PathSetup ps;
    ps.d = fam.disk_point(y);
    ps.c0 = fam.disk_coordinates(s.leaf_base(y));
    ps.c1 = fam.disk_coordinates(ps.d);
    TorusChart tc = fam.chart_through(y);
    Eigen::VectorXd theta = angle_coordinates(s.flow(), tc, y, 1e-7);
    ps.t = tc.lattice.transpose() * theta;
    ps.ul = u * tc.lattice;
    return ps;
}

Eigen::VectorXd primary_path(const ActionSetup& s, const PathSetup& ps, const Eigen::MatrixXd& u, int& panels) {
    Quadrature a = disk_segment(s, ps.c0, ps.c1, u);
    Quadrature b = flow_segment(s, ps.t, ps.d, ps.ul);
    panels = std::max(a.panels, b.panels);
    return a.value + b.value;
}

Eigen::VectorXd path_value(const ActionSetup& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& u) {
    int panels = 0;
    return primary_path(s, path_setup(s, y, u), u, panels);
}

}  // namespace

PathActions action_by_path_integral(const ActionSetup& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& u) {
    if (u.rows() != s.p() || u.cols() != s.p()) throw std::invalid_argument("path integral: basis change must be p x p");
    PathSetup ps = path_setup(s, y, u);
    PathActions out;
    out.values = primary_path(s, ps, u, out.panels);

    // second ordering: one disk coordinate at a time, last first, then one field at a time
    Eigen::VectorXd alt = Eigen::VectorXd::Zero(s.p());
    Eigen::VectorXd c = ps.c0;
    const auto& leaf = s.leaf_disk();
    for (auto it = leaf.rbegin(); it != leaf.rend(); ++it) {
        Eigen::VectorXd next = c;
        next[*it] = ps.c1[*it];
        alt += disk_segment(s, c, next, u).value;
        c = next;
    }
    // transverse coordinates already agree; close any remaining gap
    alt += disk_segment(s, c, ps.c1, u).value;
    Eigen::VectorXd x = ps.d;
    for (int i = 0; i < s.p(); ++i) {
        Eigen::VectorXd ti = Eigen::VectorXd::Zero(s.p());
        ti[i] = ps.t[i];
        alt += flow_segment(s, ti, x, ps.ul).value;
        x = s.flow().raw(ti, x);
    }
    out.alternate = alt;
    out.ordering_gap = (out.values - out.alternate).cwiseAbs().maxCoeff();
    return out;
}

PathActions action_by_path_integral(const ActionSetup& s, const Eigen::VectorXd& y) {
    return action_by_path_integral(s, y, Eigen::MatrixXd::Identity(s.p(), s.p()));
}

BetaClosedness beta_closedness(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points) {
    BetaClosedness out;
    const double h = 2.5e-4;
    for (const auto& y : points) {
        Eigen::MatrixXd b = leaf_basis(s.dirac().frame_at(y));
        const auto l = b.cols();
        // directional derivatives of beta_k along each basis vector
        std::vector<Eigen::MatrixXd> db;
        for (Eigen::Index a = 0; a < l; ++a) {
            Eigen::VectorXd v = b.col(a);
            auto central = [&](double hh) -> Eigen::MatrixXd {
                return (s.beta(y + hh * v) - s.beta(y - hh * v)) / (2 * hh);
            };
            db.push_back((4 * central(h / 2) - central(h)) / 3);
        }
        for (Eigen::Index a = 0; a < l; ++a)
            for (Eigen::Index c = a + 1; c < l; ++c)
                for (int k = 0; k < s.p(); ++k) {
                    double v = db[static_cast<std::size_t>(a)].col(k).dot(b.col(c)) -
                               db[static_cast<std::size_t>(c)].col(k).dot(b.col(a));
                    keep_worst(out.residual, std::abs(v), y, "beta_" + std::to_string(k + 1));
                }
    }
    return out;
}

MineurAction action_by_mineur(const ActionSetup& s, int k, const Eigen::VectorXd& y, const KForm& alpha) {
    if (alpha.degree() != 1) throw std::invalid_argument("Mineur: alpha must be a 1-form");
    if (k < 0 || k >= s.p()) throw std::invalid_argument("Mineur: generator index out of range");
    require_same_chart(s.system().chart(), alpha.chart(), "Mineur");
    const Flow& flow = s.flow();
    TorusChart tc = s.family().chart_through(y);
    MineurAction out;
    // d alpha against the leaf form on the torus
    KForm da = exterior_d(alpha);
    for (const auto& th : halton_points(s.p(), 8)) {
        Eigen::VectorXd z = flow(tc.lattice.transpose() * th, tc.base_point);
        DiracPointFrame f = s.dirac().frame_at(z);
        Eigen::MatrixXd b = leaf_basis(f);
        Eigen::MatrixXd w = leaf_form_on(f, b);
        Eigen::MatrixXd m = da.matrix_at(as_span(z));
        Eigen::MatrixXd wa = b.transpose() * m * b;
        out.form_residual = std::max(out.form_residual, (wa - w).cwiseAbs().maxCoeff());
    }
    if (out.form_residual > 1e-8)
        throw std::domain_error("Mineur: d alpha differs from the leaf form by " + std::to_string(out.form_residual));
    const Eigen::VectorXd t = tc.lattice.row(k).transpose();
    const double gap = flow.difference(flow.raw(t, y), y).norm();
    if (gap > 1e-8) throw std::domain_error("Mineur: the orbit of generator " + std::to_string(k + 1) + " does not close");
    std::vector<expr::Program> comp;
    for (int m = 0; m < s.system().n(); ++m) comp.emplace_back(alpha.coefficient({m}));
    BatchIntegrand f = [&](const std::vector<double>& ss) {
        std::vector<Eigen::VectorXd> pts = orbit(flow, t, y, ss), res;
        for (const auto& p : pts) {
            Eigen::VectorXd z = wrap_periodic(flow.chart(), p);
            Eigen::VectorXd a(static_cast<Eigen::Index>(comp.size()));
            for (std::size_t m = 0; m < comp.size(); ++m) a[static_cast<Eigen::Index>(m)] = comp[m](as_span(z));
            res.push_back(Eigen::VectorXd::Constant(1, a.dot(flow.fields_at(p) * t)));
        }
        return res;
    };
    out.value = integrate_adaptive(f).value[0];
    return out;
}

IsotropyReport verify_torus_isotropy(const IntegrableSystem& sys, const DiracField& d,
                                     const std::vector<Eigen::VectorXd>& points) {
    IsotropyReport out;
    bool tangent = true;
    for (const auto& y : points) {
        Eigen::MatrixXd x(sys.n(), sys.p());
        for (int i = 0; i < sys.p(); ++i) x.col(i) = sys.fields()[static_cast<std::size_t>(i)].at(y);
        try {
            Eigen::MatrixXd w = leaf_form_on(d.frame_at(y), x);
            for (int i = 0; i < sys.p(); ++i)
                for (int j = i + 1; j < sys.p(); ++j)
                    keep_worst(out.residual, std::abs(w(i, j)), y,
                               "X" + std::to_string(i + 1) + ", X" + std::to_string(j + 1));
            if (sys.p() == 1) keep_worst(out.residual, 0.0, y, "X1");
        } catch (const std::domain_error&) {
            tangent = false;
            keep_worst(out.residual, std::numeric_limits<double>::infinity(), y, "field not tangent to the leaf");
        }
    }
    out.isotropic = tangent && out.residual.value <= 1e-9;
    return out;
}

IsotropyReport verify_torus_isotropy(const ActionSetup& s) {
    return verify_torus_isotropy(s.system(), s.dirac(), s.samples());
}

ActionAngleDifferentials action_angle_differentials(const ActionSetup& s, const Eigen::VectorXd& y,
                                                    const Eigen::MatrixXd& dirs, DifferentialOptions o) {
    const int p = s.p();
    const auto m = dirs.cols();
    ActionAngleDifferentials out{Eigen::MatrixXd(p, m), Eigen::MatrixXd(p, m)};
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(p, p);
    auto central = [&](const Eigen::VectorXd& v, double h, Eigen::VectorXd& da, Eigen::VectorXd& dt) {
        const Eigen::VectorXd yp = y + h * v, ym = y - h * v;
        da = (path_value(s, yp, id) - path_value(s, ym, id)) / (2 * h);
        Eigen::VectorXd diff = s.family().angles(yp) - s.family().angles(ym);
        for (int i = 0; i < p; ++i) diff[i] -= std::floor(diff[i] + 0.5);
        dt = diff / (2 * h);
    };
    for (Eigen::Index c = 0; c < m; ++c) {
        Eigen::VectorXd da1, dt1;
        central(dirs.col(c), o.h, da1, dt1);
        if (o.richardson) {
            Eigen::VectorXd da2, dt2;
            central(dirs.col(c), o.h / 2, da2, dt2);
            da1 = (4 * da2 - da1) / 3;
            dt1 = (4 * dt2 - dt1) / 3;
        }
        out.da.col(c) = da1;
        out.dtheta.col(c) = dt1;
    }
    return out;
}

namespace {

// sum_i (dtheta_i ^ dA_i)(u_a, u_b)
Eigen::MatrixXd angle_action_form(const ActionAngleDifferentials& d) {
    return d.dtheta.transpose() * d.da - d.da.transpose() * d.dtheta;
}

}  // namespace

FullAAReport verify_full_aa(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points, DifferentialOptions o) {
    FullAAReport out;
    out.lagrangian = true;
    for (const auto& y : points) {
        DiracPointFrame f = s.dirac().frame_at(y);
        if (!lagrangian_check(s.flow().fields_at(y), f).lagrangian) out.lagrangian = false;
        Eigen::MatrixXd b = leaf_basis(f);
        Eigen::MatrixXd w = leaf_form_on(f, b);
        Eigen::MatrixXd pred = angle_action_form(action_angle_differentials(s, y, b, o));
        keep_worst(out.residual, (w - pred).cwiseAbs().maxCoeff(), y, "leaf basis");
    }
    if (!out.lagrangian) throw std::domain_error("full action-angle check: the tori are not Lagrangian");
    out.pass = out.residual.value <= 1e-5;
    return out;
}

ConvergenceReport full_aa_convergence(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points,
                                      const std::vector<double>& steps) {
    ConvergenceReport out;
    out.steps = steps;
    for (double h : steps) {
        double worst = 0.0;
        for (const auto& y : points) {
            DiracPointFrame f = s.dirac().frame_at(y);
            Eigen::MatrixXd b = leaf_basis(f);
            Eigen::MatrixXd w = leaf_form_on(f, b);
            Eigen::MatrixXd pred = angle_action_form(action_angle_differentials(s, y, b, {h, false}));
            worst = std::max(worst, (w - pred).cwiseAbs().maxCoeff());
        }
        out.residuals.push_back(worst);
    }
    out.exact = true;
    for (double r : out.residuals)
        if (r > 1e-12) out.exact = false;
    for (std::size_t i = 0; i + 1 < steps.size(); ++i)
        out.orders.push_back(std::log(out.residuals[i] / out.residuals[i + 1]) / std::log(steps[i] / steps[i + 1]));
    return out;
}

PartialAAReport verify_partial_aa(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points,
                                  DifferentialOptions o) {
    PartialAAReport out;
    const int p = s.p();
    bool first = true;
    std::vector<Eigen::VectorXd> disks;
    for (const auto& y : points) {
        DiracPointFrame f = s.dirac().frame_at(y);
        Eigen::MatrixXd b = leaf_basis(f);
        const int leaf = static_cast<int>(b.cols());
        const int ker = static_cast<int>(kernel_directions(f).cols());
        if (first) {
            out.leaf_dim = leaf;
            out.kernel_dim = ker;
            first = false;
        } else if (leaf != out.leaf_dim || ker != out.kernel_dim) {
            throw std::domain_error("partial action-angle check: rank of the leaf distribution jumps at " +
                                    point_text(y));
        }
        Eigen::MatrixXd z = s.family().generators(y);
        Eigen::MatrixXd dirs(s.system().n(), p + leaf);
        dirs << z, b;
        Eigen::MatrixXd w = leaf_form_on(f, dirs);
        Eigen::MatrixXd delta = w - angle_action_form(action_angle_differentials(s, y, dirs, o));
        for (int k = 0; k < p; ++k)
            for (int c = 0; c < leaf; ++c)
                keep_worst(out.angle_defect, std::abs(delta(k, p + c)), y, "Z" + std::to_string(k + 1));
        Eigen::VectorXd d = s.family().disk_point(y);
        bool seen = false;
        for (const auto& e : disks)
            if ((e - d).norm() <= 1e-9) seen = true;
        if (!seen) disks.push_back(d);
    }
    const auto& leaf_disk = s.leaf_disk();
    const int nl = static_cast<int>(leaf_disk.size());
    for (const auto& d : disks) {
        Eigen::MatrixXd e = Eigen::MatrixXd::Zero(s.system().n(), nl);
        for (int a = 0; a < nl; ++a)
            e(s.family().reference().disk[static_cast<std::size_t>(leaf_disk[static_cast<std::size_t>(a)])], a) = 1.0;
        DiracPointFrame f = s.dirac().frame_at(d);
        Eigen::MatrixXd fij = Eigen::MatrixXd::Zero(nl, nl);
        if (nl >= 2) fij = leaf_form_on(f, e) - angle_action_form(action_angle_differentials(s, d, e, o));
        out.disk_points.push_back(d);
        out.f.push_back(fij);
    }
    out.pass = out.angle_defect.value <= 1e-5;
    return out;
}

CoaffineReport coaffine_transition(const ActionSetup& s, const Eigen::MatrixXi& u,
                                   const std::vector<Eigen::VectorXd>& points) {
    if (u.rows() != s.p() || u.cols() != s.p()) throw std::invalid_argument("co-affine: U must be p x p");
    const Eigen::MatrixXd ud = u.cast<double>();
    if (std::abs(std::abs(ud.determinant()) - 1.0) > 1e-9)
        throw std::invalid_argument("co-affine: U is not unimodular");
    CoaffineReport out;
    out.u = u;
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(s.p(), s.p());
    std::vector<Eigen::VectorXd> diff;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(s.p());
    for (const auto& y : points) {
        Eigen::VectorXd a = path_value(s, y, id), ap = path_value(s, y, ud);
        diff.push_back(ap - ud * a);
        mean += diff.back();
    }
    if (!points.empty()) mean /= static_cast<double>(points.size());
    out.offset = mean;
    for (const auto& d : diff) out.deviation = std::max(out.deviation, (d - mean).cwiseAbs().maxCoeff());
    return out;
}

int action_dependence_rank(const ActionSetup& s, double step, double rel_tol) {
    const TorusFamily& fam = s.family();
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(s.p(), s.p());
    const Eigen::VectorXd c = fam.disk_coordinates(fam.reference().base_point);
    Eigen::MatrixXd j(s.p(), fam.disk_dim());
    for (int a = 0; a < fam.disk_dim(); ++a) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(fam.disk_dim(), a) * step;
        j.col(a) = (path_value(s, fam.disk_point_at(c + e), id) - path_value(s, fam.disk_point_at(c - e), id)) /
                   (2 * step);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] < 1e-12) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > rel_tol * sv[0]) ++r;
    return r;
}

}  // namespace diracaa
