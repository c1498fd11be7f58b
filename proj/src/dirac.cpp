#include "diracaa/dirac.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "diracaa/sampling.hpp"

namespace diracaa {

using expr::Program;

namespace {

std::string point_text(const Eigen::VectorXd& p) {
    std::ostringstream os;
    os.precision(6);
    os << '(';
    for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ')';
    return os.str();
}

std::span<const double> as_span(const Eigen::VectorXd& p) { return {p.data(), static_cast<std::size_t>(p.size())}; }

double distance_from_span(const DiracPointFrame& f, const Eigen::VectorXd& w) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(f.matrix());
    return (f.matrix() * cod.solve(w) - w).norm();
}

}  // namespace

SampleSet default_samples(const Chart& chart, int count, std::uint64_t seed) { return sample_chart(chart, count, seed); }

const char* to_string(DiracKind k) {
    switch (k) {
        case DiracKind::PresymplecticGraph: return "presymplectic-graph";
        case DiracKind::PoissonGraph: return "poisson-graph";
        default: return "dirac";
    }
}

DiracField::DiracField(ChartPtr chart, std::vector<Section> sections, DiracKind kind)
    : chart_(std::move(chart)), sections_(std::move(sections)), kind_(kind) {
    if (!chart_) throw std::invalid_argument("dirac: missing chart");
    if (static_cast<int>(sections_.size()) != chart_->dim())
        throw std::invalid_argument("dirac: expected " + std::to_string(chart_->dim()) + " sections");
    for (const auto& s : sections_) {
        require_same_chart(chart_, s.x.chart(), "dirac section");
        require_same_chart(chart_, s.a.chart(), "dirac section");
        if (s.a.degree() != 1) throw std::invalid_argument("dirac: section form must have degree 1");
        for (int i = 0; i < n(); ++i) prog_.emplace_back(s.x[i]);
        for (int i = 0; i < n(); ++i) prog_.emplace_back(s.a.coefficient({i}));
    }
}

DoubleVector DiracField::section_at(int i, const Eigen::VectorXd& point) const {
    const int nn = n();
    DoubleVector v{Eigen::VectorXd(nn), Eigen::VectorXd(nn)};
    auto p = as_span(point);
    const std::size_t base = static_cast<std::size_t>(2 * nn * i);
    for (int k = 0; k < nn; ++k) {
        v.x[k] = prog_[base + static_cast<std::size_t>(k)](p);
        v.a[k] = prog_[base + static_cast<std::size_t>(nn + k)](p);
    }
    return v;
}

DiracPointFrame DiracField::frame_at(const Eigen::VectorXd& point) const {
    const int nn = n();
    Eigen::MatrixXd m(2 * nn, nn);
    for (int j = 0; j < nn; ++j) {
        DoubleVector v = section_at(j, point);
        m.col(j) << v.x, v.a;
    }
    return DiracPointFrame(std::move(m), point);
}

DiracField from_presymplectic(const KForm& omega, const SampleSet* samples) {
    if (omega.degree() != 2) throw std::invalid_argument("from_presymplectic: expected a 2-form");
    const auto& chart = omega.chart();
    KForm d = exterior_d(omega);
    if (!d.is_symbolically_zero()) {
        SampleSet own;
        if (!samples) {
            own = default_samples(*chart);
            samples = &own;
        }
        double worst = 0.0;
        Eigen::VectorXd wp;
        for (const auto& p : *samples)
            for (const auto& [idx, c] : d.terms()) {
                double v = std::abs(expr::eval(c, as_span(p)));
                if (v > worst) {
                    worst = v;
                    wp = p;
                }
            }
        if (worst > 1e-10) {
            std::ostringstream os;
            os << "2-form is not closed: |d omega| = " << worst << " at " << point_text(wp);
            throw std::domain_error(os.str());
        }
    }
    return graph_of_two_form(omega);
}

DiracField graph_of_two_form(const KForm& omega) {
    if (omega.degree() != 2) throw std::invalid_argument("graph_of_two_form: expected a 2-form");
    const auto& chart = omega.chart();
    std::vector<Section> s;
    for (int i = 0; i < chart->dim(); ++i) {
        VectorField e = VectorField::coordinate(chart, i);
        s.push_back({e, interior(e, omega)});
    }
    DiracField out(chart, std::move(s), DiracKind::PresymplecticGraph);
    out.attach_source(omega);
    return out;
}

DiracField from_poisson(const BivectorField& pi) {
    const auto& chart = pi.chart();
    const int n = chart->dim();
    std::vector<Section> s;
    for (int k = 0; k < n; ++k) {
        std::vector<Expression> x;
        for (int j = 0; j < n; ++j) x.push_back(pi.coefficient(j, k));
        KForm a(chart, 1);
        a.add({k}, Expression::integer(1));
        s.push_back({VectorField(chart, std::move(x)), std::move(a)});
    }
    DiracField out(chart, std::move(s), DiracKind::PoissonGraph);
    out.attach_source(pi);
    return out;
}

DiracField canonical_dirac(int base, int cotangent, int fiber, int casimir, double half_width) {
    if (base < 0 || cotangent < 0 || fiber < 0 || casimir < 0) throw std::invalid_argument("canonical_dirac: negative dimension");
    if (base != cotangent) throw std::invalid_argument("canonical_dirac: base and cotangent dimensions must agree");
    std::vector<std::string> names;
    for (int i = 1; i <= base; ++i) names.push_back("q" + std::to_string(i));
    for (int i = 1; i <= base; ++i) names.push_back("p" + std::to_string(i));
    for (int i = 1; i <= fiber; ++i) names.push_back("v" + std::to_string(i));
    for (int i = 1; i <= casimir; ++i) names.push_back("c" + std::to_string(i));
    if (names.empty()) throw std::invalid_argument("canonical_dirac: empty chart");
    std::vector<Interval> box(names.size(), Interval{-half_width, half_width});
    auto chart = make_chart(Chart::euclidean(names, box));
    std::vector<Section> s;
    auto dx = [&](int i) {
        KForm a(chart, 1);
        a.add({i}, Expression::integer(1));
        return a;
    };
    for (int i = 0; i < base; ++i) s.push_back({VectorField::coordinate(chart, i), dx(base + i)});
    for (int i = 0; i < base; ++i) s.push_back({VectorField::coordinate(chart, base + i), Expression::integer(-1) * dx(i)});
    for (int i = 0; i < fiber; ++i) s.push_back({VectorField::coordinate(chart, 2 * base + i), KForm(chart, 1)});
    for (int i = 0; i < casimir; ++i) s.push_back({VectorField::zero(chart), dx(2 * base + fiber + i)});
    return DiracField(chart, std::move(s), DiracKind::Dirac);
}

Section courant_bracket(const Section& s1, const Section& s2) {
    require_same_chart(s1.x.chart(), s2.x.chart(), "courant_bracket");
    return {lie_bracket(s1.x, s2.x), lie_derivative(s1.x, s2.a) - interior(s2.x, exterior_d(s1.a))};
}

FrameReport frame_report(const DiracField& d, const SampleSet& samples) {
    FrameReport r;
    r.min_rank = d.n();
    for (const auto& p : samples) {
        DiracPointFrame f = d.frame_at(p);
        double iso = isotropy_defect(f);
        if (iso > r.isotropy || r.worst_point.size() == 0) {
            r.isotropy = std::max(r.isotropy, iso);
            r.worst_point = p;
        }
        int rk = f.rank();
        r.min_rank = std::min(r.min_rank, rk);
        if (rk == f.n() && iso <= kIsotropyTol) {
            BiCorank b = bi_corank(f);
            if (std::find(r.coranks.begin(), r.coranks.end(), b) == r.coranks.end()) r.coranks.push_back(b);
        }
    }
    return r;
}

PointResidual courant_closedness(const DiracField& d, const SampleSet& samples) {
    const int n = d.n();
    struct Compiled {
        int i, j;
        std::vector<Program> prog;
    };
    std::vector<Compiled> brackets;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Section b = courant_bracket(d.sections()[static_cast<std::size_t>(i)], d.sections()[static_cast<std::size_t>(j)]);
            Compiled c{i, j, {}};
            for (int k = 0; k < n; ++k) c.prog.emplace_back(b.x[k]);
            for (int k = 0; k < n; ++k) c.prog.emplace_back(b.a.coefficient({k}));
            brackets.push_back(std::move(c));
        }
    PointResidual out;
    for (const auto& p : samples) {
        DiracPointFrame f = d.frame_at(p);
        if (f.rank() < n) throw std::domain_error("courant_closedness: rank-deficient frame at " + point_text(p));
        for (const auto& c : brackets) {
            Eigen::VectorXd w(2 * n);
            for (int k = 0; k < 2 * n; ++k) w[k] = c.prog[static_cast<std::size_t>(k)](as_span(p));
            const double ni = f.matrix().col(c.i).norm(), nj = f.matrix().col(c.j).norm();
            if (ni * nj < 1e-14 || w.norm() < 1e-300) continue;
            double v = distance_from_span(f, w) / (ni * nj);
            if (v > out.value || out.point.size() == 0) {
                out.value = std::max(out.value, v);
                out.point = p;
                out.where = "sections " + std::to_string(c.i) + "," + std::to_string(c.j);
            }
        }
    }
    return out;
}

namespace {

MembershipVerdict membership(const DiracField& d, const SampleSet& samples, double tol,
                             const std::vector<Program>& x, const std::vector<Program>& a) {
    MembershipVerdict v;
    const int n = d.n();
    for (const auto& p : samples) {
        DoubleVector w{Eigen::VectorXd(n), Eigen::VectorXd(n)};
        for (int k = 0; k < n; ++k) {
            w.x[k] = x[static_cast<std::size_t>(k)](as_span(p));
            w.a[k] = a[static_cast<std::size_t>(k)](as_span(p));
        }
        double r = membership_residual(d.frame_at(p), w);
        if (r > v.worst.value || v.worst.point.size() == 0) {
            v.worst.value = std::max(v.worst.value, r);
            v.worst.point = p;
        }
    }
    v.pass = v.worst.value <= tol;
    return v;
}

std::vector<Program> compile(const std::vector<Expression>& es) {
    std::vector<Program> out;
    for (const auto& e : es) out.emplace_back(e);
    return out;
}

std::vector<Expression> gradient(const Expression& h, int n) {
    std::vector<Expression> g;
    for (int i = 0; i < n; ++i) g.push_back(expr::diff(h, i));
    return g;
}

}  // namespace

MembershipVerdict is_hamiltonian_pair(const VectorField& x, const Expression& h, const DiracField& d,
                                      const SampleSet& samples, double tol) {
    require_same_chart(x.chart(), d.chart(), "is_hamiltonian_pair");
    return membership(d, samples, tol, compile(x.components()), compile(gradient(h, d.n())));
}

MembershipVerdict is_isotropic_field(const VectorField& x, const DiracField& d, const SampleSet& samples, double tol) {
    return is_hamiltonian_pair(x, Expression(), d, samples, tol);
}

MembershipVerdict is_casimir(const Expression& f, const DiracField& d, const SampleSet& samples, double tol) {
    return membership(d, samples, tol, compile(std::vector<Expression>(static_cast<std::size_t>(d.n()))),
                      compile(gradient(f, d.n())));
}

MembershipVerdict is_admissible_hamiltonian(const Expression& h, const DiracField& d, const SampleSet& samples,
                                            double tol) {
    MembershipVerdict v;
    auto g = compile(gradient(h, d.n()));
    for (const auto& p : samples) {
        Eigen::MatrixXd k = kernel_directions(d.frame_at(p));
        Eigen::VectorXd dh(d.n());
        for (int i = 0; i < d.n(); ++i) dh[i] = g[static_cast<std::size_t>(i)](as_span(p));
        double r = k.cols() == 0 ? 0.0 : (k.transpose() * dh).cwiseAbs().maxCoeff() / std::max(1.0, dh.norm());
        if (r > v.worst.value || v.worst.point.size() == 0) {
            v.worst.value = std::max(v.worst.value, r);
            v.worst.point = p;
        }
    }
    v.pass = v.worst.value <= tol;
    return v;
}

Expression poisson_bracket(const Expression& h, const Expression& f, const DiracField& d, const VectorField& x_h,
                           const SampleSet& samples) {
    MembershipVerdict v = is_hamiltonian_pair(x_h, h, d, samples);
    if (!v.pass) {
        std::ostringstream os;
        os << "poisson_bracket: (X_H, dH) not in D (residual " << v.worst.value << " at " << point_text(v.worst.point) << ")";
        throw std::domain_error(os.str());
    }
    return x_h.apply(f);
}

DiracField induced_dirac_on_level(const DiracField& d, const std::vector<std::pair<Expression, double>>& constraints,
                                  int samples) {
    const Chart& chart = *d.chart();
    const int n = d.n();
    std::vector<std::pair<int, double>> fixed;
    for (const auto& [e, c] : constraints) {
        Expression s = expr::simplify(e);
        if (s.op() != expr::Op::Var)
            throw std::invalid_argument("induced_dirac_on_level: only coordinate slices are supported");
        for (const auto& f : fixed)
            if (f.first == s.var_index()) throw std::invalid_argument("induced_dirac_on_level: repeated constraint");
        double v = c;
        if (chart.periodic(s.var_index())) v -= std::floor(v);
        fixed.emplace_back(s.var_index(), v);
    }
    std::vector<int> removed;
    for (const auto& f : fixed) removed.push_back(f.first);
    auto sub = make_chart(chart.drop(removed));
    const int q = sub->dim();
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
        if (std::find(removed.begin(), removed.end(), i) == removed.end()) keep.push_back(i);

    auto restrict = [&](const Expression& e) { return restrict_to_slice(e, chart, fixed); };
    // restricted components of every section
    std::vector<std::vector<Expression>> sx(static_cast<std::size_t>(n)), sa(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const auto& s = d.sections()[static_cast<std::size_t>(k)];
        for (int i = 0; i < n; ++i) {
            sx[static_cast<std::size_t>(k)].push_back(restrict(s.x[i]));
            sa[static_cast<std::size_t>(k)].push_back(restrict(s.a.coefficient({i})));
        }
    }

    SampleSet pts = default_samples(*sub, samples);
    const Eigen::VectorXd& ref = pts.front();
    auto val = [&](const Expression& e) { return expr::eval(e, as_span(ref)); };

    // symbolic row reduction of the fixed-coordinate rows of the X block,
    // pivots chosen by magnitude at the reference point
    std::vector<std::vector<Expression>> m;
    for (const auto& f : fixed) {
        std::vector<Expression> row;
        for (int k = 0; k < n; ++k) row.push_back(sx[static_cast<std::size_t>(k)][static_cast<std::size_t>(f.first)]);
        m.push_back(std::move(row));
    }
    std::vector<int> pivot_col;
    std::vector<std::size_t> pivot_row;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (std::size_t r = 0; r < m.size(); ++r) {
        int best = -1;
        double bv = 1e-9;
        for (int k = 0; k < n; ++k) {
            if (used[static_cast<std::size_t>(k)]) continue;
            double v = std::abs(val(m[r][static_cast<std::size_t>(k)]));
            if (v > bv) {
                bv = v;
                best = k;
            }
        }
        if (best < 0) continue;
        used[static_cast<std::size_t>(best)] = true;
        Expression piv = m[r][static_cast<std::size_t>(best)];
        for (auto& e : m[r]) e = expr::simplify(e / piv);
        for (std::size_t o = 0; o < m.size(); ++o) {
            if (o == r) continue;
            Expression factor = m[o][static_cast<std::size_t>(best)];
            if (factor.is_zero_constant()) continue;
            for (int k = 0; k < n; ++k)
                m[o][static_cast<std::size_t>(k)] = expr::simplify(m[o][static_cast<std::size_t>(k)] - factor * m[r][static_cast<std::size_t>(k)]);
        }
        pivot_col.push_back(best);
        pivot_row.push_back(r);
    }

    // null vectors c with sum_k c_k X_k tangent to the slice
    std::vector<Section> candidates;
    for (int f = 0; f < n; ++f) {
        if (used[static_cast<std::size_t>(f)]) continue;
        std::vector<Expression> c(static_cast<std::size_t>(n));
        c[static_cast<std::size_t>(f)] = Expression::integer(1);
        for (std::size_t t = 0; t < pivot_col.size(); ++t)
            c[static_cast<std::size_t>(pivot_col[t])] = expr::simplify(-m[pivot_row[t]][static_cast<std::size_t>(f)]);
        std::vector<Expression> x, a;
        for (int i : keep) {
            Expression xi, ai;
            for (int k = 0; k < n; ++k) {
                const auto& ck = c[static_cast<std::size_t>(k)];
                if (ck.is_zero_constant()) continue;
                xi = xi + ck * sx[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
                ai = ai + ck * sa[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)];
            }
            x.push_back(expr::simplify(xi));
            a.push_back(expr::simplify(ai));
        }
        candidates.push_back({VectorField(sub, x), KForm::one_form(sub, a)});
    }

    auto column = [&](const Section& s, const Eigen::VectorXd& p) {
        Eigen::VectorXd v(2 * q);
        v << s.x.at(p), s.a.covector_at(as_span(p));
        return v;
    };
    // independent subset at the reference point
    std::vector<Section> chosen;
    Eigen::MatrixXd acc(2 * q, 0);
    for (const auto& s : candidates) {
        Eigen::MatrixXd trial(2 * q, acc.cols() + 1);
        trial << acc, column(s, ref);
        if (numeric_rank(trial, std::max(1.0, trial.norm())) == trial.cols()) {
            acc = trial;
            chosen.push_back(s);
        }
        if (static_cast<int>(chosen.size()) == q) break;
    }
    if (static_cast<int>(chosen.size()) != q)
        throw std::domain_error("non-regular constraint: induced structure has rank " + std::to_string(chosen.size()) +
                                " < " + std::to_string(q) + " at " + point_text(ref));
    std::optional<BiCorank> type;
    for (const auto& p : pts) {
        Eigen::MatrixXd all(2 * q, static_cast<Eigen::Index>(candidates.size()));
        for (std::size_t k = 0; k < candidates.size(); ++k) all.col(static_cast<Eigen::Index>(k)) = column(candidates[k], p);
        Eigen::MatrixXd sel(2 * q, q);
        for (int k = 0; k < q; ++k) sel.col(k) = column(chosen[static_cast<std::size_t>(k)], p);
        const double sc = std::max(1.0, all.norm());
        if (numeric_rank(all, sc) != q || numeric_rank(sel, sc) != q)
            throw std::domain_error("non-regular constraint: rank of the induced structure changes at " + point_text(p));
        BiCorank b = bi_corank(DiracPointFrame(sel, p));
        if (type && !(*type == b))
            throw std::domain_error("non-regular constraint: bi-corank of the induced structure changes at " + point_text(p));
        type = b;
    }
    return DiracField(sub, std::move(chosen), DiracKind::Dirac);
}

}  // namespace diracaa
