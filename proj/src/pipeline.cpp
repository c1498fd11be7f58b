#include "diracaa/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include <json.hpp>

#include "diracaa/sampling.hpp"

namespace diracaa {

const char* to_string(Command c) {
    switch (c) {
        case Command::CheckDirac: return "check-dirac";
        case Command::CheckSystem: return "check-system";
        case Command::FindTorus: return "find-torus";
        case Command::Average: return "average";
        case Command::Actions: return "actions";
        case Command::VerifyAA: return "verify-aa";
        case Command::All: return "all";
    }
    return "?";
}

std::optional<Command> parse_command(const std::string& s) {
    for (Command c : {Command::CheckDirac, Command::CheckSystem, Command::FindTorus, Command::Average, Command::Actions,
                      Command::VerifyAA, Command::All})
        if (s == to_string(c)) return c;
    return std::nullopt;
}

const char* to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Fail: return "fail";
        case CheckStatus::Warn: return "warn";
        case CheckStatus::Error: return "error";
    }
    return "?";
}

int Report::exit_code() const {
    bool failed = false;
    for (const auto& c : checks) {
        if (c.status == CheckStatus::Error) return 3;
        failed = failed || c.status == CheckStatus::Fail;
    }
    return failed ? 1 : 0;
}

const CheckRecord* Report::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

namespace {

std::string num(double v, const char* f = "%.6e") {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char b[48];
    std::snprintf(b, sizeof b, f, v);
    return b;
}

std::string vec_text(const Eigen::VectorXd& v) {
    std::string s = "[";
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i], "%.9g");
    return s + "]";
}

std::string matrix_text(const Eigen::MatrixXd& m) {
    std::string s = "[";
    for (Eigen::Index i = 0; i < m.rows(); ++i) s += (i ? "," : "") + vec_text(m.row(i).transpose());
    return s + "]";
}

class Runner {
public:
    Runner(const Scenario& sc, const RunOptions& o, Report& r) : sc_(sc), opt_(o), rep_(r) {}

    void check_dirac();
    void check_system();
    void find_torus();
    void average();
    void actions();
    void verify_aa();

private:
    double tol(const std::string& name, double fallback) const { return sc_.tolerance(name, fallback) * opt_.tol_scale; }

    CheckRecord& add(const std::string& name, double residual, double threshold, const Eigen::VectorXd& point = {},
                     std::string detail = {}) {
        CheckRecord c{name, residual <= threshold ? CheckStatus::Pass : CheckStatus::Fail, residual, threshold, point,
                      std::move(detail)};
        rep_.checks.push_back(std::move(c));
        return rep_.checks.back();
    }
    void error(const std::string& name, const std::string& msg) {
        rep_.checks.push_back({name, CheckStatus::Error, std::numeric_limits<double>::quiet_NaN(), 0.0, {}, msg});
    }
    void warn(const std::string& name, const std::string& msg) {
        rep_.checks.push_back({name, CheckStatus::Warn, 0.0, 0.0, {}, msg});
    }

    const SampleSet& structure_samples();
    const SampleSet& region_samples();
    bool ensure_bound();
    bool ensure_family();
    bool ensure_setup();
    const std::vector<Eigen::VectorXd>& disk_grid();
    int default_grid() const;
    std::vector<Eigen::VectorXd> average_points();

    const Scenario& sc_;
    RunOptions opt_;
    Report& rep_;

    std::optional<SampleSet> structure_samples_, region_samples_;
    std::optional<bool> bound_ok_, family_ok_, setup_ok_;
    IntegrableSystem bound_;
    std::shared_ptr<const Flow> flow_;
    std::shared_ptr<const TorusFamily> family_;
    std::shared_ptr<const ActionSetup> setup_;
    std::optional<std::vector<Eigen::VectorXd>> disk_grid_;
};

const SampleSet& Runner::structure_samples() {
    if (!structure_samples_) structure_samples_ = sample_chart(*sc_.chart, opt_.samples, opt_.seed);
    return *structure_samples_;
}

const SampleSet& Runner::region_samples() {
    if (region_samples_) return *region_samples_;
    const auto& box = sc_.region ? *sc_.region : sc_.chart->box();
    SampleSet out;
    if (sc_.region_filters.empty()) {
        out = sample_box(box, opt_.samples, opt_.seed);
    } else {
        std::vector<expr::Program> f;
        for (const auto& [e, iv] : sc_.region_filters) f.emplace_back(e);
        const int draw = opt_.samples * 64;
        for (const auto& x : sample_box(box, draw, opt_.seed)) {
            bool keep = true;
            for (std::size_t k = 0; k < f.size() && keep; ++k) {
                double v = f[k](std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
                keep = v >= sc_.region_filters[k].second.lo && v <= sc_.region_filters[k].second.hi;
            }
            if (keep) out.push_back(x);
            if (static_cast<int>(out.size()) == opt_.samples) break;
        }
    }
    region_samples_ = std::move(out);
    return *region_samples_;
}

int Runner::default_grid() const {
    if (opt_.grid) return *opt_.grid;
    if (sc_.average && sc_.average->grid) return *sc_.average->grid;
    const int p = sc_.system->p();
    return p == 1 ? 32 : p == 2 ? 16 : 8;
}

// ---------------------------------------------------------------- check-dirac

void Runner::check_dirac() {
    const DiracField& d = sc_.dirac;
    const SampleSet& s = structure_samples();
    const int n = d.n();
    FrameReport fr;
    try {
        fr = frame_report(d, s);
    } catch (const std::exception& e) {
        error("frame", e.what());
        return;
    }
    add("frame-rank", n - fr.min_rank, 0.0, fr.worst_point, "minimum rank " + std::to_string(fr.min_rank) + " of " + std::to_string(n));
    add("isotropy", fr.isotropy, tol("isotropy", kIsotropyTol), fr.worst_point);
    try {
        PointResidual c = courant_closedness(d, s);
        add("courant-closedness", c.value, tol("courant-closedness", 1e-9), c.point, c.where);
    } catch (const std::exception& e) {
        error("courant-closedness", e.what());
    }
    if (fr.coranks.empty()) return;
    std::string seen;
    int parity_bad = 0;
    for (const auto& b : fr.coranks) {
        seen += (seen.empty() ? "" : " ") + ("(" + std::to_string(b.r) + "," + std::to_string(b.s) + ")");
        if ((n - b.r - b.s) % 2 != 0) ++parity_bad;
    }
    add("bicorank-constant", static_cast<double>(fr.coranks.size() - 1), 0.0, {}, "(r,s) seen: " + seen);
    add("bicorank-parity", parity_bad, 0.0, {}, "n - r - s even");
    if (sc_.expect_bicorank) {
        int dev = 0;
        for (const auto& b : fr.coranks)
            dev = std::max(dev, std::abs(b.r - sc_.expect_bicorank->r) + std::abs(b.s - sc_.expect_bicorank->s));
        add("bicorank-expected", dev, 0.0, {},
            "expected (" + std::to_string(sc_.expect_bicorank->r) + "," + std::to_string(sc_.expect_bicorank->s) +
                "), seen " + seen);
    }
    if (d.kind() == DiracKind::PresymplecticGraph && d.omega()) {
        KForm dw = exterior_d(*d.omega()).simplified();
        std::vector<expr::Program> prog;
        for (const auto& [idx, c] : dw.terms()) prog.emplace_back(c);
        double worst = 0.0;
        Eigen::VectorXd at;
        for (const auto& x : s) {
            for (const auto& pr : prog) {
                double v = std::abs(pr(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))));
                if (v > worst || at.size() == 0) {
                    worst = std::max(worst, v);
                    at = x;
                }
            }
        }
        add("omega-closed", worst, tol("omega-closed", 1e-9), worst > 0 ? at : Eigen::VectorXd());
    }
}

// ---------------------------------------------------------------- check-system

bool Runner::ensure_bound() {
    if (bound_ok_) return *bound_ok_;
    if (sc_.hamiltonians.empty()) {
        bound_ = *sc_.system;
        bound_ok_ = false;
        return false;
    }
    const SampleSet& s = region_samples();
    double worst = 0.0;
    Eigen::VectorXd at;
    std::string where;
    const double t = tol("hamiltonian-binding", kMembershipTol);
    for (int i = 0; i < sc_.system->p(); ++i) {
        MembershipVerdict v = is_hamiltonian_pair(sc_.system->fields()[static_cast<std::size_t>(i)],
                                                  sc_.hamiltonians[static_cast<std::size_t>(i)], sc_.dirac, s, t);
        if (v.worst.value > worst || at.size() == 0) {
            worst = std::max(worst, v.worst.value);
            at = v.worst.point;
            where = "(X_" + std::to_string(i + 1) + ", dH_" + std::to_string(i + 1) + ")";
        }
    }
    add("hamiltonian-binding", worst, t, at, where);
    bound_ok_ = worst <= t;
    bound_ = *bound_ok_ ? bind_hamiltonians(*sc_.system, sc_.dirac, sc_.hamiltonians, s) : *sc_.system;
    return *bound_ok_;
}

void Runner::check_system() {
    if (!sc_.system) {
        warn("system", "no [system] block");
        return;
    }
    const IntegrableSystem& sys = *sc_.system;
    const SampleSet& s = region_samples();
    if (s.empty()) {
        error("system", "no sample satisfies the region filters");
        return;
    }
    RegularityThresholds th{tol("regularity", 1e-6), tol("commuting", 1e-9)};
    IntegrabilityReport ir = check_integrability(sys, s, th);
    add("commuting", ir.worst.commutator_residual, th.residual, ir.commutator_point);
    add("invariance", ir.worst.invariance_residual, tol("invariance", 1e-9), ir.invariance_point);
    {
        double w = std::min(ir.worst.wedge_x_norm, ir.worst.wedge_df_norm);
        CheckRecord c{"regularity", CheckStatus::Pass, w, th.wedge, ir.wedge_point,
                      std::to_string(ir.irregular_samples) + " of " + std::to_string(s.size()) +
                          " samples below the wedge threshold"};
        if (ir.irregular_samples > 0) c.status = CheckStatus::Warn;
        rep_.checks.push_back(c);
    }
    if (!sc_.hamiltonians.empty()) {
        ensure_bound();
        // {H_i, H_j} = X_i(H_j)
        double worst = 0.0;
        Eigen::VectorXd at;
        std::vector<expr::Program> br;
        for (int i = 0; i < sys.p(); ++i)
            for (int j = 0; j < sys.p(); ++j)
                if (i != j)
                    br.emplace_back(sys.fields()[static_cast<std::size_t>(i)].apply(sc_.hamiltonians[static_cast<std::size_t>(j)]));
        for (const auto& x : s)
            for (const auto& b : br) {
                double v = std::abs(b(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))));
                if (v > worst || at.size() == 0) {
                    worst = std::max(worst, v);
                    at = x;
                }
            }
        add("hamiltonian-brackets", worst, tol("hamiltonian-brackets", 1e-9), at);
    }
    try {
        IsotropyReport iso = verify_torus_isotropy(sys, sc_.dirac, s);
        CheckRecord& c = add("torus-isotropy", iso.residual.value, tol("torus-isotropy", 1e-9), iso.residual.point,
                             iso.residual.where);
        if (!iso.isotropic) c.status = CheckStatus::Fail;
    } catch (const std::exception& e) {
        error("torus-isotropy", e.what());
    }
}

// ---------------------------------------------------------------- find-torus

bool Runner::ensure_family() {
    if (family_ok_) return *family_ok_;
    family_ok_ = false;
    if (!sc_.torus) {
        warn("torus", "no [torus] block");
        return false;
    }
    const TorusSpec& ts = *sc_.torus;
    ensure_bound();
    try {
        flow_ = std::make_shared<const Flow>(bound_);
        LatticeOptions lo;
        lo.t_max = ts.t_max;
        lo.tol = tol("period-lattice", 1e-8);
        TorusChart tc = find_period_lattice(*flow_, ts.seed, lo);
        add("period-lattice", tc.return_residual, lo.tol, tc.base_point, "lattice " + matrix_text(tc.lattice));
        tc.disk = ts.disk;
        tc.disk_range = ts.disk_range;
        family_ = std::make_shared<const TorusFamily>(flow_, tc);
    } catch (const std::exception& e) {
        error("period-lattice", e.what());
        return false;
    }
    family_ok_ = true;
    return true;
}

void Runner::find_torus() {
    if (!ensure_family()) return;
    const TorusChart& tc = family_->reference();
    const double t = tol("lattice-equivalence", 1e-8);
    if (sc_.torus->expect_lattice) {
        UnimodularCheck u = unimodular_equivalence(*sc_.torus->expect_lattice, tc.lattice, t);
        CheckRecord& c = add("expected-lattice", u.residual, t, {}, "U " + matrix_text(u.u.cast<double>()));
        if (!u.equivalent) c.status = CheckStatus::Fail;
    }
    try {
        Eigen::VectorXd theta(family_->flow().p());
        for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = 0.31 + 0.17 * static_cast<double>(i);
        Eigen::VectorXd y = family_->flow()(tc.lattice.transpose() * theta, tc.base_point);
        LatticeOptions lo;
        lo.t_max = sc_.torus->t_max;
        lo.tol = tol("period-lattice", 1e-8);
        TorusChart other = find_period_lattice(family_->flow(), y, lo);
        UnimodularCheck u = unimodular_equivalence(tc.lattice, other.lattice, t);
        CheckRecord& c = add("second-base-point", u.residual, t, y, "lattice " + matrix_text(other.lattice));
        if (!u.equivalent) c.status = CheckStatus::Fail;
        Eigen::VectorXd back = angle_coordinates(family_->flow(), tc, y);
        Eigen::VectorXd d = back - theta;
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] -= std::round(d[i]);
        add("angle-coordinates", d.cwiseAbs().maxCoeff(), tol("angle-coordinates", 1e-8), y);
    } catch (const std::exception& e) {
        error("second-base-point", e.what());
    }
}

// ---------------------------------------------------------------- average

std::vector<Eigen::VectorXd> Runner::average_points() {
    auto all = family_->samples(2, 1, opt_.seed);
    std::vector<Eigen::VectorXd> out;
    const std::size_t stride = std::max<std::size_t>(1, all.size() / 4);
    for (std::size_t i = 0; i < all.size() && out.size() < 4; i += stride) out.push_back(all[i]);
    return out;
}

void Runner::average() {
    if (!ensure_family()) return;
    std::vector<Eigen::VectorXd> pts;
    try {
        pts = average_points();
    } catch (const std::exception& e) {
        error("average", e.what());
        return;
    }
    try {
        PreservationReport pr = verify_structure_preservation(*family_, sc_.dirac, pts);
        const double t = tol("preservation", 1e-8);
        add("preservation-prerequisite", pr.prerequisite.value, t, pr.prerequisite.point, pr.prerequisite.where);
        add("preservation-generators", pr.generators.value, t, pr.generators.point, pr.generators.where);
        if (pr.has_tensor) add("preservation-tensor", pr.tensor.value, t, pr.tensor.point, pr.tensor.where);
    } catch (const std::exception& e) {
        error("preservation", e.what());
    }

    const Flow& flow = family_->flow();
    TorusQuadrature q{default_grid()};
    std::vector<std::pair<std::string, TensorField>> fixed;
    for (int j = 0; j < flow.system().q(); ++j)
        fixed.emplace_back("F_" + std::to_string(j + 1), TensorField::scalar(sc_.chart, flow.system().integrals()[static_cast<std::size_t>(j)]));
    for (int i = 0; i < flow.p(); ++i)
        fixed.emplace_back("X_" + std::to_string(i + 1), TensorField::from(flow.system().fields()[static_cast<std::size_t>(i)]));
    if (sc_.dirac.omega()) fixed.emplace_back("omega", TensorField::from(*sc_.dirac.omega()));
    if (sc_.dirac.pi()) fixed.emplace_back("pi", TensorField::from(*sc_.dirac.pi()));

    std::vector<std::pair<std::string, TensorField>> probes;
    if (sc_.average) {
        for (std::size_t k = 0; k < sc_.average->functions.size(); ++k)
            probes.emplace_back("function " + std::to_string(k + 1), TensorField::scalar(sc_.chart, sc_.average->functions[k]));
        for (std::size_t k = 0; k < sc_.average->one_forms.size(); ++k)
            probes.emplace_back("one-form " + std::to_string(k + 1), TensorField::from(sc_.average->one_forms[k]));
    }
    if (probes.empty())
        for (int i = 0; i < sc_.chart->dim(); ++i)
            if (!sc_.chart->periodic(i))
                probes.emplace_back(sc_.chart->name(i), TensorField::scalar(sc_.chart, Expression::var(i)));

    int unconverged = 0;
    try {
        double worst = 0.0;
        Eigen::VectorXd at;
        std::string where;
        for (const auto& y : pts) {
            TorusChart tc = family_->chart_through(y);
            for (const auto& [name, t] : fixed) {
                AveragedTensor a = torus_average(flow, tc, t, y, q);
                if (!a.converged) ++unconverged;
                if (a.deviation > worst || at.size() == 0) {
                    worst = std::max(worst, a.deviation);
                    at = y;
                    where = name;
                }
            }
        }
        add("invariant-fixed", worst, tol("invariant-fixed", 1e-10), at, where);
    } catch (const std::exception& e) {
        error("invariant-fixed", e.what());
    }
    try {
        TorusQuadrature inner{flow.p() >= 2 ? std::min(q.grid, 8) : q.grid};
        double worst = 0.0;
        Eigen::VectorXd at;
        std::string where;
        for (const auto& y : pts) {
            TorusChart tc = family_->chart_through(y);
            for (const auto& [name, t] : probes) {
                AveragedTensor once = torus_average(flow, tc, t, y, inner);
                TensorSampler avg = [&, &tf = t](const Eigen::VectorXd& z) {
                    return torus_average(flow, tc, tf, z, inner).values;
                };
                AveragedTensor twice = torus_average(flow, tc, t.upper(), t.lower(), avg, y, inner);
                if (!once.converged) ++unconverged;
                double dev = (twice.values - once.values).cwiseAbs().maxCoeff();
                if (dev > worst || at.size() == 0) {
                    worst = std::max(worst, dev);
                    at = y;
                    where = name;
                }
            }
        }
        add("average-idempotent", worst, tol("average-idempotent", 1e-10), at, where);
    } catch (const std::exception& e) {
        error("average-idempotent", e.what());
    }
    if (unconverged > 0)
        warn("average-grid", std::to_string(unconverged) + " averages changed by more than 1e-8 between grids");
}

// ---------------------------------------------------------------- actions

bool Runner::ensure_setup() {
    if (setup_ok_) return *setup_ok_;
    setup_ok_ = false;
    if (!ensure_family()) return false;
    if (!ensure_bound()) {
        if (sc_.hamiltonians.empty()) warn("actions", "no Hamiltonians; actions are not computed");
        return false;
    }
    const TorusSpec& ts = *sc_.torus;
    try {
        HypothesisCheck h = check_hypotheses(bound_, sc_.dirac, family_->samples(ts.levels, ts.per_torus), ts.hypothesis);
        std::string detail = "intersection " + std::to_string(h.intersection_min) + ".." +
                             std::to_string(h.intersection_max) + ", leaf dimension " + std::to_string(h.leaf_dim_min) +
                             ".." + std::to_string(h.leaf_dim_max);
        if (!h.verified) {
            add("hypothesis", 1.0, 0.0, {}, detail + "; neither hypothesis holds, actions are not computed");
            return false;
        }
        CheckRecord& c = add("hypothesis", 0.0, 0.0, {}, std::string("using ") + to_string(*h.verified) + "; " + detail);
        if (*h.verified != ts.hypothesis) c.status = CheckStatus::Warn;
        setup_ = std::make_shared<const ActionSetup>(bound_, sc_.dirac, family_, *h.verified, ts.levels, ts.per_torus);
    } catch (const std::exception& e) {
        error("hypothesis", e.what());
        return false;
    }
    setup_ok_ = true;
    return true;
}

const std::vector<Eigen::VectorXd>& Runner::disk_grid() {
    if (disk_grid_) return *disk_grid_;
    const TorusSpec& ts = *sc_.torus;
    const int q = static_cast<int>(ts.disk.size());
    std::vector<Eigen::VectorXd> out;
    long nodes = 1;
    for (int j = 0; j < q; ++j) nodes *= ts.levels;
    for (long c = 0; c < nodes; ++c) {
        Eigen::VectorXd coords(q);
        long cc = c;
        for (int j = 0; j < q; ++j) {
            const Interval& r = ts.disk_range[static_cast<std::size_t>(j)];
            coords[j] = r.lo + (r.hi - r.lo) * static_cast<double>(cc % ts.levels) / (ts.levels - 1);
            cc /= ts.levels;
        }
        out.push_back(coords);
    }
    disk_grid_ = std::move(out);
    return *disk_grid_;
}

void Runner::actions() {
    if (!ensure_setup()) return;
    const ActionSetup& s = *setup_;
    const TorusFamily& fam = s.family();
    const int p = s.p();
    for (int c : sc_.torus->disk) rep_.level_names.push_back(sc_.chart->name(c));

    try {
        BetaClosedness b = beta_closedness(s, s.samples());
        add("beta-closedness", b.residual.value, tol("beta-closedness", 1e-8), b.residual.point, b.residual.where);
    } catch (const std::exception& e) {
        error("beta-closedness", e.what());
    }

    const Eigen::VectorXd base = fam.reference().base_point;
    std::vector<Eigen::VectorXd> disk_points;
    try {
        double gap = 0.0;
        Eigen::VectorXd at;
        for (const auto& coords : disk_grid()) {
            Eigen::VectorXd d = fam.disk_point_at(coords);
            PathActions pa = action_by_path_integral(s, d);
            if (pa.ordering_gap > gap || at.size() == 0) {
                gap = std::max(gap, pa.ordering_gap);
                at = d;
            }
            rep_.actions.push_back({coords, pa.values, {}, fam.chart_through(d).frequency});
            disk_points.push_back(d);
        }
        add("path-ordering", gap, tol("path-ordering", 1e-8), at);
    } catch (const std::exception& e) {
        error("action-table", e.what());
        return;
    }

    try {
        const TorusChart& tc = fam.reference();
        auto angles = halton_points(p, 64, opt_.seed);
        std::vector<Eigen::VectorXd> vals;
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
        for (const auto& th : angles) {
            vals.push_back(action_by_path_integral(s, s.flow()(tc.lattice.transpose() * th, tc.base_point)).values);
            mean += vals.back();
        }
        mean /= static_cast<double>(vals.size());
        Eigen::VectorXd var = Eigen::VectorXd::Zero(p);
        for (const auto& v : vals) var += (v - mean).cwiseAbs2();
        double sd = (var / static_cast<double>(vals.size())).cwiseSqrt().maxCoeff();
        add("action-constancy", sd, tol("action-constancy", 1e-8), base, "64 points on the reference torus");
    } catch (const std::exception& e) {
        error("action-constancy", e.what());
    }

    if (!s.leaf_disk().empty()) {
        try {
            const int m = static_cast<int>(s.leaf_disk().size());
            double worst = 0.0;
            Eigen::VectorXd at;
            for (const auto& d : disk_points) {
                Eigen::MatrixXd e = Eigen::MatrixXd::Zero(s.system().n(), m);
                for (int a = 0; a < m; ++a)
                    e(fam.reference().disk[static_cast<std::size_t>(s.leaf_disk()[static_cast<std::size_t>(a)])], a) = 1.0;
                Eigen::MatrixXd da = action_angle_differentials(s, d, e).da;
                double dev = (da - s.beta(d).transpose() * e).cwiseAbs().maxCoeff();
                if (dev > worst || at.size() == 0) {
                    worst = std::max(worst, dev);
                    at = d;
                }
            }
            add("action-gradient", worst, tol("action-gradient", 1e-6), at, "dA_k against beta_k");
        } catch (const std::exception& e) {
            error("action-gradient", e.what());
        }
    }

    if (!sc_.actions) return;
    const ActionsSpec& as = *sc_.actions;
    if (!as.expect.empty()) {
        std::vector<expr::Program> ex;
        for (const auto& e : as.expect) ex.emplace_back(e);
        auto at_point = [&](const Eigen::VectorXd& y) {
            Eigen::VectorXd v(p);
            for (int k = 0; k < p; ++k)
                v[k] = ex[static_cast<std::size_t>(k)](std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
            return v;
        };
        const Eigen::VectorXd e0 = at_point(base);
        double worst = 0.0;
        Eigen::VectorXd at;
        for (std::size_t r = 0; r < disk_points.size(); ++r) {
            double dev = (rep_.actions[r].actions - (at_point(disk_points[r]) - e0)).cwiseAbs().maxCoeff();
            if (dev > worst || at.size() == 0) {
                worst = std::max(worst, dev);
                at = disk_points[r];
            }
        }
        add("expected-actions", worst, tol("expected-actions", 1e-7), at);
    }
    if (as.mineur_alpha) {
        try {
            auto loops = [&](const Eigen::VectorXd& y) {
                Eigen::VectorXd v(p);
                for (int k = 0; k < p; ++k) v[k] = action_by_mineur(s, k, y, *as.mineur_alpha).value;
                return v;
            };
            const Eigen::VectorXd m0 = loops(base);
            const Eigen::VectorXd a0 = action_by_path_integral(s, base).values;
            double worst = 0.0;
            Eigen::VectorXd at;
            for (std::size_t r = 0; r < disk_points.size(); ++r) {
                Eigen::VectorXd m = loops(disk_points[r]);
                rep_.actions[r].mineur = m;
                // loop integrals of alpha run against the action orientation
                double dev = ((m - m0) + (rep_.actions[r].actions - a0)).cwiseAbs().maxCoeff();
                if (dev > worst || at.size() == 0) {
                    worst = std::max(worst, dev);
                    at = disk_points[r];
                }
            }
            add("mineur-consistency", worst, tol("mineur-consistency", 1e-7), at);
        } catch (const std::domain_error& e) {
            add("mineur-consistency", 1.0, 0.0, {}, e.what());
        } catch (const std::exception& e) {
            error("mineur-consistency", e.what());
        }
    }
}

// ---------------------------------------------------------------- verify-aa

Eigen::MatrixXi random_unimodular(int p, std::mt19937_64& rng) {
    Eigen::MatrixXi u = Eigen::MatrixXi::Identity(p, p);
    if (p == 1) {
        if (rng() & 1) u(0, 0) = -1;
        return u;
    }
    for (int step = 0; step < 3 * p; ++step) {
        int i = static_cast<int>(rng() % static_cast<std::uint64_t>(p));
        int j = static_cast<int>(rng() % static_cast<std::uint64_t>(p - 1));
        if (j >= i) ++j;
        int c = static_cast<int>(rng() % 5) - 2;
        u.row(i) += c * u.row(j);
    }
    if (rng() & 1) u.row(0) *= -1;
    return u;
}

void Runner::verify_aa() {
    if (!ensure_setup()) return;
    const ActionSetup& s = *setup_;
    try {
        IsotropyReport iso = verify_torus_isotropy(s);
        CheckRecord& c = add("leaf-torus-isotropy", iso.residual.value, tol("torus-isotropy", 1e-9), iso.residual.point,
                             iso.residual.where);
        if (!iso.isotropic) c.status = CheckStatus::Fail;
    } catch (const std::exception& e) {
        error("leaf-torus-isotropy", e.what());
    }
    if (!sc_.actions) return;
    const ActionsSpec& as = *sc_.actions;
    if (as.full_aa) {
        try {
            FullAAReport f = verify_full_aa(s, s.samples());
            add("full-aa", f.residual.value, tol("full-aa", 1e-5), f.residual.point, f.residual.where);
        } catch (const std::domain_error& e) {
            add("full-aa", 1.0, 0.0, {}, e.what());
        } catch (const std::exception& e) {
            error("full-aa", e.what());
        }
    }
    if (as.aa_order) {
        try {
            std::vector<Eigen::VectorXd> pts;
            for (std::size_t i = 0; i < s.samples().size() && pts.size() < 4; i += std::max<std::size_t>(1, s.samples().size() / 4))
                pts.push_back(s.samples()[i]);
            ConvergenceReport c = full_aa_convergence(s, pts, {0.1, 0.05, 0.025});
            std::string detail = "residuals";
            for (double r : c.residuals) detail += " " + num(r);
            if (c.exact) {
                add("full-aa-order", 0.0, tol("full-aa-order", 0.2), {}, detail + "; exact at every step");
            } else {
                double dev = 0.0;
                for (double o : c.orders) dev = std::max(dev, std::abs(o - 2.0));
                detail += "; orders";
                for (double o : c.orders) detail += " " + num(o, "%.4f");
                add("full-aa-order", dev, tol("full-aa-order", 0.2), {}, detail);
            }
        } catch (const std::domain_error& e) {
            add("full-aa-order", 1.0, 0.0, {}, e.what());
        } catch (const std::exception& e) {
            error("full-aa-order", e.what());
        }
    }
    if (as.partial_aa) {
        try {
            PartialAAReport pr = verify_partial_aa(s, s.samples());
            add("partial-aa", pr.angle_defect.value, tol("partial-aa", 1e-5), pr.angle_defect.point, pr.angle_defect.where);
            if (!as.expect_f.empty()) {
                const auto& disk = s.family().reference().disk;
                auto leaf_pos = [&](int coord) {
                    for (std::size_t a = 0; a < s.leaf_disk().size(); ++a)
                        if (disk[static_cast<std::size_t>(s.leaf_disk()[a])] == coord) return static_cast<int>(a);
                    return -1;
                };
                double worst = 0.0;
                Eigen::VectorXd at;
                std::string where;
                for (const auto& ef : as.expect_f) {
                    int a = leaf_pos(ef.i), b = leaf_pos(ef.j);
                    if (a < 0 || b < 0) {
                        worst = std::numeric_limits<double>::infinity();
                        where = sc_.chart->name(ef.i) + "," + sc_.chart->name(ef.j) + " not tangent to the leaves";
                        continue;
                    }
                    for (std::size_t k = 0; k < pr.f.size(); ++k) {
                        double dev = std::abs(pr.f[k](a, b) - ef.value);
                        if (dev > worst || at.size() == 0) {
                            worst = std::max(worst, dev);
                            at = pr.disk_points[k];
                            where = "f(" + sc_.chart->name(ef.i) + "," + sc_.chart->name(ef.j) + ") = " + num(pr.f[k](a, b), "%.9g");
                        }
                    }
                }
                add("partial-f", worst, tol("partial-f", 1e-6), at, where);
            }
        } catch (const std::domain_error& e) {
            add("partial-aa", 1.0, 0.0, {}, e.what());
        } catch (const std::exception& e) {
            error("partial-aa", e.what());
        }
    }
    std::vector<Eigen::MatrixXi> us = as.coaffine;
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL ^ opt_.seed);
    for (int k = 0; k < as.coaffine_random; ++k) us.push_back(random_unimodular(s.p(), rng));
    if (!us.empty()) {
        try {
            std::vector<Eigen::VectorXd> pts;
            const auto& all = s.samples();
            const std::size_t stride = std::max<std::size_t>(1, all.size() / 12);
            for (std::size_t i = 0; i < all.size(); i += stride) pts.push_back(all[i]);
            double worst = 0.0;
            std::string where;
            for (const auto& u : us) {
                CoaffineReport c = coaffine_transition(s, u, pts);
                if (c.deviation > worst || where.empty()) {
                    worst = std::max(worst, c.deviation);
                    where = "U " + matrix_text(u.cast<double>());
                }
            }
            add("coaffine", worst, tol("coaffine", 1e-7), {}, std::to_string(us.size()) + " matrices, worst " + where);
        } catch (const std::exception& e) {
            error("coaffine", e.what());
        }
    }
    if (as.expect_dependence_rank) {
        try {
            int r = action_dependence_rank(s);
            add("dependence-rank", std::abs(r - *as.expect_dependence_rank), 0.0, {},
                "rank " + std::to_string(r) + ", expected " + std::to_string(*as.expect_dependence_rank));
        } catch (const std::exception& e) {
            error("dependence-rank", e.what());
        }
    }
}

}  // namespace

Report run_scenario(const Scenario& sc, Command cmd, const RunOptions& opt) {
    Report rep;
    rep.scenario = sc.name;
    rep.command = to_string(cmd);
    Runner r(sc, opt, rep);
    const bool all = cmd == Command::All;
    if (cmd == Command::CheckDirac || all) r.check_dirac();
    if (cmd == Command::CheckSystem || (all && sc.system)) r.check_system();
    if (cmd == Command::FindTorus || (all && sc.torus)) r.find_torus();
    if (cmd == Command::Average || (all && sc.torus)) r.average();
    if (cmd == Command::Actions || (all && sc.actions)) r.actions();
    if (cmd == Command::VerifyAA || (all && sc.actions)) r.verify_aa();
    return rep;
}

// ---------------------------------------------------------------- output

std::string format_text(const Report& r) {
    std::ostringstream os;
    os << "format = 1\n";
    os << "scenario = " << r.scenario << "\n";
    os << "command = " << r.command << "\n";
    int counts[4] = {0, 0, 0, 0};
    for (const auto& c : r.checks) {
        ++counts[static_cast<int>(c.status)];
        os << "check " << c.name << " " << to_string(c.status) << " residual=" << num(c.residual)
           << " threshold=" << num(c.threshold);
        if (c.point.size() > 0) os << " point=" << vec_text(c.point);
        if (!c.detail.empty()) {
            std::string d = c.detail;
            for (char& ch : d)
                if (ch == '\n' || ch == '"') ch = '\'';
            os << " detail=\"" << d << "\"";
        }
        os << "\n";
    }
    if (!r.actions.empty()) os << "actions rows=" << r.actions.size() << " file=actions.csv\n";
    os << "summary pass=" << counts[0] << " fail=" << counts[1] << " warn=" << counts[2] << " error=" << counts[3]
       << "\n";
    os << "exit = " << r.exit_code() << "\n";
    return os.str();
}

namespace {

nlohmann::ordered_json json_number(double v) {
    if (std::isfinite(v)) return v;
    return num(v);
}

nlohmann::ordered_json json_vector(const Eigen::VectorXd& v) {
    auto a = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
    return a;
}

std::vector<std::string> csv_columns(const Report& r) {
    std::vector<std::string> cols = r.level_names;
    if (r.actions.empty()) return cols;
    const auto& row = r.actions.front();
    const Eigen::Index p = row.actions.size();
    for (Eigen::Index k = 0; k < p; ++k) cols.push_back("A" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < row.mineur.size(); ++k) cols.push_back("M" + std::to_string(k + 1));
    for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = 0; j < p; ++j) cols.push_back("freq" + std::to_string(i + 1) + std::to_string(j + 1));
    return cols;
}

std::vector<double> row_values(const ActionRow& row) {
    std::vector<double> v;
    for (Eigen::Index i = 0; i < row.level.size(); ++i) v.push_back(row.level[i]);
    for (Eigen::Index i = 0; i < row.actions.size(); ++i) v.push_back(row.actions[i]);
    for (Eigen::Index i = 0; i < row.mineur.size(); ++i) v.push_back(row.mineur[i]);
    for (Eigen::Index i = 0; i < row.frequency.rows(); ++i)
        for (Eigen::Index j = 0; j < row.frequency.cols(); ++j) v.push_back(row.frequency(i, j));
    return v;
}

}  // namespace

std::string format_json(const Report& r) {
    nlohmann::ordered_json j;
    j["format"] = 1;
    j["scenario"] = r.scenario;
    j["command"] = r.command;
    auto checks = nlohmann::ordered_json::array();
    for (const auto& c : r.checks) {
        nlohmann::ordered_json o;
        o["name"] = c.name;
        o["status"] = to_string(c.status);
        o["residual"] = json_number(c.residual);
        o["threshold"] = json_number(c.threshold);
        o["point"] = json_vector(c.point);
        o["detail"] = c.detail;
        checks.push_back(o);
    }
    j["checks"] = checks;
    j["action_columns"] = csv_columns(r);
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : r.actions) {
        auto a = nlohmann::ordered_json::array();
        for (double v : row_values(row)) a.push_back(json_number(v));
        rows.push_back(a);
    }
    j["actions"] = rows;
    j["exit"] = r.exit_code();
    return j.dump(2) + "\n";
}

std::string format_actions_csv(const Report& r) {
    if (r.actions.empty()) return {};
    std::ostringstream os;
    auto cols = csv_columns(r);
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
    for (const auto& row : r.actions) {
        auto v = row_values(row);
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << num(v[i], "%.12e");
        os << "\n";
    }
    return os.str();
}

void write_outputs(const Report& r, const std::filesystem::path& dir, bool json) {
    std::filesystem::create_directories(dir);
    auto put = [](const std::filesystem::path& f, const std::string& text) {
        std::ofstream out(f, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + f.string());
        out << text;
    };
    put(dir / (json ? "report.json" : "report.txt"), json ? format_json(r) : format_text(r));
    if (r.actions.empty()) return;
    put(dir / "actions.csv", format_actions_csv(r));
    std::filesystem::create_directories(dir / "plotdata");
    std::ostringstream os;
    auto cols = csv_columns(r);
    os << "#";
    for (const auto& c : cols) os << " " << c;
    os << "\n";
    for (const auto& row : r.actions) {
        auto v = row_values(row);
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << num(v[i], "%.12e");
        os << "\n";
    }
    put(dir / "plotdata" / "actions.dat", os.str());
}

}  // namespace diracaa
