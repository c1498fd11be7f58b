// Acceptance run: one PASS/FAIL line per criterion. Scenario files are read
// from DIRACAA_SCENARIO_DIR; expected values are computed here, not taken from
// the scenarios.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "diracaa/pipeline.hpp"
#include "diracaa/sampling.hpp"
#include "oracles.hpp"

using namespace diracaa;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

std::filesystem::path scenario_dir() {
#ifdef DIRACAA_SCENARIO_DIR
    return DIRACAA_SCENARIO_DIR;
#else
    return "scenarios";
#endif
}

Scenario load(const std::string& name) { return load_scenario(scenario_dir() / (name + ".toml")); }

std::string sci(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2e", v);
    return b;
}

struct Outcome {
    bool pass = true;
    std::ostringstream notes;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            notes << " [" << what << "]";
        }
    }
};

std::shared_ptr<ActionSetup> build_setup(const Scenario& sc) {
    IntegrableSystem bound = bind_hamiltonians(*sc.system, sc.dirac, sc.hamiltonians, default_samples(*sc.chart));
    auto flow = std::make_shared<const Flow>(bound);
    const TorusSpec& ts = *sc.torus;
    LatticeOptions lo;
    lo.t_max = ts.t_max;
    TorusChart tc = find_period_lattice(*flow, ts.seed, lo);
    tc.disk = ts.disk;
    tc.disk_range = ts.disk_range;
    auto fam = std::make_shared<const TorusFamily>(flow, tc);
    return std::make_shared<ActionSetup>(bound, sc.dirac, fam, ts.hypothesis, ts.levels, ts.per_torus);
}

double residual_of(const Report& r, const std::string& check) {
    const CheckRecord* c = r.find(check);
    return c ? c->residual : std::numeric_limits<double>::quiet_NaN();
}

const std::vector<std::string> kPositive{"oscillator", "pendulum",   "t2xr",    "sqrt2",     "poisson_circle",
                                         "t2xr2",      "product",    "canonical", "induced", "nonhamiltonian"};
const std::vector<std::string> kWithTori{"oscillator", "pendulum", "t2xr",    "sqrt2",
                                         "poisson_circle", "t2xr2", "product", "induced"};

// ---------------------------------------------------------------- criteria

void axiom_suite(Outcome& o) {
    for (const auto& name : kPositive) {
        Report r = run_scenario(load(name), Command::CheckDirac);
        double iso = residual_of(r, "isotropy"), clo = residual_of(r, "courant-closedness");
        o.require(iso <= 1e-10, name + " isotropy " + sci(iso));
        o.require(clo <= 1e-9, name + " closedness " + sci(clo));
    }
    for (const auto& name : {"nonclosed", "noncommuting"}) {
        Report r = run_scenario(load(name), Command::CheckDirac);
        double worst = std::max(residual_of(r, "isotropy"), residual_of(r, "courant-closedness"));
        o.require(r.exit_code() == 1, std::string(name) + " not rejected");
        o.require(worst >= 0.05, std::string(name) + " residual " + sci(worst));
        o.notes << " " << name << "=" << sci(worst);
    }
}

void bicorank_map(Outcome& o) {
    const std::vector<std::pair<std::string, BiCorank>> expected{
        {"oscillator", {0, 0, 0}}, {"poisson_circle", {0, 1, 0}}, {"t2xr", {1, 0, 0}}, {"t2xr2", {1, 1, 0}}};
    for (const auto& [name, b] : expected) {
        Scenario sc = load(name);
        FrameReport fr = frame_report(sc.dirac, default_samples(*sc.chart));
        bool ok = fr.coranks.size() == 1 && fr.coranks[0].r == b.r && fr.coranks[0].s == b.s;
        o.require(ok, name + " bi-corank");
    }
    for (const auto& name : kPositive) {
        Scenario sc = load(name);
        FrameReport fr = frame_report(sc.dirac, default_samples(*sc.chart));
        for (const auto& b : fr.coranks) o.require((sc.dirac.n() - b.r - b.s) % 2 == 0, name + " parity");
    }
}

void liouville(Outcome& o) {
    auto lattice_of = [](const Scenario& sc, const VectorXd& x0, const Flow& flow) {
        LatticeOptions lo;
        lo.t_max = sc.torus->t_max;
        return find_period_lattice(flow, x0, lo);
    };
    {
        Scenario sc = load("sqrt2");
        Flow flow(*sc.system);
        TorusChart tc = lattice_of(sc, sc.torus->seed, flow);
        MatrixXd want(2, 2);
        want << 1, -std::sqrt(2.0), 0, 1;
        UnimodularCheck u = unimodular_equivalence(want, tc.lattice, 1e-8);
        o.require(u.equivalent && u.residual <= 1e-8, "sqrt2 lattice " + sci(u.residual));
        VectorXd y = flow(tc.lattice.transpose() * VectorXd::Constant(2, 0.37), tc.base_point);
        UnimodularCheck v = unimodular_equivalence(tc.lattice, lattice_of(sc, y, flow).lattice, 1e-8);
        o.require(v.equivalent, "sqrt2 second base point");
        o.notes << " sqrt2=" << sci(u.residual);
    }
    {
        Scenario sc = load("oscillator");
        Flow flow(*sc.system);
        TorusChart tc = lattice_of(sc, sc.torus->seed, flow);
        double err = std::abs(std::abs(tc.lattice(0, 0)) - 2 * kPi);
        o.require(err <= 1e-9, "oscillator period " + sci(err));
        VectorXd y(2);
        y << std::cos(2.0), std::sin(2.0);
        UnimodularCheck v = unimodular_equivalence(tc.lattice, lattice_of(sc, y, flow).lattice, 1e-8);
        o.require(v.equivalent, "oscillator second base point");
        o.notes << " period=" << sci(err);
    }
}

void preservation(Outcome& o) {
    for (const auto& name : kWithTori) {
        Report r = run_scenario(load(name), Command::Average);
        double pre = residual_of(r, "preservation-prerequisite"), gen = residual_of(r, "preservation-generators");
        double fix = residual_of(r, "invariant-fixed"), idem = residual_of(r, "average-idempotent");
        o.require(pre <= 1e-8 && gen <= 1e-8, name + " preservation " + sci(std::max(pre, gen)));
        if (const CheckRecord* t = r.find("preservation-tensor")) o.require(t->residual <= 1e-8, name + " tensor");
        o.require(fix <= 1e-10, name + " invariant tensor " + sci(fix));
        o.require(idem <= 1e-10, name + " idempotence " + sci(idem));
    }
}

void isotropy(Outcome& o) {
    for (const auto& name : kWithTori) {
        Scenario sc = load(name);
        IsotropyReport r = verify_torus_isotropy(*sc.system, sc.dirac, default_samples(*sc.chart));
        o.require(r.isotropic && r.residual.value <= 1e-9, name + " " + sci(r.residual.value));
    }
    Scenario bad = load("nonhamiltonian");
    IsotropyReport r = verify_torus_isotropy(*bad.system, bad.dirac, default_samples(*bad.chart));
    o.require(!r.isotropic, "non-Hamiltonian control not flagged");
}

// area under p(q) at fixed energy, by the periodic trapezoid rule
double pendulum_area(double e) {
    const int m = 4096;
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += std::sqrt(2 * (e + std::cos(2 * kPi * k / m)));
    return s / m;
}

void actions(Outcome& o) {
    {
        Scenario sc = load("oscillator");
        auto s = build_setup(sc);
        KForm alpha = KForm::parse_one_form(sc.chart, {"0", "x"});
        double worst_a = 0.0, worst_m = 0.0;
        for (double r : {0.6, 0.9, 1.2, 1.45})
            for (double phi : {0.3, 2.0, 4.4}) {
                VectorXd y(2);
                y << r * std::cos(phi), r * std::sin(phi);
                worst_a = std::max(worst_a, std::abs(action_by_path_integral(*s, y).values[0] - kPi * (r * r - 1.0)));
                worst_m = std::max(worst_m, std::abs(std::abs(action_by_mineur(*s, 0, y, alpha).value) - kPi * r * r));
            }
        o.require(worst_a <= 1e-7, "oscillator path integral " + sci(worst_a));
        o.require(worst_m <= 1e-7, "oscillator Mineur " + sci(worst_m));
        o.notes << " osc=" << sci(std::max(worst_a, worst_m));
    }
    {
        Scenario sc = load("pendulum");
        auto s = build_setup(sc);
        KForm alpha = KForm::parse_one_form(sc.chart, {"-p", "0"});
        const double e0 = 2.5 * 2.5 / 2 - 1.0;
        double worst = 0.0;
        for (double e : {1.6, 1.9, 2.125, 2.5, 2.9}) {
            const double q = 0.3;
            VectorXd y(2);
            y << q, std::sqrt(2 * (e + std::cos(2 * kPi * q)));
            double a = action_by_path_integral(*s, y).values[0];
            double m = action_by_mineur(*s, 0, y, alpha).value;
            worst = std::max(worst, std::abs(a - (pendulum_area(e) - pendulum_area(e0))));
            worst = std::max(worst, std::abs(std::abs(m) - pendulum_area(e)));
        }
        o.require(worst <= 1e-6, "pendulum " + sci(worst));
        o.notes << " pendulum=" << sci(worst);
    }
}

void full_aa(Outcome& o) {
    for (const auto& name : {"oscillator", "t2xr", "t2xr2"}) {
        auto s = build_setup(load(name));
        FullAAReport r = verify_full_aa(*s, s->samples());
        o.require(r.pass && r.residual.value <= 1e-5, std::string(name) + " " + sci(r.residual.value));
    }
    auto s = build_setup(load("oscillator"));
    std::vector<VectorXd> pts(s->samples().begin(), s->samples().begin() + 4);
    ConvergenceReport c = full_aa_convergence(*s, pts, {0.1, 0.05, 0.025});
    o.require(!c.exact && c.orders.size() == 2, "convergence study degenerate");
    for (double ord : c.orders) {
        o.require(std::abs(ord - 2.0) <= 0.2, "order " + sci(ord));
        o.notes << " order=" << ord;
    }
}

void partial_aa(Outcome& o) {
    for (const auto& name : {"poisson_circle", "product"}) {
        Scenario sc = load(name);
        auto s = build_setup(sc);
        PartialAAReport r = verify_partial_aa(*s, s->samples());
        o.require(r.angle_defect.value <= 1e-5, std::string(name) + " defect " + sci(r.angle_defect.value));
        if (std::string(name) != "product") continue;
        const auto& disk = s->family().reference().disk;
        int iu = -1, iv = -1;
        for (std::size_t a = 0; a < s->leaf_disk().size(); ++a) {
            int coord = disk[static_cast<std::size_t>(s->leaf_disk()[a])];
            if (coord == sc.chart->index_of("u")) iu = static_cast<int>(a);
            if (coord == sc.chart->index_of("v")) iv = static_cast<int>(a);
        }
        o.require(iu >= 0 && iv >= 0, "u, v not tangent to the leaves");
        if (iu < 0 || iv < 0) continue;
        double worst = 0.0;
        for (const auto& f : r.f) worst = std::max(worst, std::abs(f(iu, iv) - 1.0));
        o.require(!r.f.empty() && worst <= 1e-6, "f_uv " + sci(worst));
        o.notes << " f_uv-1=" << sci(worst);
    }
}

Eigen::MatrixXi random_unimodular(std::mt19937_64& rng) {
    Eigen::MatrixXi u = Eigen::MatrixXi::Identity(2, 2);
    for (int k = 0; k < 6; ++k) {
        int i = static_cast<int>(rng() % 2);
        int c = static_cast<int>(rng() % 5) - 2;
        u.row(i) += c * u.row(1 - i);
    }
    if (rng() % 2) u.row(1) *= -1;
    return u;
}

void coaffine(Outcome& o) {
    std::mt19937_64 rng(20240917);
    for (const auto& name : {"t2xr", "t2xr2"}) {
        auto s = build_setup(load(name));
        double worst = 0.0;
        for (int k = 0; k < 5; ++k) {
            Eigen::MatrixXi u = random_unimodular(rng);
            worst = std::max(worst, coaffine_transition(*s, u, s->samples()).deviation);
        }
        o.require(worst <= 1e-7, std::string(name) + " deviation " + sci(worst));
    }
    auto s = build_setup(load("t2xr"));
    int rank = action_dependence_rank(*s);
    o.require(rank == 1, "dependence rank " + std::to_string(rank));
}

void calculus(Outcome& o) {
    using diracaa::VectorField;
    auto c = make_chart(Chart::euclidean({"x", "y", "z"}, {{-1, 1}, {-1, 1}, {-1, 1}}));
    auto pts = sample_chart(*c, 24, 11);
    std::mt19937_64 rng(7);
    auto span = [](const VectorXd& p) { return std::span<const double>(p.data(), static_cast<std::size_t>(p.size())); };
    double worst = 0.0;
    for (int t = 0; t < 4; ++t) {
        auto x = oracle::random_field(rng, c), y = oracle::random_field(rng, c), z = oracle::random_field(rng, c);
        VectorField jac = lie_bracket(x, lie_bracket(y, z)) + lie_bracket(y, lie_bracket(z, x)) + lie_bracket(z, lie_bracket(x, y));
        for (const auto& p : pts) worst = std::max(worst, jac.at(p).cwiseAbs().maxCoeff());
        for (int k = 0; k <= 2; ++k) {
            KForm a = oracle::random_form(rng, c, k);
            TensorField dd = TensorField::from(exterior_d(exterior_d(a)));
            for (const auto& p : pts) worst = std::max(worst, dd.values_at(span(p)).cwiseAbs().maxCoeff());
            if (k == 0) continue;
            TensorField cartan = TensorField::from(interior(x, exterior_d(a)) + exterior_d(interior(x, a)));
            TensorField lie = TensorField::from(lie_derivative(x, a));
            for (const auto& p : pts)
                worst = std::max(worst, (cartan.values_at(span(p)) - lie.values_at(span(p))).cwiseAbs().maxCoeff());
        }
    }
    o.require(worst <= 1e-9, "identities " + sci(worst));
    double schouten_err = 0.0;
    for (int t = 0; t < 3; ++t) {
        auto x = oracle::random_field(rng, c, 1);
        BivectorField pi(c);
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) pi.add(i, j, oracle::random_expression(rng, 3, 2));
        for (const auto& p : sample_chart(*c, 4, 5)) {
            VectorXd p2 = 0.5 * p;
            VectorXd flow = oracle::lie_by_flow(TensorField::from(pi), x, p2);
            VectorXd sym = TensorField::from(schouten(x, pi)).values_at(span(p2));
            schouten_err = std::max(schouten_err, (flow - sym).cwiseAbs().maxCoeff());
        }
    }
    o.require(schouten_err <= 1e-9, "Schouten vs flow " + sci(schouten_err));
    const Chart& ch = *c;
    int bad = 0;
    const auto& corpus = test_corpus::expressions();
    o.require(corpus.size() >= 50, "corpus too small");
    for (const auto& src : corpus) {
        Expression e = expr::parse(src, ch);
        if (!expr::parse(expr::render(e, ch), ch).same_as(e)) ++bad;
    }
    o.require(bad == 0, std::to_string(bad) + " round-trip failures");
    o.notes << " identities=" << sci(worst) << " schouten=" << sci(schouten_err) << " corpus=" << corpus.size();
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        std::function<void(Outcome&)> run;
        double budget;  // seconds, 0 for none
    };
    const std::vector<Criterion> criteria{
        {1, axiom_suite, 5.0},  {2, bicorank_map, 0.0}, {3, liouville, 10.0}, {4, preservation, 0.0},
        {5, isotropy, 0.0},     {6, actions, 20.0},     {7, full_aa, 0.0},    {8, partial_aa, 0.0},
        {9, coaffine, 0.0},     {10, calculus, 0.0},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto start = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.notes << " [exception: " << e.what() << "]";
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.budget > 0 && secs > c.budget) o.require(false, "runtime over " + sci(c.budget) + " s");
        if (!o.pass) ++failed;
        std::printf("criterion %d: %s (%.2f s)%s\n", c.id, o.pass ? "PASS" : "FAIL", secs, o.notes.str().c_str());
    }
    return failed == 0 ? 0 : 1;
}
