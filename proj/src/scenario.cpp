#include "diracaa/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace diracaa {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& msg) { throw ScenarioError(where + ": " + msg); }

void allow_keys(const toml::table& t, const std::string& where, std::initializer_list<std::string_view> keys) {
    for (const auto& [k, v] : t) {
        bool ok = false;
        for (auto a : keys) ok = ok || k.str() == a;
        if (!ok) fail(where, "unknown key '" + std::string(k.str()) + "'");
    }
}

const toml::table& table(const toml::node& n, const std::string& where) {
    if (const auto* t = n.as_table()) return *t;
    fail(where, "expected a table");
}

const toml::array& array(const toml::node& n, const std::string& where) {
    if (const auto* a = n.as_array()) return *a;
    fail(where, "expected an array");
}

std::string string(const toml::node& n, const std::string& where) {
    if (const auto* s = n.as_string()) return s->get();
    fail(where, "expected a string");
}

bool boolean(const toml::node& n, const std::string& where) {
    if (const auto* b = n.as_boolean()) return b->get();
    fail(where, "expected true or false");
}

long integer(const toml::node& n, const std::string& where) {
    if (const auto* i = n.as_integer()) return static_cast<long>(i->get());
    fail(where, "expected an integer");
}

/// Numbers may also be given as constant expressions such as "2*pi".
double number(const toml::node& n, const std::string& where) {
    if (const auto* i = n.as_integer()) return static_cast<double>(i->get());
    if (const auto* f = n.as_floating_point()) return f->get();
    if (const auto* s = n.as_string()) {
        static const Chart empty;
        try {
            Expression e = expr::parse(s->get(), empty);
            return expr::eval(e, {});
        } catch (const std::exception& ex) {
            fail(where, "'" + s->get() + "' is not a constant: " + ex.what());
        }
    }
    fail(where, "expected a number");
}

Expression expression(const toml::node& n, const Chart& chart, const std::string& where) {
    if (const auto* i = n.as_integer()) return Expression::integer(i->get());
    if (const auto* f = n.as_floating_point()) return Expression::real(f->get());
    std::string src = string(n, where);
    try {
        return expr::parse(src, chart);
    } catch (const expr::ParseError& e) {
        fail(where, "'" + src + "' at offset " + std::to_string(e.offset()) + ": " + e.what());
    }
}

std::vector<Expression> expressions(const toml::node& n, const Chart& chart, const std::string& where) {
    std::vector<Expression> out;
    const auto& a = array(n, where);
    for (std::size_t i = 0; i < a.size(); ++i)
        out.push_back(expression(*a.get(i), chart, where + "[" + std::to_string(i) + "]"));
    return out;
}

std::vector<double> numbers(const toml::node& n, const std::string& where) {
    std::vector<double> out;
    const auto& a = array(n, where);
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(number(*a.get(i), where + "[" + std::to_string(i) + "]"));
    return out;
}

Eigen::VectorXd vector(const toml::node& n, const std::string& where, int size) {
    std::vector<double> v = numbers(n, where);
    if (static_cast<int>(v.size()) != size) fail(where, "expected " + std::to_string(size) + " entries");
    return Eigen::Map<Eigen::VectorXd>(v.data(), size);
}

Interval interval(const toml::node& n, const std::string& where) {
    std::vector<double> v = numbers(n, where);
    if (v.size() != 2 || !(v[0] < v[1])) fail(where, "expected [lo, hi] with lo < hi");
    return {v[0], v[1]};
}

std::vector<Interval> intervals(const toml::node& n, const std::string& where, int size) {
    const auto& a = array(n, where);
    if (static_cast<int>(a.size()) != size) fail(where, "expected " + std::to_string(size) + " intervals");
    std::vector<Interval> out;
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(interval(*a.get(i), where + "[" + std::to_string(i) + "]"));
    return out;
}

Eigen::MatrixXd matrix(const toml::node& n, const std::string& where, int rows, int cols) {
    const auto& a = array(n, where);
    if (static_cast<int>(a.size()) != rows) fail(where, "expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) m.row(i) = vector(*a.get(static_cast<std::size_t>(i)), where, cols).transpose();
    return m;
}

int coordinate(const Chart& chart, const toml::node& n, const std::string& where) {
    std::string name = string(n, where);
    int i = chart.index_of(name);
    if (i < 0) fail(where, "unknown coordinate '" + name + "'");
    return i;
}

std::vector<int> coordinates(const Chart& chart, const toml::node& n, const std::string& where) {
    std::vector<int> out;
    const auto& a = array(n, where);
    for (std::size_t i = 0; i < a.size(); ++i) {
        int c = coordinate(chart, *a.get(i), where);
        for (int o : out)
            if (o == c) fail(where, "coordinate '" + chart.name(c) + "' listed twice");
        out.push_back(c);
    }
    return out;
}

ChartPtr parse_chart(const toml::table& t) {
    const std::string w = "[chart]";
    allow_keys(t, w, {"coords", "periodic", "box"});
    if (!t.contains("coords") || !t.contains("box")) fail(w, "coords and box are required");
    std::vector<std::string> names;
    const auto& c = array(*t.get("coords"), w + ".coords");
    for (std::size_t i = 0; i < c.size(); ++i) {
        std::string s = string(*c.get(i), w + ".coords");
        for (const auto& o : names)
            if (o == s) fail(w, "coordinate '" + s + "' listed twice");
        names.push_back(s);
    }
    if (names.empty()) fail(w, "no coordinates");
    const int n = static_cast<int>(names.size());
    std::vector<bool> periodic(names.size(), false);
    if (const auto* p = t.get("periodic")) {
        Chart probe = Chart::euclidean(names, std::vector<Interval>(names.size()));
        for (int i : coordinates(probe, *p, w + ".periodic")) periodic[static_cast<std::size_t>(i)] = true;
    }
    std::vector<Interval> box = intervals(*t.get("box"), w + ".box", n);
    for (int i = 0; i < n; ++i)
        if (periodic[static_cast<std::size_t>(i)]) box[static_cast<std::size_t>(i)] = {0.0, 1.0};
    try {
        return make_chart(Chart(names, periodic, box));
    } catch (const std::exception& e) {
        fail(w, e.what());
    }
}

/// [[i, j, coef], ...] with coordinate names.
std::vector<std::tuple<int, int, Expression>> pairs(const ChartPtr& chart, const toml::node& n, const std::string& where) {
    std::vector<std::tuple<int, int, Expression>> out;
    const auto& a = array(n, where);
    for (std::size_t k = 0; k < a.size(); ++k) {
        std::string w = where + "[" + std::to_string(k) + "]";
        const auto& e = array(*a.get(k), w);
        if (e.size() != 3) fail(w, "expected [coord, coord, coefficient]");
        int i = coordinate(*chart, *e.get(0), w), j = coordinate(*chart, *e.get(1), w);
        if (i == j) fail(w, "repeated coordinate");
        out.emplace_back(i, j, expression(*e.get(2), *chart, w));
    }
    return out;
}

DiracField parse_base_structure(const std::string& kind, const toml::table& t, const ChartPtr& chart,
                                const std::string& w) {
    if (kind == "presymplectic") {
        if (!t.contains("omega")) fail(w, "presymplectic structure needs omega");
        KForm omega(chart, 2);
        for (auto& [i, j, c] : pairs(chart, *t.get("omega"), w + ".omega")) omega.add({i, j}, c);
        // closedness is reported by check-dirac, not enforced here
        return graph_of_two_form(omega);
    }
    if (kind == "poisson") {
        if (!t.contains("pi")) fail(w, "poisson structure needs pi");
        BivectorField pi(chart);
        for (auto& [i, j, c] : pairs(chart, *t.get("pi"), w + ".pi")) pi.add(i, j, c);
        return from_poisson(pi);
    }
    if (kind == "dirac") {
        if (!t.contains("sections")) fail(w, "dirac structure needs sections");
        const auto& a = array(*t.get("sections"), w + ".sections");
        std::vector<Section> s;
        for (std::size_t k = 0; k < a.size(); ++k) {
            std::string ws = w + ".sections[" + std::to_string(k) + "]";
            const auto& st = table(*a.get(k), ws);
            allow_keys(st, ws, {"x", "a"});
            if (!st.contains("x") || !st.contains("a")) fail(ws, "x and a are required");
            auto x = expressions(*st.get("x"), *chart, ws + ".x");
            auto f = expressions(*st.get("a"), *chart, ws + ".a");
            if (static_cast<int>(x.size()) != chart->dim() || static_cast<int>(f.size()) != chart->dim())
                fail(ws, "x and a need one component per coordinate");
            s.push_back({VectorField(chart, x), KForm::one_form(chart, f)});
        }
        if (static_cast<int>(s.size()) != chart->dim())
            fail(w, "a Dirac frame needs " + std::to_string(chart->dim()) + " sections");
        return DiracField(chart, std::move(s));
    }
    fail(w, "unknown structure kind '" + kind + "'");
}

void parse_structure(Scenario& sc, const toml::table& root) {
    const std::string w = "[structure]";
    if (!root.contains("structure")) fail(w, "missing");
    const auto& t = table(*root.get("structure"), w);
    if (!t.contains("kind")) fail(w, "kind is required");
    sc.kind = string(*t.get("kind"), w + ".kind");
    if (const auto* e = t.get("expect_bicorank")) {
        std::vector<double> v = numbers(*e, w + ".expect_bicorank");
        if (v.size() != 2) fail(w, "expect_bicorank needs [r, s]");
        sc.expect_bicorank = BiCorank{static_cast<int>(v[0]), static_cast<int>(v[1]), 0};
    }
    if (sc.kind == "canonical") {
        allow_keys(t, w, {"kind", "dims", "half_width", "expect_bicorank"});
        if (root.contains("chart")) fail("[chart]", "the canonical structure builds its own chart");
        if (!t.contains("dims")) fail(w, "canonical structure needs dims = [base, cotangent, fiber, casimir]");
        std::vector<double> d = numbers(*t.get("dims"), w + ".dims");
        if (d.size() != 4) fail(w, "dims needs four entries");
        double hw = t.contains("half_width") ? number(*t.get("half_width"), w + ".half_width") : 1.0;
        try {
            sc.dirac = canonical_dirac(static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2]),
                                       static_cast<int>(d[3]), hw);
        } catch (const std::invalid_argument& e) {
            fail(w, e.what());
        }
        sc.chart = sc.dirac.chart();
        return;
    }
    if (!root.contains("chart")) fail("[chart]", "missing");
    ChartPtr chart = parse_chart(table(*root.get("chart"), "[chart]"));
    if (sc.kind == "induced") {
        allow_keys(t, w, {"kind", "from", "omega", "pi", "sections", "constraints", "samples", "expect_bicorank"});
        if (!t.contains("from") || !t.contains("constraints")) fail(w, "induced structure needs from and constraints");
        std::string from = string(*t.get("from"), w + ".from");
        DiracField parent = parse_base_structure(from, t, chart, w);
        std::vector<std::pair<Expression, double>> cons;
        const auto& a = array(*t.get("constraints"), w + ".constraints");
        for (std::size_t k = 0; k < a.size(); ++k) {
            std::string wc = w + ".constraints[" + std::to_string(k) + "]";
            const auto& e = array(*a.get(k), wc);
            if (e.size() != 2) fail(wc, "expected [coordinate, value]");
            cons.emplace_back(expr::parse(string(*e.get(0), wc), *chart), number(*e.get(1), wc));
        }
        int samples = t.contains("samples") ? static_cast<int>(integer(*t.get("samples"), w + ".samples")) : 128;
        try {
            sc.dirac = induced_dirac_on_level(parent, cons, samples);
        } catch (const std::invalid_argument& e) {
            fail(w, e.what());
        }
        sc.chart = sc.dirac.chart();
        return;
    }
    allow_keys(t, w, {"kind", "omega", "pi", "sections", "expect_bicorank"});
    sc.dirac = parse_base_structure(sc.kind, t, chart, w);
    sc.chart = chart;
}

void parse_system(Scenario& sc, const toml::table& t) {
    const std::string w = "[system]";
    allow_keys(t, w, {"fields", "integrals", "hamiltonians", "region", "filters"});
    if (!t.contains("fields")) fail(w, "fields is required");
    const Chart& c = *sc.chart;
    std::vector<VectorField> x;
    const auto& fa = array(*t.get("fields"), w + ".fields");
    for (std::size_t k = 0; k < fa.size(); ++k) {
        auto comps = expressions(*fa.get(k), c, w + ".fields[" + std::to_string(k) + "]");
        if (static_cast<int>(comps.size()) != c.dim()) fail(w, "field " + std::to_string(k + 1) + " has the wrong size");
        x.emplace_back(sc.chart, comps);
    }
    std::vector<Expression> f;
    if (const auto* n = t.get("integrals")) f = expressions(*n, c, w + ".integrals");
    try {
        sc.system = IntegrableSystem(sc.chart, x, f);
    } catch (const std::invalid_argument& e) {
        fail(w, e.what());
    }
    if (const auto* n = t.get("hamiltonians")) {
        sc.hamiltonians = expressions(*n, c, w + ".hamiltonians");
        if (sc.hamiltonians.size() != x.size()) fail(w, "one Hamiltonian per field is required");
    }
    if (const auto* n = t.get("region")) sc.region = intervals(*n, w + ".region", c.dim());
    if (const auto* n = t.get("filters")) {
        const auto& a = array(*n, w + ".filters");
        for (std::size_t k = 0; k < a.size(); ++k) {
            std::string wf = w + ".filters[" + std::to_string(k) + "]";
            const auto& e = array(*a.get(k), wf);
            if (e.size() != 3) fail(wf, "expected [expression, lo, hi]");
            double lo = number(*e.get(1), wf), hi = number(*e.get(2), wf);
            if (!(lo < hi)) fail(wf, "lo must be below hi");
            sc.region_filters.emplace_back(expression(*e.get(0), c, wf), Interval{lo, hi});
        }
    }
}

void parse_torus(Scenario& sc, const toml::table& t) {
    const std::string w = "[torus]";
    allow_keys(t, w, {"seed", "t_max", "hypothesis", "disk", "disk_range", "levels", "per_torus", "expect_lattice"});
    if (!sc.system) fail(w, "needs a [system] block");
    if (!t.contains("seed") || !t.contains("disk") || !t.contains("disk_range"))
        fail(w, "seed, disk and disk_range are required");
    const Chart& c = *sc.chart;
    TorusSpec s;
    s.seed = vector(*t.get("seed"), w + ".seed", c.dim());
    if (const auto* n = t.get("t_max")) s.t_max = number(*n, w + ".t_max");
    if (!(s.t_max > 0)) fail(w, "t_max must be positive");
    if (const auto* n = t.get("hypothesis")) {
        std::string h = string(*n, w + ".hypothesis");
        if (h == "i" || h == "constant-intersection") s.hypothesis = Hypothesis::ConstantIntersection;
        else if (h == "ii" || h == "regular-foliation") s.hypothesis = Hypothesis::RegularFoliation;
        else fail(w, "hypothesis must be \"i\" or \"ii\"");
    }
    s.disk = coordinates(c, *t.get("disk"), w + ".disk");
    if (static_cast<int>(s.disk.size()) != sc.system->q())
        fail(w, "the disk needs one coordinate per first integral (" + std::to_string(sc.system->q()) + ")");
    s.disk_range = intervals(*t.get("disk_range"), w + ".disk_range", static_cast<int>(s.disk.size()));
    if (const auto* n = t.get("levels")) s.levels = static_cast<int>(integer(*n, w + ".levels"));
    if (const auto* n = t.get("per_torus")) s.per_torus = static_cast<int>(integer(*n, w + ".per_torus"));
    if (s.levels < 2) fail(w, "levels must be at least 2");
    if (s.per_torus < 1) fail(w, "per_torus must be positive");
    if (const auto* n = t.get("expect_lattice")) {
        const int p = sc.system->p();
        s.expect_lattice = matrix(*n, w + ".expect_lattice", p, p);
    }
    sc.torus = s;
}

void parse_average(Scenario& sc, const toml::table& t) {
    const std::string w = "[average]";
    allow_keys(t, w, {"functions", "one_forms", "grid"});
    if (!sc.torus) fail(w, "needs a [torus] block");
    AverageSpec a;
    if (const auto* n = t.get("functions")) a.functions = expressions(*n, *sc.chart, w + ".functions");
    if (const auto* n = t.get("one_forms")) {
        const auto& arr = array(*n, w + ".one_forms");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            auto comps = expressions(*arr.get(k), *sc.chart, w + ".one_forms[" + std::to_string(k) + "]");
            if (static_cast<int>(comps.size()) != sc.chart->dim()) fail(w, "one-form with the wrong size");
            a.one_forms.push_back(KForm::one_form(sc.chart, comps));
        }
    }
    if (const auto* n = t.get("grid")) {
        a.grid = static_cast<int>(integer(*n, w + ".grid"));
        if (*a.grid < 2) fail(w, "grid must be at least 2");
    }
    sc.average = a;
}

void parse_actions(Scenario& sc, const toml::table& t) {
    const std::string w = "[actions]";
    allow_keys(t, w, {"mineur_alpha", "expect", "full_aa", "partial_aa", "aa_order", "expect_f", "coaffine",
                      "coaffine_random", "expect_dependence_rank"});
    if (!sc.torus) fail(w, "needs a [torus] block");
    if (sc.hamiltonians.empty()) fail(w, "needs hamiltonians in [system]");
    const Chart& c = *sc.chart;
    const int p = sc.system->p();
    ActionsSpec a;
    if (const auto* n = t.get("mineur_alpha")) {
        auto comps = expressions(*n, c, w + ".mineur_alpha");
        if (static_cast<int>(comps.size()) != c.dim()) fail(w, "mineur_alpha needs one component per coordinate");
        a.mineur_alpha = KForm::one_form(sc.chart, comps);
    }
    if (const auto* n = t.get("expect")) {
        a.expect = expressions(*n, c, w + ".expect");
        if (static_cast<int>(a.expect.size()) != p) fail(w, "expect needs one expression per action");
    }
    if (const auto* n = t.get("full_aa")) a.full_aa = boolean(*n, w + ".full_aa");
    if (const auto* n = t.get("partial_aa")) a.partial_aa = boolean(*n, w + ".partial_aa");
    if (const auto* n = t.get("aa_order")) a.aa_order = boolean(*n, w + ".aa_order");
    if (const auto* n = t.get("expect_f")) {
        const auto& arr = array(*n, w + ".expect_f");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            std::string wf = w + ".expect_f[" + std::to_string(k) + "]";
            const auto& e = array(*arr.get(k), wf);
            if (e.size() != 3) fail(wf, "expected [coord, coord, value]");
            ExpectedF f{coordinate(c, *e.get(0), wf), coordinate(c, *e.get(1), wf), number(*e.get(2), wf)};
            bool ok_i = false, ok_j = false;
            for (int d : sc.torus->disk) {
                ok_i = ok_i || d == f.i;
                ok_j = ok_j || d == f.j;
            }
            if (!ok_i || !ok_j || f.i == f.j) fail(wf, "expect_f must name two distinct disk coordinates");
            a.expect_f.push_back(f);
        }
    }
    if (const auto* n = t.get("coaffine")) {
        const auto& arr = array(*n, w + ".coaffine");
        for (std::size_t k = 0; k < arr.size(); ++k) {
            std::string wu = w + ".coaffine[" + std::to_string(k) + "]";
            Eigen::MatrixXd m = matrix(*arr.get(k), wu, p, p);
            if ((m.array() != m.array().round()).any()) fail(wu, "entries must be integers");
            Eigen::MatrixXi u = m.cast<int>();
            if (std::abs(std::abs(m.determinant()) - 1.0) > 1e-9) fail(wu, "not unimodular");
            a.coaffine.push_back(u);
        }
    }
    if (const auto* n = t.get("coaffine_random")) {
        a.coaffine_random = static_cast<int>(integer(*n, w + ".coaffine_random"));
        if (a.coaffine_random < 0) fail(w, "coaffine_random must be non-negative");
    }
    if (const auto* n = t.get("expect_dependence_rank"))
        a.expect_dependence_rank = static_cast<int>(integer(*n, w + ".expect_dependence_rank"));
    sc.actions = a;
}

}  // namespace

double Scenario::tolerance(const std::string& check, double fallback) const {
    auto it = tolerances.find(check);
    return it == tolerances.end() ? fallback : it->second;
}

Scenario parse_scenario(const std::string& text, const std::string& name) {
    toml::table root;
    try {
        root = toml::parse(text, name);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << e.description() << " (line " << e.source().begin.line << ", column " << e.source().begin.column << ")";
        fail(name, os.str());
    }
    allow_keys(root, name, {"format", "name", "description", "chart", "structure", "system", "torus", "average",
                            "actions", "tolerances", "output"});
    if (!root.contains("format")) fail(name, "missing format = 1");
    if (integer(*root.get("format"), "format") != 1) fail(name, "unsupported format version");
    Scenario sc;
    sc.name = root.contains("name") ? string(*root.get("name"), "name") : name;
    try {
        parse_structure(sc, root);
        if (const auto* n = root.get("system")) parse_system(sc, table(*n, "[system]"));
        if (const auto* n = root.get("torus")) parse_torus(sc, table(*n, "[torus]"));
        if (const auto* n = root.get("average")) parse_average(sc, table(*n, "[average]"));
        if (const auto* n = root.get("actions")) parse_actions(sc, table(*n, "[actions]"));
    } catch (const expr::ParseError& e) {
        fail(name, std::string("expression error: ") + e.what());
    }
    if (const auto* n = root.get("tolerances")) {
        for (const auto& [k, v] : table(*n, "[tolerances]")) {
            double x = number(v, "[tolerances]." + std::string(k.str()));
            if (!(x > 0)) fail("[tolerances]", "thresholds must be positive");
            sc.tolerances[std::string(k.str())] = x;
        }
    }
    if (const auto* n = root.get("output")) {
        const auto& t = table(*n, "[output]");
        allow_keys(t, "[output]", {"dir"});
        if (const auto* d = t.get("dir")) sc.output_dir = string(*d, "[output].dir");
    }
    return sc;
}

Scenario load_scenario(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ScenarioError(file.string() + ": cannot open");
    std::ostringstream os;
    os << in.rdbuf();
    Scenario sc = parse_scenario(os.str(), file.stem().string());
    sc.path = file;
    return sc;
}

}  // namespace diracaa
