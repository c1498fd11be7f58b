#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "doctest.h"
#include "diracaa/pipeline.hpp"

using namespace diracaa;

namespace {

const char* kOscillator = R"toml(
format = 1
name = "osc"

[chart]
coords = ["x", "y"]
box = [[-2, 2], [-2, 2]]

[structure]
kind = "presymplectic"
omega = [["x", "y", 1]]

[system]
fields = [["y", "-x"]]
integrals = ["(x^2 + y^2)/2"]
hamiltonians = ["(x^2 + y^2)/2"]
filters = [["x^2 + y^2", 0.25, 4]]

[torus]
seed = [1, 0]
t_max = 10
disk = ["x"]
disk_range = [[0.5, 1.5]]

[actions]
expect = ["pi*(x^2 + y^2)"]
)toml";

std::string with(const std::string& base, const std::string& from, const std::string& to) {
    std::string s = base;
    auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    s.replace(at, from.size(), to);
    return s;
}

}  // namespace

TEST_CASE("scenario blocks are parsed") {
    Scenario sc = parse_scenario(kOscillator);
    CHECK(sc.name == "osc");
    CHECK(sc.kind == "presymplectic");
    CHECK(sc.chart->dim() == 2);
    REQUIRE(sc.system);
    CHECK(sc.system->p() == 1);
    CHECK(sc.hamiltonians.size() == 1);
    CHECK(sc.region_filters.size() == 1);
    REQUIRE(sc.torus);
    CHECK(sc.torus->disk == std::vector<int>{0});
    CHECK(sc.torus->levels == 3);
    REQUIRE(sc.actions);
    CHECK(sc.actions->expect.size() == 1);
    CHECK(sc.tolerance("isotropy", 1e-10) == 1e-10);
}

TEST_CASE("constant expressions are accepted as numbers") {
    Scenario sc = parse_scenario(with(kOscillator, "t_max = 10", "t_max = \"3*pi\""));
    CHECK(std::abs(sc.torus->t_max - 3 * std::numbers::pi) <= 1e-15);
}

TEST_CASE("malformed scenarios raise ScenarioError") {
    CHECK_THROWS_AS(parse_scenario("format = 1\n[chart\n"), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "format = 1", "format = 2")), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "name = \"osc\"", "nmae = \"osc\"")), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "\"y\", \"-x\"", "\"y\", \"-x +\"")), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "disk = [\"x\"]", "disk = [\"w\"]")), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "kind = \"presymplectic\"", "kind = \"contact\"")), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "[[0.5, 1.5]]", "[[1.5, 0.5]]")), ScenarioError);
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "disk_range = [[0.5, 1.5]]", "disk_range = [[0.5, 1.5]]\nlevels = 1")),
                    ScenarioError);
    // actions need Hamiltonians
    CHECK_THROWS_AS(parse_scenario(with(kOscillator, "hamiltonians = [\"(x^2 + y^2)/2\"]", "")), ScenarioError);
    try {
        parse_scenario(with(kOscillator, "\"y\", \"-x\"", "\"y\", \"-x +\""));
    } catch (const ScenarioError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("canonical and induced structures") {
    Scenario c = parse_scenario("format = 1\n[structure]\nkind = \"canonical\"\ndims = [1, 1, 0, 1]\n");
    CHECK(c.chart->dim() == 3);
    CHECK(c.chart->name(2) == "c1");
    CHECK_THROWS_AS(parse_scenario("format = 1\n[structure]\nkind = \"canonical\"\ndims = [1, 2, 0, 1]\n"), ScenarioError);

    Scenario ind = parse_scenario(R"toml(
format = 1
[chart]
coords = ["x", "y", "z"]
box = [[-1, 1], [-1, 1], [-1, 1]]
[structure]
kind = "induced"
from = "poisson"
pi = [["x", "y", 1]]
constraints = [["z", 0.5]]
)toml");
    CHECK(ind.chart->dim() == 2);
    Report r = run_scenario(ind, Command::CheckDirac);
    CHECK(r.exit_code() == 0);
}

TEST_CASE("pipeline runs and reports deterministically") {
    Scenario sc = parse_scenario(kOscillator);
    Report a = run_scenario(sc, Command::Actions);
    CHECK(a.exit_code() == 0);
    REQUIRE(a.actions.size() == 3);
    for (const auto& row : a.actions) {
        const double r = row.level[0];
        CHECK(std::abs(row.actions[0] - std::numbers::pi * (r * r - 1.0)) <= 1e-7);
        CHECK(std::abs(row.frequency(0, 0) - 1.0 / (2 * std::numbers::pi)) <= 1e-9);
    }
    Report b = run_scenario(sc, Command::Actions);
    CHECK(format_text(a) == format_text(b));
    CHECK(format_actions_csv(a) == format_actions_csv(b));

    std::string text = format_text(a);
    CHECK(text.rfind("format = 1\n", 0) == 0);
    CHECK(text.find("check expected-actions pass") != std::string::npos);
    CHECK(text.find("exit = 0\n") != std::string::npos);

    std::istringstream csv(format_actions_csv(a));
    std::string header;
    std::getline(csv, header);
    CHECK(header == "x,A1,freq11");

    auto j = nlohmann::json::parse(format_json(a));
    CHECK(j["format"] == 1);
    CHECK(j["exit"] == 0);
    CHECK(j["actions"].size() == 3);
    CHECK(j["checks"].size() == a.checks.size());
}

TEST_CASE("exit codes follow the check statuses") {
    Scenario bad = parse_scenario(R"toml(
format = 1
[chart]
coords = ["x", "y", "z"]
box = [[-1, 1], [-1, 1], [-1, 1]]
[structure]
kind = "presymplectic"
omega = [["x", "y", 1], ["y", "z", "x"]]
)toml");
    Report r = run_scenario(bad, Command::CheckDirac);
    CHECK(r.exit_code() == 1);
    REQUIRE(r.find("courant-closedness"));
    CHECK(r.find("courant-closedness")->status == CheckStatus::Fail);
    CHECK(r.find("omega-closed")->status == CheckStatus::Fail);

    // a loose threshold turns the failure into a pass
    RunOptions loose;
    loose.tol_scale = 1e10;
    CHECK(run_scenario(bad, Command::CheckDirac, loose).find("courant-closedness")->status == CheckStatus::Pass);

    // a non-compact orbit is a numeric failure
    Scenario open = parse_scenario(R"toml(
format = 1
[chart]
coords = ["x", "y"]
box = [[-1, 1], [-1, 1]]
[structure]
kind = "presymplectic"
omega = [["x", "y", 1]]
[system]
fields = [["1", "0"]]
integrals = ["y"]
hamiltonians = ["y"]
[torus]
seed = [0, 0]
t_max = 2
disk = ["y"]
disk_range = [[-0.5, 0.5]]
)toml");
    Report f = run_scenario(open, Command::FindTorus);
    CHECK(f.exit_code() == 3);
    CHECK(f.find("period-lattice")->status == CheckStatus::Error);
}

TEST_CASE("singular case refuses actions") {
    // x dth ^ dx next to the Poisson plane u d/du ^ d/dv: along x = 0 the orbit
    // enters the kernel and along u = 0 the leaves drop dimension
    Scenario sc = parse_scenario(R"toml(
format = 1
[chart]
coords = ["th", "x", "u", "v"]
periodic = ["th"]
box = [[0, 1], [-1, 1], [-1, 1], [-1, 1]]
[structure]
kind = "dirac"
[[structure.sections]]
x = ["1", "0", "0", "0"]
a = ["0", "x", "0", "0"]
[[structure.sections]]
x = ["0", "1", "0", "0"]
a = ["-x", "0", "0", "0"]
[[structure.sections]]
x = ["0", "0", "0", "u"]
a = ["0", "0", "1", "0"]
[[structure.sections]]
x = ["0", "0", "-u", "0"]
a = ["0", "0", "0", "1"]
[system]
fields = [["1", "0", "0", "0"]]
integrals = ["x", "u", "v"]
hamiltonians = ["x^2/2"]
[torus]
seed = [0, 0.5, 0.5, 0]
t_max = 2
disk = ["x", "u", "v"]
disk_range = [[-0.5, 0.5], [-0.5, 0.5], [-0.5, 0.5]]
[actions]
full_aa = true
)toml");
    CHECK(run_scenario(sc, Command::CheckDirac).exit_code() == 0);
    Report r = run_scenario(sc, Command::Actions);
    const CheckRecord* h = r.find("hypothesis");
    REQUIRE(h);
    CHECK(h->status == CheckStatus::Fail);
    CHECK(r.actions.empty());
    CHECK(r.exit_code() == 1);
}
