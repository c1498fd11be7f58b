#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/action.hpp"

namespace diracaa {

/// Malformed or inconsistent scenario file.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TorusSpec {
    Eigen::VectorXd seed;
    double t_max = 10.0;
    Hypothesis hypothesis = Hypothesis::ConstantIntersection;
    std::vector<int> disk;
    std::vector<Interval> disk_range;
    int levels = 3;
    int per_torus = 4;
    std::optional<Eigen::MatrixXd> expect_lattice;
};

struct AverageSpec {
    std::vector<Expression> functions;
    std::vector<KForm> one_forms;
    std::optional<int> grid;
};

struct ExpectedF {
    int i = 0, j = 0;  // chart coordinate indices
    double value = 0.0;
};

struct ActionsSpec {
    std::optional<KForm> mineur_alpha;
    std::vector<Expression> expect;  // A_k(y), up to the reference value
    bool full_aa = false;
    bool partial_aa = false;
    bool aa_order = false;
    std::vector<ExpectedF> expect_f;
    std::vector<Eigen::MatrixXi> coaffine;
    int coaffine_random = 0;
    std::optional<int> expect_dependence_rank;
};

struct Scenario {
    std::string name;
    std::filesystem::path path;
    std::string kind;  // presymplectic | poisson | dirac | canonical | induced
    ChartPtr chart;    // chart of the structure and the system
    DiracField dirac;
    std::optional<BiCorank> expect_bicorank;

    std::optional<IntegrableSystem> system;  // unbound
    std::vector<Expression> hamiltonians;
    std::optional<std::vector<Interval>> region;
    std::vector<std::pair<Expression, Interval>> region_filters;

    std::optional<TorusSpec> torus;
    std::optional<AverageSpec> average;
    std::optional<ActionsSpec> actions;

    std::map<std::string, double> tolerances;
    std::optional<std::filesystem::path> output_dir;

    /// Threshold for a named check after overrides.
    double tolerance(const std::string& check, double fallback) const;
};

/// Parses a scenario file (TOML, `format = 1`). Throws ScenarioError.
Scenario load_scenario(const std::filesystem::path& file);
Scenario parse_scenario(const std::string& text, const std::string& name = "scenario");

}  // namespace diracaa
