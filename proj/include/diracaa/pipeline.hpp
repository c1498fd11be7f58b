#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/scenario.hpp"

namespace diracaa {

enum class Command { CheckDirac, CheckSystem, FindTorus, Average, Actions, VerifyAA, All };

const char* to_string(Command c);
std::optional<Command> parse_command(const std::string& s);

enum class CheckStatus { Pass, Fail, Warn, Error };

const char* to_string(CheckStatus s);

struct CheckRecord {
    std::string name;
    CheckStatus status = CheckStatus::Pass;
    double residual = 0.0;
    double threshold = 0.0;
    Eigen::VectorXd point;  // worst sample, may be empty
    std::string detail;
};

struct ActionRow {
    Eigen::VectorXd level;      // disk coordinates
    Eigen::VectorXd actions;    // A_1..A_p
    Eigen::VectorXd mineur;     // loop integrals of alpha, empty without one
    Eigen::MatrixXd frequency;  // L^{-1}
};

struct Report {
    std::string scenario;
    std::string command;
    std::vector<std::string> level_names;
    std::vector<CheckRecord> checks;
    std::vector<ActionRow> actions;

    /// 0 all checks pass or warn, 1 some check failed, 3 a numeric error occurred.
    int exit_code() const;
    const CheckRecord* find(const std::string& name) const;
};

struct RunOptions {
    double tol_scale = 1.0;  // multiplies every threshold
    int samples = 128;
    std::optional<int> grid;  // torus quadrature points per angle
    std::uint64_t seed = 0;   // Halton rotation and random unimodular matrices
};

Report run_scenario(const Scenario& sc, Command cmd, const RunOptions& opt = {});

/// Line-oriented report, `format = 1`.
std::string format_text(const Report& r);
std::string format_json(const Report& r);
/// Rows of the action table; empty if there are none.
std::string format_actions_csv(const Report& r);

/// Writes report.txt (or report.json), actions.csv and plotdata/actions.dat.
void write_outputs(const Report& r, const std::filesystem::path& dir, bool json);

}  // namespace diracaa
