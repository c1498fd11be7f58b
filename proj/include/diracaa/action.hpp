#pragma once

#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/torus.hpp"

namespace diracaa {

/// Conditions under which actions are built: (i) span{X_i} cap (D cap TM) has
/// constant dimension, (ii) the characteristic foliation is regular.
enum class Hypothesis { ConstantIntersection, RegularFoliation };

const char* to_string(Hypothesis h);

struct HypothesisCheck {
    Hypothesis declared = Hypothesis::ConstantIntersection;
    bool intersection_constant = false;
    bool foliation_regular = false;
    int intersection_min = 0, intersection_max = 0;
    int leaf_dim_min = 0, leaf_dim_max = 0;
    /// The hypothesis used: the declared one if it holds, else the other.
    std::optional<Hypothesis> verified;
};

HypothesisCheck check_hypotheses(const IntegrableSystem& sys, const DiracField& d,
                                 const std::vector<Eigen::VectorXd>& points, Hypothesis declared);

/// Hamiltonian system, Dirac structure and torus family over a transversal disk.
class ActionSetup {
public:
    /// Throws std::invalid_argument if no Hamiltonians are bound and
    /// std::domain_error if neither hypothesis holds over the family samples.
    ActionSetup(IntegrableSystem sys, DiracField d, std::shared_ptr<const TorusFamily> family,
                Hypothesis declared = Hypothesis::ConstantIntersection, int levels = 3, int per_torus = 4);

    const IntegrableSystem& system() const { return sys_; }
    const DiracField& dirac() const { return d_; }
    const TorusFamily& family() const { return *family_; }
    const Flow& flow() const { return family_->flow(); }
    const HypothesisCheck& hypothesis() const { return hyp_; }
    int p() const { return sys_.p(); }

    /// Positions within the disk coordinates that are tangent to the leaves,
    /// and the remaining transverse ones.
    const std::vector<int>& leaf_disk() const { return leaf_disk_; }
    const std::vector<int>& transverse_disk() const { return transverse_disk_; }

    /// dH_i at y, one column per Hamiltonian.
    Eigen::MatrixXd dh(const Eigen::VectorXd& y) const;
    /// beta_k = sum_i L_ki dH_i at y for the lattice L of the torus through y,
    /// after the basis change `u` (row k of u L); one column per k.
    Eigen::MatrixXd beta(const Eigen::VectorXd& y, const Eigen::MatrixXd& u) const;
    Eigen::MatrixXd beta(const Eigen::VectorXd& y) const;
    /// Start of the leaf path for y: the disk point of y's torus with the
    /// leaf-tangent disk coordinates moved back to the reference.
    Eigen::VectorXd leaf_base(const Eigen::VectorXd& y) const;

    /// Torus points used for the checks: disk grid x Halton angles.
    const std::vector<Eigen::VectorXd>& samples() const { return samples_; }

private:
    IntegrableSystem sys_;
    DiracField d_;
    std::shared_ptr<const TorusFamily> family_;
    HypothesisCheck hyp_;
    std::vector<int> leaf_disk_, transverse_disk_;
    std::vector<Eigen::VectorXd> samples_;
    std::vector<expr::Program> grad_h_;  // p*n
};

struct PathActions {
    Eigen::VectorXd values;     // A_1..A_p
    Eigen::VectorXd alternate;  // same along the second path ordering
    double ordering_gap = 0.0;  // max |values - alternate|
    int panels = 0;             // Gauss-Legendre panels per segment at convergence
};

/// A(y) = integral of beta from leaf_base(y) to y: a straight disk segment to the
/// disk point followed by the joint flow to y. Throws std::domain_error if the leaf
/// does not meet the disk, std::runtime_error if the quadrature does not converge.
PathActions action_by_path_integral(const ActionSetup& s, const Eigen::VectorXd& y);
PathActions action_by_path_integral(const ActionSetup& s, const Eigen::VectorXd& y, const Eigen::MatrixXd& u);

struct BetaClosedness {
    PointResidual residual;  // max |d beta_k| on pairs of leaf directions
};

/// d beta_k restricted to the leaves, by central differences of beta.
BetaClosedness beta_closedness(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points);

struct MineurAction {
    double value = 0.0;
    double form_residual = 0.0;  // max |d alpha - omega_S| on the torus samples
};

/// Loop integral of alpha along the closed orbit of generator k through y.
/// Throws std::domain_error if d alpha differs from the leaf form by more than
/// 1e-8 on the torus or the orbit does not close.
MineurAction action_by_mineur(const ActionSetup& s, int k, const Eigen::VectorXd& y, const KForm& alpha);

struct IsotropyReport {
    PointResidual residual;  // max |omega_S(X_i, X_j)|
    bool isotropic = false;  // residual <= 1e-9 and every X_i tangent to the leaf
};

IsotropyReport verify_torus_isotropy(const IntegrableSystem& sys, const DiracField& d,
                                     const std::vector<Eigen::VectorXd>& points);
IsotropyReport verify_torus_isotropy(const ActionSetup& s);

struct DifferentialOptions {
    double h = 1e-4;
    bool richardson = true;
};

/// dA_i(v) and dtheta_i(v) for each column v of `dirs`; p x dirs.cols() each.
struct ActionAngleDifferentials {
    Eigen::MatrixXd da, dtheta;
};

ActionAngleDifferentials action_angle_differentials(const ActionSetup& s, const Eigen::VectorXd& y,
                                                    const Eigen::MatrixXd& dirs, DifferentialOptions o = {});

struct FullAAReport {
    PointResidual residual;  // max |omega_S(u,v) - sum (dtheta_i ^ dA_i)(u,v)|
    bool lagrangian = false;
    bool pass = false;  // lagrangian and residual <= 1e-5
};

FullAAReport verify_full_aa(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points,
                            DifferentialOptions o = {});

struct ConvergenceReport {
    std::vector<double> steps, residuals, orders;  // orders[i] between steps i and i+1
    bool exact = false;                             // every residual below 1e-12
};

/// Full action-angle residual with plain central differences at each step.
ConvergenceReport full_aa_convergence(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points,
                                      const std::vector<double>& steps);

struct PartialAAReport {
    PointResidual angle_defect;  // max |Delta(Z_k, v)| over leaf directions v
    int leaf_dim = 0;
    int kernel_dim = 0;
    /// f_ij at each disk grid point, over the leaf-tangent disk coordinates.
    std::vector<Eigen::VectorXd> disk_points;
    std::vector<Eigen::MatrixXd> f;
    bool pass = false;
};

/// Throws std::domain_error if the leaf or kernel rank changes over the samples.
PartialAAReport verify_partial_aa(const ActionSetup& s, const std::vector<Eigen::VectorXd>& points,
                                  DifferentialOptions o = {});

struct CoaffineReport {
    Eigen::MatrixXi u;
    Eigen::VectorXd offset;  // c in A' = U A + c
    double deviation = 0.0;  // max |A' - U A - c| over the points
};

/// Throws std::invalid_argument unless |det U| = 1.
CoaffineReport coaffine_transition(const ActionSetup& s, const Eigen::MatrixXi& u,
                                   const std::vector<Eigen::VectorXd>& points);

/// Rank of d(A_1..A_p)/d(disk coordinates) at the reference disk point.
int action_dependence_rank(const ActionSetup& s, double step = 1e-3, double rel_tol = 1e-7);

}  // namespace diracaa
