#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/dirac.hpp"
#include "diracaa/system.hpp"

namespace diracaa {

struct FlowOptions {
    double rel_tol = 1e-11;
    double abs_tol = 1e-12;
    long max_steps = 1'000'000;
};

/// Dormand-Prince 5(4) with FSAL and standard step control.
class FlowEngine {
public:
    using Rhs = std::function<void(const Eigen::VectorXd& y, Eigen::VectorXd& dy)>;

    explicit FlowEngine(FlowOptions o = {});
    const FlowOptions& options() const { return opt_; }

    /// Integrates the autonomous system for time t (t may be negative).
    /// Throws std::runtime_error on step underflow or a non-finite state.
    Eigen::VectorXd integrate(const Rhs& f, Eigen::VectorXd y, double t) const;

private:
    FlowOptions opt_;
};

struct FlowResult {
    Eigen::VectorXd x;
    Eigen::MatrixXd jacobian;  // D Phi
};

/// Joint flow of the commuting fields of a system, compiled once.
class Flow {
public:
    explicit Flow(IntegrableSystem sys, FlowOptions o = {});

    const IntegrableSystem& system() const { return sys_; }
    const Chart& chart() const { return *sys_.chart(); }
    int n() const { return sys_.n(); }
    int p() const { return sys_.p(); }
    const FlowEngine& engine() const { return engine_; }

    Eigen::VectorXd field(int i, const Eigen::VectorXd& y) const;
    /// n x p, column i = X_i(y)
    Eigen::MatrixXd fields_at(const Eigen::VectorXd& y) const;
    Eigen::MatrixXd field_jacobian(int i, const Eigen::VectorXd& y) const;
    Eigen::VectorXd integrals_at(const Eigen::VectorXd& y) const;

    /// Phi_t(x0): the flow of sum t_i X_i for unit time, periodic coordinates reduced mod 1.
    Eigen::VectorXd operator()(const Eigen::VectorXd& t, const Eigen::VectorXd& x0) const;
    /// Same without the reduction.
    Eigen::VectorXd raw(const Eigen::VectorXd& t, const Eigen::VectorXd& x0) const;
    /// Flow of a single field for time s.
    Eigen::VectorXd along(int i, double s, const Eigen::VectorXd& x0) const;
    FlowResult with_jacobian(const Eigen::VectorXd& t, const Eigen::VectorXd& x0) const;

    /// a - b with periodic components wrapped.
    Eigen::VectorXd difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

private:
    IntegrableSystem sys_;
    FlowEngine engine_;
    std::vector<expr::Program> x_;    // p*n components
    std::vector<expr::Program> jac_;  // p*n*n, entry (i, k, m) = d_m X_i^k
    std::vector<expr::Program> f_;
};

Eigen::VectorXd joint_flow(const IntegrableSystem& sys, const Eigen::VectorXd& t, const Eigen::VectorXd& x0,
                           FlowOptions o = {});

struct TorusChart {
    Eigen::VectorXd base_point;
    Eigen::MatrixXd lattice;    // p x p, row i = time vector with Phi_{row}(base) = base
    Eigen::MatrixXd frequency;  // lattice^{-1}: X_i = sum_j a_ij d/dtheta_j
    std::vector<int> disk;      // coordinates varied across the torus family
    std::vector<Interval> disk_range;
    double return_residual = 0.0;
};

struct LatticeOptions {
    double t_max = 50.0;
    double near = 0.1;       // recurrence threshold for the coarse scan
    double tol = 1e-8;       // required return accuracy
    long max_grid = 4'000'000;
};

/// Coarse recurrence scan of [0,T] x [-T,T]^{p-1} followed by Gauss-Newton on
/// t -> Phi_t(x0) - x0 and lattice reduction. Rows are ordered and signed
/// towards a positive diagonal, then oriented so det > 0.
TorusChart find_period_lattice(const Flow& flow, const Eigen::VectorXd& x0, const LatticeOptions& o = {});

/// Newton refinement of each row of `guess` at x0; row order and signs are kept.
TorusChart refine_lattice(const Flow& flow, const Eigen::VectorXd& x0, const Eigen::MatrixXd& guess, double tol = 1e-8);

/// Lagrange-Gauss reduction for two rows, LLL (delta = 3/4) otherwise.
Eigen::MatrixXd reduce_lattice(Eigen::MatrixXd rows);

struct UnimodularCheck {
    bool equivalent = false;
    Eigen::MatrixXi u;       // b = u * a
    double residual = 0.0;   // max |b - u a|
};

UnimodularCheck unimodular_equivalence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol = 1e-8);

/// theta in [0,1)^p with Phi_{L^T theta}(base) = y.
Eigen::VectorXd angle_coordinates(const Flow& flow, const TorusChart& tc, const Eigen::VectorXd& y,
                                  double level_tol = 1e-8);

struct TorusQuadrature {
    int grid = 32;  // points per angle
};

struct AveragedTensor {
    Eigen::VectorXd values;     // averaged components at the point
    Eigen::VectorXd pointwise;  // components of the input at the point
    double deviation = 0.0;     // max |values - pointwise|
    double subgrid_change = 0.0;
    bool converged = false;     // subgrid change <= 1e-8
};

/// Components of a (k, h) tensor at a point, flat layout as in TensorField.
using TensorSampler = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

AveragedTensor torus_average(const Flow& flow, const TorusChart& tc, int upper, int lower, const TensorSampler& t,
                             const Eigen::VectorXd& x, TorusQuadrature q = {});
AveragedTensor torus_average(const Flow& flow, const TorusChart& tc, const TensorField& t, const Eigen::VectorXd& x,
                             TorusQuadrature q = {});

/// Tori through the points of a transversal disk. The disk is the reference
/// base point with the `disk` coordinates varied.
class TorusFamily {
public:
    TorusFamily(std::shared_ptr<const Flow> flow, TorusChart reference);

    const Flow& flow() const { return *flow_; }
    const TorusChart& reference() const { return ref_; }
    int disk_dim() const { return static_cast<int>(ref_.disk.size()); }

    Eigen::VectorXd disk_coordinates(const Eigen::VectorXd& disk_point) const;
    Eigen::VectorXd disk_point_at(const Eigen::VectorXd& coords) const;
    /// The disk point on the torus through y (matching first integrals).
    Eigen::VectorXd disk_point(const Eigen::VectorXd& y) const;
    /// Chart of the torus through y based at its disk point.
    TorusChart chart_through(const Eigen::VectorXd& y) const;
    TorusChart chart_through(const Eigen::VectorXd& y, const Eigen::MatrixXd& guess) const;
    /// n x p, column k = generator Z_k = sum_i L_ki X_i of the torus through y.
    Eigen::MatrixXd generators(const Eigen::VectorXd& y) const;
    /// D Z_k at y; transverse variation of the lattice by central differences.
    Eigen::MatrixXd generator_jacobian(int k, const Eigen::VectorXd& y, double h = 5e-3) const;
    Eigen::VectorXd angles(const Eigen::VectorXd& y) const;

    /// Points on tori of the family: every disk grid node with `per_torus`
    /// Halton angles.
    std::vector<Eigen::VectorXd> samples(int levels, int per_torus, std::uint64_t seed = 0) const;

private:
    bool solve_disk(const Eigen::VectorXd& target, Eigen::VectorXd& coords) const;

    std::shared_ptr<const Flow> flow_;
    TorusChart ref_;
    std::vector<expr::Program> grad_;  // q*n
};

struct PreservationReport {
    PointResidual prerequisite;  // [(X_i, 0), e] against the frame
    PointResidual generators;    // [(Z_k, 0), e] against the frame
    PointResidual tensor;        // L_Z of the source 2-form or bivector, if any
    bool has_tensor = false;
};

PreservationReport verify_structure_preservation(const TorusFamily& family, const DiracField& d,
                                                 const std::vector<Eigen::VectorXd>& points);

/// Max over points of |L_{Z_k} T| for a user tensor (e.g. the averaged Pi of a Poisson scenario).
PointResidual tensor_preservation(const TorusFamily& family, const TensorField& t,
                                  const std::vector<Eigen::VectorXd>& points);

}  // namespace diracaa
