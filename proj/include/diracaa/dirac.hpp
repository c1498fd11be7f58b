#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/fields.hpp"
#include "diracaa/pointwise.hpp"

namespace diracaa {

/// Membership threshold for (X, a) in D, relative to |(X, a)|.
inline constexpr double kMembershipTol = 1e-9;

using SampleSet = std::vector<Eigen::VectorXd>;

/// Default sample set: 128 Halton points in the chart box.
SampleSet default_samples(const Chart& chart, int count = 128, std::uint64_t seed = 0);

struct Section {
    VectorField x;
    KForm a;  // degree 1
};

enum class DiracKind { Dirac, PresymplecticGraph, PoissonGraph };

const char* to_string(DiracKind k);

/// A global frame of n smooth sections of TM (+) T*M over a chart.
class DiracField {
public:
    DiracField() = default;
    DiracField(ChartPtr chart, std::vector<Section> sections, DiracKind kind = DiracKind::Dirac);

    const ChartPtr& chart() const { return chart_; }
    int n() const { return chart_->dim(); }
    const std::vector<Section>& sections() const { return sections_; }
    DiracKind kind() const { return kind_; }

    /// The 2-form or bivector the field was built from, if any.
    const std::optional<KForm>& omega() const { return omega_; }
    const std::optional<BivectorField>& pi() const { return pi_; }

    DiracPointFrame frame_at(const Eigen::VectorXd& point) const;
    DoubleVector section_at(int i, const Eigen::VectorXd& point) const;

    void attach_source(KForm omega) { omega_ = std::move(omega); }
    void attach_source(BivectorField pi) { pi_ = std::move(pi); }

private:
    ChartPtr chart_;
    std::vector<Section> sections_;
    DiracKind kind_ = DiracKind::Dirac;
    std::optional<KForm> omega_;
    std::optional<BivectorField> pi_;
    std::vector<expr::Program> prog_;  // 2n programs per section: X then a
};

/// Graph {(X, i_X omega)}. Throws std::domain_error when d omega does not vanish;
/// the message carries the residual and the worst sample point.
DiracField from_presymplectic(const KForm& omega, const SampleSet* samples = nullptr);

/// The same graph without the closedness check (for reporting on non-closed forms).
DiracField graph_of_two_form(const KForm& omega);

/// Graph {(Pi(., a), a)} over a = dx_1..dx_n.
DiracField from_poisson(const BivectorField& pi);

/// Canonical structure on T*F (+) V: chart (q_1..q_p, p_1..p_p, v_1..v_r, c_1..c_s),
/// leaves {c = const}, leaf form sum dq_i ^ dp_i.
DiracField canonical_dirac(int base, int cotangent, int fiber, int casimir, double half_width = 1.0);

Section courant_bracket(const Section& s1, const Section& s2);

struct PointResidual {
    double value = 0.0;
    Eigen::VectorXd point;
    std::string where;  // free-form locator such as a section pair
};

struct FrameReport {
    double isotropy = 0.0;  // max |Gram entry|
    int min_rank = 0;
    Eigen::VectorXd worst_point;
    std::vector<BiCorank> coranks;  // distinct values seen, in first-seen order
    bool pass() const { return isotropy <= kIsotropyTol; }
};

/// Isotropy, rank and bi-corank of the frame over the samples.
FrameReport frame_report(const DiracField& d, const SampleSet& samples);

/// Max over section pairs and samples of the distance of [s_i, s_j] from the
/// frame span, normalized by |s_i| |s_j|. Throws on a rank-deficient frame.
PointResidual courant_closedness(const DiracField& d, const SampleSet& samples);

struct MembershipVerdict {
    bool pass = false;
    PointResidual worst;
};

MembershipVerdict is_hamiltonian_pair(const VectorField& x, const Expression& h, const DiracField& d,
                                      const SampleSet& samples, double tol = kMembershipTol);

/// (X, 0) in D.
MembershipVerdict is_isotropic_field(const VectorField& x, const DiracField& d, const SampleSet& samples,
                                     double tol = kMembershipTol);

MembershipVerdict is_casimir(const Expression& f, const DiracField& d, const SampleSet& samples,
                             double tol = kMembershipTol);

/// dH vanishes on D cap TM at every sample.
MembershipVerdict is_admissible_hamiltonian(const Expression& h, const DiracField& d, const SampleSet& samples,
                                            double tol = kMembershipTol);

/// {H, F} := X_H(F) after checking that (X_H, dH) lies in D.
Expression poisson_bracket(const Expression& h, const Expression& f, const DiracField& d, const VectorField& x_h,
                           const SampleSet& samples);

/// Pointwise pullback of D to a coordinate slice Q = {x_i = c_i}. Each
/// constraint expression must reduce to a bare coordinate. Throws
/// std::domain_error("non-regular constraint ...") if the rank of the
/// induced structure changes across the samples.
DiracField induced_dirac_on_level(const DiracField& d, const std::vector<std::pair<Expression, double>>& constraints,
                                  int samples = 128);

}  // namespace diracaa
