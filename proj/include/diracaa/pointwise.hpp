#pragma once

#include <vector>

#include <Eigen/Dense>

namespace diracaa {

/// Relative singular-value threshold for every rank decision.
inline constexpr double kRankTol = 1e-9;
/// Absolute threshold on the isotropy Gram matrix.
inline constexpr double kIsotropyTol = 1e-10;

/// Element (X, a) of V (+) V*.
struct DoubleVector {
    Eigen::VectorXd x;
    Eigen::VectorXd a;
};

/// <(X1,a1),(X2,a2)> = (a1(X2) + a2(X1)) / 2
double pairing(const DoubleVector& u, const DoubleVector& v);

/// n columns of a 2n x n matrix: rows 0..n-1 hold the tangent parts,
/// rows n..2n-1 the cotangent parts.
class DiracPointFrame {
public:
    DiracPointFrame() = default;
    DiracPointFrame(Eigen::MatrixXd columns, Eigen::VectorXd point);
    static DiracPointFrame from_columns(const std::vector<DoubleVector>& cols, Eigen::VectorXd point);

    int n() const { return static_cast<int>(m_.cols()); }
    const Eigen::MatrixXd& matrix() const { return m_; }
    const Eigen::VectorXd& point() const { return point_; }
    Eigen::MatrixXd tangent() const { return m_.topRows(n()); }
    Eigen::MatrixXd cotangent() const { return m_.bottomRows(n()); }
    DoubleVector column(int j) const;

    /// Largest singular value of the whole frame; scale for relative rank tests.
    double scale() const;
    int rank() const;

private:
    Eigen::MatrixXd m_;
    Eigen::VectorXd point_;
};

struct BiCorank {
    int r = 0;
    int s = 0;
    int m = 0;
    bool operator==(const BiCorank&) const = default;
};

/// Rank with singular values above rel_tol * scale (scale <= 0: use the largest singular value).
int numeric_rank(const Eigen::MatrixXd& a, double scale = -1.0, double rel_tol = kRankTol);

/// Orthonormal basis of the column space.
Eigen::MatrixXd column_basis(const Eigen::MatrixXd& a, double scale = -1.0, double rel_tol = kRankTol);

/// Orthonormal basis of the null space.
Eigen::MatrixXd null_basis(const Eigen::MatrixXd& a, double scale = -1.0, double rel_tol = kRankTol);

Eigen::MatrixXd isotropy_gram(const DiracPointFrame& f);
double isotropy_defect(const DiracPointFrame& f);

/// Throws unless the frame is isotropic and of rank n.
void require_dirac_frame(const DiracPointFrame& f);

BiCorank bi_corank(const DiracPointFrame& f);

struct Projections {
    Eigen::MatrixXd tangent;    // basis of proj_TM, n - s columns
    Eigen::MatrixXd cotangent;  // basis of proj_T*M, n - r columns
};

Projections projections(const DiracPointFrame& f);

/// Basis of D cap TM (the kernel of the leaf 2-form), r columns.
Eigen::MatrixXd kernel_directions(const DiracPointFrame& f);

/// Least-squares distance of v from the frame span, relative to |v|.
double membership_residual(const DiracPointFrame& f, const DoubleVector& v);

/// True if u lies in proj_TM (relative residual <= tol).
bool in_characteristic(const DiracPointFrame& f, const Eigen::VectorXd& u, double tol = kRankTol);

/// Leaf 2-form evaluated on the given tangent vectors (columns): entry (i,j) is
/// a_{u_i}(u_j) for any a_{u_i} with (u_i, a_{u_i}) in D. Throws if some column
/// is not in proj_TM or the choice of a_{u_i} matters beyond 1e-9.
Eigen::MatrixXd leaf_form_on(const DiracPointFrame& f, const Eigen::MatrixXd& vectors);

struct LeafTwoForm {
    Eigen::MatrixXd basis;  // orthonormal basis of proj_TM
    Eigen::MatrixXd omega;  // omega(basis_i, basis_j)
    int rank = 0;
};

LeafTwoForm leaf_two_form(const DiracPointFrame& f);

struct LagrangianVerdict {
    bool in_leaf = false;
    bool isotropic = false;
    bool lagrangian = false;
    int dim = 0;
    int expected_dim = 0;
    double residual = 0.0;  // max |omega| on the subspace
};

LagrangianVerdict lagrangian_check(const Eigen::MatrixXd& subspace, const DiracPointFrame& f);

struct CoLagrangianVerdict {
    bool spanning = false;       // T L + proj_TM = V
    bool transversal = false;    // T L cap (D cap TM) = 0
    bool isotropic = false;      // omega vanishes on T L cap proj_TM
    bool dimension_ok = false;   // dim L = (n - r + s)/2
    bool colagrangian = false;
    int dim = 0;
    int expected_dim = 0;
    double residual = 0.0;
};

CoLagrangianVerdict colagrangian_check(const Eigen::MatrixXd& subspace, const DiracPointFrame& f);

struct LinearDarboux {
    BiCorank corank;
    /// Columns are the new basis vectors in old coordinates, ordered
    /// (x_1..x_2m, y_1..y_r, z_1..z_s).
    Eigen::MatrixXd basis;
    /// Leaf form recomputed in the new basis on the first 2m + r vectors.
    Eigen::MatrixXd normal_form;
    double residual = 0.0;
};

LinearDarboux linear_darboux(const DiracPointFrame& f);

/// Frame expressed in new linear coordinates x = basis * x'.
DiracPointFrame change_basis(const DiracPointFrame& f, const Eigen::MatrixXd& basis);

}  // namespace diracaa
