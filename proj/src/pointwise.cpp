#include "diracaa/pointwise.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace diracaa {

double pairing(const DoubleVector& u, const DoubleVector& v) {
    if (u.x.size() != v.x.size() || u.a.size() != v.a.size() || u.x.size() != u.a.size())
        throw std::invalid_argument("pairing: dimension mismatch");
    return 0.5 * (u.a.dot(v.x) + v.a.dot(u.x));
}

DiracPointFrame::DiracPointFrame(Eigen::MatrixXd columns, Eigen::VectorXd point)
    : m_(std::move(columns)), point_(std::move(point)) {
    if (m_.rows() != 2 * m_.cols()) throw std::invalid_argument("frame: expected a 2n x n matrix");
}

DiracPointFrame DiracPointFrame::from_columns(const std::vector<DoubleVector>& cols, Eigen::VectorXd point) {
    const auto n = static_cast<Eigen::Index>(cols.size());
    Eigen::MatrixXd m(2 * n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& c = cols[static_cast<std::size_t>(j)];
        if (c.x.size() != n || c.a.size() != n) throw std::invalid_argument("frame: column dimension mismatch");
        m.col(j) << c.x, c.a;
    }
    return DiracPointFrame(std::move(m), std::move(point));
}

DoubleVector DiracPointFrame::column(int j) const {
    return {m_.col(j).head(n()), m_.col(j).tail(n())};
}

double DiracPointFrame::scale() const {
    if (m_.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m_);
    return svd.singularValues()(0);
}

int DiracPointFrame::rank() const { return numeric_rank(m_); }

namespace {

Eigen::JacobiSVD<Eigen::MatrixXd> svd_of(const Eigen::MatrixXd& a, bool u, bool v) {
    unsigned opts = 0;
    if (u) opts |= Eigen::ComputeFullU;
    if (v) opts |= Eigen::ComputeFullV;
    return Eigen::JacobiSVD<Eigen::MatrixXd>(a, opts);
}

int rank_from(const Eigen::VectorXd& sv, double scale, double rel_tol) {
    if (sv.size() == 0) return 0;
    if (scale <= 0) scale = sv(0);
    if (scale <= 0) return 0;
    int r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > rel_tol * scale) ++r;
    return r;
}

}  // namespace

int numeric_rank(const Eigen::MatrixXd& a, double scale, double rel_tol) {
    if (a.size() == 0) return 0;
    return rank_from(svd_of(a, false, false).singularValues(), scale, rel_tol);
}

Eigen::MatrixXd column_basis(const Eigen::MatrixXd& a, double scale, double rel_tol) {
    if (a.size() == 0) return Eigen::MatrixXd(a.rows(), 0);
    auto svd = svd_of(a, true, false);
    int r = rank_from(svd.singularValues(), scale, rel_tol);
    return svd.matrixU().leftCols(r);
}

Eigen::MatrixXd null_basis(const Eigen::MatrixXd& a, double scale, double rel_tol) {
    if (a.cols() == 0) return Eigen::MatrixXd(0, 0);
    if (a.rows() == 0) return Eigen::MatrixXd::Identity(a.cols(), a.cols());
    auto svd = svd_of(a, false, true);
    int r = rank_from(svd.singularValues(), scale, rel_tol);
    return svd.matrixV().rightCols(a.cols() - r);
}

Eigen::MatrixXd isotropy_gram(const DiracPointFrame& f) {
    Eigen::MatrixXd x = f.tangent(), a = f.cotangent();
    Eigen::MatrixXd g = a.transpose() * x;
    return 0.5 * (g + g.transpose());
}

double isotropy_defect(const DiracPointFrame& f) {
    if (f.n() == 0) return 0.0;
    return isotropy_gram(f).cwiseAbs().maxCoeff();
}

void require_dirac_frame(const DiracPointFrame& f) {
    if (f.rank() != f.n())
        throw std::domain_error("frame has rank " + std::to_string(f.rank()) + " < " + std::to_string(f.n()));
    double d = isotropy_defect(f);
    if (d > kIsotropyTol) throw std::domain_error("frame is not isotropic (defect " + std::to_string(d) + ")");
}

BiCorank bi_corank(const DiracPointFrame& f) {
    require_dirac_frame(f);
    const double sc = f.scale();
    const int n = f.n();
    BiCorank b;
    b.r = n - numeric_rank(f.cotangent(), sc);
    b.s = n - numeric_rank(f.tangent(), sc);
    const int rest = n - b.r - b.s;
    if (rest < 0 || rest % 2 != 0)
        throw std::domain_error("bi-corank parity violation: n - r - s = " + std::to_string(rest));
    b.m = rest / 2;
    return b;
}

Projections projections(const DiracPointFrame& f) {
    const double sc = f.scale();
    return {column_basis(f.tangent(), sc), column_basis(f.cotangent(), sc)};
}

Eigen::MatrixXd kernel_directions(const DiracPointFrame& f) {
    const double sc = f.scale();
    Eigen::MatrixXd c = null_basis(f.cotangent(), sc);
    if (c.cols() == 0) return Eigen::MatrixXd(f.n(), 0);
    return column_basis(f.tangent() * c, sc);
}

double membership_residual(const DiracPointFrame& f, const DoubleVector& v) {
    Eigen::VectorXd w(2 * f.n());
    w << v.x, v.a;
    const double nv = w.norm();
    if (nv < 1e-14) return 0.0;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(f.matrix());
    Eigen::VectorXd c = cod.solve(w);
    return (f.matrix() * c - w).norm() / nv;
}

bool in_characteristic(const DiracPointFrame& f, const Eigen::VectorXd& u, double tol) {
    const double nu = u.norm();
    if (nu < 1e-14) return true;
    Eigen::MatrixXd x = f.tangent();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    return (x * cod.solve(u) - u).norm() <= tol * nu;
}

Eigen::MatrixXd leaf_form_on(const DiracPointFrame& f, const Eigen::MatrixXd& vectors) {
    const Eigen::MatrixXd x = f.tangent(), a = f.cotangent();
    const Eigen::Index k = vectors.cols();
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(x);
    Eigen::MatrixXd ker = null_basis(x, f.scale());
    Eigen::MatrixXd alphas(f.n(), k), alt(f.n(), k);
    for (Eigen::Index i = 0; i < k; ++i) {
        Eigen::VectorXd u = vectors.col(i);
        Eigen::VectorXd c = cod.solve(u);
        if ((x * c - u).norm() > kRankTol * std::max(1.0, u.norm()))
            throw std::domain_error("leaf form: vector not in the characteristic distribution");
        alphas.col(i) = a * c;
        // a second admissible lift differs by an element of D cap T*M
        Eigen::VectorXd shift = ker.cols() > 0 ? Eigen::VectorXd(ker.rowwise().sum()) : Eigen::VectorXd::Zero(f.n());
        alt.col(i) = a * (c + shift);
    }
    Eigen::MatrixXd w = alphas.transpose() * vectors;
    Eigen::MatrixXd w2 = alt.transpose() * vectors;
    if (k > 0 && (w - w2).cwiseAbs().maxCoeff() > 1e-9)
        throw std::domain_error("leaf form: value depends on the lift (frame not isotropic)");
    return w;
}

LeafTwoForm leaf_two_form(const DiracPointFrame& f) {
    LeafTwoForm out;
    out.basis = column_basis(f.tangent(), f.scale());
    out.omega = leaf_form_on(f, out.basis);
    out.rank = numeric_rank(out.omega, std::max(1.0, f.scale() * f.scale()));
    return out;
}

LagrangianVerdict lagrangian_check(const Eigen::MatrixXd& subspace, const DiracPointFrame& f) {
    LagrangianVerdict v;
    BiCorank bc = bi_corank(f);
    Eigen::MatrixXd s = column_basis(subspace);
    v.dim = static_cast<int>(s.cols());
    LeafTwoForm lf = leaf_two_form(f);
    v.expected_dim = lf.rank / 2 + bc.r;
    for (Eigen::Index i = 0; i < s.cols(); ++i)
        if (!in_characteristic(f, s.col(i))) return v;
    v.in_leaf = true;
    Eigen::MatrixXd w = leaf_form_on(f, s);
    v.residual = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
    v.isotropic = v.residual <= kIsotropyTol;
    v.lagrangian = v.isotropic && v.dim == v.expected_dim;
    return v;
}

CoLagrangianVerdict colagrangian_check(const Eigen::MatrixXd& subspace, const DiracPointFrame& f) {
    CoLagrangianVerdict v;
    const int n = f.n();
    BiCorank bc = bi_corank(f);
    Eigen::MatrixXd s = column_basis(subspace);
    const auto k = s.cols();
    v.dim = static_cast<int>(k);
    v.expected_dim = (n - bc.r + bc.s) / 2;
    v.dimension_ok = v.dim == v.expected_dim;

    Projections pr = projections(f);
    Eigen::MatrixXd both(n, k + pr.tangent.cols());
    both << s, pr.tangent;
    v.spanning = numeric_rank(both, 1.0) == n;

    Eigen::MatrixXd ker = kernel_directions(f);
    Eigen::MatrixXd sk(n, k + ker.cols());
    sk << s, ker;
    v.transversal = numeric_rank(sk, 1.0) == k + ker.cols();

    // T L cap proj_TM from the null space of [S, -C]
    Eigen::MatrixXd sc(n, k + pr.tangent.cols());
    sc << s, -pr.tangent;
    Eigen::MatrixXd nb = null_basis(sc, 1.0);
    Eigen::MatrixXd inter = s * nb.topRows(k);
    if (inter.cols() > 0) {
        Eigen::MatrixXd w = leaf_form_on(f, column_basis(inter, 1.0));
        v.residual = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
    }
    v.isotropic = v.residual <= kIsotropyTol;
    v.colagrangian = v.spanning && v.transversal && v.isotropic && v.dimension_ok;
    return v;
}

DiracPointFrame change_basis(const DiracPointFrame& f, const Eigen::MatrixXd& basis) {
    const int n = f.n();
    Eigen::MatrixXd m(2 * n, n);
    m.topRows(n) = basis.fullPivLu().solve(f.tangent());
    m.bottomRows(n) = basis.transpose() * f.cotangent();
    return DiracPointFrame(std::move(m), f.point());
}

LinearDarboux linear_darboux(const DiracPointFrame& f) {
    LinearDarboux out;
    out.corank = bi_corank(f);
    const int n = f.n();
    const int m = out.corank.m, r = out.corank.r, s = out.corank.s;

    Projections pr = projections(f);
    Eigen::MatrixXd ker = kernel_directions(f);
    // complement of the kernel inside proj_TM
    Eigen::MatrixXd w = pr.tangent - ker * (ker.transpose() * pr.tangent);
    w = column_basis(w, 1.0);
    if (w.cols() != 2 * m) throw std::domain_error("linear_darboux: symplectic part has wrong dimension");

    std::vector<Eigen::VectorXd> rest;
    for (Eigen::Index i = 0; i < w.cols(); ++i) rest.push_back(w.col(i));
    auto omega = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
        Eigen::MatrixXd uv(n, 2);
        uv << u, v;
        return leaf_form_on(f, uv)(0, 1);
    };

    out.basis.resize(n, n);
    int col = 0;
    while (!rest.empty()) {
        std::size_t bi = 0, bj = 1;
        double best = -1.0, bw = 0.0;
        for (std::size_t i = 0; i < rest.size(); ++i)
            for (std::size_t j = i + 1; j < rest.size(); ++j) {
                double val = omega(rest[i], rest[j]);
                if (std::abs(val) > best) {
                    best = std::abs(val);
                    bi = i;
                    bj = j;
                    bw = val;
                }
            }
        if (rest.size() < 2 || best <= kRankTol) throw std::domain_error("linear_darboux: degenerate leaf form");
        Eigen::VectorXd e = rest[bi];
        Eigen::VectorXd g = rest[bj] / bw;
        std::vector<Eigen::VectorXd> next;
        for (std::size_t i = 0; i < rest.size(); ++i) {
            if (i == bi || i == bj) continue;
            const auto& c = rest[i];
            next.push_back(c - omega(c, g) * e + omega(c, e) * g);
        }
        rest = std::move(next);
        out.basis.col(col++) = e;
        out.basis.col(col++) = g;
    }
    for (Eigen::Index i = 0; i < r; ++i) out.basis.col(col++) = ker.col(i);
    // transversal directions: orthogonal complement of proj_TM
    Eigen::MatrixXd comp = null_basis(pr.tangent.transpose(), 1.0);
    if (comp.cols() != s) throw std::domain_error("linear_darboux: transversal dimension mismatch");
    for (Eigen::Index i = 0; i < s; ++i) out.basis.col(col++) = comp.col(i);

    DiracPointFrame g = change_basis(f, out.basis);
    const int k = 2 * m + r;
    out.normal_form = leaf_form_on(g, Eigen::MatrixXd::Identity(n, n).leftCols(k));
    Eigen::MatrixXd ideal = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < m; ++i) {
        ideal(2 * i, 2 * i + 1) = 1.0;
        ideal(2 * i + 1, 2 * i) = -1.0;
    }
    out.residual = k > 0 ? (out.normal_form - ideal).cwiseAbs().maxCoeff() : 0.0;
    return out;
}

}  // namespace diracaa
