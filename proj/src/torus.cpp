#include "diracaa/torus.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "diracaa/sampling.hpp"

namespace diracaa {

namespace {

std::span<const double> as_span(const Eigen::VectorXd& p) { return {p.data(), static_cast<std::size_t>(p.size())}; }

std::string point_text(const Eigen::VectorXd& p) {
    std::ostringstream os;
    os.precision(6);
    os << '(';
    for (Eigen::Index i = 0; i < p.size(); ++i) os << (i ? ", " : "") << p[i];
    os << ')';
    return os.str();
}

// Dormand-Prince tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

}  // namespace

FlowEngine::FlowEngine(FlowOptions o) : opt_(o) {
    if (!(o.rel_tol > 0) || !(o.abs_tol > 0)) throw std::invalid_argument("FlowEngine: tolerances must be positive");
}

Eigen::VectorXd FlowEngine::integrate(const Rhs& f, Eigen::VectorXd y, double t) const {
    if (t == 0.0) return y;
    const double dir = t > 0 ? 1.0 : -1.0;
    const double total = std::abs(t);
    const auto n = y.size();
    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), ynew(n);
    f(y, k1);
    // initial step from the local scale of the field
    double h;
    {
        Eigen::VectorXd sc = (opt_.abs_tol + opt_.rel_tol * y.array().abs()).matrix();
        double d0 = (y.array() / sc.array()).matrix().norm() / std::sqrt(static_cast<double>(n));
        double d1 = (k1.array() / sc.array()).matrix().norm() / std::sqrt(static_cast<double>(n));
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min({h, total, 0.1 * std::max(1.0, total)});
        h = std::max(h, 1e-12);
    }
    double done = 0.0;
    long steps = 0;
    while (done < total) {
        if (++steps > opt_.max_steps) throw std::runtime_error("flow: step budget exhausted");
        bool last = false;
        if (done + h >= total) {
            h = total - done;
            last = true;
        }
        const double s = dir * h;
        tmp = y + s * a21 * k1;
        f(tmp, k2);
        tmp = y + s * (a31 * k1 + a32 * k2);
        f(tmp, k3);
        tmp = y + s * (a41 * k1 + a42 * k2 + a43 * k3);
        f(tmp, k4);
        tmp = y + s * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        f(tmp, k5);
        tmp = y + s * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        f(tmp, k6);
        ynew = y + s * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        f(ynew, k7);
        double err = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double ei = s * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            double sc = opt_.abs_tol + opt_.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
            err += (ei / sc) * (ei / sc);
        }
        err = std::sqrt(err / static_cast<double>(n));
        if (!std::isfinite(err)) {
            if (!ynew.allFinite() && h < 1e-12) throw std::runtime_error("flow: state left the chart domain");
            h *= 0.1;
            continue;
        }
        if (err <= 1.0) {
            done = last ? total : done + h;
            y = ynew;
            k1 = k7;
            if (!y.allFinite()) throw std::runtime_error("flow: state left the chart domain");
        }
        if (done >= total) break;
        double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        if (err > 1.0) fac = std::min(fac, 1.0);
        h *= fac;
        if (h < 1e-14 * std::max(1.0, total)) throw std::runtime_error("flow: step size underflow");
    }
    return y;
}

Flow::Flow(IntegrableSystem sys, FlowOptions o) : sys_(std::move(sys)), engine_(o) {
    const int n = sys_.n();
    for (const auto& x : sys_.fields())
        for (int k = 0; k < n; ++k) {
            x_.emplace_back(x[k]);
            for (int m = 0; m < n; ++m) jac_.emplace_back(expr::diff(x[k], m));
        }
    for (const auto& f : sys_.integrals()) f_.emplace_back(f);
}

Eigen::VectorXd Flow::field(int i, const Eigen::VectorXd& y) const {
    const int nn = n();
    Eigen::VectorXd v(nn);
    for (int k = 0; k < nn; ++k) v[k] = x_[static_cast<std::size_t>(i * nn + k)](as_span(y));
    return v;
}

Eigen::MatrixXd Flow::fields_at(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd m(n(), p());
    for (int i = 0; i < p(); ++i) m.col(i) = field(i, y);
    return m;
}

Eigen::MatrixXd Flow::field_jacobian(int i, const Eigen::VectorXd& y) const {
    const int nn = n();
    Eigen::MatrixXd j(nn, nn);
    for (int k = 0; k < nn; ++k)
        for (int m = 0; m < nn; ++m) j(k, m) = jac_[static_cast<std::size_t>((i * nn + k) * nn + m)](as_span(y));
    return j;
}

Eigen::VectorXd Flow::integrals_at(const Eigen::VectorXd& y) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(f_.size()));
    for (std::size_t j = 0; j < f_.size(); ++j) v[static_cast<Eigen::Index>(j)] = f_[j](as_span(y));
    return v;
}

Eigen::VectorXd Flow::raw(const Eigen::VectorXd& t, const Eigen::VectorXd& x0) const {
    if (t.size() != p()) throw std::invalid_argument("flow: time vector has the wrong length");
    const double scale = t.cwiseAbs().maxCoeff();
    if (scale == 0.0) return x0;
    const Eigen::VectorXd u = t / scale;
    auto rhs = [&](const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy.setZero(n());
        for (int i = 0; i < p(); ++i)
            if (u[i] != 0.0) dy += u[i] * field(i, y);
    };
    return engine_.integrate(rhs, x0, scale);
}

Eigen::VectorXd Flow::operator()(const Eigen::VectorXd& t, const Eigen::VectorXd& x0) const {
    return wrap_periodic(chart(), raw(t, x0));
}

Eigen::VectorXd Flow::along(int i, double s, const Eigen::VectorXd& x0) const {
    Eigen::VectorXd t = Eigen::VectorXd::Zero(p());
    t[i] = s;
    return raw(t, x0);
}

FlowResult Flow::with_jacobian(const Eigen::VectorXd& t, const Eigen::VectorXd& x0) const {
    const int nn = n();
    Eigen::VectorXd y0(nn + nn * nn);
    y0.head(nn) = x0;
    Eigen::Map<Eigen::MatrixXd>(y0.data() + nn, nn, nn).setIdentity();
    const double scale = t.cwiseAbs().maxCoeff();
    if (scale == 0.0) return {wrap_periodic(chart(), x0), Eigen::MatrixXd::Identity(nn, nn)};
    const Eigen::VectorXd u = t / scale;
    auto rhs = [&](const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy.setZero(nn + nn * nn);
        Eigen::VectorXd x = y.head(nn);
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nn, nn);
        for (int i = 0; i < p(); ++i)
            if (u[i] != 0.0) {
                dy.head(nn) += u[i] * field(i, x);
                a += u[i] * field_jacobian(i, x);
            }
        Eigen::Map<const Eigen::MatrixXd> j(y.data() + nn, nn, nn);
        Eigen::Map<Eigen::MatrixXd>(dy.data() + nn, nn, nn) = a * j;
    };
    Eigen::VectorXd y = engine_.integrate(rhs, y0, scale);
    return {wrap_periodic(chart(), y.head(nn)), Eigen::Map<const Eigen::MatrixXd>(y.data() + nn, nn, nn)};
}

Eigen::VectorXd Flow::difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return periodic_difference(chart(), a, b);
}

Eigen::VectorXd joint_flow(const IntegrableSystem& sys, const Eigen::VectorXd& t, const Eigen::VectorXd& x0,
                           FlowOptions o) {
    return Flow(sys, o)(t, x0);
}

// ---------------------------------------------------------------- lattices

namespace {

// Gauss-Newton on t -> Phi_t(x0) - x0; columns of the Jacobian are the fields
// at the image because the fields commute.
bool newton_return(const Flow& flow, const Eigen::VectorXd& x0, Eigen::VectorXd& t, double& residual) {
    residual = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 40; ++it) {
        Eigen::VectorXd y = flow.raw(t, x0);
        Eigen::VectorXd r = flow.difference(y, x0);
        double rn = r.norm();
        if (!std::isfinite(rn)) return false;
        residual = rn;
        if (rn <= 1e-13 * std::max(1.0, x0.norm())) return true;
        Eigen::MatrixXd j = flow.fields_at(y);
        Eigen::VectorXd dt = j.completeOrthogonalDecomposition().solve(-r);
        t += dt;
        if (dt.norm() <= 1e-15 * std::max(1.0, t.norm())) {
            residual = flow.difference(flow.raw(t, x0), x0).norm();
            return true;
        }
    }
    return residual < 1e-10;
}

void gauss_reduce(Eigen::MatrixXd& b) {
    Eigen::VectorXd u = b.row(0).transpose(), v = b.row(1).transpose();
    if (u.squaredNorm() > v.squaredNorm()) std::swap(u, v);
    for (int it = 0; it < 1000; ++it) {
        double mu = std::round(u.dot(v) / u.squaredNorm());
        v -= mu * u;
        if (v.squaredNorm() >= u.squaredNorm()) break;
        std::swap(u, v);
    }
    b.row(0) = u.transpose();
    b.row(1) = v.transpose();
}

void lll_reduce(Eigen::MatrixXd& b, double delta = 0.75) {
    const auto k = b.rows();
    auto gso = [&](Eigen::MatrixXd& bs, Eigen::MatrixXd& mu) {
        bs = b;
        mu.setZero(k, k);
        for (Eigen::Index i = 0; i < k; ++i)
            for (Eigen::Index j = 0; j < i; ++j) {
                mu(i, j) = b.row(i).dot(bs.row(j)) / bs.row(j).squaredNorm();
                bs.row(i) -= mu(i, j) * bs.row(j);
            }
    };
    Eigen::MatrixXd bs, mu;
    gso(bs, mu);
    Eigen::Index i = 1;
    int guard = 0;
    while (i < k && ++guard < 100000) {
        for (Eigen::Index j = i - 1; j >= 0; --j) {
            double q = std::round(mu(i, j));
            if (q != 0.0) {
                b.row(i) -= q * b.row(j);
                gso(bs, mu);
            }
        }
        if (bs.row(i).squaredNorm() >= (delta - mu(i, i - 1) * mu(i, i - 1)) * bs.row(i - 1).squaredNorm()) {
            ++i;
        } else {
            b.row(i).swap(b.row(i - 1));
            gso(bs, mu);
            i = std::max<Eigen::Index>(i - 1, 1);
        }
    }
}

TorusChart finish_chart(const Flow& flow, const Eigen::VectorXd& x0, Eigen::MatrixXd l) {
    TorusChart tc;
    tc.base_point = x0;
    tc.lattice = std::move(l);
    tc.frequency = tc.lattice.inverse();
    for (Eigen::Index k = 0; k < tc.lattice.rows(); ++k)
        tc.return_residual = std::max(
            tc.return_residual, flow.difference(flow.raw(tc.lattice.row(k).transpose(), x0), x0).norm());
    return tc;
}

// Row order and signs that put the largest entries on a positive diagonal.
Eigen::MatrixXd most_diagonal(const Eigen::MatrixXd& b) {
    const auto p = b.rows();
    std::vector<int> perm(static_cast<std::size_t>(p)), best;
    for (int i = 0; i < p; ++i) perm[static_cast<std::size_t>(i)] = i;
    double best_score = -1.0;
    if (p <= 6) {
        do {
            double score = 1.0;
            for (int k = 0; k < p; ++k) score *= std::abs(b(perm[static_cast<std::size_t>(k)], k));
            if (score > best_score + 1e-12) {
                best_score = score;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        best = perm;
    }
    Eigen::MatrixXd out(p, b.cols());
    for (int k = 0; k < p; ++k) {
        out.row(k) = b.row(best[static_cast<std::size_t>(k)]);
        if (out(k, k) < 0) out.row(k) *= -1.0;
    }
    return out;
}

}  // namespace

Eigen::MatrixXd reduce_lattice(Eigen::MatrixXd rows) {
    if (rows.rows() == 2)
        gauss_reduce(rows);
    else if (rows.rows() > 2)
        lll_reduce(rows);
    return rows;
}

TorusChart find_period_lattice(const Flow& flow, const Eigen::VectorXd& x0, const LatticeOptions& o) {
    const int p = flow.p();
    if (!is_regular_at(flow.system(), x0))
        throw std::domain_error("find_period_lattice: system is not regular at " + point_text(x0));
    // field speed over a coarse probe of the orbits through x0
    double speed = 0.0;
    for (int i = 0; i < p; ++i) {
        Eigen::VectorXd y = x0;
        const double dt = std::min(o.t_max, 20.0) / 200;
        for (int k = 0; k <= 200; ++k) {
            for (int j = 0; j < p; ++j) speed = std::max(speed, flow.field(j, y).norm());
            y = flow.along(i, dt, y);
        }
    }
    const double h = 0.8 * o.near / (p * speed);
    std::vector<long> count(static_cast<std::size_t>(p));
    std::vector<double> start(static_cast<std::size_t>(p));
    long total = 1;
    for (int d = 0; d < p; ++d) {
        start[static_cast<std::size_t>(d)] = d == 0 ? 0.0 : -o.t_max;
        count[static_cast<std::size_t>(d)] = static_cast<long>(std::ceil((d == 0 ? o.t_max : 2 * o.t_max) / h)) + 1;
        total *= count[static_cast<std::size_t>(d)];
        if (total > o.max_grid)
            throw std::domain_error("find_period_lattice: time budget needs more than " + std::to_string(o.max_grid) +
                                    " grid points; lower t_max");
    }
    // distances of the scanned grid, last axis fastest
    std::vector<double> dist(static_cast<std::size_t>(total));
    std::function<void(int, const Eigen::VectorXd&, long)> scan = [&](int d, const Eigen::VectorXd& y, long offset) {
        Eigen::VectorXd cur = flow.along(d, start[static_cast<std::size_t>(d)], y);
        long stride = 1;
        for (int e = d + 1; e < p; ++e) stride *= count[static_cast<std::size_t>(e)];
        for (long j = 0; j < count[static_cast<std::size_t>(d)]; ++j) {
            if (d == p - 1)
                dist[static_cast<std::size_t>(offset + j)] = flow.difference(cur, x0).norm();
            else
                scan(d + 1, cur, offset + j * stride);
            cur = flow.along(d, h, cur);
        }
    };
    scan(0, x0, 0);

    auto index_of = [&](long flat) {
        std::vector<long> idx(static_cast<std::size_t>(p));
        for (int d = p - 1; d >= 0; --d) {
            idx[static_cast<std::size_t>(d)] = flat % count[static_cast<std::size_t>(d)];
            flat /= count[static_cast<std::size_t>(d)];
        }
        return idx;
    };
    std::vector<Eigen::VectorXd> found;
    for (long f = 0; f < total; ++f) {
        const double v = dist[static_cast<std::size_t>(f)];
        if (v >= o.near) continue;
        std::vector<long> idx = index_of(f);
        // strict local minimum over the 3^p neighbourhood
        bool minimum = true;
        long nb = 1;
        for (int d = 0; d < p; ++d) nb *= 3;
        for (long c = 0; c < nb && minimum; ++c) {
            long cc = c, flat = 0;
            bool self = true, inside = true;
            for (int d = 0; d < p; ++d) {
                long off = cc % 3 - 1;
                cc /= 3;
                if (off != 0) self = false;
                long k = idx[static_cast<std::size_t>(d)] + off;
                if (k < 0 || k >= count[static_cast<std::size_t>(d)]) inside = false;
                flat = flat * count[static_cast<std::size_t>(d)] + k;
            }
            if (self || !inside) continue;
            if (dist[static_cast<std::size_t>(flat)] < v) minimum = false;
        }
        if (!minimum) continue;
        Eigen::VectorXd t(p);
        for (int d = 0; d < p; ++d) t[d] = start[static_cast<std::size_t>(d)] + h * static_cast<double>(idx[static_cast<std::size_t>(d)]);
        double res;
        if (!newton_return(flow, x0, t, res) || res > o.tol) continue;
        if (t.norm() < 1e-6) continue;
        if (t[0] < -1e-9) t = -t;
        bool dup = false;
        for (const auto& g : found)
            if ((g - t).norm() <= 1e-6 * std::max(1.0, t.norm())) dup = true;
        if (!dup) found.push_back(t);
    }
    if (found.empty()) throw std::domain_error("find_period_lattice: no recurrence within the time budget; the level set may be non-compact");
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.norm() < b.norm(); });

    // successive minimum-height selection
    Eigen::MatrixXd basis(0, p);
    for (int k = 0; k < p; ++k) {
        int best = -1;
        double best_h = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < found.size(); ++c) {
            Eigen::VectorXd v = found[c];
            if (basis.rows() > 0) {
                Eigen::MatrixXd bt = basis.transpose();
                v -= bt * bt.completeOrthogonalDecomposition().solve(v);
            }
            double ht = v.norm();
            if (ht > 1e-6 * std::max(1.0, found[c].norm()) && ht < best_h - 1e-9) {
                best_h = ht;
                best = static_cast<int>(c);
            }
        }
        if (best < 0) throw std::domain_error("find_period_lattice: rank-deficient lattice; increase t_max");
        basis.conservativeResize(basis.rows() + 1, p);
        basis.row(basis.rows() - 1) = found[static_cast<std::size_t>(best)].transpose();
    }
    basis = reduce_lattice(basis);
    basis = most_diagonal(basis);
    // every recurrence must be an integer combination of the basis
    Eigen::MatrixXd binv = basis.inverse();
    for (const auto& t : found) {
        Eigen::RowVectorXd c = t.transpose() * binv;
        if ((c.array() - c.array().round()).abs().maxCoeff() > 1e-6)
            throw std::domain_error("find_period_lattice: recurrences are not generated by the selected basis; increase t_max");
    }
    if (basis.determinant() < 0) basis.row(p - 1) *= -1.0;
    // final polish of each row
    for (int k = 0; k < p; ++k) {
        Eigen::VectorXd t = basis.row(k).transpose();
        double res;
        newton_return(flow, x0, t, res);
        basis.row(k) = t.transpose();
    }
    TorusChart tc = finish_chart(flow, x0, basis);
    if (tc.return_residual > o.tol)
        throw std::domain_error("find_period_lattice: Newton did not reach the return tolerance");
    return tc;
}

TorusChart refine_lattice(const Flow& flow, const Eigen::VectorXd& x0, const Eigen::MatrixXd& guess, double tol) {
    Eigen::MatrixXd l = guess;
    for (Eigen::Index k = 0; k < l.rows(); ++k) {
        Eigen::VectorXd t = l.row(k).transpose();
        double res;
        if (!newton_return(flow, x0, t, res) || res > tol)
            throw std::domain_error("refine_lattice: Newton diverged at " + point_text(x0));
        l.row(k) = t.transpose();
    }
    if (std::abs(l.determinant()) < 1e-12) throw std::domain_error("refine_lattice: rank-deficient lattice");
    return finish_chart(flow, x0, l);
}

UnimodularCheck unimodular_equivalence(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
    UnimodularCheck out;
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols()) return out;
    Eigen::MatrixXd u = b * a.inverse();
    Eigen::MatrixXd ur = u.array().round().matrix();
    out.u = ur.cast<int>();
    out.residual = (b - ur * a).cwiseAbs().maxCoeff();
    out.equivalent = out.residual <= tol && std::abs(std::abs(ur.determinant()) - 1.0) < 1e-9;
    return out;
}

Eigen::VectorXd angle_coordinates(const Flow& flow, const TorusChart& tc, const Eigen::VectorXd& y, double level_tol) {
    const int p = flow.p();
    Eigen::VectorXd df = flow.integrals_at(y) - flow.integrals_at(tc.base_point);
    if (df.size() > 0 && df.cwiseAbs().maxCoeff() > level_tol)
        throw std::domain_error("angle_coordinates: point is off the level set of the base point");
    const Eigen::MatrixXd lt = tc.lattice.transpose();
    // coarse seed
    const int m = p == 1 ? 32 : (p == 2 ? 12 : 6);
    long cells = 1;
    for (int d = 0; d < p; ++d) cells *= m;
    Eigen::VectorXd best(p);
    double best_d = std::numeric_limits<double>::infinity();
    for (long c = 0; c < cells; ++c) {
        Eigen::VectorXd th(p);
        long cc = c;
        for (int d = 0; d < p; ++d) {
            th[d] = static_cast<double>(cc % m) / m;
            cc /= m;
        }
        double dd = flow.difference(flow.raw(lt * th, tc.base_point), y).norm();
        if (dd < best_d) {
            best_d = dd;
            best = th;
        }
    }
    Eigen::VectorXd th = best;
    double res = best_d;
    for (int it = 0; it < 40; ++it) {
        Eigen::VectorXd img = flow.raw(lt * th, tc.base_point);
        Eigen::VectorXd r = flow.difference(img, y);
        res = r.norm();
        if (res <= 1e-13 * std::max(1.0, y.norm())) break;
        Eigen::MatrixXd j = flow.fields_at(img) * lt;
        Eigen::VectorXd step = j.completeOrthogonalDecomposition().solve(-r);
        th += step;
        if (step.norm() < 1e-15) break;
    }
    if (res > 1e-8) throw std::domain_error("angle_coordinates: Newton failed at " + point_text(y));
    for (int d = 0; d < p; ++d) {
        th[d] -= std::floor(th[d]);
        if (th[d] >= 1.0) th[d] -= 1.0;
    }
    return th;
}

// ---------------------------------------------------------------- averaging

namespace {

// Applies `up` to every upper slot and `low` to every lower slot of the flat components.
Eigen::VectorXd transform_slots(const Eigen::VectorXd& v, int n, int upper, int lower, const Eigen::MatrixXd& up,
                                const Eigen::MatrixXd& low) {
    Eigen::VectorXd cur = v;
    const int rank = upper + lower;
    for (int slot = 0; slot < rank; ++slot) {
        const Eigen::MatrixXd& m = slot < upper ? up : low;
        long stride = 1;
        for (int s = 0; s < slot; ++s) stride *= n;
        Eigen::VectorXd next = Eigen::VectorXd::Zero(cur.size());
        for (long f = 0; f < cur.size(); ++f) {
            const long b = (f / stride) % n;
            const long base = f - b * stride;
            for (int a = 0; a < n; ++a) next[base + a * stride] += m(a, b) * cur[f];
        }
        cur = std::move(next);
    }
    return cur;
}

// Sum over slots of the single-slot action (derivation).
Eigen::VectorXd derive_slots(const Eigen::VectorXd& v, int n, int upper, int lower, const Eigen::MatrixXd& up,
                             const Eigen::MatrixXd& low) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    const int rank = upper + lower;
    for (int slot = 0; slot < rank; ++slot) {
        const Eigen::MatrixXd& m = slot < upper ? up : low;
        long stride = 1;
        for (int s = 0; s < slot; ++s) stride *= n;
        for (long f = 0; f < v.size(); ++f) {
            const long b = (f / stride) % n;
            const long base = f - b * stride;
            for (int a = 0; a < n; ++a) out[base + a * stride] += m(a, b) * v[f];
        }
    }
    return out;
}

}  // namespace

AveragedTensor torus_average(const Flow& flow, const TorusChart& tc, int upper, int lower, const TensorSampler& t,
                             const Eigen::VectorXd& x, TorusQuadrature q) {
    if (q.grid < 8) throw std::invalid_argument("torus_average: grid must have at least 8 points per angle");
    const int p = flow.p(), n = flow.n();
    long cells = 1;
    for (int d = 0; d < p; ++d) cells *= q.grid;
    const Eigen::MatrixXd lt = tc.lattice.transpose();
    AveragedTensor out;
    out.pointwise = t(x);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(out.pointwise.size()), sub = sum;
    long sub_count = 0;
    for (long c = 0; c < cells; ++c) {
        Eigen::VectorXd th(p);
        long cc = c;
        bool even = true;
        for (int d = 0; d < p; ++d) {
            long k = cc % q.grid;
            cc /= q.grid;
            th[d] = static_cast<double>(k) / q.grid;
            if (k % 2) even = false;
        }
        FlowResult fr = flow.with_jacobian(lt * th, x);
        // pullback: lower slots by J^T, upper slots by J^{-1}
        Eigen::MatrixXd jinv = fr.jacobian.inverse();
        Eigen::VectorXd v = transform_slots(t(fr.x), n, upper, lower, jinv, fr.jacobian.transpose());
        sum += v;
        if (even) {
            sub += v;
            ++sub_count;
        }
    }
    out.values = sum / static_cast<double>(cells);
    Eigen::VectorXd coarse = sub / static_cast<double>(sub_count);
    out.subgrid_change = (coarse - out.values).cwiseAbs().maxCoeff();
    out.converged = out.subgrid_change <= 1e-8;
    out.deviation = (out.values - out.pointwise).cwiseAbs().maxCoeff();
    return out;
}

AveragedTensor torus_average(const Flow& flow, const TorusChart& tc, const TensorField& t, const Eigen::VectorXd& x,
                             TorusQuadrature q) {
    require_same_chart(flow.system().chart(), t.chart(), "torus_average");
    std::vector<expr::Program> prog;
    for (std::size_t f = 0; f < t.size(); ++f) prog.emplace_back(t[f]);
    TensorSampler s = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(prog.size()));
        for (std::size_t f = 0; f < prog.size(); ++f) v[static_cast<Eigen::Index>(f)] = prog[f](as_span(y));
        return v;
    };
    return torus_average(flow, tc, t.upper(), t.lower(), s, x, q);
}

// ---------------------------------------------------------------- families

TorusFamily::TorusFamily(std::shared_ptr<const Flow> flow, TorusChart reference)
    : flow_(std::move(flow)), ref_(std::move(reference)) {
    const auto& sys = flow_->system();
    if (static_cast<int>(ref_.disk.size()) != sys.q())
        throw std::invalid_argument("torus family: the disk needs one coordinate per first integral");
    if (ref_.disk_range.size() != ref_.disk.size())
        throw std::invalid_argument("torus family: one range per disk coordinate");
    for (const auto& f : sys.integrals())
        for (int k = 0; k < sys.n(); ++k) grad_.emplace_back(expr::diff(f, k));
    // transversality of the disk to the base torus
    Eigen::MatrixXd span(sys.n(), sys.n());
    span.leftCols(sys.p()) = flow_->fields_at(ref_.base_point);
    for (int j = 0; j < sys.q(); ++j) span.col(sys.p() + j) = Eigen::VectorXd::Unit(sys.n(), ref_.disk[static_cast<std::size_t>(j)]);
    if (numeric_rank(span) < sys.n()) throw std::domain_error("torus family: the disk is not transversal to the torus");
}

Eigen::VectorXd TorusFamily::disk_coordinates(const Eigen::VectorXd& d) const {
    Eigen::VectorXd c(disk_dim());
    for (int j = 0; j < disk_dim(); ++j) c[j] = d[ref_.disk[static_cast<std::size_t>(j)]];
    return c;
}

Eigen::VectorXd TorusFamily::disk_point_at(const Eigen::VectorXd& c) const {
    Eigen::VectorXd d = ref_.base_point;
    for (int j = 0; j < disk_dim(); ++j) d[ref_.disk[static_cast<std::size_t>(j)]] = c[j];
    return d;
}

Eigen::VectorXd TorusFamily::disk_point(const Eigen::VectorXd& y) const {
    const Eigen::VectorXd target = flow_->integrals_at(y);
    // the reference disk coordinates select the branch; y's own coordinates are the fallback
    for (const Eigen::VectorXd& start : {disk_coordinates(ref_.base_point), disk_coordinates(y)}) {
        Eigen::VectorXd c = start;
        if (solve_disk(target, c)) return disk_point_at(c);
    }
    throw std::domain_error("torus family: no disk point on the torus through " + point_text(y));
}

bool TorusFamily::solve_disk(const Eigen::VectorXd& target, Eigen::VectorXd& c) const {
    const int q = disk_dim(), n = flow_->n();
    double res = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 60; ++it) {
        Eigen::VectorXd d = disk_point_at(c);
        Eigen::VectorXd r = flow_->integrals_at(d) - target;
        res = r.norm();
        if (!std::isfinite(res)) return false;
        if (res <= 1e-14 * std::max(1.0, target.norm())) break;
        Eigen::MatrixXd j(q, q);
        for (int a = 0; a < q; ++a)
            for (int b = 0; b < q; ++b)
                j(a, b) = grad_[static_cast<std::size_t>(a * n + ref_.disk[static_cast<std::size_t>(b)])](as_span(d));
        Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
        if (!lu.isInvertible()) return false;
        Eigen::VectorXd step = lu.solve(-r);
        // damping keeps the iterate on the branch it started on
        double lam = 1.0;
        for (int k = 0; k < 20; ++k) {
            Eigen::VectorXd rn = flow_->integrals_at(disk_point_at(c + lam * step)) - target;
            if (rn.allFinite() && rn.norm() < res) break;
            lam *= 0.5;
        }
        c += lam * step;
        if ((lam * step).norm() < 1e-16) break;
    }
    return res <= 1e-10 * std::max(1.0, target.norm());
}

TorusChart TorusFamily::chart_through(const Eigen::VectorXd& y) const { return chart_through(y, ref_.lattice); }

TorusChart TorusFamily::chart_through(const Eigen::VectorXd& y, const Eigen::MatrixXd& guess) const {
    Eigen::VectorXd d = disk_point(y);
    TorusChart tc;
    try {
        tc = refine_lattice(*flow_, d, guess);
    } catch (const std::domain_error&) {
        // continuation along the disk from the reference torus
        Eigen::VectorXd c0 = disk_coordinates(ref_.base_point), c1 = disk_coordinates(d);
        bool ok = false;
        for (int steps = 2; steps <= 64 && !ok; steps *= 2) {
            try {
                Eigen::MatrixXd l = ref_.lattice;
                for (int s = 1; s <= steps; ++s) {
                    Eigen::VectorXd c = c0 + (c1 - c0) * (static_cast<double>(s) / steps);
                    l = refine_lattice(*flow_, disk_point_at(c), l).lattice;
                }
                tc = refine_lattice(*flow_, d, l);
                ok = true;
            } catch (const std::domain_error&) {
            }
        }
        if (!ok) throw std::domain_error("torus family: lattice continuation failed at " + point_text(y));
    }
    tc.disk = ref_.disk;
    tc.disk_range = ref_.disk_range;
    return tc;
}

Eigen::MatrixXd TorusFamily::generators(const Eigen::VectorXd& y) const {
    TorusChart tc = chart_through(y);
    return flow_->fields_at(y) * tc.lattice.transpose();
}

Eigen::MatrixXd TorusFamily::generator_jacobian(int k, const Eigen::VectorXd& y, double h) const {
    const int n = flow_->n(), p = flow_->p();
    TorusChart tc = chart_through(y);
    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < p; ++i) dz += tc.lattice(k, i) * flow_->field_jacobian(i, y);
    // d L_ki / dx_m with one Richardson level
    Eigen::MatrixXd dl(p, n);
    auto lat = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
        return chart_through(z, tc.lattice).lattice.row(k).transpose();
    };
    for (int m = 0; m < n; ++m) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(n, m);
        Eigen::VectorXd c1 = (lat(y + h * e) - lat(y - h * e)) / (2 * h);
        Eigen::VectorXd c2 = (lat(y + 0.5 * h * e) - lat(y - 0.5 * h * e)) / h;
        dl.col(m) = (4 * c2 - c1) / 3;
    }
    dz += flow_->fields_at(y) * dl;
    return dz;
}

Eigen::VectorXd TorusFamily::angles(const Eigen::VectorXd& y) const {
    TorusChart tc = chart_through(y);
    return angle_coordinates(*flow_, tc, y, 1e-7);
}

std::vector<Eigen::VectorXd> TorusFamily::samples(int levels, int per_torus, std::uint64_t seed) const {
    const int q = disk_dim(), p = flow_->p();
    std::vector<Eigen::VectorXd> out;
    long nodes = 1;
    for (int j = 0; j < q; ++j) nodes *= std::max(levels, 1);
    auto angles = halton_points(p, per_torus, seed);
    for (long c = 0; c < nodes; ++c) {
        Eigen::VectorXd coords(q);
        long cc = c;
        for (int j = 0; j < q; ++j) {
            const Interval& r = ref_.disk_range[static_cast<std::size_t>(j)];
            long k = cc % std::max(levels, 1);
            cc /= std::max(levels, 1);
            coords[j] = levels <= 1 ? 0.5 * (r.lo + r.hi) : r.lo + (r.hi - r.lo) * static_cast<double>(k) / (levels - 1);
        }
        Eigen::VectorXd d = disk_point_at(coords);
        TorusChart tc = chart_through(d);
        for (const auto& th : angles) out.push_back((*flow_)(tc.lattice.transpose() * th, d));
    }
    return out;
}

// ---------------------------------------------------------------- preservation

namespace {

struct CompiledSection {
    std::vector<expr::Program> x, a, dx, da;  // values and Jacobians (row-major k, m)
};

CompiledSection compile_section(const Section& s, int n) {
    CompiledSection c;
    for (int k = 0; k < n; ++k) {
        c.x.emplace_back(s.x[k]);
        Expression ak = s.a.coefficient({k});
        c.a.emplace_back(ak);
        for (int m = 0; m < n; ++m) {
            c.dx.emplace_back(expr::diff(s.x[k], m));
            c.da.emplace_back(expr::diff(ak, m));
        }
    }
    return c;
}

Eigen::VectorXd eval_vec(const std::vector<expr::Program>& v, const Eigen::VectorXd& p) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i](as_span(p));
    return out;
}

Eigen::MatrixXd eval_mat(const std::vector<expr::Program>& v, const Eigen::VectorXd& p, int n) {
    Eigen::MatrixXd out(n, n);
    for (int k = 0; k < n; ++k)
        for (int m = 0; m < n; ++m) out(k, m) = v[static_cast<std::size_t>(k * n + m)](as_span(p));
    return out;
}

double span_distance(const DiracPointFrame& f, const Eigen::VectorXd& w) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(f.matrix());
    return (f.matrix() * cod.solve(w) - w).norm();
}

void keep_worst(PointResidual& r, double v, const Eigen::VectorXd& p, const std::string& where) {
    if (v > r.value || r.point.size() == 0) {
        r.value = std::max(r.value, v);
        r.point = p;
        r.where = where;
    }
}

}  // namespace

PointResidual tensor_preservation(const TorusFamily& family, const TensorField& t,
                                  const std::vector<Eigen::VectorXd>& points) {
    const Flow& flow = family.flow();
    const int n = flow.n(), p = flow.p();
    std::vector<expr::Program> val, der;
    for (std::size_t f = 0; f < t.size(); ++f) {
        val.emplace_back(t[f]);
        for (int m = 0; m < n; ++m) der.emplace_back(expr::diff(t[f], m));
    }
    PointResidual out;
    for (const auto& y : points) {
        Eigen::MatrixXd z = family.generators(y);
        Eigen::VectorXd v = eval_vec(val, y);
        for (int k = 0; k < p; ++k) {
            Eigen::MatrixXd dz = family.generator_jacobian(k, y);
            Eigen::VectorXd lie = Eigen::VectorXd::Zero(v.size());
            for (std::size_t f = 0; f < t.size(); ++f)
                for (int m = 0; m < n; ++m) lie[static_cast<Eigen::Index>(f)] += z(m, k) * der[f * static_cast<std::size_t>(n) + static_cast<std::size_t>(m)](as_span(y));
            lie += derive_slots(v, n, t.upper(), t.lower(), -dz, dz.transpose());
            keep_worst(out, lie.cwiseAbs().maxCoeff() / std::max(1.0, z.col(k).norm()), y, "generator " + std::to_string(k + 1));
        }
    }
    return out;
}

PreservationReport verify_structure_preservation(const TorusFamily& family, const DiracField& d,
                                                 const std::vector<Eigen::VectorXd>& points) {
    const Flow& flow = family.flow();
    require_same_chart(flow.system().chart(), d.chart(), "verify_structure_preservation");
    const int n = flow.n(), p = flow.p();
    PreservationReport out;
    std::vector<CompiledSection> secs;
    for (const auto& s : d.sections()) secs.push_back(compile_section(s, n));
    // prerequisite brackets, symbolic
    std::vector<std::vector<expr::Program>> pre;
    std::vector<std::pair<int, int>> pre_idx;
    for (int i = 0; i < p; ++i)
        for (int e = 0; e < n; ++e) {
            Section b = courant_bracket({flow.system().fields()[static_cast<std::size_t>(i)], KForm(d.chart(), 1)},
                                        d.sections()[static_cast<std::size_t>(e)]);
            std::vector<expr::Program> prog;
            for (int k = 0; k < n; ++k) prog.emplace_back(b.x[k]);
            for (int k = 0; k < n; ++k) prog.emplace_back(b.a.coefficient({k}));
            pre.push_back(std::move(prog));
            pre_idx.emplace_back(i, e);
        }
    for (const auto& y : points) {
        DiracPointFrame f = d.frame_at(y);
        for (std::size_t c = 0; c < pre.size(); ++c) {
            const auto [i, e] = pre_idx[c];
            const double scale = flow.field(i, y).norm() * f.matrix().col(e).norm();
            if (scale < 1e-14) continue;
            double v = span_distance(f, eval_vec(pre[c], y)) / scale;
            keep_worst(out.prerequisite, v, y, "X" + std::to_string(i + 1) + ", section " + std::to_string(e + 1));
        }
        Eigen::MatrixXd z = family.generators(y);
        for (int k = 0; k < p; ++k) {
            Eigen::MatrixXd dz = family.generator_jacobian(k, y);
            const Eigen::VectorXd zk = z.col(k);
            for (int e = 0; e < n; ++e) {
                const auto& s = secs[static_cast<std::size_t>(e)];
                Eigen::VectorXd xe = eval_vec(s.x, y), ae = eval_vec(s.a, y);
                Eigen::MatrixXd dxe = eval_mat(s.dx, y, n), dae = eval_mat(s.da, y, n);
                Eigen::VectorXd w(2 * n);
                w.head(n) = dxe * zk - dz * xe;
                w.tail(n) = dae * zk + dz.transpose() * ae;
                const double scale = zk.norm() * f.matrix().col(e).norm();
                if (scale < 1e-14) continue;
                keep_worst(out.generators, span_distance(f, w) / scale, y,
                           "Z" + std::to_string(k + 1) + ", section " + std::to_string(e + 1));
            }
        }
    }
    if (d.omega()) {
        out.tensor = tensor_preservation(family, TensorField::from(*d.omega()), points);
        out.has_tensor = true;
    } else if (d.pi()) {
        out.tensor = tensor_preservation(family, TensorField::from(*d.pi()), points);
        out.has_tensor = true;
    }
    return out;
}

}  // namespace diracaa
