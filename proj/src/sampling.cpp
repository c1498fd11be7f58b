#include "diracaa/sampling.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace diracaa {

namespace {
constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
}

double radical_inverse(std::uint64_t index, int base) {
    double result = 0.0;
    double f = 1.0 / base;
    while (index > 0) {
        result += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
        index /= static_cast<std::uint64_t>(base);
        f /= base;
    }
    return result;
}

std::vector<Eigen::VectorXd> halton_points(int dim, int count, std::uint64_t seed) {
    if (dim > static_cast<int>(std::size(kPrimes)))
        throw std::invalid_argument("halton_points: dimension too large");
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(dim);
    if (seed != 0) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < dim; ++i) shift[i] = u(rng);
    }
    std::vector<Eigen::VectorXd> pts;
    pts.reserve(static_cast<std::size_t>(count));
    // index 0 maps to the origin of the box; start at 1
    for (int k = 1; k <= count; ++k) {
        Eigen::VectorXd p(dim);
        for (int i = 0; i < dim; ++i) {
            double v = radical_inverse(static_cast<std::uint64_t>(k), kPrimes[i]) + shift[i];
            p[i] = v - std::floor(v);
        }
        pts.push_back(std::move(p));
    }
    return pts;
}

std::vector<Eigen::VectorXd> sample_box(const std::vector<Interval>& box, int count, std::uint64_t seed) {
    const int dim = static_cast<int>(box.size());
    auto pts = halton_points(dim, count, seed);
    for (auto& p : pts)
        for (int i = 0; i < dim; ++i) {
            const auto& iv = box[static_cast<std::size_t>(i)];
            p[i] = iv.lo + (iv.hi - iv.lo) * p[i];
        }
    return pts;
}

std::vector<Eigen::VectorXd> sample_chart(const Chart& chart, int count, std::uint64_t seed) {
    return sample_box(chart.box(), count, seed);
}

Eigen::VectorXd wrap_periodic(const Chart& chart, Eigen::VectorXd x) {
    for (int i = 0; i < chart.dim(); ++i)
        if (chart.periodic(i)) x[i] -= std::floor(x[i]);
    return x;
}

Eigen::VectorXd periodic_difference(const Chart& chart, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd d = a - b;
    for (int i = 0; i < chart.dim(); ++i)
        if (chart.periodic(i)) d[i] -= std::floor(d[i] + 0.5);
    return d;
}

}  // namespace diracaa
