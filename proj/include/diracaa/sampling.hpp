#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "diracaa/expr.hpp"

namespace diracaa {

/// Radical inverse of `index` in the given prime base.
double radical_inverse(std::uint64_t index, int base);

/// Deterministic low-discrepancy sample set. `seed` != 0 applies a
/// Cranley-Patterson rotation derived from the seed.
std::vector<Eigen::VectorXd> halton_points(int dim, int count, std::uint64_t seed = 0);

/// Halton points mapped into the chart's sampling box.
std::vector<Eigen::VectorXd> sample_chart(const Chart& chart, int count, std::uint64_t seed = 0);

/// Halton points mapped into an explicit box.
std::vector<Eigen::VectorXd> sample_box(const std::vector<Interval>& box, int count, std::uint64_t seed = 0);

/// Reduces periodic coordinates into [0,1).
Eigen::VectorXd wrap_periodic(const Chart& chart, Eigen::VectorXd x);

/// a - b with periodic components wrapped into [-1/2, 1/2).
Eigen::VectorXd periodic_difference(const Chart& chart, const Eigen::VectorXd& a, const Eigen::VectorXd& b);

}  // namespace diracaa
