#pragma once

#include <cstddef>
#include <optional>
#include <span>

namespace depgraph {

// Correlation terms are empty when they are undefined (constant series).
struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> pcc;
  std::optional<double> ccc;
  std::size_t n = 0;

  bool operator==(const MetricsReport&) const = default;
};

// Population moments throughout. pcc is undefined when either series is
// constant; ccc is undefined when the ground truth is constant.
MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> ground_truth);

}  // namespace depgraph
