#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depgraph/corpus.hpp"
#include "depgraph/metrics.hpp"

namespace depgraph {

struct PredictionRecord {
  std::string id;
  Split split = Split::train;
  double label = 0.0;
  double prediction = 0.0;
  double atp = 0.0;  // mean slice-level prediction of the same video

  bool operator==(const PredictionRecord&) const = default;
};

struct EvaluationReport {
  std::string repr;
  std::string fingerprint;  // hex stage fingerprint of the evaluated model
  std::map<std::string, MetricsReport> metrics;      // by split name
  std::map<std::string, MetricsReport> atp_metrics;  // slice-average baseline
  std::optional<double> disentanglement;  // mean |cos(F_dep, F_non)| over test slices
  std::vector<PredictionRecord> predictions;

  bool operator==(const EvaluationReport&) const = default;
};

std::string report_to_json(const EvaluationReport& report);
EvaluationReport parse_report(const std::string& text);
void emit_report(const EvaluationReport& report, const std::filesystem::path& path);
EvaluationReport read_report(const std::filesystem::path& path);

// SVG scatter of prediction (y) against ground truth (x) with the identity line.
std::string scatter_plot_svg(std::span<const double> predictions, std::span<const double> labels,
                             const std::string& title = "");
void emit_scatter_plot(std::span<const double> predictions, std::span<const double> labels,
                       const std::filesystem::path& path, const std::string& title = "");

}  // namespace depgraph
