#pragma once

// Video-level encoders: spectral graph (SPG), sequential graph (SEG) and the
// ATP / STA / SPV / SPH aggregation baselines.

#include <cstdint>
#include <span>
#include <vector>

#include "depgraph/corpus.hpp"
#include "depgraph/tensor.hpp"

namespace depgraph {

struct SpectralConfig {
  std::size_t grid_bins = 128;  // B, uniform over normalized frequency [0, 0.5]
  std::size_t top_k = 24;       // K_f lowest grid bins kept
  bool remove_mean = false;
};

// |X_k| / S for k = 0 .. floor(S/2), computed with an FFT.
std::vector<double> amplitude_spectrum(std::span<const double> series);

// Amplitude spectrum resampled onto the common frequency grid, first top_k bins.
// Grid bin b sits at frequency 0.5 * b / (B - 1). Bin 0 is the DC amplitude;
// bins b >= 1 interpolate linearly between DFT frequencies k / S with the DC
// term treated as zero, and bins above the highest available frequency take
// its amplitude.
std::vector<double> spectral_encode_series(std::span<const double> series, std::size_t grid_bins, std::size_t top_k,
                                           bool remove_mean = false);
std::vector<double> spectral_encode_series(std::span<const double> series, const SpectralConfig& config);

struct SpectralGraph {
  Matrix vertex_features;                // [M x K_f]
  std::vector<std::uint8_t> adjacency;   // [M x M], complete, zero diagonal
  std::vector<std::int32_t> channel_ids;

  std::size_t num_vertices() const { return vertex_features.rows; }
};

struct SequentialEdge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint32_t window = 0;
  bool operator==(const SequentialEdge&) const = default;
};

struct SequentialGraph {
  Matrix vertex_features;  // [S x M]
  std::vector<SequentialEdge> edges;
  std::vector<std::size_t> windows;

  std::size_t num_vertices() const { return vertex_features.rows; }
};

struct SpectralHeatmap {
  Matrix values;  // [M x K_f]
};

SpectralGraph build_spg(const SliceFeatureMatrix& feats, const SpectralConfig& config);
SequentialGraph build_seg(const SliceFeatureMatrix& feats, const std::vector<std::size_t>& windows);

double aggregate_atp(std::span<const double> slice_predictions);

inline constexpr std::size_t kNumStatistics = 12;
// mean, population std, min, max, range, median, skewness, kurtosis, rms,
// lag-1 autocorrelation, mean absolute first difference, linear-trend slope.
std::vector<double> series_statistics(std::span<const double> series);
std::vector<double> aggregate_sta(const SliceFeatureMatrix& feats);

std::vector<double> aggregate_spv(const SliceFeatureMatrix& feats, const SpectralConfig& config);
SpectralHeatmap aggregate_sph(const SliceFeatureMatrix& feats, const SpectralConfig& config);

}  // namespace depgraph
