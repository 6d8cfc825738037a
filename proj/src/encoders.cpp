#include "depgraph/encoders.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "depgraph/errors.hpp"

namespace depgraph {

namespace {

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

std::vector<double> amplitude_spectrum(std::span<const double> series) {
  const std::size_t S = series.size();
  if (S < 2) throw DomainError("spectral encoding needs at least 2 samples, got " + std::to_string(S));
  const std::size_t bins = S / 2 + 1;
  std::vector<double> in(series.begin(), series.end());
  std::vector<std::complex<double>> out(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(S), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  std::vector<double> amp(bins);
  const double inv = 1.0 / static_cast<double>(S);
  for (std::size_t k = 0; k < bins; ++k) amp[k] = std::abs(out[k]) * inv;
  return amp;
}

std::vector<double> spectral_encode_series(std::span<const double> series, std::size_t grid_bins, std::size_t top_k,
                                           bool remove_mean) {
  const std::size_t S = series.size();
  if (S < 2) throw DomainError("spectral encoding needs at least 2 samples, got " + std::to_string(S));
  if (grid_bins < 2) throw DomainError("spectral grid needs at least 2 bins");
  if (top_k == 0 || top_k > grid_bins) throw DomainError("top_k must lie in [1, grid_bins]");

  std::vector<double> x(series.begin(), series.end());
  if (remove_mean) {
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(S);
    for (double& v : x) v -= mu;
  }
  const std::vector<double> amp = amplitude_spectrum(x);
  const std::size_t last = amp.size() - 1;  // highest index, frequency last / S
  const double Sd = static_cast<double>(S);

  // The DC term belongs to grid bin 0 alone; every other bin interpolates the
  // AC spectrum, so a constant series yields exactly one non-zero bin.
  auto at = [&](std::size_t k) { return k == 0 ? 0.0 : amp[k]; };
  std::vector<double> out(top_k);
  out[0] = amp[0];
  for (std::size_t b = 1; b < top_k; ++b) {
    const double f = 0.5 * static_cast<double>(b) / static_cast<double>(grid_bins - 1);
    const double pos = f * Sd;  // fractional spectrum index
    if (pos >= static_cast<double>(last)) {
      out[b] = amp[last];
      continue;
    }
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(k);
    out[b] = at(k) + frac * (at(k + 1) - at(k));
  }
  return out;
}

std::vector<double> spectral_encode_series(std::span<const double> series, const SpectralConfig& config) {
  return spectral_encode_series(series, config.grid_bins, config.top_k, config.remove_mean);
}

SpectralGraph build_spg(const SliceFeatureMatrix& feats, const SpectralConfig& config) {
  const std::size_t S = feats.num_slices(), M = feats.dim();
  if (S < 2) throw DomainError("build_spg: video '" + feats.parent_id + "' has fewer than 2 slices");
  SpectralGraph g;
  g.vertex_features = Matrix(M, config.top_k);
  for (std::size_t m = 0; m < M; ++m) {
    const std::vector<double> col = feats.values.column(m);
    const std::vector<double> enc = spectral_encode_series(col, config);
    std::copy(enc.begin(), enc.end(), g.vertex_features.data.begin() + static_cast<std::ptrdiff_t>(m * config.top_k));
  }
  g.adjacency.assign(M * M, 1);
  for (std::size_t m = 0; m < M; ++m) g.adjacency[m * M + m] = 0;
  g.channel_ids.resize(M);
  for (std::size_t m = 0; m < M; ++m) g.channel_ids[m] = static_cast<std::int32_t>(m);
  return g;
}

SequentialGraph build_seg(const SliceFeatureMatrix& feats, const std::vector<std::size_t>& windows) {
  if (feats.num_slices() < 1) throw DomainError("build_seg: empty feature matrix");
  if (windows.empty()) throw DomainError("build_seg: window set is empty");
  for (auto w : windows)
    if (w == 0) throw DomainError("build_seg: windows must be positive");
  SequentialGraph g;
  g.vertex_features = feats.values;
  g.windows = windows;
  const std::size_t S = feats.num_slices();
  for (std::size_t w : windows) {
    for (std::size_t i = 0; i + w < S; ++i) {
      g.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i + w), static_cast<std::uint32_t>(w)});
    }
  }
  return g;
}

double aggregate_atp(std::span<const double> slice_predictions) {
  if (slice_predictions.empty()) throw DomainError("aggregate_atp: no slice predictions");
  double s = 0.0;
  for (double p : slice_predictions) s += p;
  return s / static_cast<double>(slice_predictions.size());
}

std::vector<double> series_statistics(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("series statistics need at least 2 samples");
  const double nd = static_cast<double>(n);
  double mean = 0.0, sq = 0.0;
  for (double v : x) {
    mean += v;
    sq += v * v;
  }
  mean /= nd;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  const double sd = std::sqrt(m2);
  const auto [mn_it, mx_it] = std::minmax_element(x.begin(), x.end());
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  double lag = 0.0, absdiff = 0.0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    lag += (x[t] - mean) * (x[t + 1] - mean);
    absdiff += std::abs(x[t + 1] - x[t]);
  }
  // Least-squares slope against t = 0..n-1.
  const double tmean = (nd - 1.0) / 2.0;
  double stt = 0.0, sty = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tmean;
    stt += dt * dt;
    sty += dt * (x[t] - mean);
  }
  const bool flat = m2 <= 0.0;
  return {mean,
          sd,
          *mn_it,
          *mx_it,
          *mx_it - *mn_it,
          median,
          flat ? 0.0 : m3 / (sd * sd * sd),
          flat ? 0.0 : m4 / (m2 * m2),
          std::sqrt(sq / nd),
          flat ? 0.0 : lag / (m2 * nd),
          absdiff / (nd - 1.0),
          sty / stt};
}

std::vector<double> aggregate_sta(const SliceFeatureMatrix& feats) {
  if (feats.num_slices() < 2) throw DomainError("aggregate_sta: needs at least 2 slices");
  std::vector<double> out;
  out.reserve(kNumStatistics * feats.dim());
  for (std::size_t m = 0; m < feats.dim(); ++m) {
    const auto stats = series_statistics(feats.values.column(m));
    out.insert(out.end(), stats.begin(), stats.end());
  }
  return out;
}

std::vector<double> aggregate_spv(const SliceFeatureMatrix& feats, const SpectralConfig& config) {
  return build_spg(feats, config).vertex_features.data;
}

SpectralHeatmap aggregate_sph(const SliceFeatureMatrix& feats, const SpectralConfig& config) {
  return {build_spg(feats, config).vertex_features};
}

}  // namespace depgraph
