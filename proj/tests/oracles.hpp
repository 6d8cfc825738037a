#pragma once

// Independent reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "depgraph/params.hpp"
#include "depgraph/rng.hpp"
#include "depgraph/tensor.hpp"

namespace oracle {

constexpr double kPi = 3.14159265358979323846;

// |X_k| / S for k = 0..floor(S/2) by the O(S^2) definition.
inline std::vector<double> naive_amplitudes(const std::vector<double>& x) {
  const std::size_t S = x.size();
  std::vector<double> amp(S / 2 + 1);
  for (std::size_t k = 0; k < amp.size(); ++k) {
    long double re = 0, im = 0;
    for (std::size_t t = 0; t < S; ++t) {
      const long double ang = -2.0L * kPi * static_cast<long double>((k * t) % S) / static_cast<long double>(S);
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    amp[k] = static_cast<double>(std::sqrt(re * re + im * im) / S);
  }
  return amp;
}

// Resamples the amplitude spectrum on B bins over [0, 0.5]: bin 0 keeps the
// DC amplitude, AC bins interpolate between neighbouring DFT frequencies with
// the DC sample taken as 0, and bins past the last frequency hold its value.
inline std::vector<double> grid_spectrum(const std::vector<double>& x, std::size_t B, std::size_t K) {
  const std::size_t S = x.size();
  const auto amp = naive_amplitudes(x);
  std::vector<double> freq(amp.size()), val(amp);
  for (std::size_t k = 0; k < amp.size(); ++k) freq[k] = static_cast<double>(k) / static_cast<double>(S);
  val[0] = 0.0;
  std::vector<double> out(K);
  out[0] = amp[0];
  for (std::size_t b = 1; b < K; ++b) {
    const double f = 0.5 * static_cast<double>(b) / static_cast<double>(B - 1);
    if (f >= freq.back()) {
      out[b] = val.back();
      continue;
    }
    std::size_t k = 0;
    while (!(freq[k] <= f && f < freq[k + 1])) ++k;
    const double w = (f - freq[k]) / (freq[k + 1] - freq[k]);
    out[b] = (1.0 - w) * val[k] + w * val[k + 1];
  }
  return out;
}

// Moves every zero-initialised bias (names ending in ".b" or ".bias") to a
// small positive value. Zero biases leave rectifier inputs exactly on the kink wherever all
// upstream activations were clipped, and tiny toy layers can die outright;
// both make finite differences meaningless for the affected tensors.
inline void jitter_biases(depgraph::ParamStore& params, depgraph::Rng& rng, double lo = 0.05, double hi = 0.2) {
  for (const auto& name : params.names()) {
    const bool bias = name.ends_with(".b") || name.ends_with(".bias");
    if (!bias) continue;
    for (double& v : params.at(name).data)
      if (v == 0.0) v = rng.uniform(lo, hi);
  }
}

struct GradReport {
  double worst = 0.0;  // largest per-tensor relative error
  std::string worst_name;
  std::size_t checked = 0;
};

// Compares analytic gradients against fourth-order central differences,
// tensor by tensor: ||g_a - g_n|| / max(||g_a||, ||g_n||, floor). At most
// `per_tensor` entries (evenly spaced) are probed per tensor; 0 probes every
// entry. The wide stencil keeps truncation error negligible at a step large
// enough that rounding does not swamp tensors with very small gradients.
inline GradReport check_gradients(depgraph::ParamStore& params, const depgraph::Gradients& analytic,
                                  const std::function<double(const depgraph::ParamStore&)>& loss,
                                  std::size_t per_tensor = 0, double h = 3e-6, double floor = 1e-12) {
  GradReport r;
  for (const auto& name : params.names()) {
    auto& data = params.at(name).data;
    const auto& ga = analytic.at(name);
    const std::size_t n = data.size();
    const std::size_t count = per_tensor == 0 ? n : std::min(n, per_tensor);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t i = count == n ? c : (c * n) / count;
      const double keep = data[i];
      auto at = [&](double offset) {
        data[i] = keep + offset;
        return loss(params);
      };
      const double near = at(h) - at(-h), far = at(2 * h) - at(-2 * h);
      const double num = (8 * near - far) / (12 * h);
      data[i] = keep;
      diff2 += (num - ga[i]) * (num - ga[i]);
      a2 += ga[i] * ga[i];
      n2 += num * num;
      ++r.checked;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor});
    if (rel > r.worst) {
      r.worst = rel;
      r.worst_name = name;
    }
  }
  return r;
}

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major rows

inline Mat to_mat(const depgraph::Tensor& t) {
  Mat m(t.dim(0), Vec(t.dim(1)));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = t.data[i * t.dim(1) + j];
  return m;
}

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += w[i][j] * x[j];
  return y;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), Vec(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

// Column vector x as a D x 1 matrix and its transpose.
inline Mat column(const Vec& x) {
  Mat m;
  for (double v : x) m.push_back({v});
  return m;
}
inline Mat row(const Vec& x) { return {x}; }

inline Mat softmax_rows(const Mat& a) {
  Mat s = a;
  for (auto& r : s) {
    double mx = r[0];
    for (double v : r) mx = std::max(mx, v);
    double z = 0.0;
    for (double& v : r) z += (v = std::exp(v - mx));
    for (double& v : r) v /= z;
  }
  return s;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec c(a);
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

inline Vec mat_as_vec(const Mat& column_matrix) {
  Vec v;
  for (const auto& r : column_matrix) v.push_back(r[0]);
  return v;
}

// Mutual attention written as the literal chain of D x D matrix products:
// L1_i = beta f_i, L2_i = omega f_i, A_i = (L1_i)^T (L2_i) with L as 1 x D
// rows, A = A_1^T A_2, out = f1 + softmax_rows(A) (gamma f1).
inline Vec mutual_attention(const Vec& f1, const Vec& f2, const Mat& beta, const Mat& omega, const Mat& gamma) {
  const Mat A1 = matmul(transpose(row(matvec(beta, f1))), row(matvec(omega, f1)));
  const Mat A2 = matmul(transpose(row(matvec(beta, f2))), row(matvec(omega, f2)));
  const Mat A = matmul(transpose(A1), A2);
  return add(f1, mat_as_vec(matmul(softmax_rows(A), column(matvec(gamma, f1)))));
}

// f + softmax(theta(f) phi(f)^T) g(f)
inline Vec nonlocal(const Vec& f, const Mat& theta, const Mat& phi, const Mat& g) {
  const Mat A = matmul(column(matvec(theta, f)), row(matvec(phi, f)));
  return add(f, mat_as_vec(matmul(softmax_rows(A), column(matvec(g, f)))));
}

inline Vec relu(Vec x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

// Dense layers from a ParamStore: prefix{i}.w / .b, rectifier between layers.
inline Vec dense_stack(const depgraph::ParamStore& p, const std::string& prefix, std::size_t layers, Vec x) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string n = prefix + std::to_string(i);
    x = add(matvec(to_mat(p.at(n + ".w")), x), p.at(n + ".b").data);
    if (i + 1 < layers) x = relu(x);
  }
  return x;
}

struct LossOracle {
  double l_ns, l_mta, l_sim, l_dsim, l_rec;
};

struct MemberValues {
  Vec f_dep, f_non, f_dec, enhanced;
  double p_ns, p_mta, label;
};

// Straight-line loss formulas: mean squared errors for both predictions,
// (1/N^2) sum over unordered pairs of squared feature distances, (1/N^2) sum
// of squared dep.non products, and (1/(N J)) summed reconstruction error.
inline LossOracle losses(const std::vector<MemberValues>& batch) {
  const double N = static_cast<double>(batch.size());
  LossOracle o{0, 0, 0, 0, 0};
  for (const auto& m : batch) {
    o.l_ns += (m.p_ns - m.label) * (m.p_ns - m.label) / N;
    o.l_mta += (m.p_mta - m.label) * (m.p_mta - m.label) / N;
    double d = 0.0;
    for (std::size_t j = 0; j < m.f_dep.size(); ++j) d += m.f_dep[j] * m.f_non[j];
    o.l_dsim += d * d / (N * N);
    const double J = static_cast<double>(m.enhanced.size());
    for (std::size_t j = 0; j < m.enhanced.size(); ++j)
      o.l_rec += (m.f_dec[j] - m.enhanced[j]) * (m.f_dec[j] - m.enhanced[j]) / (N * J);
  }
  for (std::size_t n = 0; n < batch.size(); ++n)
    for (std::size_t i = n + 1; i < batch.size(); ++i)
      for (std::size_t j = 0; j < batch[n].f_dep.size(); ++j) {
        const double e = batch[n].f_dep[j] - batch[i].f_dep[j];
        o.l_sim += e * e / (N * N);
      }
  return o;
}

// Graph attention forward pass with explicit loops over vertex pairs.
// masks[r][i*n + j] != 0 when target i may attend to source j.
inline double gat(const depgraph::Matrix& x, const std::vector<std::vector<std::uint8_t>>& masks,
                  const depgraph::ParamStore& p, std::size_t heads, double slope) {
  const std::size_t n = x.rows;
  Mat layer(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = "gat.h" + std::to_string(h);
    const Vec& bias = p.at(hp + ".bias").data;
    Mat head(n, bias);
    for (std::size_t r = 0; r < masks.size(); ++r) {
      const std::string rp = hp + ".r" + std::to_string(r) + ".";
      const Mat W = to_mat(p.at(rp + "W"));
      const Vec& a_src = p.at(rp + "a_src").data;
      const Vec& a_dst = p.at(rp + "a_dst").data;
      Mat z(n);
      for (std::size_t i = 0; i < n; ++i) z[i] = matvec(W, x.row(i));
      for (std::size_t i = 0; i < n; ++i) {
        Vec e(n, 0.0);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          if (!masks[r][i * n + j]) continue;
          double v = 0.0;
          for (std::size_t k = 0; k < z[i].size(); ++k) v += a_dst[k] * z[i][k] + a_src[k] * z[j][k];
          e[j] = v > 0.0 ? v : slope * v;
          mx = std::max(mx, e[j]);
        }
        double zsum = 0.0;
        for (std::size_t j = 0; j < n; ++j)
          if (masks[r][i * n + j]) zsum += std::exp(e[j] - mx);
        for (std::size_t j = 0; j < n; ++j) {
          if (!masks[r][i * n + j]) continue;
          const double alpha = std::exp(e[j] - mx) / zsum;
          for (std::size_t k = 0; k < z[j].size(); ++k) head[i][k] += alpha * z[j][k];
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) layer[i].insert(layer[i].end(), head[i].begin(), head[i].end());
  }
  Vec pooled(layer[0].size(), 0.0);
  for (const auto& rowv : layer)
    for (std::size_t k = 0; k < rowv.size(); ++k) pooled[k] += std::max(rowv[k], 0.0) / static_cast<double>(n);
  const Vec out = dense_stack(p, "fc", 3, pooled);
  return out[0];
}

// Metrics by the sum-of-products formulas in extended precision. pcc/ccc are
// NaN where undefined.
struct MetricsOracle {
  double rmse, mae, pcc, ccc;
};

inline MetricsOracle metrics(const std::vector<double>& p, const std::vector<double>& g) {
  const long double n = static_cast<long double>(p.size());
  long double sp = 0, sg = 0, spp = 0, sgg = 0, spg = 0, se = 0, sa = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double a = p[i], b = g[i];
    sp += a;
    sg += b;
    spp += a * a;
    sgg += b * b;
    spg += a * b;
    se += (a - b) * (a - b);
    sa += std::fabs(a - b);
  }
  MetricsOracle m{};
  m.rmse = static_cast<double>(std::sqrt(se / n));
  m.mae = static_cast<double>(sa / n);
  const long double mp = sp / n, mg = sg / n;
  const long double vp = spp / n - mp * mp, vg = sgg / n - mg * mg;
  const long double num = n * spg - sp * sg;
  const long double den = std::sqrt((n * spp - sp * sp) * (n * sgg - sg * sg));
  const long double rho = num / den;
  m.pcc = den > 0 ? static_cast<double>(rho) : std::nan("");
  m.ccc = vg > 0 ? static_cast<double>(2 * rho * std::sqrt(vp) * std::sqrt(vg) / (vp + vg + (mp - mg) * (mp - mg)))
                 : std::nan("");
  if (vg > 0 && !(den > 0)) m.ccc = 0.0;
  return m;
}

}  // namespace oracle
