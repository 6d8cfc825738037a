#include "depgraph/metrics.hpp"

#include <cmath>
#include <string>

#include "depgraph/errors.hpp"

namespace depgraph {

MetricsReport compute_metrics(std::span<const double> p, std::span<const double> g) {
  if (p.size() != g.size()) {
    throw DomainError("compute_metrics: " + std::to_string(p.size()) + " predictions for " +
                      std::to_string(g.size()) + " labels");
  }
  if (p.size() < 2) throw DomainError("compute_metrics: need at least 2 samples");
  const std::size_t n = p.size();
  const double nd = static_cast<double>(n);

  MetricsReport r;
  r.n = n;
  double se = 0.0, ae = 0.0, mp = 0.0, mg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = p[i] - g[i];
    se += e * e;
    ae += std::abs(e);
    mp += p[i];
    mg += g[i];
  }
  r.rmse = std::sqrt(se / nd);
  r.mae = ae / nd;
  mp /= nd;
  mg /= nd;

  double vp = 0.0, vg = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = p[i] - mp, dg = g[i] - mg;
    vp += dp * dp;
    vg += dg * dg;
    cov += dp * dg;
  }
  vp /= nd;
  vg /= nd;
  cov /= nd;
  if (vg > 0.0) {
    r.ccc = 2.0 * cov / (vp + vg + (mp - mg) * (mp - mg));
    if (vp > 0.0) {
      double rho = cov / std::sqrt(vp * vg);
      r.pcc = rho > 1.0 ? 1.0 : (rho < -1.0 ? -1.0 : rho);
    }
  }
  return r;
}

}  // namespace depgraph
