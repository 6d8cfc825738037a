#include "depgraph/dfe.hpp"

#include "depgraph/errors.hpp"

namespace depgraph {

void DfeConfig::validate() const {
  if (num_scales < 2) throw ConfigError("dfe: mutual attention needs at least two scales");
  if (feature_dim == 0) throw ConfigError("dfe: feature_dim must be positive");
  if (encoder_widths.empty()) throw ConfigError("dfe: encoder needs at least one layer");
  for (auto w : encoder_widths)
    if (w == 0) throw ConfigError("dfe: encoder widths must be positive");
  for (auto w : decoder_widths)
    if (w == 0) throw ConfigError("dfe: decoder widths must be positive");
}

DfeConfig DfeConfig::reference() {
  DfeConfig c;
  c.num_scales = 3;
  c.feature_dim = 2048;
  c.encoder_widths = {1024, 512, 128, 32};
  c.decoder_widths = {128, 512};
  return c;
}

namespace {

void init_square(ParamStore& params, const std::string& name, std::size_t d, Rng& rng) {
  params.init_uniform(name, {d, d}, d, d, rng);
}

void init_mlp(ParamStore& params, const std::string& prefix, std::size_t in, const std::vector<std::size_t>& widths,
              Rng& rng) {
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string name = prefix + std::to_string(i);
    params.init_uniform(name + ".w", {widths[i], in}, in, widths[i], rng);
    params.init_constant(name + ".b", {widths[i]}, 0.0);
    in = widths[i];
  }
}

// Pointwise layers (kernel-size-1 convolutions) with rectifiers between them;
// the last layer stays linear.
ad::Var run_mlp(ad::Var x, Binding& params, const std::string& prefix, std::size_t layers) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = prefix + std::to_string(i);
    x = ad::linear(x, params(name + ".w"), params(name + ".b"));
    if (i + 1 < layers) x = ad::relu(x);
    ad::check_finite(x, name);
  }
  return x;
}

}  // namespace

void init_dfe_params(const DfeConfig& config, ParamStore& params, Rng& rng) {
  config.validate();
  const std::size_t D = config.feature_dim;
  for (std::size_t k = 0; k < config.num_scales; ++k) {
    const std::string nl = "mta.nl" + std::to_string(k) + ".";
    init_square(params, nl + "theta", D, rng);
    init_square(params, nl + "phi", D, rng);
    init_square(params, nl + "g", D, rng);
    const std::string ma = "mta.ma" + std::to_string(k) + ".";
    init_square(params, ma + "beta", D, rng);
    init_square(params, ma + "omega", D, rng);
    init_square(params, ma + "gamma", D, rng);
  }
  const std::size_t F = config.enhanced_dim();
  params.init_uniform("mta.aux.w", {1, F}, F, 1, rng);
  params.init_constant("mta.aux.b", {1}, config.regressor_bias_init);

  init_mlp(params, "ns.dep.", F, config.encoder_widths, rng);
  init_mlp(params, "ns.non.", F, config.encoder_widths, rng);
  std::vector<std::size_t> dec = config.decoder_widths;
  dec.push_back(F);
  init_mlp(params, "ns.dec.", 2 * config.bottleneck(), dec, rng);
  params.init_uniform("ns.reg.w", {1, config.bottleneck()}, config.bottleneck(), 1, rng);
  params.init_constant("ns.reg.b", {1}, config.regressor_bias_init);
}

ad::Var nonlocal_attention(const ad::Var& f, Binding& params, const std::string& prefix) {
  const ad::Var none;
  ad::Var theta = ad::linear(f, params(prefix + "theta"), none);
  ad::Var phi = ad::linear(f, params(prefix + "phi"), none);
  ad::Var g = ad::linear(f, params(prefix + "g"), none);
  ad::Var weights = ad::softmax_rows(ad::outer(theta, phi));
  ad::Var attended = ad::reshape(ad::matmul(weights, ad::reshape(g, Shape{g.size(), 1})), Shape{g.size()});
  return ad::add(f, attended);
}

ad::Var mutual_attention(const ad::Var& f1, const ad::Var& f2, Binding& params, const std::string& prefix) {
  if (f1.shape().size() != 1 || f1.shape() != f2.shape()) {
    throw DomainError("mutual_attention: inputs must be vectors of equal length, got " + shape_to_string(f1.shape()) +
                      " and " + shape_to_string(f2.shape()));
  }
  const ad::Var none;
  ad::Var beta = params(prefix + "beta");
  ad::Var omega = params(prefix + "omega");
  ad::Var l1_a = ad::linear(f1, beta, none);
  ad::Var l2_a = ad::linear(f1, omega, none);
  ad::Var l1_b = ad::linear(f2, beta, none);
  ad::Var l2_b = ad::linear(f2, omega, none);
  // A_1^T A_2 = (l2_a l1_a^T)(l1_b l2_b^T) = (l1_a . l1_b) l2_a l2_b^T; the
  // rank-one form avoids two DxD products.
  ad::Var cross = ad::outer(ad::mul_scalar(l2_a, ad::dot(l1_a, l1_b)), l2_b);
  ad::Var weights = ad::softmax_rows(cross);
  ad::Var value = ad::linear(f1, params(prefix + "gamma"), none);
  ad::Var attended = ad::reshape(ad::matmul(weights, ad::reshape(value, Shape{value.size(), 1})), Shape{value.size()});
  return ad::add(f1, attended);
}

MtaOutput mta_forward(const DfeConfig& config, const MultiScaleFeatures& features, Binding& params) {
  const std::size_t K = features.per_scale.size();
  if (K < 2) throw ConfigError("mta: at least two scales are required, got " + std::to_string(K));
  if (K != config.num_scales) throw ConfigError("mta: feature count does not match configured scales");
  std::vector<ad::Var> local;
  local.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    if (features.per_scale[k].size() != config.feature_dim) throw DomainError("mta: scale feature has wrong length");
    local.push_back(nonlocal_attention(features.per_scale[k], params, "mta.nl" + std::to_string(k) + "."));
  }
  std::vector<ad::Var> enhanced;
  enhanced.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    enhanced.push_back(mutual_attention(local[k], local[(k + 1) % K], params, "mta.ma" + std::to_string(k) + "."));
  }
  MtaOutput out;
  out.enhanced = ad::concat(enhanced);
  ad::check_finite(out.enhanced, "mta");
  out.p_mta = ad::linear(out.enhanced, params("mta.aux.w"), params("mta.aux.b"));
  return out;
}

DisentangledPair ns_forward(const DfeConfig& config, const ad::Var& enhanced, Binding& params) {
  if (enhanced.size() != config.enhanced_dim()) {
    throw DomainError("ns: input length " + std::to_string(enhanced.size()) + " != " +
                      std::to_string(config.enhanced_dim()));
  }
  ad::check_finite(enhanced, "ns.input");
  const std::size_t layers = config.encoder_widths.size();
  DisentangledPair out;
  out.f_dep = run_mlp(enhanced, params, "ns.dep.", layers);
  out.f_non = run_mlp(enhanced, params, "ns.non.", layers);
  out.f_dec = run_mlp(ad::concat({out.f_dep, out.f_non}), params, "ns.dec.", config.decoder_widths.size() + 1);
  out.p_ns = ad::relu(ad::linear(out.f_dep, params("ns.reg.w"), params("ns.reg.b")));
  return out;
}

LossBreakdown LossTerms::values() const {
  LossBreakdown b;
  b.l_ns = l_ns.item();
  b.l_mta = l_mta.item();
  b.l_sim = l_sim.item();
  b.l_dsim = l_dsim.item();
  b.l_rec = l_rec.item();
  b.weights = weights;
  b.l_short = l_short.item();
  return b;
}

LossTerms compute_losses(const std::vector<BatchMember>& batch, const LossWeights& weights) {
  if (batch.empty()) throw DomainError("compute_losses: empty batch");
  const SeverityCategory cat = batch.front().category;
  for (const auto& m : batch) {
    if (m.category != cat) throw DomainError("compute_losses: batch mixes severity categories");
  }
  const double N = static_cast<double>(batch.size());

  std::vector<ad::Var> ns_err, mta_err, dsim, rec;
  for (const auto& m : batch) {
    ns_err.push_back(ad::square(ad::add_scalar(m.ns.p_ns, -m.label)));
    mta_err.push_back(ad::square(ad::add_scalar(m.p_mta, -m.label)));
    dsim.push_back(ad::square(ad::dot(m.ns.f_dep, m.ns.f_non)));
    rec.push_back(ad::sum(ad::square(ad::sub(m.ns.f_dec, m.enhanced))));
  }
  std::vector<ad::Var> sim;
  for (std::size_t n = 0; n < batch.size(); ++n)
    for (std::size_t i = n + 1; i < batch.size(); ++i)
      sim.push_back(ad::sum(ad::square(ad::sub(batch[n].ns.f_dep, batch[i].ns.f_dep))));

  const double J = static_cast<double>(batch.front().enhanced.size());
  LossTerms t;
  t.weights = weights;
  t.l_ns = ad::scale(ad::sum(ad::concat(ns_err)), 1.0 / N);
  t.l_mta = ad::scale(ad::sum(ad::concat(mta_err)), 1.0 / N);
  t.l_sim = sim.empty() ? ad::Var::scalar(0.0) : ad::scale(ad::sum(ad::concat(sim)), 1.0 / (N * N));
  t.l_dsim = ad::scale(ad::sum(ad::concat(dsim)), 1.0 / (N * N));
  t.l_rec = ad::scale(ad::sum(ad::concat(rec)), 1.0 / (N * J));
  t.l_short = ad::add(ad::add(ad::add(ad::add(t.l_ns, ad::scale(t.l_mta, weights.w1)), ad::scale(t.l_sim, weights.w2)),
                              ad::scale(t.l_dsim, weights.w3)),
                      ad::scale(t.l_rec, weights.w4));
  return t;
}

}  // namespace depgraph
