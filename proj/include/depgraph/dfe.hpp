#pragma once

// Depression feature enhancement: mutual temporal attention across scales,
// then noise separation into depression / non-depression components.

#include <string>
#include <vector>

#include "depgraph/autodiff.hpp"
#include "depgraph/corpus.hpp"
#include "depgraph/mtb.hpp"
#include "depgraph/params.hpp"

namespace depgraph {

struct DfeConfig {
  std::size_t num_scales = 3;    // K
  std::size_t feature_dim = 64;  // D
  // Encoder layer widths; the last entry is the bottleneck d.
  std::vector<std::size_t> encoder_widths{64, 32, 16, 8};
  // Hidden decoder widths; a final layer back to K*D is always appended.
  std::vector<std::size_t> decoder_widths{16, 32, 64};
  // Initial regressor bias, in label units.
  double regressor_bias_init = 0.5;

  std::size_t enhanced_dim() const { return num_scales * feature_dim; }
  std::size_t bottleneck() const { return encoder_widths.back(); }
  void validate() const;
  static DfeConfig reference();
};

void init_dfe_params(const DfeConfig& config, ParamStore& params, Rng& rng);

// Non-local self attention on one scale: f + softmax(theta(f)^T phi(f)) g(f).
ad::Var nonlocal_attention(const ad::Var& f, Binding& params, const std::string& prefix);

// Mutual attention of f1 guided by f2 with projections beta, omega, gamma:
//   L1_i = beta f_i, L2_i = omega f_i, A_i = L1_i^T L2_i (outer product of row vectors)
//   A = A_1^T A_2,  out = f1 + softmax_rows(A) gamma(f1)
ad::Var mutual_attention(const ad::Var& f1, const ad::Var& f2, Binding& params, const std::string& prefix);

struct MtaOutput {
  ad::Var enhanced;  // F, length K*D
  ad::Var p_mta;     // auxiliary prediction, shape {1}
};

// Per-scale non-local blocks, then mutual attention over the cyclic pairs
// (f1,f2), (f2,f3), ..., (fK,f1).
MtaOutput mta_forward(const DfeConfig& config, const MultiScaleFeatures& features, Binding& params);

struct DisentangledPair {
  ad::Var f_dep;
  ad::Var f_non;
  ad::Var f_dec;
  ad::Var p_ns;
};

DisentangledPair ns_forward(const DfeConfig& config, const ad::Var& enhanced, Binding& params);

struct LossWeights {
  double w1 = 1.0;  // auxiliary MTA regression
  double w2 = 1.0;  // within-category similarity
  double w3 = 1.0;  // dep/non-dep orthogonality
  double w4 = 1.0;  // reconstruction
};

struct LossBreakdown {
  double l_ns = 0.0;
  double l_mta = 0.0;
  double l_sim = 0.0;
  double l_dsim = 0.0;
  double l_rec = 0.0;
  LossWeights weights;
  double l_short = 0.0;
};

// One slice's worth of short-term outputs together with its target.
struct BatchMember {
  DisentangledPair ns;
  ad::Var p_mta;
  ad::Var enhanced;
  SeverityCategory category = SeverityCategory::minimal;
  double label = 0.0;
};

struct LossTerms {
  ad::Var l_ns, l_mta, l_sim, l_dsim, l_rec, l_short;
  LossBreakdown values() const;
  LossWeights weights;
};

// Throws DomainError for an empty batch or one that mixes categories.
LossTerms compute_losses(const std::vector<BatchMember>& batch, const LossWeights& weights);

}  // namespace depgraph
