#pragma once

// Multi-scale temporal behavioural backbone: K parallel branches, each seeing
// the thin slice at its own spatial resolution and temporal rate.

#include <string>
#include <vector>

#include "depgraph/autodiff.hpp"
#include "depgraph/corpus.hpp"
#include "depgraph/params.hpp"

namespace depgraph {

struct MtbConfig {
  std::size_t slice_length = 30;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  // Per-branch spatial downsampling (scale 1/factor) and temporal pooling factors.
  std::vector<std::size_t> spatial_factors{1, 2, 4};
  std::vector<std::size_t> temporal_factors{1, 3, 6};
  std::vector<std::size_t> conv_channels{4, 4, 4};
  std::size_t conv_depth = 1;
  std::size_t conv_kernel = 3;
  std::size_t encoding_channels = 8;
  std::size_t temporal_kernel = 3;
  std::size_t output_dim = 64;

  std::size_t num_branches() const { return temporal_factors.size(); }
  void validate() const;
  // Dimensions of the large backbone (112x112 RGB faces, 2048-d per scale).
  static MtbConfig reference();
};

struct MultiScaleFeatures {
  std::vector<ad::Var> per_scale;  // K vectors of length D
};

std::string mtb_branch_prefix(std::size_t branch);
void init_mtb_params(const MtbConfig& config, ParamStore& params, Rng& rng);

// [L,H,W,C] slice -> constant [C,L,H,W] volume.
ad::Var slice_volume(const ThinSlice& slice);

MultiScaleFeatures mtb_forward(const MtbConfig& config, const ad::Var& volume, Binding& params);
MultiScaleFeatures mtb_forward(const MtbConfig& config, const ThinSlice& slice, Binding& params);

// Mean pooling of a time-major sequence [t x width] by `factor`.
std::vector<double> temporal_downsample(const std::vector<double>& seq, std::size_t width, std::size_t factor);

}  // namespace depgraph
