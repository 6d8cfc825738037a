#include "depgraph/mtb.hpp"

#include "depgraph/errors.hpp"

namespace depgraph {

void MtbConfig::validate() const {
  const std::size_t k = num_branches();
  if (k < 1) throw ConfigError("mtb: at least one branch is required");
  if (spatial_factors.size() != k || conv_channels.size() != k) {
    throw ConfigError("mtb: spatial_factors, temporal_factors and conv_channels must have one entry per branch");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (temporal_factors[i] == 0 || slice_length % temporal_factors[i] != 0) {
      throw ConfigError("mtb: temporal factor " + std::to_string(temporal_factors[i]) +
                        " does not divide slice length " + std::to_string(slice_length));
    }
    if (i > 0 && temporal_factors[i] <= temporal_factors[i - 1]) {
      throw ConfigError("mtb: temporal factors must be strictly increasing");
    }
    if (spatial_factors[i] == 0 || height % spatial_factors[i] != 0 || width % spatial_factors[i] != 0) {
      throw ConfigError("mtb: spatial factor " + std::to_string(spatial_factors[i]) + " does not divide frame size");
    }
    if (conv_channels[i] == 0) throw ConfigError("mtb: conv channel width must be positive");
  }
  if (conv_depth == 0 || conv_kernel % 2 == 0 || temporal_kernel % 2 == 0) {
    throw ConfigError("mtb: conv depth must be positive and kernels odd");
  }
  if (output_dim == 0 || encoding_channels == 0) throw ConfigError("mtb: output_dim and encoding_channels must be > 0");
  if (slice_length == 0 || channels == 0) throw ConfigError("mtb: empty slice geometry");
}

MtbConfig MtbConfig::reference() {
  MtbConfig c;
  c.height = 112;
  c.width = 112;
  c.channels = 3;
  c.spatial_factors = {1, 2, 4};
  c.temporal_factors = {1, 2, 3};
  c.conv_channels = {256, 512, 2048};
  c.encoding_channels = 1024;
  c.output_dim = 2048;
  return c;
}

std::string mtb_branch_prefix(std::size_t branch) { return "mtb.b" + std::to_string(branch) + "."; }

void init_mtb_params(const MtbConfig& config, ParamStore& params, Rng& rng) {
  config.validate();
  const std::size_t k3 = config.conv_kernel * config.conv_kernel * config.conv_kernel;
  const std::size_t E = config.encoding_channels;
  for (std::size_t b = 0; b < config.num_branches(); ++b) {
    const std::string p = mtb_branch_prefix(b);
    std::size_t in = config.channels;
    for (std::size_t d = 0; d < config.conv_depth; ++d) {
      const std::size_t out = config.conv_channels[b];
      const std::string name = p + "conv" + std::to_string(d);
      params.init_uniform(name + ".w", {out, in, config.conv_kernel, config.conv_kernel, config.conv_kernel},
                          in * k3, out * k3, rng);
      params.init_constant(name + ".b", {out}, 0.0);
      in = out;
    }
    params.init_uniform(p + "spatial.w", {E, in, 1, 1, 1}, in, E, rng);
    params.init_constant(p + "spatial.b", {E}, 0.0);
    params.init_uniform(p + "temporal.w", {E, E, config.temporal_kernel}, E * config.temporal_kernel,
                        E * config.temporal_kernel, rng);
    params.init_constant(p + "temporal.b", {E}, 0.0);
    const std::size_t flat = (config.slice_length / config.temporal_factors[b]) * E;
    params.init_uniform(p + "proj.w", {config.output_dim, flat}, flat, config.output_dim, rng);
    params.init_constant(p + "proj.b", {config.output_dim}, 0.0);
  }
}

ad::Var slice_volume(const ThinSlice& slice) {
  const Tensor& f = slice.frames;
  if (f.rank() != 4) throw DomainError("slice frames must be [L,H,W,C]");
  const std::size_t L = f.dim(0), H = f.dim(1), W = f.dim(2), C = f.dim(3);
  std::vector<double> vol(f.size());
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c) vol[((c * L + t) * H + h) * W + w] = f.data[((t * H + h) * W + w) * C + c];
  return ad::Var::constant(Shape{C, L, H, W}, std::move(vol));
}

MultiScaleFeatures mtb_forward(const MtbConfig& config, const ad::Var& volume, Binding& params) {
  const Shape expected{config.channels, config.slice_length, config.height, config.width};
  if (volume.shape() != expected) {
    throw DomainError("mtb: slice volume " + shape_to_string(volume.shape()) + " does not match configured " +
                      shape_to_string(expected));
  }
  MultiScaleFeatures out;
  for (std::size_t b = 0; b < config.num_branches(); ++b) {
    const std::string p = mtb_branch_prefix(b);
    ad::Var x = ad::avg_pool_spatial(volume, config.spatial_factors[b]);
    for (std::size_t d = 0; d < config.conv_depth; ++d) {
      const std::string name = p + "conv" + std::to_string(d);
      x = ad::relu(ad::conv3d(x, params(name + ".w"), params(name + ".b")));
      ad::check_finite(x, name);
    }
    // Spatial encoding: pointwise channel alignment, then spatial pooling.
    x = ad::relu(ad::conv3d(x, params(p + "spatial.w"), params(p + "spatial.b")));
    ad::Var seq = ad::spatial_mean(x);  // [L, E]
    ad::check_finite(seq, p + "spatial");
    seq = ad::temporal_mean_pool(seq, config.temporal_factors[b]);
    seq = ad::relu(ad::conv1d(seq, params(p + "temporal.w"), params(p + "temporal.b")));
    ad::check_finite(seq, p + "temporal");
    ad::Var flat = ad::reshape(seq, Shape{seq.size()});
    ad::Var f = ad::linear(flat, params(p + "proj.w"), params(p + "proj.b"));
    ad::check_finite(f, p + "proj");
    out.per_scale.push_back(f);
  }
  return out;
}

MultiScaleFeatures mtb_forward(const MtbConfig& config, const ThinSlice& slice, Binding& params) {
  return mtb_forward(config, slice_volume(slice), params);
}

std::vector<double> temporal_downsample(const std::vector<double>& seq, std::size_t width, std::size_t factor) {
  if (width == 0 || seq.size() % width != 0) throw DomainError("temporal_downsample: ragged sequence");
  const std::size_t t = seq.size() / width;
  if (factor == 0 || t % factor != 0) {
    throw DomainError("temporal_downsample: factor " + std::to_string(factor) + " does not divide length " +
                      std::to_string(t));
  }
  ad::NoGradGuard guard;
  return ad::temporal_mean_pool(ad::Var::constant(Shape{t, width}, seq), factor).value();
}

}  // namespace depgraph
