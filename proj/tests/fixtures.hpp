#pragma once

// Small configurations shared by the unit and acceptance tests.

#include <vector>

#include "depgraph/config.hpp"
#include "depgraph/corpus.hpp"
#include "depgraph/rng.hpp"
#include "depgraph/short_term.hpp"

namespace fixture {

// A toy short-term model whose widths vary with `variant`, small enough for
// exhaustive finite differences.
inline depgraph::ShortTermConfig tiny_short_term(std::uint64_t variant = 0) {
  depgraph::Rng rng(variant * 7919 + 3);
  depgraph::ShortTermConfig c;
  c.slice_length = 6;
  c.stride = 6;
  c.mtb.slice_length = 6;
  c.mtb.height = 8;
  c.mtb.width = 8;
  c.mtb.channels = 1;
  c.mtb.spatial_factors = {1, 2, 4};
  c.mtb.temporal_factors = {1, 2, 3};
  const std::size_t ch = 1 + rng.index(2);
  c.mtb.conv_channels = {ch, ch + 1, ch};
  c.mtb.encoding_channels = 2 + rng.index(2);
  c.mtb.output_dim = 3 + rng.index(3);
  c.dfe.num_scales = 3;
  c.dfe.feature_dim = c.mtb.output_dim;
  const std::size_t d = 2 + rng.index(3);
  c.dfe.encoder_widths = {6, d};
  c.dfe.decoder_widths = {5};
  c.batch_size = 3;
  c.steps = 10;
  c.seed = 100 + variant;
  return c;
}

inline depgraph::SynthConfig tiny_synth(std::size_t train = 12) {
  depgraph::SynthConfig s;
  s.train_count = train;
  s.validation_count = 2;
  s.test_count = 2;
  s.min_frames = 36;
  s.max_frames = 60;
  s.height = 8;
  s.width = 8;
  s.slice_length = 6;
  return s;
}

inline depgraph::ThinSlice random_slice(const depgraph::ShortTermConfig& c, depgraph::Rng& rng) {
  depgraph::ThinSlice s;
  s.frames = depgraph::Tensor({c.slice_length, c.mtb.height, c.mtb.width, c.mtb.channels});
  for (auto& v : s.frames.data) v = rng.uniform();
  return s;
}

// A whole pipeline run on a synthetic 8x8 corpus; seconds end to end.
inline depgraph::RunConfig tiny_run(const std::string& out_dir, depgraph::Repr repr = depgraph::Repr::spg) {
  depgraph::RunConfig c;
  c.seed = 3;
  c.out_dir = out_dir;
  c.threads = 1;
  c.corpus.synth = tiny_synth(12);
  c.short_term = tiny_short_term(0);
  c.short_term.steps = 20;
  c.encoder.repr = repr;
  c.encoder.spectral.grid_bins = 32;
  c.encoder.spectral.top_k = 8;
  c.head.hidden = 6;
  c.head.fc = {8, 4, 1};
  c.head.conv_channels = {2, 2};
  c.head.train.epochs = 4;
  return c;
}

}  // namespace fixture
