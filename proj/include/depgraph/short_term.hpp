#pragma once

// Short-term stage: trains MTB + DFE on category-homogeneous slice batches and
// extracts per-slice depression features from whole videos.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "depgraph/corpus.hpp"
#include "depgraph/dfe.hpp"
#include "depgraph/mtb.hpp"
#include "depgraph/params.hpp"

namespace depgraph {

struct ShortTermConfig {
  MtbConfig mtb;
  DfeConfig dfe;
  LossWeights weights;
  AdamConfig adam{1e-3};
  std::size_t batch_size = 5;
  std::size_t steps = 600;
  std::size_t slice_length = 30;
  std::size_t stride = 30;
  // Labels enter the losses as bdi / label_scale.
  double label_scale = 63.0;
  // Subtract each pixel's mean over the slice before the backbone, so static
  // appearance does not swamp the motion content.
  bool center_frames = true;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SliceOutput {
  MultiScaleFeatures scales;
  MtaOutput mta;
  DisentangledPair ns;
};

void init_short_term_params(const ShortTermConfig& config, ParamStore& params, Rng& rng);
ParamStore init_short_term_params(const ShortTermConfig& config);

// [C,L,H,W] volume with every pixel's temporal mean removed.
ad::Var center_volume(const ad::Var& volume);
// Builds the backbone input for a slice, centred when the config asks for it.
ad::Var backbone_input(const ShortTermConfig& config, const ThinSlice& slice);

SliceOutput forward_slice(const ShortTermConfig& config, const ThinSlice& slice, Binding& params);
SliceOutput forward_slice(const ShortTermConfig& config, const ad::Var& volume, Binding& params);

struct LabeledSlice {
  ThinSlice slice;
  int bdi = 0;
};

// Loss and gradient of L_short for one batch under the given parameters.
struct BatchEvaluation {
  LossBreakdown losses;
  Gradients gradients;
};
BatchEvaluation evaluate_batch(const ShortTermConfig& config, const ParamStore& params,
                               const std::vector<LabeledSlice>& batch, bool with_gradients = true);

struct TrainLogEntry {
  std::size_t step = 0;
  SeverityCategory category = SeverityCategory::minimal;
  LossBreakdown losses;
};

struct ShortTermResult {
  ParamStore params;
  std::vector<TrainLogEntry> log;
  std::vector<std::string> warnings;
  std::string rng_state;  // sampler state after the last step
};

// Minimizes L_short with Adam over `config.steps` category-homogeneous batches
// drawn from the train split. `initial` overrides the seeded initialization.
ShortTermResult train_short_term(const Corpus& corpus, const ShortTermConfig& config,
                                 const ParamStore* initial = nullptr,
                                 const std::function<void(const TrainLogEntry&)>& on_step = {});

struct ExtractedVideo {
  SliceFeatureMatrix features;           // F_dep rows
  SliceFeatureMatrix non_depression;     // F_non rows
  std::vector<double> slice_predictions;  // p_ns in BDI units
};

ExtractedVideo extract_video(const VideoSample& video, const ShortTermConfig& config, const ParamStore& params);
SliceFeatureMatrix extract_slice_features(const VideoSample& video, const ShortTermConfig& config,
                                          const ParamStore& params);

// Extracts every listed video, spreading work over `threads` workers; the
// result order follows `videos`.
std::vector<ExtractedVideo> extract_many(const std::vector<const VideoSample*>& videos, const ShortTermConfig& config,
                                         const ParamStore& params, std::size_t threads = 0);

}  // namespace depgraph
