#include "depgraph/short_term.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include "depgraph/errors.hpp"

namespace depgraph {

void ShortTermConfig::validate() const {
  mtb.validate();
  dfe.validate();
  if (mtb.num_branches() < 2) throw ConfigError("short-term: the backbone needs at least two branches");
  if (dfe.num_scales != mtb.num_branches() || dfe.feature_dim != mtb.output_dim) {
    throw ConfigError("short-term: dfe scales/feature_dim must match the backbone branches/output_dim");
  }
  if (mtb.slice_length != slice_length) throw ConfigError("short-term: backbone slice length differs from slicing");
  if (batch_size == 0 || stride == 0) throw ConfigError("short-term: batch size and stride must be positive");
  if (label_scale <= 0.0) throw ConfigError("short-term: label_scale must be positive");
}

void init_short_term_params(const ShortTermConfig& config, ParamStore& params, Rng& rng) {
  config.validate();
  init_mtb_params(config.mtb, params, rng);
  init_dfe_params(config.dfe, params, rng);
}

ParamStore init_short_term_params(const ShortTermConfig& config) {
  ParamStore params;
  Rng rng(derive_seed(config.seed, 1));
  init_short_term_params(config, params, rng);
  return params;
}

SliceOutput forward_slice(const ShortTermConfig& config, const ad::Var& volume, Binding& params) {
  SliceOutput out;
  out.scales = mtb_forward(config.mtb, volume, params);
  out.mta = mta_forward(config.dfe, out.scales, params);
  out.ns = ns_forward(config.dfe, out.mta.enhanced, params);
  return out;
}

ad::Var center_volume(const ad::Var& volume) {
  if (volume.shape().size() != 4) throw DomainError("center_volume: expected a [C,L,H,W] volume");
  const std::size_t C = volume.dim(0), L = volume.dim(1), HW = volume.dim(2) * volume.dim(3);
  std::vector<double> v = volume.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t p = 0; p < HW; ++p) {
      double mu = 0.0;
      for (std::size_t t = 0; t < L; ++t) mu += v[(c * L + t) * HW + p];
      mu /= static_cast<double>(L);
      for (std::size_t t = 0; t < L; ++t) v[(c * L + t) * HW + p] -= mu;
    }
  return ad::Var::constant(volume.shape(), std::move(v));
}

ad::Var backbone_input(const ShortTermConfig& config, const ThinSlice& slice) {
  ad::Var volume = slice_volume(slice);
  return config.center_frames ? center_volume(volume) : volume;
}

SliceOutput forward_slice(const ShortTermConfig& config, const ThinSlice& slice, Binding& params) {
  return forward_slice(config, backbone_input(config, slice), params);
}

BatchEvaluation evaluate_batch(const ShortTermConfig& config, const ParamStore& params,
                               const std::vector<LabeledSlice>& batch, bool with_gradients) {
  Binding binding(params, with_gradients);
  std::vector<BatchMember> members;
  members.reserve(batch.size());
  for (const auto& item : batch) {
    SliceOutput out = forward_slice(config, item.slice, binding);
    BatchMember m;
    m.ns = out.ns;
    m.p_mta = out.mta.p_mta;
    m.enhanced = out.mta.enhanced;
    m.category = bucket_severity(item.bdi);
    m.label = static_cast<double>(item.bdi) / config.label_scale;
    members.push_back(std::move(m));
  }
  LossTerms terms = compute_losses(members, config.weights);
  BatchEvaluation eval;
  eval.losses = terms.values();
  if (with_gradients) {
    ad::backward(terms.l_short);
    eval.gradients = binding.gradients();
  }
  return eval;
}

namespace {

bool has_invalid_frames(const VideoSample& v) {
  return std::any_of(v.frame_valid.begin(), v.frame_valid.end(), [](std::uint8_t f) { return f == 0; });
}

}  // namespace

ShortTermResult train_short_term(const Corpus& corpus, const ShortTermConfig& config, const ParamStore* initial,
                                 const std::function<void(const TrainLogEntry&)>& on_step) {
  config.validate();
  const auto train = corpus.indices(Split::train);
  if (train.empty()) throw DomainError("train_short_term: train split is empty");

  ShortTermResult result;
  result.params = initial ? *initial : init_short_term_params(config);

  // Imputed copies only for videos that need them.
  std::map<std::size_t, VideoSample> imputed;
  std::array<std::vector<std::size_t>, kNumCategories> by_category;
  for (std::size_t idx : train) {
    const VideoSample& v = corpus.samples[idx];
    if (v.num_frames < config.slice_length) {
      result.warnings.push_back("video '" + v.id + "' is shorter than one slice; skipped");
      continue;
    }
    if (has_invalid_frames(v)) imputed.emplace(idx, impute_missing_frames(v));
    by_category[static_cast<std::size_t>(v.category)].push_back(idx);
  }
  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (by_category[c].empty()) {
      result.warnings.push_back("category '" + std::string(to_string(static_cast<SeverityCategory>(c))) +
                                "' has no training slices; skipped");
    } else {
      active.push_back(c);
    }
  }
  if (active.empty()) throw DomainError("train_short_term: no usable training videos");

  auto video_at = [&](std::size_t idx) -> const VideoSample& {
    auto it = imputed.find(idx);
    return it != imputed.end() ? it->second : corpus.samples[idx];
  };

  Rng rng(derive_seed(config.seed, 2));
  Adam optimizer(config.adam);
  std::vector<std::size_t> cycle;
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cycle.empty()) {
      cycle = active;
      for (std::size_t i = cycle.size(); i > 1; --i) std::swap(cycle[i - 1], cycle[rng.index(i)]);
    }
    const std::size_t cat = cycle.back();
    cycle.pop_back();

    std::vector<std::size_t> pool = by_category[cat];
    std::vector<std::size_t> chosen;
    if (pool.size() >= config.batch_size) {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        const std::size_t j = i + rng.index(pool.size() - i);
        std::swap(pool[i], pool[j]);
        chosen.push_back(pool[i]);
      }
    } else {
      for (std::size_t i = 0; i < config.batch_size; ++i) chosen.push_back(pool[rng.index(pool.size())]);
    }

    std::vector<LabeledSlice> batch;
    for (std::size_t idx : chosen) {
      const VideoSample& v = video_at(idx);
      const std::size_t n = slice_count(v.num_frames, config.slice_length, config.stride);
      batch.push_back({extract_slice(v, rng.index(n), config.slice_length, config.stride), v.bdi_score});
    }
    BatchEvaluation eval = evaluate_batch(config, result.params, batch, true);
    optimizer.step(result.params, eval.gradients);

    TrainLogEntry entry{step, static_cast<SeverityCategory>(cat), eval.losses};
    if (on_step) on_step(entry);
    result.log.push_back(entry);
  }
  result.rng_state = rng.state();
  return result;
}

ExtractedVideo extract_video(const VideoSample& video, const ShortTermConfig& config, const ParamStore& params) {
  const std::size_t S = slice_count(video.num_frames, config.slice_length, config.stride);
  const VideoSample* source = &video;
  VideoSample repaired;
  if (has_invalid_frames(video)) {
    repaired = impute_missing_frames(video);
    source = &repaired;
  }
  ad::NoGradGuard guard;
  Binding binding(params, false);
  const std::size_t M = config.dfe.bottleneck();
  ExtractedVideo out;
  out.features.parent_id = video.id;
  out.features.values = Matrix(S, M);
  out.non_depression.parent_id = video.id;
  out.non_depression.values = Matrix(S, M);
  out.slice_predictions.resize(S);
  for (std::size_t i = 0; i < S; ++i) {
    SliceOutput o = forward_slice(config, extract_slice(*source, i, config.slice_length, config.stride), binding);
    for (std::size_t m = 0; m < M; ++m) {
      out.features.values(i, m) = o.ns.f_dep.value()[m];
      out.non_depression.values(i, m) = o.ns.f_non.value()[m];
    }
    out.slice_predictions[i] = o.ns.p_ns.item() * config.label_scale;
  }
  return out;
}

SliceFeatureMatrix extract_slice_features(const VideoSample& video, const ShortTermConfig& config,
                                          const ParamStore& params) {
  return extract_video(video, config, params).features;
}

std::vector<ExtractedVideo> extract_many(const std::vector<const VideoSample*>& videos, const ShortTermConfig& config,
                                         const ParamStore& params, std::size_t threads) {
  std::vector<ExtractedVideo> out(videos.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(videos.size(), 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < videos.size(); i = next++) {
      try {
        out[i] = extract_video(*videos[i], config, params);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace depgraph
