#include "depgraph/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

#include "depgraph/errors.hpp"
#include "depgraph/rng.hpp"

namespace depgraph {

std::string_view to_string(SeverityCategory c) {
  switch (c) {
    case SeverityCategory::minimal: return "minimal";
    case SeverityCategory::mild: return "mild";
    case SeverityCategory::moderate: return "moderate";
    case SeverityCategory::severe: return "severe";
  }
  return "unknown";
}

SeverityCategory parse_category(std::string_view text) {
  for (int i = 0; i < static_cast<int>(kNumCategories); ++i) {
    auto c = static_cast<SeverityCategory>(i);
    if (to_string(c) == text) return c;
  }
  throw DomainError("unknown severity category '" + std::string(text) + "'");
}

SeverityCategory bucket_severity(int bdi) {
  if (bdi < kMinBdi || bdi > kMaxBdi) {
    throw DomainError("BDI-II score " + std::to_string(bdi) + " outside [0, 63]");
  }
  if (bdi <= 13) return SeverityCategory::minimal;
  if (bdi <= 19) return SeverityCategory::mild;
  if (bdi <= 28) return SeverityCategory::moderate;
  return SeverityCategory::severe;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation" || text == "val") return Split::validation;
  if (text == "test") return Split::test;
  throw DomainError("unknown split '" + std::string(text) + "'");
}

void VideoSample::validate(std::size_t min_frames) const {
  if (id.empty()) throw DomainError("video id is empty");
  if (frames.size() != num_frames * frame_size()) throw DomainError("video '" + id + "': frame buffer size mismatch");
  if (frame_valid.size() != num_frames) throw DomainError("video '" + id + "': validity mask length mismatch");
  if (num_frames < min_frames) {
    throw DomainError("video '" + id + "' has " + std::to_string(num_frames) + " frames, fewer than " +
                      std::to_string(min_frames));
  }
  if (bucket_severity(bdi_score) != category) throw DomainError("video '" + id + "': category does not match score");
}

std::vector<std::size_t> Corpus::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = split.find(samples[i].id);
    if (it != split.end() && it->second == s) out.push_back(i);
  }
  return out;
}

const VideoSample& Corpus::by_id(const std::string& id) const {
  for (const auto& v : samples)
    if (v.id == id) return v;
  throw DomainError("no video with id '" + id + "'");
}

void Corpus::validate() const {
  std::set<std::string> ids;
  for (const auto& v : samples) {
    if (!ids.insert(v.id).second) throw DomainError("duplicate video id '" + v.id + "'");
  }
  for (const auto& [id, _] : split) {
    if (!ids.count(id)) throw DomainError("split assigns unknown id '" + id + "'");
  }
}

std::size_t slice_count(std::size_t num_frames, std::size_t slice_length, std::size_t stride) {
  if (slice_length < 1 || stride < 1) throw DomainError("slice length and stride must be >= 1");
  if (num_frames < slice_length) {
    throw DomainError("video has " + std::to_string(num_frames) + " frames, shorter than one slice of " +
                      std::to_string(slice_length));
  }
  return (num_frames - slice_length) / stride + 1;
}

ThinSlice extract_slice(const VideoSample& v, std::size_t index, std::size_t slice_length, std::size_t stride) {
  const std::size_t n = slice_count(v.num_frames, slice_length, stride);
  if (index >= n) throw DomainError("slice index out of range");
  ThinSlice s;
  s.parent_id = v.id;
  s.index = index;
  s.frames = Tensor(Shape{slice_length, v.height, v.width, v.channels});
  const std::size_t fs = v.frame_size();
  const std::size_t start = index * stride * fs;
  for (std::size_t i = 0; i < slice_length * fs; ++i) s.frames.data[i] = v.frames[start + i] / 255.0;
  return s;
}

std::vector<ThinSlice> slice_video(const VideoSample& v, std::size_t slice_length, std::size_t stride) {
  const std::size_t n = slice_count(v.num_frames, slice_length, stride);
  std::vector<ThinSlice> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(extract_slice(v, i, slice_length, stride));
  return out;
}

VideoSample impute_missing_frames(const VideoSample& v) {
  const std::size_t T = v.num_frames;
  if (v.frame_valid.size() != T) throw DomainError("validity mask length mismatch");
  if (std::none_of(v.frame_valid.begin(), v.frame_valid.end(), [](std::uint8_t f) { return f != 0; })) {
    throw DomainError("video '" + v.id + "' has no valid frame to impute from");
  }
  // Distance to the previous and next valid frame, via two sweeps.
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<std::size_t> prev(T, none), next(T, none);
  std::size_t last = none;
  for (std::size_t t = 0; t < T; ++t) {
    if (v.frame_valid[t]) last = t;
    prev[t] = last;
  }
  last = none;
  for (std::size_t t = T; t-- > 0;) {
    if (v.frame_valid[t]) last = t;
    next[t] = last;
  }
  VideoSample out = v;
  const std::size_t fs = v.frame_size();
  for (std::size_t t = 0; t < T; ++t) {
    if (v.frame_valid[t]) continue;
    std::size_t src;
    if (prev[t] == none) {
      src = next[t];
    } else if (next[t] == none) {
      src = prev[t];
    } else {
      src = (t - prev[t] <= next[t] - t) ? prev[t] : next[t];
    }
    std::copy_n(v.frames.begin() + static_cast<std::ptrdiff_t>(src * fs), fs,
                out.frames.begin() + static_cast<std::ptrdiff_t>(t * fs));
  }
  std::fill(out.frame_valid.begin(), out.frame_valid.end(), std::uint8_t{1});
  return out;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Subject {
  double background = 0.4;
  std::array<double, 3> grating_amp{};
  std::array<double, 3> grating_fx{};
  std::array<double, 3> grating_fy{};
  std::array<double, 3> grating_phase{};
  double blob_sigma = 3.5;
  double blob_contrast = 0.4;
  double gain = 1.0;
};

int draw_bdi(const SynthConfig& config, Rng& rng) {
  static constexpr std::array<std::pair<int, int>, kNumCategories> bands{{{0, 13}, {14, 19}, {20, 28}, {29, 63}}};
  double total = 0.0;
  for (double w : config.category_weights) total += w;
  double u = rng.uniform() * total;
  std::size_t cat = 0;
  for (; cat + 1 < kNumCategories; ++cat) {
    if (u < config.category_weights[cat]) break;
    u -= config.category_weights[cat];
  }
  const auto [lo, hi] = bands[cat];
  return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
}

VideoSample render_video(const SynthConfig& config, const std::string& id, int bdi, Rng& rng) {
  const double s = bdi / static_cast<double>(kMaxBdi);
  Subject subj;
  subj.background = rng.uniform(0.3, 0.5);
  for (std::size_t i = 0; i < 3; ++i) {
    subj.grating_amp[i] = rng.uniform(0.02, 0.06);
    subj.grating_fx[i] = rng.uniform(-0.15, 0.15);
    subj.grating_fy[i] = rng.uniform(-0.15, 0.15);
    subj.grating_phase[i] = rng.uniform(0.0, kTwoPi);
  }
  subj.blob_sigma = rng.uniform(3.0, 4.5);
  subj.blob_contrast = rng.uniform(0.3, 0.5);
  subj.gain = rng.uniform(0.75, 1.25);

  // Severity-dependent dynamics.
  const double amp_fast = 0.4 + 2.2 * s;   // pixels, period 6 frames
  const double amp_slow = 0.6 + 2.8 * s;   // pixels, period 20 frames
  const double envelope_period = static_cast<double>(config.slice_length) * (12.0 + 24.0 * s);
  const double envelope_depth = 0.7;
  const double phase_fast = rng.uniform(0.0, kTwoPi);
  const double phase_slow = rng.uniform(0.0, kTwoPi);
  const double phase_env = rng.uniform(0.0, kTwoPi);
  const double phase_y = rng.uniform(0.0, kTwoPi);
  const double angle = rng.uniform(0.0, kTwoPi);

  VideoSample v;
  v.id = id;
  v.bdi_score = bdi;
  v.category = bucket_severity(bdi);
  v.height = config.height;
  v.width = config.width;
  v.channels = config.channels;
  v.num_frames = config.min_frames + rng.index(config.max_frames - config.min_frames + 1);
  v.frames.resize(v.num_frames * v.frame_size());
  v.frame_valid.assign(v.num_frames, 1);

  const double cy0 = (static_cast<double>(config.height) - 1.0) / 2.0;
  const double cx0 = (static_cast<double>(config.width) - 1.0) / 2.0;
  std::vector<double> texture(config.height * config.width);
  for (std::size_t h = 0; h < config.height; ++h)
    for (std::size_t w = 0; w < config.width; ++w) {
      double val = subj.background;
      for (std::size_t i = 0; i < 3; ++i)
        val += subj.grating_amp[i] *
               std::sin(kTwoPi * (subj.grating_fx[i] * w + subj.grating_fy[i] * h) + subj.grating_phase[i]);
      texture[h * config.width + w] = val;
    }

  const double inv_two_sigma2 = 1.0 / (2.0 * subj.blob_sigma * subj.blob_sigma);
  for (std::size_t t = 0; t < v.num_frames; ++t) {
    const double td = static_cast<double>(t);
    const double envelope = 1.0 + envelope_depth * std::sin(kTwoPi * td / envelope_period + phase_env);
    const double a = subj.gain * envelope;
    const double along = a * (amp_fast * std::sin(kTwoPi * td / 6.0 + phase_fast) +
                              amp_slow * std::sin(kTwoPi * td / 20.0 + phase_slow));
    const double across = 0.5 * a * amp_slow * std::sin(kTwoPi * td / 20.0 + phase_y);
    const double cx = cx0 + along * std::cos(angle) - across * std::sin(angle);
    const double cy = cy0 + along * std::sin(angle) + across * std::cos(angle);
    const bool dropped = rng.uniform() < config.dropout_rate;
    v.frame_valid[t] = dropped ? 0 : 1;
    for (std::size_t h = 0; h < config.height; ++h)
      for (std::size_t w = 0; w < config.width; ++w) {
        const double dy = static_cast<double>(h) - cy;
        const double dx = static_cast<double>(w) - cx;
        double val = texture[h * config.width + w] + subj.blob_contrast * std::exp(-(dx * dx + dy * dy) * inv_two_sigma2);
        val += config.pixel_noise * rng.normal();
        if (dropped) val = rng.uniform();  // detection failure: garbage frame
        val = std::clamp(val, 0.0, 1.0);
        const auto byte = static_cast<std::uint8_t>(std::lround(val * 255.0));
        for (std::size_t c = 0; c < config.channels; ++c)
          v.frames[((t * config.height + h) * config.width + w) * config.channels + c] = byte;
      }
  }
  // At least one valid frame is guaranteed.
  if (std::none_of(v.frame_valid.begin(), v.frame_valid.end(), [](std::uint8_t f) { return f != 0; }))
    v.frame_valid[0] = 1;
  return v;
}

}  // namespace

Corpus generate_synthetic_corpus(const SynthConfig& config, std::uint64_t seed) {
  if (config.train_count == 0 || config.validation_count == 0 || config.test_count == 0) {
    throw DomainError("synthetic corpus: every split needs at least one video");
  }
  if (config.min_frames < config.slice_length || config.max_frames < config.min_frames) {
    throw DomainError("synthetic corpus: frame range must be ordered and hold at least one slice");
  }
  if (config.height == 0 || config.width == 0 || config.channels == 0) {
    throw DomainError("synthetic corpus: frame dimensions must be positive");
  }
  double weight_sum = 0.0;
  for (double w : config.category_weights) {
    if (w < 0.0) throw DomainError("synthetic corpus: negative category weight");
    weight_sum += w;
  }
  if (weight_sum <= 0.0) throw DomainError("synthetic corpus: category weights sum to zero");

  Corpus corpus;
  corpus.generation_seed = seed;
  const std::array<std::pair<Split, std::size_t>, 3> plan{
      {{Split::train, config.train_count}, {Split::validation, config.validation_count}, {Split::test, config.test_count}}};

  Rng label_rng(derive_seed(seed, 1));
  std::size_t serial = 0;
  for (const auto& [split, count] : plan) {
    std::vector<int> labels(count);
    // Stratify: the first categories round-robin so every split covers all four
    // categories when it has room, remaining draws follow the weights.
    for (std::size_t i = 0; i < count; ++i) {
      if (i < kNumCategories && count >= kNumCategories && config.category_weights[i] > 0.0) {
        static constexpr std::array<std::pair<int, int>, kNumCategories> bands{{{0, 13}, {14, 19}, {20, 28}, {29, 63}}};
        labels[i] = bands[i].first + static_cast<int>(label_rng.index(
                                         static_cast<std::size_t>(bands[i].second - bands[i].first + 1)));
      } else {
        labels[i] = draw_bdi(config, label_rng);
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%04zu", std::string(to_string(split)).substr(0, 2).c_str(), serial);
      Rng video_rng(derive_seed(seed, 1000 + serial));
      corpus.samples.push_back(render_video(config, buf, labels[i], video_rng));
      corpus.split[buf] = split;
      ++serial;
    }
  }
  return corpus;
}

}  // namespace depgraph
