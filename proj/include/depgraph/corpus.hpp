#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "depgraph/tensor.hpp"

namespace depgraph {

inline constexpr int kMinBdi = 0;
inline constexpr int kMaxBdi = 63;

enum class SeverityCategory : int { minimal = 0, mild = 1, moderate = 2, severe = 3 };
inline constexpr std::size_t kNumCategories = 4;

std::string_view to_string(SeverityCategory c);
SeverityCategory parse_category(std::string_view text);

// BDI-II interpretation bands: 0-13 minimal, 14-19 mild, 20-28 moderate, 29-63 severe.
SeverityCategory bucket_severity(int bdi);

// Frames are stored as 8-bit intensities; pixel(t,h,w,c) = byte / 255.
struct VideoSample {
  std::string id;
  std::size_t num_frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> frames;  // [T,H,W,C] row-major
  std::vector<std::uint8_t> frame_valid;
  int bdi_score = 0;
  SeverityCategory category = SeverityCategory::minimal;

  std::size_t frame_size() const { return height * width * channels; }
  double pixel(std::size_t t, std::size_t h, std::size_t w, std::size_t c) const {
    return frames[((t * height + h) * width + w) * channels + c] / 255.0;
  }
  // Throws DomainError when any documented invariant is broken.
  void validate(std::size_t min_frames = 1) const;

  bool operator==(const VideoSample& other) const = default;
};

struct ThinSlice {
  Tensor frames;  // [L,H,W,C], values in [0,1]
  std::string parent_id;
  std::size_t index = 0;
};

struct SliceFeatureMatrix {
  Matrix values;  // [S x M]
  std::string parent_id;

  std::size_t num_slices() const { return values.rows; }
  std::size_t dim() const { return values.cols; }
  bool operator==(const SliceFeatureMatrix& other) const = default;
};

enum class Split : int { train = 0, validation = 1, test = 2 };
std::string_view to_string(Split s);
Split parse_split(std::string_view text);

struct Corpus {
  std::vector<VideoSample> samples;
  std::map<std::string, Split> split;
  std::optional<std::uint64_t> generation_seed;

  std::vector<std::size_t> indices(Split s) const;
  const VideoSample& by_id(const std::string& id) const;
  void validate() const;
};

std::size_t slice_count(std::size_t num_frames, std::size_t slice_length, std::size_t stride);

// Consecutive windows of slice_length frames starting every `stride` frames.
std::vector<ThinSlice> slice_video(const VideoSample& v, std::size_t slice_length, std::size_t stride);
// Single slice by index, without materializing the rest.
ThinSlice extract_slice(const VideoSample& v, std::size_t index, std::size_t slice_length, std::size_t stride);

// Replaces each invalid frame by the nearest valid one; ties go to the earlier frame.
VideoSample impute_missing_frames(const VideoSample& v);

struct SynthConfig {
  std::size_t train_count = 80;
  std::size_t validation_count = 20;
  std::size_t test_count = 20;
  std::size_t min_frames = 930;   // 31 slices of 30 frames
  std::size_t max_frames = 1800;  // 60 slices
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  // Relative weight of each severity category when drawing labels.
  std::array<double, kNumCategories> category_weights{1.0, 1.0, 1.0, 1.0};
  double dropout_rate = 0.01;  // fraction of frames flagged as failed detections
  double pixel_noise = 0.02;
  std::size_t slice_length = 30;  // period unit for the slow activity envelope
};

// Deterministic synthetic corpus. Each video shows a textured identity
// background and a blob whose oscillation amplitude (at two short periods)
// grows with the BDI score, and whose slow activity envelope period grows with
// it as well. A per-subject expressiveness gain acts as non-depression noise.
Corpus generate_synthetic_corpus(const SynthConfig& config, std::uint64_t seed);

}  // namespace depgraph
