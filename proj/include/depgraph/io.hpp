#pragma once

// On-disk formats. All integers and floats are little-endian.
//
//   video tensor   "DGVT" u32 dtype, u32 T, H, W, C, then T*H*W*C samples
//                  (dtype 1 = uint8 0..255, dtype 2 = float32 0..1); an
//                  optional "<file>.mask" sidecar holds one byte per frame
//                  (0 = failed detection)
//   frame folder   one binary PGM (P5, maxval 255) per frame, name order
//   feature matrix "DGFM" u32 S, u32 M, then S*M float32 row-major
//   graph          "SPG1" | "SEG1", u32 V, F, E, V*F float32, E*(i32 src,
//                  i32 dst, i32 type); type is 0 for SPG, the window for SEG
//   manifest       CSV with header id,path,bdi_score,split

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depgraph/corpus.hpp"
#include "depgraph/encoders.hpp"
#include "depgraph/regressor.hpp"

namespace depgraph {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string id;
  std::string path;
  int bdi_score = 0;
  Split split = Split::train;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries);

enum class VideoDtype : std::uint32_t { u8 = 1, f32 = 2 };

void write_video_tensor(const fs::path& path, const VideoSample& video, VideoDtype dtype = VideoDtype::u8);
// id, label and category are left for the caller.
VideoSample read_video_tensor(const fs::path& path);
VideoSample read_frame_directory(const fs::path& dir);

// Writes <dir>/manifest.csv and one tensor file per video under <dir>/videos.
void save_corpus(const Corpus& corpus, const fs::path& dir);
// Relative payload paths resolve against the manifest's directory. A payload
// that is a directory is read as PGM frames.
Corpus load_corpus(const fs::path& manifest);

void write_feature_matrix(const fs::path& path, const SliceFeatureMatrix& m);
SliceFeatureMatrix read_feature_matrix(const fs::path& path, const std::string& parent_id = {});

struct GraphFile {
  GraphKind kind = GraphKind::spectral;
  Matrix features;
  std::vector<std::array<std::int32_t, 3>> edges;  // src, dst, type
};

void write_graph(const fs::path& path, const SpectralGraph& g);
void write_graph(const fs::path& path, const SequentialGraph& g);
GraphFile read_graph(const fs::path& path);
SpectralGraph to_spectral_graph(const GraphFile& file);
SequentialGraph to_sequential_graph(const GraphFile& file);

// Rounds through float32, the precision every on-disk matrix is stored at.
void quantize_f32(std::vector<double>& values);

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);

}  // namespace depgraph
