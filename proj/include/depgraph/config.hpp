#pragma once

// Run configuration: one JSON document covering every stage. Unknown keys are
// rejected; run_config_to_json(RunConfig{}) lists every default.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "depgraph/corpus.hpp"
#include "depgraph/encoders.hpp"
#include "depgraph/regressor.hpp"
#include "depgraph/short_term.hpp"

namespace depgraph {

// Video-level representation fed to the second stage.
enum class Repr : int { spg = 0, seg = 1, spv = 2, sph = 3, sta = 4, atp = 5 };
std::string_view to_string(Repr r);
Repr parse_repr(std::string_view text);

struct CorpusSection {
  // Empty: synthesize with `synth` and the run seed.
  std::string manifest;
  SynthConfig synth;
};

struct EncoderSection {
  Repr repr = Repr::spg;
  SpectralConfig spectral;
  std::vector<std::size_t> windows{1, 2, 4, 8};  // SEG edge spans
};

struct HeadSection {
  std::size_t heads = 1;
  std::size_t hidden = 32;
  std::array<std::size_t, 3> fc{64, 32, 1};  // GAT and MLP dense widths
  double leaky_slope = 0.2;
  std::array<std::size_t, 2> conv_channels{8, 8};
  std::size_t conv_kernel = 3;
  HeadTrainConfig train;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  std::size_t threads = 0;  // 0: one per hardware thread
  CorpusSection corpus;
  ShortTermConfig short_term;
  EncoderSection encoder;
  HeadSection head;

  // Seeds derived from `seed` for each stage.
  std::uint64_t synth_seed() const;
  std::uint64_t short_term_seed() const;
  std::uint64_t head_seed() const;
  // short_term with its seed filled in.
  ShortTermConfig resolved_short_term() const;
};

// Overrides are "dotted.key=value"; value is parsed as JSON when it is valid
// JSON and taken as a string otherwise.
RunConfig parse_run_config(std::string_view json_text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
std::string run_config_to_json(const RunConfig& config, int indent = 2);

// Canonical JSON of one section: "corpus", "short_term", "encoder" or "head".
std::string section_json(const RunConfig& config, std::string_view section);

// Cache keys per stage; each folds in the keys of the stages it depends on.
struct StageFingerprints {
  std::uint64_t corpus = 0;
  std::uint64_t short_term = 0;
  std::uint64_t features = 0;
  std::uint64_t encoded = 0;
  std::uint64_t head = 0;
};
StageFingerprints stage_fingerprints(const RunConfig& config);

}  // namespace depgraph
