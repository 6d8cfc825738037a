#pragma once

// Stage orchestration. Every stage writes into its own directory under
// out_dir and finishes by recording its fingerprint in a STAGE file; a STALE
// file marks a stage that started but did not finish. A stage whose STAGE
// file matches the current fingerprint is loaded instead of recomputed.
//
//   short_term/            checkpoint.dgck, train_log.tsv
//   features/              <id>.dep.dgfm, <id>.non.dgfm, <id>.pred.dgfm, index.csv
//   encoded/<repr>/        <id>.spg | .seg | .vec.dgfm | .sph.dgfm
//   head/<repr>/           checkpoint.dgck, loss.tsv
//   eval/<repr>/           report.json, predictions.csv, scatter.svg

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "depgraph/checkpoint.hpp"
#include "depgraph/config.hpp"
#include "depgraph/report.hpp"

namespace depgraph {

struct VideoFeatures {
  std::string id;
  Split split = Split::train;
  int bdi_score = 0;
  SliceFeatureMatrix dep;
  SliceFeatureMatrix non;
  std::vector<double> slice_predictions;
};

// Extraction with every value rounded to the stored float32 precision.
std::vector<VideoFeatures> featurize(const Corpus& corpus, const std::vector<std::size_t>& indices,
                                     const ShortTermConfig& config, const ParamStore& params, std::size_t threads);

// Video-level representation for one video (float32-rounded like its file).
HeadInput encode_video(const VideoFeatures& video, const EncoderSection& encoder);
// Head architecture for a representation and per-slice feature dimension M.
HeadSpec head_spec_for(const RunConfig& config, std::size_t feature_dim);
double predict_video(const HeadSpec& spec, Repr repr, const HeadInput& input, const VideoFeatures& video,
                     const ParamStore& params);

// Mean |cos(F_dep, F_non)| over every slice of the given videos.
double mean_abs_cosine(const std::vector<VideoFeatures>& videos);

std::string hex64(std::uint64_t v);

class Pipeline {
 public:
  using Logger = std::function<void(const std::string&)>;

  explicit Pipeline(RunConfig config, Logger log = {});

  const RunConfig& config() const { return config_; }
  const StageFingerprints& fingerprints() const { return fp_; }
  std::filesystem::path stage_dir(const std::string& stage) const;

  const Corpus& corpus();
  const Checkpoint& short_term();
  const std::vector<VideoFeatures>& features();
  const std::vector<HeadInput>& encoded();
  const Checkpoint& head();
  // Predicts every video, writes report.json, predictions.csv and scatter.svg.
  const EvaluationReport& evaluate();

 private:
  template <typename F>
  void run_stage(const std::string& name, const std::filesystem::path& dir, std::uint64_t fp, F&& body);
  bool is_cached(const std::filesystem::path& dir, std::uint64_t fp) const;
  void say(const std::string& msg) const;

  RunConfig config_;
  StageFingerprints fp_;
  Logger log_;
  std::optional<Corpus> corpus_;
  std::optional<Checkpoint> short_term_;
  std::optional<std::vector<VideoFeatures>> features_;
  std::optional<std::vector<HeadInput>> encoded_;
  std::optional<Checkpoint> head_;
  std::optional<EvaluationReport> report_;
};

// Runs every stage and returns the evaluation report.
EvaluationReport run_pipeline(const RunConfig& config, Pipeline::Logger log = {});

// Applies the trained models of `train_config` (loaded from its out_dir, with
// fingerprint checks) to `test_corpus` without updating any parameter.
// `split` restricts the evaluated videos; empty evaluates all of them.
EvaluationReport cross_split_evaluate(const RunConfig& train_config, const Corpus& test_corpus,
                                      std::optional<Split> split = Split::test, std::size_t threads = 0);

}  // namespace depgraph
