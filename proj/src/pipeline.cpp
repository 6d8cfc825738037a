#include "depgraph/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "depgraph/errors.hpp"
#include "depgraph/io.hpp"
#include "json.hpp"

namespace depgraph {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string repr_extension(Repr r) {
  switch (r) {
    case Repr::spg: return ".spg";
    case Repr::seg: return ".seg";
    case Repr::spv:
    case Repr::sta:
    case Repr::atp: return ".vec.dgfm";
    case Repr::sph: return ".sph.dgfm";
  }
  return {};
}

void check_frame_geometry(const Corpus& corpus, const MtbConfig& mtb) {
  for (const auto& v : corpus.samples) {
    if (v.height != mtb.height || v.width != mtb.width || v.channels != mtb.channels) {
      throw ConfigError("video '" + v.id + "' is " + std::to_string(v.height) + "x" + std::to_string(v.width) + "x" +
                        std::to_string(v.channels) + " but the backbone expects " + std::to_string(mtb.height) + "x" +
                        std::to_string(mtb.width) + "x" + std::to_string(mtb.channels));
    }
  }
}

void write_encoded(const fs::path& path, Repr repr, const HeadInput& input) {
  if (const auto* g = std::get_if<GraphInput>(&input)) {
    if (repr == Repr::spg) {
      SpectralGraph spg;
      spg.vertex_features = g->features;
      const std::size_t n = g->num_vertices();
      spg.adjacency = g->masks.at(0);
      for (std::size_t i = 0; i < n; ++i) spg.adjacency[i * n + i] = 0;
      write_graph(path, spg);
    }
    return;
  }
  SliceFeatureMatrix m;
  if (const auto* v = std::get_if<std::vector<double>>(&input)) {
    m.values = Matrix(1, v->size());
    m.values.data = *v;
  } else {
    m.values = std::get<Matrix>(input);
  }
  write_feature_matrix(path, m);
}

HeadInput read_encoded(const fs::path& path, const EncoderSection& enc) {
  switch (enc.repr) {
    case Repr::spg: return to_graph_input(to_spectral_graph(read_graph(path)));
    case Repr::seg: return to_graph_input(to_sequential_graph(read_graph(path)), enc.windows);
    case Repr::sph: return read_feature_matrix(path).values;
    default: return read_feature_matrix(path).values.data;
  }
}

Checkpoint make_head_checkpoint(const RunConfig& config, std::size_t feature_dim, std::uint64_t fp) {
  Checkpoint ck;
  ck.kind = "head";
  ck.fingerprint = fp;
  json meta;
  meta["feature_dim"] = feature_dim;
  meta["encoder"] = json::parse(section_json(config, "encoder"));
  meta["head"] = json::parse(section_json(config, "head"));
  ck.config = meta.dump();
  return ck;
}

EvaluationReport build_report(const std::string& repr, std::uint64_t fp, std::vector<PredictionRecord> records,
                              const std::vector<VideoFeatures>& features, bool by_split) {
  EvaluationReport r;
  r.repr = repr;
  r.fingerprint = hex64(fp);
  std::map<std::string, std::vector<const PredictionRecord*>> groups;
  for (const auto& p : records) groups[by_split ? std::string(to_string(p.split)) : "all"].push_back(&p);
  for (const auto& [name, group] : groups) {
    if (group.size() < 2) continue;
    std::vector<double> pred, atp, label;
    for (const auto* p : group) {
      pred.push_back(p->prediction);
      atp.push_back(p->atp);
      label.push_back(p->label);
    }
    r.metrics[name] = compute_metrics(pred, label);
    r.atp_metrics[name] = compute_metrics(atp, label);
  }
  std::vector<VideoFeatures> test;
  for (const auto& f : features)
    if (!by_split || f.split == Split::test) test.push_back(f);
  if (!test.empty()) r.disentanglement = mean_abs_cosine(test);
  r.predictions = std::move(records);
  return r;
}

void write_eval_artifacts(const EvaluationReport& report, const fs::path& dir, const std::string& plot_split) {
  emit_report(report, dir / "report.json");
  std::ostringstream csv;
  csv << "id,split,label,prediction,atp\n";
  std::vector<double> pred, label;
  for (const auto& p : report.predictions) {
    csv << p.id << ',' << to_string(p.split) << ',' << g17(p.label) << ',' << g17(p.prediction) << ',' << g17(p.atp)
        << '\n';
    if (plot_split.empty() || to_string(p.split) == plot_split) {
      pred.push_back(p.prediction);
      label.push_back(p.label);
    }
  }
  write_text_file(dir / "predictions.csv", csv.str());
  if (!pred.empty()) emit_scatter_plot(pred, label, dir / "scatter.svg", report.repr + " " + plot_split);
}

}  // namespace

std::vector<VideoFeatures> featurize(const Corpus& corpus, const std::vector<std::size_t>& indices,
                                     const ShortTermConfig& config, const ParamStore& params, std::size_t threads) {
  std::vector<const VideoSample*> videos;
  for (std::size_t i : indices) videos.push_back(&corpus.samples.at(i));
  auto extracted = extract_many(videos, config, params, threads);
  std::vector<VideoFeatures> out(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    VideoFeatures& f = out[i];
    f.id = videos[i]->id;
    f.split = corpus.split.at(f.id);
    f.bdi_score = videos[i]->bdi_score;
    f.dep = std::move(extracted[i].features);
    f.non = std::move(extracted[i].non_depression);
    f.slice_predictions = std::move(extracted[i].slice_predictions);
    quantize_f32(f.dep.values.data);
    quantize_f32(f.non.values.data);
    quantize_f32(f.slice_predictions);
  }
  return out;
}

HeadInput encode_video(const VideoFeatures& video, const EncoderSection& encoder) {
  switch (encoder.repr) {
    case Repr::spg: {
      SpectralGraph g = build_spg(video.dep, encoder.spectral);
      quantize_f32(g.vertex_features.data);
      return to_graph_input(g);
    }
    case Repr::seg: {
      SequentialGraph g = build_seg(video.dep, encoder.windows);
      quantize_f32(g.vertex_features.data);
      return to_graph_input(g, encoder.windows);
    }
    case Repr::spv: {
      auto v = aggregate_spv(video.dep, encoder.spectral);
      quantize_f32(v);
      return v;
    }
    case Repr::sta: {
      auto v = aggregate_sta(video.dep);
      quantize_f32(v);
      return v;
    }
    case Repr::sph: {
      Matrix m = aggregate_sph(video.dep, encoder.spectral).values;
      quantize_f32(m.data);
      return m;
    }
    case Repr::atp: {
      std::vector<double> v{aggregate_atp(video.slice_predictions)};
      quantize_f32(v);
      return v;
    }
  }
  throw ConfigError("unknown representation");
}

HeadSpec head_spec_for(const RunConfig& config, std::size_t feature_dim) {
  const HeadSection& h = config.head;
  const EncoderSection& e = config.encoder;
  HeadSpec spec;
  spec.gat.heads = h.heads;
  spec.gat.hidden = h.hidden;
  spec.gat.fc = h.fc;
  spec.gat.leaky_slope = h.leaky_slope;
  spec.mlp.widths = h.fc;
  spec.conv.conv_channels = h.conv_channels;
  spec.conv.kernel = h.conv_kernel;
  switch (e.repr) {
    case Repr::spg:
      spec.kind = HeadKind::gat;
      spec.gat.in_dim = e.spectral.top_k;
      spec.gat.relations = 1;
      break;
    case Repr::seg:
      spec.kind = HeadKind::gat;
      spec.gat.in_dim = feature_dim;
      spec.gat.relations = e.windows.size();
      break;
    case Repr::spv:
      spec.kind = HeadKind::mlp;
      spec.mlp.in_dim = feature_dim * e.spectral.top_k;
      break;
    case Repr::sta:
      spec.kind = HeadKind::mlp;
      spec.mlp.in_dim = feature_dim * kNumStatistics;
      break;
    case Repr::sph:
      spec.kind = HeadKind::conv1d;
      spec.conv.channels = feature_dim;
      spec.conv.length = e.spectral.top_k;
      break;
    case Repr::atp:
      spec.kind = HeadKind::mlp;
      spec.mlp.in_dim = 1;
      break;
  }
  return spec;
}

double predict_video(const HeadSpec& spec, Repr repr, const HeadInput& input, const VideoFeatures& video,
                     const ParamStore& params) {
  if (repr == Repr::atp) return aggregate_atp(video.slice_predictions);
  return head_predict(spec, input, params);
}

double mean_abs_cosine(const std::vector<VideoFeatures>& videos) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& v : videos) {
    const std::size_t S = v.dep.num_slices(), M = v.dep.dim();
    if (v.non.num_slices() != S || v.non.dim() != M) throw DomainError("mean_abs_cosine: F_dep/F_non shape mismatch");
    for (std::size_t s = 0; s < S; ++s) {
      double d = 0.0, a = 0.0, b = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const double x = v.dep.values(s, m), y = v.non.values(s, m);
        d += x * y;
        a += x * x;
        b += y * y;
      }
      total += (a > 0.0 && b > 0.0) ? std::abs(d) / std::sqrt(a * b) : 0.0;
      ++count;
    }
  }
  if (count == 0) throw DomainError("mean_abs_cosine: no slices");
  return total / static_cast<double>(count);
}

Pipeline::Pipeline(RunConfig config, Logger log)
    : config_(std::move(config)), fp_(stage_fingerprints(config_)), log_(std::move(log)) {}

fs::path Pipeline::stage_dir(const std::string& stage) const {
  const fs::path root(config_.out_dir);
  const std::string repr(to_string(config_.encoder.repr));
  if (stage == "encoded" || stage == "head" || stage == "eval") return root / stage / repr;
  return root / stage;
}

void Pipeline::say(const std::string& msg) const {
  if (log_) log_(msg);
}

bool Pipeline::is_cached(const fs::path& dir, std::uint64_t fp) const {
  if (fs::exists(dir / "STALE") || !fs::exists(dir / "STAGE")) return false;
  try {
    return read_text_file(dir / "STAGE") == hex64(fp) + "\n";
  } catch (const IoError&) {
    return false;
  }
}

template <typename F>
void Pipeline::run_stage(const std::string& name, const fs::path& dir, std::uint64_t fp, F&& body) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  fs::remove(dir / "STAGE", ec);
  write_text_file(dir / "STALE", "stage '" + name + "' did not complete\n");
  const std::string tag = "stage '" + name + "': ";
  try {
    body();
  } catch (const ConfigError& e) {
    throw ConfigError(tag + e.what());
  } catch (const DomainError& e) {
    throw DomainError(tag + e.what());
  } catch (const NumericError& e) {
    throw NumericError(tag + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(tag + e.what());
  }
  write_text_file(dir / "STAGE", hex64(fp) + "\n");
  fs::remove(dir / "STALE", ec);
}

const Corpus& Pipeline::corpus() {
  if (corpus_) return *corpus_;
  try {
    if (config_.corpus.manifest.empty()) {
      say("synthesizing corpus (seed " + std::to_string(config_.synth_seed()) + ")");
      corpus_ = generate_synthetic_corpus(config_.corpus.synth, config_.synth_seed());
    } else {
      say("loading corpus " + config_.corpus.manifest);
      corpus_ = load_corpus(config_.corpus.manifest);
    }
    corpus_->validate();
    check_frame_geometry(*corpus_, config_.short_term.mtb);
  } catch (const ConfigError& e) {
    corpus_.reset();
    throw ConfigError(std::string("stage 'corpus': ") + e.what());
  } catch (const DomainError& e) {
    corpus_.reset();
    throw DomainError(std::string("stage 'corpus': ") + e.what());
  }
  return *corpus_;
}

const Checkpoint& Pipeline::short_term() {
  if (short_term_) return *short_term_;
  const fs::path dir = stage_dir("short_term");
  if (is_cached(dir, fp_.short_term)) {
    say("short-term model: cached");
    short_term_ = load_checkpoint(dir / "checkpoint.dgck", fp_.short_term);
    return *short_term_;
  }
  const Corpus& data = corpus();
  run_stage("short_term", dir, fp_.short_term, [&] {
    const ShortTermConfig cfg = config_.resolved_short_term();
    std::ofstream log(dir / "train_log.tsv", std::ios::trunc);
    log << "step\tcategory\tl_ns\tl_mta\tl_sim\tl_dsim\tl_rec\tl_short\n";
    say("training short-term model for " + std::to_string(cfg.steps) + " steps");
    ShortTermResult result = train_short_term(data, cfg, nullptr, [&](const TrainLogEntry& e) {
      const auto& l = e.losses;
      log << e.step << '\t' << to_string(e.category) << '\t' << g17(l.l_ns) << '\t' << g17(l.l_mta) << '\t'
          << g17(l.l_sim) << '\t' << g17(l.l_dsim) << '\t' << g17(l.l_rec) << '\t' << g17(l.l_short) << '\n';
      if ((e.step + 1) % 100 == 0) say("  step " + std::to_string(e.step + 1) + " l_short " + g17(l.l_short));
    });
    log.close();
    for (const auto& w : result.warnings) say("warning: " + w);
    Checkpoint ck;
    ck.kind = "short_term";
    ck.fingerprint = fp_.short_term;
    ck.config = section_json(config_, "short_term");
    ck.rng_state = result.rng_state;
    ck.params = std::move(result.params);
    save_checkpoint(dir / "checkpoint.dgck", ck);
    short_term_ = std::move(ck);
  });
  return *short_term_;
}

const std::vector<VideoFeatures>& Pipeline::features() {
  if (features_) return *features_;
  const fs::path dir = stage_dir("features");
  if (is_cached(dir, fp_.features)) {
    say("features: cached");
    std::vector<VideoFeatures> out;
    std::istringstream index(read_text_file(dir / "index.csv"));
    std::string line;
    std::getline(index, line);
    while (std::getline(index, line)) {
      std::istringstream row(line);
      std::string id, split, bdi;
      std::getline(row, id, ',');
      std::getline(row, split, ',');
      std::getline(row, bdi, ',');
      VideoFeatures f;
      f.id = id;
      f.split = parse_split(split);
      f.bdi_score = std::stoi(bdi);
      f.dep = read_feature_matrix(dir / (id + ".dep.dgfm"), id);
      f.non = read_feature_matrix(dir / (id + ".non.dgfm"), id);
      f.slice_predictions = read_feature_matrix(dir / (id + ".pred.dgfm"), id).values.data;
      out.push_back(std::move(f));
    }
    features_ = std::move(out);
    return *features_;
  }
  const Checkpoint& model = short_term();
  const Corpus& data = corpus();
  run_stage("features", dir, fp_.features, [&] {
    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    say("extracting features from " + std::to_string(all.size()) + " videos");
    auto feats = featurize(data, all, config_.resolved_short_term(), model.params, config_.threads);
    std::ostringstream index;
    index << "id,split,bdi_score,slices\n";
    for (const auto& f : feats) {
      write_feature_matrix(dir / (f.id + ".dep.dgfm"), f.dep);
      write_feature_matrix(dir / (f.id + ".non.dgfm"), f.non);
      SliceFeatureMatrix pred;
      pred.values = Matrix(f.slice_predictions.size(), 1);
      pred.values.data = f.slice_predictions;
      write_feature_matrix(dir / (f.id + ".pred.dgfm"), pred);
      index << f.id << ',' << to_string(f.split) << ',' << f.bdi_score << ',' << f.dep.num_slices() << '\n';
    }
    write_text_file(dir / "index.csv", index.str());
    features_ = std::move(feats);
  });
  return *features_;
}

const std::vector<HeadInput>& Pipeline::encoded() {
  if (encoded_) return *encoded_;
  const fs::path dir = stage_dir("encoded");
  const auto& feats = features();
  const std::string ext = repr_extension(config_.encoder.repr);
  if (is_cached(dir, fp_.encoded)) {
    say("encoded " + std::string(to_string(config_.encoder.repr)) + ": cached");
    std::vector<HeadInput> out;
    for (const auto& f : feats) out.push_back(read_encoded(dir / (f.id + ext), config_.encoder));
    encoded_ = std::move(out);
    return *encoded_;
  }
  run_stage("encode", dir, fp_.encoded, [&] {
    say("encoding " + std::to_string(feats.size()) + " videos as " + std::string(to_string(config_.encoder.repr)));
    std::vector<HeadInput> out;
    for (const auto& f : feats) {
      HeadInput in = encode_video(f, config_.encoder);
      if (config_.encoder.repr == Repr::seg) {
        SequentialGraph g = build_seg(f.dep, config_.encoder.windows);
        g.vertex_features = std::get<GraphInput>(in).features;
        write_graph(dir / (f.id + ext), g);
      } else {
        write_encoded(dir / (f.id + ext), config_.encoder.repr, in);
      }
      out.push_back(std::move(in));
    }
    encoded_ = std::move(out);
  });
  return *encoded_;
}

const Checkpoint& Pipeline::head() {
  if (head_) return *head_;
  const fs::path dir = stage_dir("head");
  if (is_cached(dir, fp_.head)) {
    say("head: cached");
    head_ = load_checkpoint(dir / "checkpoint.dgck", fp_.head);
    return *head_;
  }
  const auto& feats = features();
  const auto& inputs = encoded();
  run_stage("head", dir, fp_.head, [&] {
    const std::size_t M = feats.front().dep.dim();
    Checkpoint ck = make_head_checkpoint(config_, M, fp_.head);
    std::ofstream log(dir / "loss.tsv", std::ios::trunc);
    log << "step\tloss\n";
    if (config_.encoder.repr != Repr::atp) {
      const HeadSpec spec = head_spec_for(config_, M);
      std::vector<HeadItem> items;
      for (std::size_t i = 0; i < feats.size(); ++i)
        if (feats[i].split == Split::train) items.push_back({inputs[i], static_cast<double>(feats[i].bdi_score)});
      say("training " + std::string(to_string(config_.encoder.repr)) + " head on " + std::to_string(items.size()) +
          " videos");
      HeadTrainResult result = train_head(spec, items, config_.head.train);
      for (std::size_t s = 0; s < result.step_loss.size(); ++s) log << s << '\t' << g17(result.step_loss[s]) << '\n';
      ck.params = std::move(result.params);
      ck.rng_state = result.rng_state;
    }
    log.close();
    save_checkpoint(dir / "checkpoint.dgck", ck);
    head_ = std::move(ck);
  });
  return *head_;
}

const EvaluationReport& Pipeline::evaluate() {
  if (report_) return *report_;
  const auto& feats = features();
  const auto& inputs = encoded();
  const Checkpoint& model = head();
  const fs::path dir = stage_dir("eval");
  run_stage("eval", dir, fp_.head, [&] {
    const HeadSpec spec = head_spec_for(config_, feats.front().dep.dim());
    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const auto& f = feats[i];
      records.push_back({f.id, f.split, static_cast<double>(f.bdi_score),
                         predict_video(spec, config_.encoder.repr, inputs[i], f, model.params),
                         aggregate_atp(f.slice_predictions)});
    }
    EvaluationReport report =
        build_report(std::string(to_string(config_.encoder.repr)), fp_.head, std::move(records), feats, true);
    write_eval_artifacts(report, dir, "test");
    report_ = std::move(report);
  });
  return *report_;
}

EvaluationReport run_pipeline(const RunConfig& config, Pipeline::Logger log) {
  Pipeline p(config, std::move(log));
  return p.evaluate();
}

EvaluationReport cross_split_evaluate(const RunConfig& train_config, const Corpus& test_corpus,
                                      std::optional<Split> split, std::size_t threads) {
  const StageFingerprints fp = stage_fingerprints(train_config);
  const fs::path root(train_config.out_dir);
  const std::string repr(to_string(train_config.encoder.repr));
  const Checkpoint st = load_checkpoint(root / "short_term" / "checkpoint.dgck", fp.short_term);
  const Checkpoint hd = load_checkpoint(root / "head" / repr / "checkpoint.dgck", fp.head);
  check_frame_geometry(test_corpus, train_config.short_term.mtb);

  std::vector<std::size_t> indices;
  for (std::size_t i = 0; i < test_corpus.samples.size(); ++i)
    if (!split || test_corpus.split.at(test_corpus.samples[i].id) == *split) indices.push_back(i);
  if (indices.empty()) throw DomainError("cross_split_evaluate: no videos in the requested split");

  const auto feats = featurize(test_corpus, indices, train_config.resolved_short_term(), st.params, threads);
  const std::size_t trained_dim = json::parse(hd.config).at("feature_dim").get<std::size_t>();
  if (feats.front().dep.dim() != trained_dim) {
    throw ConfigError("test features have dimension " + std::to_string(feats.front().dep.dim()) +
                      ", the head was trained on " + std::to_string(trained_dim));
  }
  const HeadSpec spec = head_spec_for(train_config, trained_dim);
  std::vector<PredictionRecord> records;
  for (const auto& f : feats) {
    const HeadInput in = encode_video(f, train_config.encoder);
    records.push_back({f.id, f.split, static_cast<double>(f.bdi_score),
                       predict_video(spec, train_config.encoder.repr, in, f, hd.params),
                       aggregate_atp(f.slice_predictions)});
  }
  return build_report(repr, fp.head, std::move(records), feats, split.has_value());
}

}  // namespace depgraph
