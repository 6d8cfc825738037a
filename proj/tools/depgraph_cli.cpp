// depgraph: command-line driver for the two-stage pipeline.
//
// Exit codes: 0 success, 2 configuration error, 3 domain error, 1 anything else.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "depgraph/config.hpp"
#include "depgraph/errors.hpp"
#include "depgraph/io.hpp"
#include "depgraph/pipeline.hpp"
#include "json.hpp"

using namespace depgraph;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> threads;
  std::string manifest;
  std::string repr;
  bool quiet = false;
};

RunConfig resolve(const Globals& g) {
  std::vector<std::string> overrides = g.sets;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (!g.out.empty()) overrides.push_back("out_dir=" + nlohmann::json(g.out).dump());
  if (g.threads) overrides.push_back("threads=" + std::to_string(*g.threads));
  if (!g.manifest.empty()) overrides.push_back("corpus.manifest=" + nlohmann::json(g.manifest).dump());
  if (!g.repr.empty()) overrides.push_back("encoder.repr=" + nlohmann::json(g.repr).dump());
  return g.config_path.empty() ? parse_run_config("", overrides) : load_run_config(g.config_path, overrides);
}

Pipeline::Logger logger(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::string num(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

void print_metrics(const EvaluationReport& r) {
  for (const auto& [split, m] : r.metrics) {
    std::printf("%-10s %-5s n=%-4zu rmse=%.4f mae=%.4f pcc=%s ccc=%s\n", split.c_str(), r.repr.c_str(), m.n, m.rmse,
                m.mae, num(m.pcc).c_str(), num(m.ccc).c_str());
  }
  for (const auto& [split, m] : r.atp_metrics) {
    std::printf("%-10s atp   n=%-4zu rmse=%.4f mae=%.4f pcc=%s ccc=%s\n", split.c_str(), m.n, m.rmse, m.mae,
                num(m.pcc).c_str(), num(m.ccc).c_str());
  }
  if (r.disentanglement) std::printf("mean |cos(F_dep, F_non)| = %.4f\n", *r.disentanglement);
}

int run(int argc, char** argv) {
  CLI::App app{"Two-stage video depression severity pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.option_defaults()->always_capture_default(false);
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Override a config key, e.g. --set short_term.steps=100");
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--out", g.out, "Output directory (out_dir)");
  app.add_option("--threads", g.threads, "Worker threads for extraction (0 = all cores)");
  app.add_flag("--quiet", g.quiet, "Suppress progress messages");
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus (manifest + video tensors)");
  auto* train_short = app.add_subcommand("train-short", "Train the short-term MTB-DFE model");
  auto* extract = app.add_subcommand("extract", "Extract per-slice features for every video");
  auto* encode = app.add_subcommand("encode", "Encode videos as graphs or aggregated vectors");
  auto* train_head = app.add_subcommand("train-head", "Train the video-level regression head");
  auto* eval = app.add_subcommand("eval", "Evaluate the head and write report, predictions and plot");
  auto* run_all = app.add_subcommand("run", "Run every stage (same as eval)");
  auto* cross = app.add_subcommand("cross-eval", "Apply a trained run to another corpus");
  auto* report = app.add_subcommand("report", "Summarize a report.json and redraw its scatter plot");
  auto* predict = app.add_subcommand("predict", "Score one graph file with a head checkpoint");
  auto* show = app.add_subcommand("config", "Print the effective configuration");

  for (auto* sub : {train_short, extract, encode, train_head, eval, run_all, cross, show}) {
    sub->add_option("--manifest", g.manifest, "Corpus manifest (default: synthesize)");
  }
  for (auto* sub : {encode, train_head, eval, run_all, cross, show}) {
    sub->add_option("--repr", g.repr, "Representation: spg, seg, spv, sph, sta or atp");
  }

  std::string test_manifest, split_name = "test", report_out;
  cross->add_option("--test-manifest", test_manifest, "Corpus to evaluate on")->required();
  cross->add_option("--split", split_name, "Split of the test corpus to evaluate, or 'all'");
  cross->add_option("--report", report_out, "Write the cross-evaluation report.json here");

  std::string report_in, plot_out;
  report->add_option("--in", report_in, "report.json to summarize")->required()->check(CLI::ExistingFile);
  report->add_option("--plot", plot_out, "Write a scatter plot (SVG) here");
  std::string report_split = "test";
  report->add_option("--split", report_split, "Split shown in the plot");

  std::string checkpoint_path, graph_path;
  predict->add_option("--checkpoint", checkpoint_path, "Head checkpoint")->required()->check(CLI::ExistingFile);
  predict->add_option("--graph", graph_path, "Graph file (.spg or .seg)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*synth) {
    const RunConfig cfg = resolve(g);
    Corpus corpus = generate_synthetic_corpus(cfg.corpus.synth, cfg.synth_seed());
    save_corpus(corpus, cfg.out_dir);
    std::printf("wrote %zu videos to %s\n", corpus.samples.size(), (fs::path(cfg.out_dir) / "manifest.csv").c_str());
    return 0;
  }
  if (*show) {
    std::printf("%s\n", run_config_to_json(resolve(g)).c_str());
    return 0;
  }
  if (*report) {
    const EvaluationReport r = read_report(report_in);
    print_metrics(r);
    if (!plot_out.empty()) {
      std::vector<double> pred, label;
      for (const auto& p : r.predictions) {
        if (report_split == "all" || to_string(p.split) == report_split) {
          pred.push_back(p.prediction);
          label.push_back(p.label);
        }
      }
      emit_scatter_plot(pred, label, plot_out, r.repr + " " + report_split);
    }
    return 0;
  }
  if (*predict) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    if (ck.kind != "head") throw ConfigError("'" + checkpoint_path + "' is not a head checkpoint");
    const auto meta = nlohmann::json::parse(ck.config);
    const nlohmann::json sections{{"encoder", meta.at("encoder")}, {"head", meta.at("head")}};
    const RunConfig cfg = parse_run_config(sections.dump());
    const std::size_t feature_dim = meta.at("feature_dim").get<std::size_t>();
    const GraphFile file = read_graph(graph_path);
    HeadInput input;
    if (cfg.encoder.repr == Repr::spg) {
      input = to_graph_input(to_spectral_graph(file));
    } else if (cfg.encoder.repr == Repr::seg) {
      input = to_graph_input(to_sequential_graph(file), cfg.encoder.windows);
    } else {
      throw ConfigError("predict takes graph heads only; this checkpoint is for '" +
                        std::string(to_string(cfg.encoder.repr)) + "'");
    }
    std::printf("%.6f\n", head_predict(head_spec_for(cfg, feature_dim), input, ck.params));
    return 0;
  }
  if (*cross) {
    const RunConfig cfg = resolve(g);
    const Corpus test = load_corpus(test_manifest);
    std::optional<Split> split;
    if (split_name != "all") split = parse_split(split_name);
    const EvaluationReport r = cross_split_evaluate(cfg, test, split, cfg.threads);
    print_metrics(r);
    if (!report_out.empty()) emit_report(r, report_out);
    return 0;
  }

  Pipeline pipeline(resolve(g), logger(g));
  if (*train_short) {
    pipeline.short_term();
    std::printf("%s\n", (pipeline.stage_dir("short_term") / "checkpoint.dgck").c_str());
  } else if (*extract) {
    std::printf("%zu videos -> %s\n", pipeline.features().size(), pipeline.stage_dir("features").c_str());
  } else if (*encode) {
    std::printf("%zu videos -> %s\n", pipeline.encoded().size(), pipeline.stage_dir("encoded").c_str());
  } else if (*train_head) {
    pipeline.head();
    std::printf("%s\n", (pipeline.stage_dir("head") / "checkpoint.dgck").c_str());
  } else {
    print_metrics(pipeline.evaluate());
    std::printf("report: %s\n", (pipeline.stage_dir("eval") / "report.json").c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
