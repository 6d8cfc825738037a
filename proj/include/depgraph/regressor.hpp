#pragma once

// Video-level regression heads: a graph attention network over SPG/SEG
// graphs, plus MLP and 1D-CNN heads for the vector / heatmap baselines.

#include <array>
#include <cstdint>
#include <variant>
#include <vector>

#include "depgraph/autodiff.hpp"
#include "depgraph/encoders.hpp"
#include "depgraph/params.hpp"

namespace depgraph {

enum class GraphKind : int { spectral = 0, sequential = 1 };

// Vertex features plus one attention mask per relation. masks[r][i*n + j] is
// 1 when vertex i aggregates from vertex j under relation r; the diagonal is
// always set (self-loops).
struct GraphInput {
  GraphKind kind = GraphKind::spectral;
  Matrix features;
  std::vector<std::vector<std::uint8_t>> masks;

  std::size_t num_vertices() const { return features.rows; }
};

GraphInput to_graph_input(const SpectralGraph& g);
// Relation r carries the edges whose window equals relation_windows[r].
GraphInput to_graph_input(const SequentialGraph& g, const std::vector<std::size_t>& relation_windows);

struct GatConfig {
  std::size_t in_dim = 24;
  std::size_t heads = 1;
  std::size_t hidden = 32;
  std::array<std::size_t, 3> fc{64, 32, 1};
  double leaky_slope = 0.2;
  std::size_t relations = 1;

  void validate() const;
};

void init_gat_params(const GatConfig& config, ParamStore& params, Rng& rng);

struct GatLayerResult {
  ad::Var features;  // [n, heads * hidden]
  // Row-stochastic attention matrices, index head * relations + relation.
  std::vector<std::vector<double>> attention;
};

// Per head and relation: project, score pairs with a learned attention vector
// over [W h_i || W h_j], leaky rectifier, softmax over the masked
// neighbourhood, weighted sum. Relations are summed, heads concatenated.
GatLayerResult gat_layer(const GatConfig& config, const ad::Var& features, const GraphInput& graph, Binding& params);
ad::Var readout_mean(const ad::Var& vertex_features);
// gat_layer -> ReLU -> mean readout -> FC/ReLU -> FC/ReLU -> FC.
ad::Var gat_forward(const GatConfig& config, const GraphInput& graph, Binding& params);
double gat_predict(const GatConfig& config, const GraphInput& graph, const ParamStore& params);

struct MlpHeadConfig {
  std::size_t in_dim = 0;
  std::array<std::size_t, 3> widths{64, 32, 1};
  void validate() const;
};

struct Conv1dHeadConfig {
  std::size_t channels = 0;  // heatmap rows (feature channels)
  std::size_t length = 0;    // heatmap columns (frequency bins)
  std::array<std::size_t, 2> conv_channels{8, 8};
  std::size_t kernel = 3;
  void validate() const;
};

void init_mlp_head_params(const MlpHeadConfig& config, ParamStore& params, Rng& rng);
void init_conv1d_head_params(const Conv1dHeadConfig& config, ParamStore& params, Rng& rng);
ad::Var mlp_head_forward(const MlpHeadConfig& config, const ad::Var& x, Binding& params);
ad::Var conv1d_head_forward(const Conv1dHeadConfig& config, const ad::Var& heatmap, Binding& params);
double mlp_head(const MlpHeadConfig& config, const std::vector<double>& x, const ParamStore& params);
double conv1d_head(const Conv1dHeadConfig& config, const Matrix& heatmap, const ParamStore& params);

enum class HeadKind : int { gat = 0, mlp = 1, conv1d = 2 };

struct HeadSpec {
  HeadKind kind = HeadKind::gat;
  GatConfig gat;
  MlpHeadConfig mlp;
  Conv1dHeadConfig conv;
};

using HeadInput = std::variant<GraphInput, std::vector<double>, Matrix>;

struct HeadItem {
  HeadInput input;
  double label = 0.0;
};

struct HeadTrainConfig {
  AdamConfig adam{1e-3};
  std::size_t epochs = 60;
  std::uint64_t seed = 11;
  // Start the output bias at the mean training label.
  bool init_bias_to_label_mean = true;
};

struct HeadTrainResult {
  ParamStore params;
  std::vector<double> step_loss;
  std::string rng_state;  // shuffler state after the last epoch
};

std::string head_output_bias(const HeadSpec& spec);
ParamStore init_head_params(const HeadSpec& spec, std::uint64_t seed);
ad::Var head_forward(const HeadSpec& spec, const HeadInput& input, Binding& params);
double head_predict(const HeadSpec& spec, const HeadInput& input, const ParamStore& params);

// Adam on squared error, one item per step, shuffled every epoch.
HeadTrainResult train_head(const HeadSpec& spec, const std::vector<HeadItem>& items, const HeadTrainConfig& config,
                           const ParamStore* initial = nullptr);
// Graph-only entry: every item must be a graph of one kind.
HeadTrainResult train_graph_head(const GatConfig& config, const std::vector<HeadItem>& items,
                                 const HeadTrainConfig& train_config, const ParamStore* initial = nullptr);

}  // namespace depgraph
