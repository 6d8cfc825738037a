#include "depgraph/regressor.hpp"

#include <algorithm>

#include "depgraph/errors.hpp"

namespace depgraph {

GraphInput to_graph_input(const SpectralGraph& g) {
  const std::size_t n = g.num_vertices();
  if (g.adjacency.size() != n * n) throw ConfigError("spectral graph adjacency does not match vertex count");
  GraphInput in;
  in.kind = GraphKind::spectral;
  in.features = g.vertex_features;
  std::vector<std::uint8_t> mask(g.adjacency);
  for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 1;
  in.masks.push_back(std::move(mask));
  return in;
}

GraphInput to_graph_input(const SequentialGraph& g, const std::vector<std::size_t>& relation_windows) {
  const std::size_t n = g.num_vertices();
  GraphInput in;
  in.kind = GraphKind::sequential;
  in.features = g.vertex_features;
  in.masks.assign(relation_windows.size(), std::vector<std::uint8_t>(n * n, 0));
  for (auto& mask : in.masks)
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 1;
  for (const auto& e : g.edges) {
    auto it = std::find(relation_windows.begin(), relation_windows.end(), e.window);
    if (it == relation_windows.end()) {
      throw ConfigError("sequential graph edge window " + std::to_string(e.window) + " has no relation parameters");
    }
    if (e.src >= n || e.dst >= n) throw ConfigError("sequential graph edge out of range");
    // Messages flow forward in time: dst aggregates from src.
    in.masks[static_cast<std::size_t>(it - relation_windows.begin())][e.dst * n + e.src] = 1;
  }
  return in;
}

void GatConfig::validate() const {
  if (heads < 1) throw ConfigError("gat: heads must be >= 1");
  if (in_dim == 0 || hidden == 0 || fc[0] == 0 || fc[1] == 0) throw ConfigError("gat: widths must be positive");
  if (fc[2] != 1) throw ConfigError("gat: final layer must have one output");
  if (relations < 1) throw ConfigError("gat: at least one relation is required");
}

namespace {

std::string gat_prefix(std::size_t head, std::size_t relation) {
  return "gat.h" + std::to_string(head) + ".r" + std::to_string(relation) + ".";
}

void init_dense(ParamStore& params, const std::string& name, std::size_t out, std::size_t in, Rng& rng) {
  params.init_uniform(name + ".w", {out, in}, in, out, rng);
  params.init_constant(name + ".b", {out}, 0.0);
}

ad::Var dense_stack(ad::Var x, Binding& params, const std::string& prefix, std::size_t layers) {
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string name = prefix + std::to_string(i);
    x = ad::linear(x, params(name + ".w"), params(name + ".b"));
    if (i + 1 < layers) x = ad::relu(x);
  }
  return x;
}

}  // namespace

void init_gat_params(const GatConfig& config, ParamStore& params, Rng& rng) {
  config.validate();
  for (std::size_t h = 0; h < config.heads; ++h) {
    for (std::size_t r = 0; r < config.relations; ++r) {
      const std::string p = gat_prefix(h, r);
      params.init_uniform(p + "W", {config.hidden, config.in_dim}, config.in_dim, config.hidden, rng);
      params.init_uniform(p + "a_src", {1, config.hidden}, config.hidden, 1, rng);
      params.init_uniform(p + "a_dst", {1, config.hidden}, config.hidden, 1, rng);
    }
    params.init_constant("gat.h" + std::to_string(h) + ".bias", {config.hidden}, 0.0);
  }
  std::size_t in = config.heads * config.hidden;
  for (std::size_t i = 0; i < 3; ++i) {
    init_dense(params, "fc" + std::to_string(i), config.fc[i], in, rng);
    in = config.fc[i];
  }
}

GatLayerResult gat_layer(const GatConfig& config, const ad::Var& features, const GraphInput& graph, Binding& params) {
  const std::size_t n = graph.num_vertices();
  if (n == 0) throw DomainError("gat_layer: graph has no vertices");
  if (features.shape() != Shape{n, config.in_dim}) {
    throw ConfigError("gat_layer: vertex features " + shape_to_string(features.shape()) + " do not match in_dim " +
                      std::to_string(config.in_dim));
  }
  if (graph.masks.size() != config.relations) {
    throw ConfigError("gat_layer: graph has " + std::to_string(graph.masks.size()) + " relations, model expects " +
                      std::to_string(config.relations));
  }
  for (const auto& mask : graph.masks) {
    if (mask.size() != n * n) throw ConfigError("gat_layer: adjacency does not match vertex count");
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i * n + i]) throw DomainError("gat_layer: vertex without self-loop");
  }
  const ad::Var none;
  GatLayerResult result;
  std::vector<ad::Var> heads;
  for (std::size_t h = 0; h < config.heads; ++h) {
    ad::Var acc;
    for (std::size_t r = 0; r < config.relations; ++r) {
      const std::string p = gat_prefix(h, r);
      ad::Var proj = ad::linear(features, params(p + "W"), none);  // [n, hidden]
      ad::Var s_src = ad::reshape(ad::linear(proj, params(p + "a_src"), none), Shape{n});
      ad::Var s_dst = ad::reshape(ad::linear(proj, params(p + "a_dst"), none), Shape{n});
      // logits(i, j) = a_dst . Wh_i + a_src . Wh_j for target i and source j.
      ad::Var logits = ad::leaky_relu(ad::outer_add(s_dst, s_src), config.leaky_slope);
      ad::Var alpha = ad::softmax_rows(logits, &graph.masks[r]);
      result.attention.push_back(alpha.value());
      ad::Var agg = ad::matmul(alpha, proj);
      acc = acc.valid() ? ad::add(acc, agg) : agg;
    }
    heads.push_back(ad::add_rowwise(acc, params("gat.h" + std::to_string(h) + ".bias")));
  }
  result.features = ad::concat_cols(heads);
  ad::check_finite(result.features, "gat_layer");
  return result;
}

ad::Var readout_mean(const ad::Var& vertex_features) {
  if (vertex_features.shape().size() != 2 || vertex_features.dim(0) == 0) {
    throw DomainError("readout_mean: graph has no vertices");
  }
  return ad::mean_rows(vertex_features);
}

ad::Var gat_forward(const GatConfig& config, const GraphInput& graph, Binding& params) {
  ad::Var x = ad::Var::constant(Shape{graph.features.rows, graph.features.cols}, graph.features.data);
  ad::Var h = ad::relu(gat_layer(config, x, graph, params).features);
  return dense_stack(readout_mean(h), params, "fc", 3);
}

double gat_predict(const GatConfig& config, const GraphInput& graph, const ParamStore& params) {
  ad::NoGradGuard guard;
  Binding binding(params, false);
  return gat_forward(config, graph, binding).item();
}

void MlpHeadConfig::validate() const {
  if (in_dim == 0 || widths[0] == 0 || widths[1] == 0) throw ConfigError("mlp head: widths must be positive");
  if (widths[2] != 1) throw ConfigError("mlp head: final layer must have one output");
}

void Conv1dHeadConfig::validate() const {
  if (channels == 0 || length == 0) throw ConfigError("conv1d head: heatmap shape must be positive");
  if (conv_channels[0] == 0 || conv_channels[1] == 0) throw ConfigError("conv1d head: channels must be positive");
  if (kernel % 2 == 0) throw ConfigError("conv1d head: kernel must be odd");
}

void init_mlp_head_params(const MlpHeadConfig& config, ParamStore& params, Rng& rng) {
  config.validate();
  std::size_t in = config.in_dim;
  for (std::size_t i = 0; i < 3; ++i) {
    init_dense(params, "mlp.fc" + std::to_string(i), config.widths[i], in, rng);
    in = config.widths[i];
  }
}

void init_conv1d_head_params(const Conv1dHeadConfig& config, ParamStore& params, Rng& rng) {
  config.validate();
  std::size_t in = config.channels;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t out = config.conv_channels[i];
    const std::string name = "cnn.conv" + std::to_string(i);
    params.init_uniform(name + ".w", {out, in, config.kernel}, in * config.kernel, out * config.kernel, rng);
    params.init_constant(name + ".b", {out}, 0.0);
    in = out;
  }
  init_dense(params, "cnn.fc", 1, config.length * config.conv_channels[1], rng);
}

ad::Var mlp_head_forward(const MlpHeadConfig& config, const ad::Var& x, Binding& params) {
  if (x.shape() != Shape{config.in_dim}) {
    throw ConfigError("mlp head: input " + shape_to_string(x.shape()) + " does not match in_dim " +
                      std::to_string(config.in_dim));
  }
  return dense_stack(x, params, "mlp.fc", 3);
}

ad::Var conv1d_head_forward(const Conv1dHeadConfig& config, const ad::Var& heatmap, Binding& params) {
  if (heatmap.shape() != Shape{config.channels, config.length}) {
    throw ConfigError("conv1d head: heatmap " + shape_to_string(heatmap.shape()) + " does not match [" +
                      std::to_string(config.channels) + "," + std::to_string(config.length) + "]");
  }
  // Convolve along frequency with feature channels as input channels.
  ad::Var x = ad::transpose(heatmap);
  x = ad::relu(ad::conv1d(x, params("cnn.conv0.w"), params("cnn.conv0.b")));
  x = ad::relu(ad::conv1d(x, params("cnn.conv1.w"), params("cnn.conv1.b")));
  return ad::linear(ad::reshape(x, Shape{x.size()}), params("cnn.fc.w"), params("cnn.fc.b"));
}

double mlp_head(const MlpHeadConfig& config, const std::vector<double>& x, const ParamStore& params) {
  ad::NoGradGuard guard;
  Binding binding(params, false);
  return mlp_head_forward(config, ad::Var::constant(Shape{x.size()}, x), binding).item();
}

double conv1d_head(const Conv1dHeadConfig& config, const Matrix& heatmap, const ParamStore& params) {
  ad::NoGradGuard guard;
  Binding binding(params, false);
  return conv1d_head_forward(config, ad::Var::constant(Shape{heatmap.rows, heatmap.cols}, heatmap.data), binding)
      .item();
}

std::string head_output_bias(const HeadSpec& spec) {
  switch (spec.kind) {
    case HeadKind::gat: return "fc2.b";
    case HeadKind::mlp: return "mlp.fc2.b";
    case HeadKind::conv1d: return "cnn.fc.b";
  }
  return {};
}

ParamStore init_head_params(const HeadSpec& spec, std::uint64_t seed) {
  ParamStore params;
  Rng rng(derive_seed(seed, 3));
  switch (spec.kind) {
    case HeadKind::gat: init_gat_params(spec.gat, params, rng); break;
    case HeadKind::mlp: init_mlp_head_params(spec.mlp, params, rng); break;
    case HeadKind::conv1d: init_conv1d_head_params(spec.conv, params, rng); break;
  }
  return params;
}

ad::Var head_forward(const HeadSpec& spec, const HeadInput& input, Binding& params) {
  switch (spec.kind) {
    case HeadKind::gat:
      if (auto* g = std::get_if<GraphInput>(&input)) return gat_forward(spec.gat, *g, params);
      break;
    case HeadKind::mlp:
      if (auto* v = std::get_if<std::vector<double>>(&input))
        return mlp_head_forward(spec.mlp, ad::Var::constant(Shape{v->size()}, *v), params);
      break;
    case HeadKind::conv1d:
      if (auto* m = std::get_if<Matrix>(&input))
        return conv1d_head_forward(spec.conv, ad::Var::constant(Shape{m->rows, m->cols}, m->data), params);
      break;
  }
  throw ConfigError("head input does not match head kind");
}

double head_predict(const HeadSpec& spec, const HeadInput& input, const ParamStore& params) {
  ad::NoGradGuard guard;
  Binding binding(params, false);
  return head_forward(spec, input, binding).item();
}

HeadTrainResult train_head(const HeadSpec& spec, const std::vector<HeadItem>& items, const HeadTrainConfig& config,
                           const ParamStore* initial) {
  if (items.empty()) throw DomainError("train_head: empty training set");
  HeadTrainResult result;
  result.params = initial ? *initial : init_head_params(spec, config.seed);
  if (!initial && config.init_bias_to_label_mean) {
    double mu = 0.0;
    for (const auto& it : items) mu += it.label;
    result.params.at(head_output_bias(spec)).data[0] = mu / static_cast<double>(items.size());
  }
  Adam optimizer(config.adam);
  Rng rng(derive_seed(config.seed, 4));
  std::vector<std::size_t> order(items.size());
  for (std::size_t e = 0; e < config.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t idx : order) {
      Binding binding(result.params, true);
      ad::Var pred = head_forward(spec, items[idx].input, binding);
      ad::Var loss = ad::square(ad::add_scalar(pred, -items[idx].label));
      ad::backward(loss);
      optimizer.step(result.params, binding.gradients());
      result.step_loss.push_back(loss.item());
    }
  }
  result.rng_state = rng.state();
  return result;
}

HeadTrainResult train_graph_head(const GatConfig& config, const std::vector<HeadItem>& items,
                                 const HeadTrainConfig& train_config, const ParamStore* initial) {
  if (items.empty()) throw DomainError("train_graph_head: empty training set");
  const auto* first = std::get_if<GraphInput>(&items.front().input);
  if (!first) throw ConfigError("train_graph_head: items must be graphs");
  for (const auto& it : items) {
    const auto* g = std::get_if<GraphInput>(&it.input);
    if (!g || g->kind != first->kind) throw ConfigError("train_graph_head: mixed graph kinds in one run");
  }
  HeadSpec spec;
  spec.kind = HeadKind::gat;
  spec.gat = config;
  return train_head(spec, items, train_config, initial);
}

}  // namespace depgraph
