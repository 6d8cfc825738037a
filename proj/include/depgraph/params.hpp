#pragma once

#include <map>
#include <string>
#include <vector>

#include "depgraph/autodiff.hpp"
#include "depgraph/rng.hpp"
#include "depgraph/tensor.hpp"

namespace depgraph {

using Gradients = std::map<std::string, std::vector<double>>;

// Named parameter tensors. Iteration order is lexicographic by name, which
// keeps serialization and optimizer updates deterministic.
class ParamStore {
 public:
  void set(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t total_size() const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  // Glorot-uniform weights for a tensor whose fan-in/fan-out are given.
  void init_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
  void init_constant(const std::string& name, Shape shape, double value);

  // Sets every tensor whose name begins with prefix to zero.
  void zero_prefix(const std::string& prefix);

  bool operator==(const ParamStore& other) const = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

// Exposes a ParamStore to one forward pass as autodiff leaves. Each name maps
// to a single leaf, so a parameter reused several times accumulates one
// gradient. Not shared across threads.
class Binding {
 public:
  Binding(const ParamStore& store, bool track_gradients);
  ad::Var operator()(const std::string& name);
  // Gradient for every parameter in the store; untouched ones are zero.
  Gradients gradients() const;

 private:
  const ParamStore* store_;
  bool track_;
  std::map<std::string, ad::Var> leaves_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}
  void step(ParamStore& params, const Gradients& grads);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace depgraph
