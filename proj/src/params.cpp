#include "depgraph/params.hpp"

#include <cmath>

#include "depgraph/errors.hpp"

namespace depgraph {

void ParamStore::set(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(tensors_.size());
  for (const auto& [name, _] : tensors_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : tensors_) n += t.size();
  return n;
}

void ParamStore::init_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::size_t fan_out,
                              Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.data) v = rng.uniform(-limit, limit);
  tensors_[name] = std::move(t);
}

void ParamStore::init_constant(const std::string& name, Shape shape, double value) {
  tensors_[name] = Tensor(std::move(shape), value);
}

void ParamStore::zero_prefix(const std::string& prefix) {
  for (auto& [name, t] : tensors_) {
    if (name.rfind(prefix, 0) == 0) std::fill(t.data.begin(), t.data.end(), 0.0);
  }
}

Binding::Binding(const ParamStore& store, bool track_gradients) : store_(&store), track_(track_gradients) {}

ad::Var Binding::operator()(const std::string& name) {
  auto it = leaves_.find(name);
  if (it != leaves_.end()) return it->second;
  ad::Var v = ad::Var::leaf(store_->at(name), track_);
  leaves_.emplace(name, v);
  return v;
}

Gradients Binding::gradients() const {
  Gradients out;
  for (const auto& [name, t] : store_->tensors()) {
    auto it = leaves_.find(name);
    if (it != leaves_.end() && !it->second.grad().empty()) {
      out[name] = it->second.grad();
    } else {
      out[name] = std::vector<double>(t.size(), 0.0);
    }
  }
  return out;
}

void Adam::step(ParamStore& params, const Gradients& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (g.size() != p.size()) throw ConfigError("gradient size mismatch for '" + name + "'");
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

}  // namespace depgraph
