// Copyright 2026 The pkws Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pkws/autodiff.hpp"
#include "pkws/common.hpp"
#include "pkws/tensor.hpp"

namespace pkws {

/// Ordered collection of named trainable tensors. Iteration order is the
/// name order, so updates are deterministic.
class ParamStore {
 public:
  ad::Param& create(const std::string& name, Tensor init) {
    auto [it, inserted] =
        params_.emplace(name, std::make_unique<ad::Param>(name, std::move(init)));
    if (!inserted) throw_config("duplicate parameter name: " + name);
    return *it->second;
  }

  ad::Param& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw_config("unknown parameter: " + name);
    return *it->second;
  }
  const ad::Param& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw_config("unknown parameter: " + name);
    return *it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grad() {
    for (auto& [name, p] : params_) p->grad.fill(0.0);
  }

  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p->value.numel();
    return n;
  }

  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& [name, p] : params_) fn(*p);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [name, p] : params_) fn(*p);
  }

  std::map<std::string, Tensor> snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, p] : params_) out.emplace(name, p->value);
    return out;
  }

  void restore(const std::map<std::string, Tensor>& snap) {
    for (auto& [name, tensor] : snap) {
      ad::Param& p = at(name);
      if (!p.value.same_shape(tensor))
        throw_data("restore: shape mismatch for parameter " + name);
      p.value = tensor;
    }
  }

 private:
  std::map<std::string, std::unique_ptr<ad::Param>> params_;
};

enum class OptimizerKind { sgd, adam };

/// Gradient-descent state shared across a parameter store. The adaptive
/// default (lr 1e-3, betas 0.9/0.999) is used everywhere unless a config
/// overrides it.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step_count = 0;
};

/// One update over every parameter in the store. Rejects non-finite
/// gradients, naming the offending parameter. Deterministic given the state.
inline void optimizer_step(OptimizerState& state, ParamStore& params) {
  if (state.learning_rate <= 0.0)
    throw_config("optimizer_step: learning rate must be positive");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  params.for_each([&](ad::Param& p) {
    if (!p.grad.all_finite())
      throw_numeric("optimizer_step: non-finite gradient for parameter " +
                    p.name);
    if (state.kind == OptimizerKind::sgd) {
      for (int64_t i = 0; i < p.value.numel(); ++i)
        p.value[i] -= state.learning_rate * p.grad[i];
      return;
    }
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const double g = p.grad[i];
      p.m[i] = state.beta1 * p.m[i] + (1.0 - state.beta1) * g;
      p.v[i] = state.beta2 * p.v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      p.value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  });
}

}  // namespace pkws
