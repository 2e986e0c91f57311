#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hairbench/autograd.hpp"
#include "hairbench/error.hpp"
#include "hairbench/tensor.hpp"

namespace hairbench {

template <typename T>
struct NamedParameter {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParameterSet = std::vector<NamedParameter<T>>;

struct AdamHyperparameters {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  AdamHyperparameters hyper;

  AdamState() = default;
  AdamState(const ParameterSet<T>& params, AdamHyperparameters h = {}) : hyper(h) {
    for (const auto& p : params) {
      first_moment.emplace_back(p.var.shape());
      second_moment.emplace_back(p.var.shape());
    }
  }
};

/// One Adam update with bias correction, using each parameter's accumulated grad().
/// Every gradient is checked before anything is modified, so a fault leaves
/// parameters and state untouched.
template <typename T>
void adam_step(ParameterSet<T>& params, AdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractViolation("adam_step: optimizer state has " +
                            std::to_string(state.first_moment.size()) + " slots for " +
                            std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.var.grad().shape() != p.var.shape() || state.first_moment[i].shape() != p.var.shape() ||
        state.second_moment[i].shape() != p.var.shape()) {
      throw ContractViolation("adam_step: shape mismatch for parameter " + p.name);
    }
    if (!p.var.grad().all_finite()) {
      throw NumericalFault("adam_step: non-finite gradient for parameter " + p.name);
    }
  }

  state.step += 1;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].var.value();
    const auto& grad = params[i].var.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      const double mk = h.beta1 * m[k] + (1.0 - h.beta1) * g;
      const double vk = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = lr * (mk / c1) / (std::sqrt(vk / c2) + h.epsilon);
      value[k] = static_cast<T>(value[k] - update);
    }
  }
}

template <typename T>
void zero_grad(ParameterSet<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

}  // namespace hairbench
