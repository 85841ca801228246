#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sanlab/tensor.hpp"

namespace sanlab {

// Adam with bias correction. Moments are created lazily per parameter name and
// shape-checked on every step; the step counter increases once per call.
template <class S>
struct OptimizerStateT {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, TensorT<S>> first_moment;
  std::map<std::string, TensorT<S>> second_moment;
};

using OptimizerState = OptimizerStateT<float>;

template <class S>
using NamedParams = std::vector<std::pair<std::string, TensorT<S>*>>;

template <class S>
void adam_step(const NamedParams<S>& params,
               const std::map<std::string, TensorT<S>>& grads, OptimizerStateT<S>& state) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, param] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;  // untouched parameter, moments stay put
    const TensorT<S>& g = git->second;
    if (!g.same_shape(*param))
      throw ShapeError("adam: gradient shape mismatch for " + name);
    TensorT<S>& m = state.first_moment.try_emplace(name, TensorT<S>(param->shape)).first->second;
    TensorT<S>& v = state.second_moment.try_emplace(name, TensorT<S>(param->shape)).first->second;
    if (!m.same_shape(*param) || !v.same_shape(*param))
      throw ShapeError("adam: moment shape mismatch for " + name);
    for (std::size_t i = 0; i < param->numel(); ++i) {
      const double gi = static_cast<double>(g.data[i]);
      const double mi = state.beta1 * static_cast<double>(m.data[i]) + (1.0 - state.beta1) * gi;
      const double vi =
          state.beta2 * static_cast<double>(v.data[i]) + (1.0 - state.beta2) * gi * gi;
      m.data[i] = static_cast<S>(mi);
      v.data[i] = static_cast<S>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      param->data[i] = static_cast<S>(static_cast<double>(param->data[i]) -
                                      state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace sanlab
