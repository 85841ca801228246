#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sanlab/model.hpp"
#include "sanlab/rng.hpp"
#include "sanlab/tensor.hpp"

namespace sanlab {

// Low-rank pair attached to one frozen matrix: effective update is
// (alpha/rank) * B * A with B [out x rank], A [rank x in].
template <class S>
struct LoraAdapterT {
  std::string target;
  int rank = 0;
  double alpha = 0.0;
  TensorT<S> b;
  TensorT<S> a;

  double scale() const { return alpha / rank; }
};

struct AdapterProvenance {
  std::string method;
  std::uint64_t seed = 0;
  std::string config_hash;
};

template <class S>
struct AdapterSetT {
  int rank = 0;
  double alpha = 0.0;
  AdapterProvenance provenance;
  std::map<std::string, LoraAdapterT<S>> by_target;

  bool empty() const { return by_target.empty(); }
};

using LoraAdapter = LoraAdapterT<float>;
using AdapterSet = AdapterSetT<float>;

inline const std::set<MatrixRole>& default_adapter_roles() {
  static const std::set<MatrixRole> roles{MatrixRole::mlp_in, MatrixRole::mlp_out};
  return roles;
}

// One adapter per matching tensor. A ~ N(0, 0.02^2), B = 0, so the adapted
// model starts out identical to the base model.
template <class S>
AdapterSetT<S> init_adapters(const ModelWeightsT<S>& weights,
                             const std::set<MatrixRole>& target_roles, int rank,
                             double alpha, Rng& rng) {
  if (rank <= 0) throw ConfigError("init_adapters: rank must be positive");
  AdapterSetT<S> set;
  set.rank = rank;
  set.alpha = alpha;
  for (const auto& e : weights.entries()) {
    if (!target_roles.count(e.role)) continue;
    if (e.tensor.ndim() != 2)
      throw ShapeError("init_adapters: target '" + e.name + "' is not 2-dimensional");
    const int out = e.tensor.shape[0], in = e.tensor.shape[1];
    if (rank > std::min(out, in))
      throw ConfigError("init_adapters: rank " + std::to_string(rank) + " exceeds min dim of '" +
                        e.name + "' " + e.tensor.shape_str());
    LoraAdapterT<S> ad;
    ad.target = e.name;
    ad.rank = rank;
    ad.alpha = alpha;
    ad.b = TensorT<S>({out, rank});
    ad.a = TensorT<S>::randn({rank, in}, rng, 0.02);
    set.by_target.emplace(e.name, std::move(ad));
  }
  if (set.by_target.empty()) throw ConfigError("init_adapters: no tensors match target roles");
  return set;
}

template <class S>
AdapterSetT<S> init_adapters(const ModelWeightsT<S>& weights, int rank, double alpha,
                             Rng& rng) {
  return init_adapters(weights, default_adapter_roles(), rank, alpha, rng);
}

// h = W0 v + (alpha/rank) B (A v)
template <class S>
TensorT<S> adapted_matvec(const TensorT<S>& w0, const LoraAdapterT<S>& adapter,
                          const TensorT<S>& v) {
  w0.require_matrix();
  if (v.ndim() != 1 || v.shape[0] != w0.shape[1])
    throw ShapeError("adapted_matvec: vector length mismatch");
  if (adapter.b.shape[0] != w0.shape[0] || adapter.a.shape[1] != w0.shape[1] ||
      adapter.b.shape[1] != adapter.rank || adapter.a.shape[0] != adapter.rank)
    throw ShapeError("adapted_matvec: adapter shapes inconsistent with target");
  TensorT<S> col({v.shape[0], 1}, v.data);
  TensorT<S> base = matmul(w0, col);
  TensorT<S> av = matmul(adapter.a, col);
  TensorT<S> bav = matmul(adapter.b, av);
  TensorT<S> h({w0.shape[0]});
  const double s = adapter.scale();
  for (int i = 0; i < w0.shape[0]; ++i)
    h.data[static_cast<std::size_t>(i)] =
        static_cast<S>(static_cast<double>(base.data[static_cast<std::size_t>(i)]) +
                       s * static_cast<double>(bav.data[static_cast<std::size_t>(i)]));
  return h;
}

template <class S>
void validate_adapters(const ModelWeightsT<S>& weights, const AdapterSetT<S>& set) {
  for (const auto& [target, ad] : set.by_target) {
    if (!weights.has(target))
      throw DataError("adapters: model has no target tensor '" + target + "'");
    const TensorT<S>& w0 = weights.tensor(target);
    if (w0.ndim() != 2 || ad.b.shape[0] != w0.shape[0] || ad.a.shape[1] != w0.shape[1])
      throw ShapeError("adapters: shape mismatch against target '" + target + "'");
  }
}

// New weights with each target replaced by W0 + (alpha/rank) B A; everything
// else is copied and the input stays untouched.
template <class S>
ModelWeightsT<S> merge(const ModelWeightsT<S>& weights, const AdapterSetT<S>& set) {
  validate_adapters(weights, set);
  ModelWeightsT<S> out;
  out.config = weights.config;
  for (const auto& e : weights.entries()) {
    auto it = set.by_target.find(e.name);
    if (it == set.by_target.end()) {
      out.add(e.name, e.role, e.tensor);
      continue;
    }
    const LoraAdapterT<S>& ad = it->second;
    TensorT<S> delta = matmul(ad.b, ad.a);
    TensorT<S> merged = e.tensor;
    const double s = ad.scale();
    for (std::size_t i = 0; i < merged.numel(); ++i)
      merged.data[i] = static_cast<S>(static_cast<double>(merged.data[i]) +
                                      s * static_cast<double>(delta.data[i]));
    out.add(e.name, e.role, std::move(merged));
  }
  return out;
}

// Effective update becomes exactly -(alpha/rank) B A.
template <class S>
AdapterSetT<S> negate(const AdapterSetT<S>& set) {
  AdapterSetT<S> out = set;
  for (auto& [target, ad] : out.by_target)
    for (S& x : ad.b.data) x = -x;
  return out;
}

}  // namespace sanlab
