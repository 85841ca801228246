#pragma once

#include <span>
#include <string>
#include <vector>

#include "sanlab/autograd.hpp"
#include "sanlab/lora.hpp"
#include "sanlab/model.hpp"

namespace sanlab {

enum class Trainable { none, all, adapters };

// A built forward graph plus handles to the trainable leaves, keyed by the
// tensor names used for optimizer state. Adapter leaves are named
// "<target>.lora_a" / "<target>.lora_b".
template <class S>
struct ForwardGraph {
  GraphT<S> graph;
  typename GraphT<S>::Var logits = -1;
  std::vector<std::pair<std::string, typename GraphT<S>::Var>> trainable;

  std::map<std::string, TensorT<S>> gradients() const {
    std::map<std::string, TensorT<S>> out;
    for (const auto& [name, var] : trainable) out.emplace(name, graph.grad(var));
    return out;
  }
};

// Causal decoder forward over a batch of equal-length sequences. Rows of the
// logits matrix are (sequence b, position t) in row-major order.
template <class S>
ForwardGraph<S> forward_batch(const ModelWeightsT<S>& weights, const AdapterSetT<S>* adapters,
                              const std::vector<std::vector<int>>& batch, Trainable mode) {
  const TransformerConfig& cfg = weights.config;
  if (batch.empty() || batch[0].empty()) throw DataError("forward: empty batch");
  const int bsz = static_cast<int>(batch.size());
  const int seq = static_cast<int>(batch[0].size());
  for (const auto& ids : batch) {
    if (static_cast<int>(ids.size()) != seq)
      throw ShapeError("forward: ragged batch, sequences must share a length");
    if (seq > cfg.context)
      throw DataError("forward: sequence length " + std::to_string(seq) +
                      " exceeds context " + std::to_string(cfg.context));
    for (int id : ids)
      if (id < 0 || id >= cfg.vocab_size) throw DataError("forward: token id out of range");
  }
  if (adapters) validate_adapters(weights, *adapters);

  ForwardGraph<S> fg;
  GraphT<S>& g = fg.graph;
  using Var = typename GraphT<S>::Var;

  const bool train_base = mode == Trainable::all;
  const bool train_adapters = mode == Trainable::adapters;

  auto weight_leaf = [&](const std::string& name) {
    Var v = g.leaf(weights.tensor(name), train_base);
    if (train_base) fg.trainable.emplace_back(name, v);
    return v;
  };

  // Linear through the adapter bypass when this tensor is adapted.
  auto linear_maybe_lora = [&](Var x, const std::string& name) {
    Var w = weight_leaf(name);
    const LoraAdapterT<S>* ad = nullptr;
    if (adapters) {
      auto it = adapters->by_target.find(name);
      if (it != adapters->by_target.end()) ad = &it->second;
    }
    if (!ad) return g.linear(x, w);
    Var av = g.leaf(ad->a, train_adapters);
    Var bv = g.leaf(ad->b, train_adapters);
    if (train_adapters) {
      fg.trainable.emplace_back(name + ".lora_a", av);
      fg.trainable.emplace_back(name + ".lora_b", bv);
    }
    return g.linear_lora(x, w, av, bv, ad->scale());
  };

  std::vector<int> flat_ids;
  std::vector<int> flat_pos;
  flat_ids.reserve(static_cast<std::size_t>(bsz) * seq);
  flat_pos.reserve(static_cast<std::size_t>(bsz) * seq);
  for (const auto& ids : batch)
    for (int t = 0; t < seq; ++t) {
      flat_ids.push_back(ids[static_cast<std::size_t>(t)]);
      flat_pos.push_back(t);
    }

  Var tok = g.embed_rows(weight_leaf("tok_emb"), flat_ids);
  Var pos = g.embed_rows(weight_leaf("pos_emb"), flat_pos);
  Var x = g.add(tok, pos);

  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    Var ln1 = g.layernorm(x, weight_leaf(p + "ln1.weight"), weight_leaf(p + "ln1.bias"));
    Var qkv = linear_maybe_lora(ln1, p + "attn.qkv");
    Var att = g.causal_attention(qkv, bsz, seq, cfg.heads);
    Var proj = linear_maybe_lora(att, p + "attn.out");
    x = g.add(x, proj);
    Var ln2 = g.layernorm(x, weight_leaf(p + "ln2.weight"), weight_leaf(p + "ln2.bias"));
    Var hidden = g.gelu(linear_maybe_lora(ln2, p + "mlp.in"));
    Var out = linear_maybe_lora(hidden, p + "mlp.out");
    x = g.add(x, out);
  }
  Var final_ln = g.layernorm(x, weight_leaf("ln_f.weight"), weight_leaf("ln_f.bias"));
  fg.logits = linear_maybe_lora(final_ln, "lm_head");
  if (!g.value(fg.logits).all_finite())
    throw NumericError("forward: non-finite activations in logits");
  return fg;
}

// T x V logits for a single sequence, no gradient bookkeeping.
template <class S>
TensorT<S> forward_logits(const ModelWeightsT<S>& weights, const AdapterSetT<S>* adapters,
                          std::span<const int> ids) {
  std::vector<std::vector<int>> batch{std::vector<int>(ids.begin(), ids.end())};
  ForwardGraph<S> fg = forward_batch(weights, adapters, batch, Trainable::none);
  return fg.graph.value(fg.logits);
}

}  // namespace sanlab
