#pragma once

#include <map>
#include <string>
#include <vector>

#include "sanlab/rng.hpp"
#include "sanlab/tensor.hpp"

namespace sanlab {

enum class MatrixRole {
  embedding,
  positional,
  attn_qkv,
  attn_out,
  mlp_in,
  mlp_out,
  norm,
  lm_head,
};

inline const char* role_name(MatrixRole role) {
  switch (role) {
    case MatrixRole::embedding: return "embedding";
    case MatrixRole::positional: return "positional";
    case MatrixRole::attn_qkv: return "attn-qkv";
    case MatrixRole::attn_out: return "attn-out";
    case MatrixRole::mlp_in: return "mlp-in";
    case MatrixRole::mlp_out: return "mlp-out";
    case MatrixRole::norm: return "norm";
    case MatrixRole::lm_head: return "lm-head";
  }
  throw DataError("role_name: bad role");
}

inline MatrixRole role_from_name(const std::string& name) {
  static const std::map<std::string, MatrixRole> table{
      {"embedding", MatrixRole::embedding}, {"positional", MatrixRole::positional},
      {"attn-qkv", MatrixRole::attn_qkv},   {"attn-out", MatrixRole::attn_out},
      {"mlp-in", MatrixRole::mlp_in},       {"mlp-out", MatrixRole::mlp_out},
      {"norm", MatrixRole::norm},           {"lm-head", MatrixRole::lm_head}};
  auto it = table.find(name);
  if (it == table.end()) throw DataError("unknown matrix role '" + name + "'");
  return it->second;
}

struct TransformerConfig {
  int layers = 4;
  int d_model = 128;
  int heads = 4;
  int mlp_hidden = 512;
  int context = 128;
  int vocab_size = 0;  // filled from the vocabulary

  void validate() const {
    if (layers <= 0 || d_model <= 0 || heads <= 0 || mlp_hidden <= 0 || context <= 0 ||
        vocab_size <= 0)
      throw ConfigError("transformer config: all dimensions must be positive");
    if (d_model % heads != 0)
      throw ConfigError("transformer config: d_model not divisible by heads");
  }
};

// Named tensor registry; role tags are fixed at insertion.
template <class S>
class ModelWeightsT {
 public:
  struct Entry {
    std::string name;
    MatrixRole role;
    TensorT<S> tensor;
  };

  TransformerConfig config;

  void add(std::string name, MatrixRole role, TensorT<S> tensor) {
    if (index_.count(name)) throw DataError("weights: duplicate tensor '" + name + "'");
    index_[name] = static_cast<int>(entries_.size());
    entries_.push_back(Entry{std::move(name), role, std::move(tensor)});
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("weights: unknown tensor '" + name + "'");
    return entries_[static_cast<std::size_t>(it->second)];
  }

  const TensorT<S>& tensor(const std::string& name) const { return entry(name).tensor; }

  TensorT<S>& mutable_tensor(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("weights: unknown tensor '" + name + "'");
    return entries_[static_cast<std::size_t>(it->second)].tensor;
  }

  MatrixRole role(const std::string& name) const { return entry(name).role; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& mutable_entries() { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.tensor.numel();
    return n;
  }

  template <class T>
  ModelWeightsT<T> cast() const {
    ModelWeightsT<T> out;
    out.config = config;
    for (const Entry& e : entries_) {
      TensorT<T> t(e.tensor.shape);
      for (std::size_t i = 0; i < t.numel(); ++i)
        t.data[i] = static_cast<T>(e.tensor.data[i]);
      out.add(e.name, e.role, std::move(t));
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

using ModelWeights = ModelWeightsT<float>;

// Fresh decoder weights: pre-LayerNorm blocks, learned positions, untied head.
template <class S>
ModelWeightsT<S> init_model_weights(const TransformerConfig& config, Rng& rng) {
  config.validate();
  const double init_std = 0.02;
  ModelWeightsT<S> w;
  w.config = config;
  auto randn = [&](std::vector<int> shape) {
    return TensorT<S>::randn(std::move(shape), rng, init_std);
  };
  auto ones = [&](int n) { return TensorT<S>::full({n}, S(1)); };
  w.add("tok_emb", MatrixRole::embedding, randn({config.vocab_size, config.d_model}));
  w.add("pos_emb", MatrixRole::positional, randn({config.context, config.d_model}));
  for (int l = 0; l < config.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    w.add(p + "ln1.weight", MatrixRole::norm, ones(config.d_model));
    w.add(p + "ln1.bias", MatrixRole::norm, TensorT<S>({config.d_model}));
    w.add(p + "attn.qkv", MatrixRole::attn_qkv, randn({3 * config.d_model, config.d_model}));
    w.add(p + "attn.out", MatrixRole::attn_out, randn({config.d_model, config.d_model}));
    w.add(p + "ln2.weight", MatrixRole::norm, ones(config.d_model));
    w.add(p + "ln2.bias", MatrixRole::norm, TensorT<S>({config.d_model}));
    w.add(p + "mlp.in", MatrixRole::mlp_in, randn({config.mlp_hidden, config.d_model}));
    w.add(p + "mlp.out", MatrixRole::mlp_out, randn({config.d_model, config.mlp_hidden}));
  }
  w.add("ln_f.weight", MatrixRole::norm, ones(config.d_model));
  w.add("ln_f.bias", MatrixRole::norm, TensorT<S>({config.d_model}));
  w.add("lm_head", MatrixRole::lm_head, randn({config.vocab_size, config.d_model}));
  return w;
}

}  // namespace sanlab
