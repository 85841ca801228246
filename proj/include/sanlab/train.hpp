#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sanlab/adam.hpp"
#include "sanlab/eval.hpp"
#include "sanlab/forward.hpp"
#include "sanlab/splits.hpp"

namespace sanlab {

struct LoraSpec {
  std::set<MatrixRole> targets = default_adapter_roles();
  int rank = 8;
  double alpha = 8.0;
};

enum class LossMask { full_sequence, answer_only };

struct TrainRecipe {
  std::string method;
  double lr = 1e-3;
  int epochs = 10;
  long max_steps = 30000;
  int batch = 16;
  LossMask mask = LossMask::full_sequence;
  LoraSpec lora;
  std::uint64_t seed = 0;
  // pretraining halt: probe EM over a sampled subset of training questions
  double probe_em_target = 0.95;
  int probe_interval = 100;
  int probe_questions = 150;

  void validate() const {
    static const std::set<std::string> known{"pretrain",  "standard-ft",    "sanitize",
                                             "sanitize-no-KR", "neg-grad", "neg-task-vector"};
    if (!known.count(method)) throw ConfigError("recipe: unknown method '" + method + "'");
    if (lr <= 0 || epochs <= 0 || max_steps <= 0 || batch <= 0)
      throw ConfigError("recipe: hyperparameters must be positive");
  }
};

struct TrainLogEntry {
  long step = 0;
  double loss = 0.0;
  double probe_em = -1.0;  // < 0 when not measured at this step
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  double wall_seconds = 0.0;
  std::string status;
};

inline void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path.string());
  for (const TrainLogEntry& e : log.entries) {
    nlohmann::json j{{"step", e.step}, {"loss", e.loss}};
    if (e.probe_em >= 0.0) j["probe_em"] = e.probe_em;
    out << j.dump() << "\n";
  }
  out << nlohmann::json{{"status", log.status}, {"wall_seconds", log.wall_seconds}}.dump()
      << "\n";
}

namespace train_detail {

struct Sample {
  std::vector<int> ids;
  int prompt_len = 0;  // tokens before the answer span
};

inline Sample render_sample(const Vocabulary& vocab, const QAPair& qa) {
  Sample s;
  std::vector<int> prompt = encode(vocab, render_prompt(qa.question));
  std::vector<int> answer = encode(vocab, qa.answer);
  s.prompt_len = static_cast<int>(prompt.size());
  s.ids = std::move(prompt);
  s.ids.insert(s.ids.end(), answer.begin(), answer.end());
  s.ids.push_back(Vocabulary::kNl);
  return s;
}

// Pads a batch of samples and runs one forward/backward/update step.
// Returns the mean loss over predicted positions.
template <class StepFn>
double batch_step(const ModelWeights& weights, const AdapterSet* adapters,
                  const std::vector<Sample>& batch, LossMask mask_policy, double loss_sign,
                  Trainable mode, const TransformerConfig& cfg, StepFn&& apply_update) {
  int max_len = 0;
  for (const Sample& s : batch) max_len = std::max(max_len, static_cast<int>(s.ids.size()));
  if (max_len > cfg.context)
    throw DataError("train: sequence length " + std::to_string(max_len) + " exceeds context " +
                    std::to_string(cfg.context));
  std::vector<std::vector<int>> rows;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;
  for (const Sample& s : batch) {
    std::vector<int> padded = s.ids;
    padded.resize(static_cast<std::size_t>(max_len), Vocabulary::kPad);
    for (int p = 0; p < max_len; ++p) {
      const int target_pos = p + 1;
      bool valid = target_pos < static_cast<int>(s.ids.size());
      if (valid && mask_policy == LossMask::answer_only && target_pos < s.prompt_len)
        valid = false;
      targets.push_back(valid ? padded[static_cast<std::size_t>(target_pos)] : 0);
      mask.push_back(valid ? 1 : 0);
    }
    rows.push_back(std::move(padded));
  }
  long count = 0;
  for (std::uint8_t m : mask) count += m;
  if (count == 0) throw DataError("train: batch has no predicted positions");

  ForwardGraph<float> fg = forward_batch(weights, adapters, rows, mode);
  auto ce = fg.graph.cross_entropy(fg.logits, std::move(targets), std::move(mask));
  const double mean_loss =
      static_cast<double>(fg.graph.value(ce).data[0]) / static_cast<double>(count);
  auto loss = fg.graph.scale(ce, loss_sign / static_cast<double>(count));
  fg.graph.backward(loss);
  apply_update(fg.gradients());
  return mean_loss;
}

inline double greedy_em(const ModelVariant& model, const Vocabulary& vocab,
                        const std::vector<QAPair>& pairs) {
  GenerationSettings s;
  s.strategy = GenerationSettings::Strategy::greedy;
  s.max_new_tokens = 12;
  return qa_accuracy(model, vocab, pairs, s);
}

}  // namespace train_detail

struct PretrainResult {
  ModelWeights weights;
  TrainLog log;
};

// Full-parameter language modeling over the pretraining stream; halts when
// the QA probe subset reaches the target exact match or at max_steps.
inline PretrainResult pretrain(const TransformerConfig& base_config, const Vocabulary& vocab,
                               const std::string& pretrain_text,
                               const std::vector<QAPair>& probe_pool, const TrainRecipe& recipe) {
  recipe.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TransformerConfig cfg = base_config;
  cfg.vocab_size = vocab.size();
  Rng rng = Rng(recipe.seed).child("pretrain");

  PretrainResult result;
  result.weights = init_model_weights<float>(cfg, rng);
  ModelWeights& weights = result.weights;

  std::vector<int> stream{Vocabulary::kBos};
  for (int id : encode(vocab, pretrain_text)) stream.push_back(id);
  if (stream.size() < 2) throw DataError("pretrain: empty training stream");

  // The window origin rotates across epochs so lines straddling a boundary in
  // one epoch train intact in another.
  auto windows_for_epoch = [&](int epoch) {
    std::vector<std::vector<int>> windows;
    const std::size_t ctx = static_cast<std::size_t>(cfg.context);
    const std::size_t offset = (static_cast<std::size_t>(epoch) * (ctx / 4 + 1)) % ctx;
    for (std::size_t at = offset; at + ctx <= stream.size(); at += ctx)
      windows.emplace_back(stream.begin() + static_cast<long>(at),
                           stream.begin() + static_cast<long>(at + ctx));
    if (windows.empty())
      windows.emplace_back(stream.begin(),
                           stream.begin() + static_cast<long>(std::min(ctx, stream.size())));
    return windows;
  };

  std::vector<QAPair> probe;
  {
    Rng prng = Rng(recipe.seed).child("probe");
    std::vector<int> picks = prng.sample(static_cast<int>(probe_pool.size()),
                                         std::min<int>(recipe.probe_questions,
                                                       static_cast<int>(probe_pool.size())));
    for (int p : picks) probe.push_back(probe_pool[static_cast<std::size_t>(p)]);
  }

  NamedParams<float> params;
  for (auto& e : weights.mutable_entries()) params.emplace_back(e.name, &e.tensor);
  OptimizerState opt;
  opt.lr = recipe.lr;

  long step = 0;
  result.log.status = "max-steps";
  try {
    for (int epoch = 0; step < recipe.max_steps; ++epoch) {
      std::vector<std::vector<int>> windows = windows_for_epoch(epoch);
      std::vector<int> order(windows.size());
      for (std::size_t i = 0; i < windows.size(); ++i) order[i] = static_cast<int>(i);
      Rng erng = Rng(recipe.seed).child("shuffle", static_cast<std::uint64_t>(epoch));
      erng.shuffle(order);
      for (std::size_t at = 0; at < order.size() && step < recipe.max_steps;
           at += static_cast<std::size_t>(recipe.batch)) {
        std::vector<train_detail::Sample> batch;
        for (std::size_t i = at;
             i < order.size() && i < at + static_cast<std::size_t>(recipe.batch); ++i) {
          train_detail::Sample s;
          s.ids = windows[static_cast<std::size_t>(order[i])];
          batch.push_back(std::move(s));
        }
        double loss = train_detail::batch_step(
            weights, nullptr, batch, LossMask::full_sequence, +1.0, Trainable::all, cfg,
            [&](const std::map<std::string, Tensor>& grads) { adam_step(params, grads, opt); });
        ++step;
        TrainLogEntry entry{step, loss, -1.0};
        if (step % recipe.probe_interval == 0 && !probe.empty()) {
          entry.probe_em =
              train_detail::greedy_em(ModelVariant{&weights, nullptr}, vocab, probe);
        }
        result.log.entries.push_back(entry);
        if (entry.probe_em >= recipe.probe_em_target) {
          result.log.status = "probe-target";
          step = recipe.max_steps;  // leave both loops
        }
      }
    }
  } catch (const NumericError& e) {
    result.log.status = "diverged";
    throw NumericError("pretrain diverged at step " + std::to_string(step + 1) +
                       " (last good step " + std::to_string(step) + "): " + e.what());
  }
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

struct FinetuneResult {
  AdapterSet adapters;
  TrainLog log;
};

namespace train_detail {

// Shared LoRA fine-tuning loop. loss_sign -1 ascends instead of descending;
// em_stop_pairs, when set, ends training once greedy EM over them hits zero.
inline FinetuneResult finetune(const ModelWeights& weights, const Vocabulary& vocab,
                               std::vector<QAPair> data, const TrainRecipe& recipe,
                               double loss_sign, const std::vector<QAPair>* em_stop_pairs) {
  recipe.validate();
  if (data.empty()) throw DataError("finetune: empty training data");
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng = Rng(recipe.seed).child("finetune");

  FinetuneResult result;
  result.adapters =
      init_adapters(weights, recipe.lora.targets, recipe.lora.rank, recipe.lora.alpha, rng);
  result.adapters.provenance.method = recipe.method;
  result.adapters.provenance.seed = recipe.seed;
  AdapterSet& adapters = result.adapters;

  NamedParams<float> params;
  for (auto& [target, ad] : adapters.by_target) {
    params.emplace_back(target + ".lora_a", &ad.a);
    params.emplace_back(target + ".lora_b", &ad.b);
  }
  OptimizerState opt;
  opt.lr = recipe.lr;

  std::vector<Sample> samples;
  for (const QAPair& qa : data) samples.push_back(render_sample(vocab, qa));

  long step = 0;
  result.log.status = "epochs-done";
  try {
    for (int epoch = 0; epoch < recipe.epochs && step < recipe.max_steps; ++epoch) {
      std::vector<int> order(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) order[i] = static_cast<int>(i);
      Rng erng = Rng(recipe.seed).child("shuffle", static_cast<std::uint64_t>(epoch));
      erng.shuffle(order);
      for (std::size_t at = 0; at < order.size() && step < recipe.max_steps;
           at += static_cast<std::size_t>(recipe.batch)) {
        std::vector<Sample> batch;
        for (std::size_t i = at;
             i < order.size() && i < at + static_cast<std::size_t>(recipe.batch); ++i)
          batch.push_back(samples[static_cast<std::size_t>(order[i])]);
        double loss = batch_step(
            weights, &adapters, batch, recipe.mask, loss_sign, Trainable::adapters,
            weights.config,
            [&](const std::map<std::string, Tensor>& grads) { adam_step(params, grads, opt); });
        ++step;
        result.log.entries.push_back(TrainLogEntry{step, loss, -1.0});
      }
      if (em_stop_pairs) {
        double em = greedy_em(ModelVariant{&weights, &adapters}, vocab, *em_stop_pairs);
        result.log.entries.push_back(TrainLogEntry{step, 0.0, em});
        if (em == 0.0) {
          result.log.status = "em-zero";
          break;
        }
      }
    }
  } catch (const NumericError& e) {
    result.log.status = "diverged";
    throw NumericError(recipe.method + " diverged at step " + std::to_string(step + 1) + ": " +
                       e.what());
  }
  if (step >= recipe.max_steps) result.log.status = "max-steps";
  result.log.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace train_detail

// Minimizes the sequence loss over the shuffled union of the sanitized and
// retain sets; only adapter tensors train, base weights stay frozen.
inline FinetuneResult sanitization_tune(const ModelWeights& weights, const Vocabulary& vocab,
                                        const KnowledgeSet& ks, const KnowledgeSet& kr,
                                        const TrainRecipe& recipe) {
  if (ks.pairs.empty()) throw DataError("sanitization_tune: empty sanitized set");
  std::vector<QAPair> data = ks.pairs;
  data.insert(data.end(), kr.pairs.begin(), kr.pairs.end());
  return train_detail::finetune(weights, vocab, std::move(data), recipe, +1.0, nullptr);
}

inline FinetuneResult standard_finetune(const ModelWeights& weights, const Vocabulary& vocab,
                                        const KnowledgeSet& kf, const TrainRecipe& recipe) {
  if (kf.pairs.empty()) throw DataError("standard_finetune: empty forget set");
  return train_detail::finetune(weights, vocab, kf.pairs, recipe, +1.0, nullptr);
}

// Gradient ascent on the forget set; stops early once forget-train EM is zero.
inline FinetuneResult negative_gradient(const ModelWeights& weights, const Vocabulary& vocab,
                                        const KnowledgeSet& kf, const TrainRecipe& recipe) {
  if (kf.pairs.empty()) throw DataError("negative_gradient: empty forget set");
  return train_detail::finetune(weights, vocab, kf.pairs, recipe, -1.0, &kf.pairs);
}

struct NegTaskVectorResult {
  ModelWeights weights;  // base minus the fine-tuning task vector
  AdapterSet task_vector;
  TrainLog log;
};

// Fine-tunes on the forget set to obtain the task vector, then merges its
// negation into the base weights.
inline NegTaskVectorResult negative_task_vector(const ModelWeights& weights,
                                                const Vocabulary& vocab, const KnowledgeSet& kf,
                                                const TrainRecipe& recipe) {
  FinetuneResult ft = standard_finetune(weights, vocab, kf, recipe);
  NegTaskVectorResult result;
  result.task_vector = std::move(ft.adapters);
  result.task_vector.provenance.method = recipe.method;
  result.log = std::move(ft.log);
  result.weights = merge(weights, negate(result.task_vector));
  return result;
}

}  // namespace sanlab
