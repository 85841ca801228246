#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sanlab/forward.hpp"
#include "sanlab/vocab.hpp"

namespace sanlab {

struct GenerationSettings {
  enum class Strategy { greedy, beam };
  Strategy strategy = Strategy::beam;
  int beam_width = 4;
  int max_new_tokens = 32;
  bool stop_on_eos = true;
  bool stop_on_nl = true;

  void validate() const {
    if (beam_width < 1) throw ConfigError("generation: beam width must be >= 1");
    if (max_new_tokens < 0) throw ConfigError("generation: max_new_tokens must be >= 0");
  }

  bool is_stop(int id) const {
    return (stop_on_eos && id == Vocabulary::kEos) || (stop_on_nl && id == Vocabulary::kNl);
  }
};

namespace detail {

// Last-position logits for each hypothesis, batched into one forward pass.
template <class S>
std::vector<std::vector<double>> last_logprobs(const ModelWeightsT<S>& w,
                                               const AdapterSetT<S>* adapters,
                                               const std::vector<std::vector<int>>& seqs) {
  ForwardGraph<S> fg = forward_batch(w, adapters, seqs, Trainable::none);
  const TensorT<S>& logits = fg.graph.value(fg.logits);
  const int seq = static_cast<int>(seqs[0].size());
  const int vocab = logits.shape[1];
  std::vector<std::vector<double>> out(seqs.size(), std::vector<double>(vocab));
  for (std::size_t b = 0; b < seqs.size(); ++b) {
    const int row = static_cast<int>(b) * seq + seq - 1;
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < vocab; ++j) m = std::max(m, static_cast<double>(logits.at(row, j)));
    double sum = 0.0;
    for (int j = 0; j < vocab; ++j) sum += std::exp(static_cast<double>(logits.at(row, j)) - m);
    const double lse = m + std::log(sum);
    for (int j = 0; j < vocab; ++j) out[b][static_cast<std::size_t>(j)] =
        static_cast<double>(logits.at(row, j)) - lse;
  }
  return out;
}

}  // namespace detail

// Appends the argmax token until a stop condition; ties go to the lowest id.
template <class S>
std::vector<int> greedy_generate(const ModelWeightsT<S>& w, const AdapterSetT<S>* adapters,
                                 std::span<const int> prompt, const GenerationSettings& settings) {
  settings.validate();
  if (prompt.empty()) throw DataError("generate: empty prompt");
  std::vector<int> seq(prompt.begin(), prompt.end());
  std::vector<int> generated;
  for (int step = 0; step < settings.max_new_tokens; ++step) {
    if (static_cast<int>(seq.size()) >= w.config.context) break;
    TensorT<S> logits = forward_logits(w, adapters, seq);
    const int last = logits.shape[0] - 1;
    int best = 0;
    for (int j = 1; j < logits.shape[1]; ++j)
      if (logits.at(last, j) > logits.at(last, best)) best = j;
    if (settings.is_stop(best)) break;
    generated.push_back(best);
    seq.push_back(best);
  }
  return generated;
}

// Beam search over summed token log-probabilities, no length normalization.
// Hypotheses that hit a stop condition retire from the beam; the answer is the
// best finished hypothesis, else the best live one. Ties break toward the
// lexicographically smaller id sequence.
template <class S>
std::vector<int> beam_generate(const ModelWeightsT<S>& w, const AdapterSetT<S>* adapters,
                               std::span<const int> prompt, const GenerationSettings& settings) {
  settings.validate();
  if (prompt.empty()) throw DataError("generate: empty prompt");
  const std::vector<int> base(prompt.begin(), prompt.end());

  struct Hyp {
    std::vector<int> ids;  // generated continuation only
    double score = 0.0;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ids < b.ids;
  };

  std::vector<Hyp> live{Hyp{}};
  std::vector<Hyp> finished;

  for (int step = 0; step < settings.max_new_tokens && !live.empty(); ++step) {
    if (static_cast<int>(base.size() + live[0].ids.size()) >= w.config.context) break;
    std::vector<std::vector<int>> seqs;
    seqs.reserve(live.size());
    for (const Hyp& h : live) {
      std::vector<int> s = base;
      s.insert(s.end(), h.ids.begin(), h.ids.end());
      seqs.push_back(std::move(s));
    }
    auto logprobs = detail::last_logprobs(w, adapters, seqs);

    struct Cand {
      Hyp hyp;
      bool stop;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * static_cast<std::size_t>(w.config.vocab_size));
    for (std::size_t h = 0; h < live.size(); ++h)
      for (int j = 0; j < w.config.vocab_size; ++j) {
        Hyp next = live[h];
        next.score += logprobs[h][static_cast<std::size_t>(j)];
        const bool stop = settings.is_stop(j);
        if (!stop) next.ids.push_back(j);
        cands.push_back(Cand{std::move(next), stop});
      }
    std::sort(cands.begin(), cands.end(),
              [&](const Cand& a, const Cand& b) { return better(a.hyp, b.hyp); });

    live.clear();
    for (std::size_t i = 0; i < cands.size() && i < static_cast<std::size_t>(settings.beam_width);
         ++i) {
      if (cands[i].stop)
        finished.push_back(std::move(cands[i].hyp));
      else
        live.push_back(std::move(cands[i].hyp));
    }
  }

  const Hyp* best = nullptr;
  for (const Hyp& h : finished)
    if (!best || better(h, *best)) best = &h;
  if (!best)
    for (const Hyp& h : live)
      if (!best || better(h, *best)) best = &h;
  return best ? best->ids : std::vector<int>{};
}

template <class S>
std::vector<int> generate(const ModelWeightsT<S>& w, const AdapterSetT<S>* adapters,
                          std::span<const int> prompt, const GenerationSettings& settings) {
  return settings.strategy == GenerationSettings::Strategy::greedy
             ? greedy_generate(w, adapters, prompt, settings)
             : beam_generate(w, adapters, prompt, settings);
}

// exp(mean NLL) over non-overlapping context-length windows; position 0 of
// each window is context only, positions 1..L-1 are predicted.
template <class S>
double perplexity(const ModelWeightsT<S>& w, const AdapterSetT<S>* adapters,
                  std::span<const int> stream, int window = 0) {
  if (stream.size() < 2) throw DataError("perplexity: stream shorter than 2 tokens");
  if (window <= 0) window = w.config.context;
  window = std::min(window, w.config.context);
  double total_nll = 0.0;
  std::size_t total_predicted = 0;
  for (std::size_t start = 0; start + 1 < stream.size(); start += static_cast<std::size_t>(window)) {
    const std::size_t len = std::min(static_cast<std::size_t>(window), stream.size() - start);
    if (len < 2) break;
    TensorT<S> logits = forward_logits(w, adapters, stream.subspan(start, len));
    TensorT<S> sub({static_cast<int>(len) - 1, logits.shape[1]});
    std::vector<int> targets(len - 1);
    for (std::size_t t = 0; t + 1 < len; ++t) {
      for (int j = 0; j < logits.shape[1]; ++j)
        sub.at(static_cast<int>(t), j) = logits.at(static_cast<int>(t), j);
      targets[t] = stream[start + t + 1];
    }
    total_nll += cross_entropy_sequence(sub, targets);
    total_predicted += len - 1;
  }
  return std::exp(total_nll / static_cast<double>(total_predicted));
}

}  // namespace sanlab
