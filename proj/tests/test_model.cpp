#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "sanlab/generate.hpp"
#include "sanlab/vocab.hpp"

using namespace sanlab;

namespace {

TransformerConfig tiny_config(int vocab) {
  TransformerConfig cfg;
  cfg.layers = 2;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.mlp_hidden = 32;
  cfg.context = 16;
  cfg.vocab_size = vocab;
  return cfg;
}

ModelWeights tiny_model(std::uint64_t seed, int vocab = 11) {
  Rng rng(seed);
  return init_model_weights<float>(tiny_config(vocab), rng);
}

// Random weights scaled up so logits are spread out and argmaxes distinct.
ModelWeights spiky_model(std::uint64_t seed, int vocab) {
  ModelWeights w = tiny_model(seed, vocab);
  for (auto& e : w.mutable_entries())
    if (e.role != MatrixRole::norm)
      for (float& x : e.tensor.data) x *= 30.0f;
  return w;
}

}  // namespace

TEST_CASE("vocab reserved tokens occupy the first five ids") {
  Vocabulary v = build_vocab("a b a");
  CHECK(v.size() == 7);
  CHECK(v.token(0) == "<pad>");
  CHECK(v.token(1) == "<bos>");
  CHECK(v.token(2) == "<eos>");
  CHECK(v.token(3) == "<unk>");
  CHECK(v.token(4) == "<nl>");
  CHECK(v.token(5) == "a");
  CHECK(v.token(6) == "b");
}

TEST_CASE("vocab determinism and empty corpus error") {
  Vocabulary a = build_vocab("the quick fox. the slow fox?");
  Vocabulary b = build_vocab("the quick fox. the slow fox?");
  CHECK(a.tokens() == b.tokens());
  CHECK_THROWS_AS(build_vocab(""), DataError);
}

TEST_CASE("encode splits punctuation and maps unknowns") {
  Vocabulary v = build_vocab("Q : who ? A :");
  std::vector<int> ids = encode(v, "Q: who? A:");
  REQUIRE(ids.size() == 6);
  CHECK(v.token(ids[0]) == "Q");
  CHECK(v.token(ids[1]) == ":");
  CHECK(v.token(ids[2]) == "who");
  CHECK(v.token(ids[3]) == "?");
  CHECK(v.token(ids[4]) == "A");
  CHECK(v.token(ids[5]) == ":");
  std::vector<int> unk = encode(v, "zebra");
  CHECK(unk == std::vector<int>{Vocabulary::kUnk});
}

TEST_CASE("decode round trip up to canonical whitespace") {
  Vocabulary v = build_vocab("who wrote the poem ' If ' ? Q : A : I don t know .");
  std::string text = "Q: who wrote the poem 'If'?\nA: I don't know.";
  std::vector<int> ids = encode(v, text);
  std::string round = decode(v, ids);
  CHECK(encode(v, round) == ids);
  CHECK(decode(v, encode(v, "Q: who? A:")) == "Q: who? A:");
  CHECK_THROWS_AS(decode(v, {99}), DataError);
}

TEST_CASE("forward logits shape and determinism") {
  ModelWeights w = tiny_model(1);
  std::vector<int> ids{1, 5, 6, 7};
  Tensor a = forward_logits<float>(w, nullptr, ids);
  CHECK(a.shape == std::vector<int>{4, 11});
  Tensor b = forward_logits<float>(w, nullptr, ids);
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("forward rejects overlong and out-of-range sequences") {
  ModelWeights w = tiny_model(2);
  std::vector<int> too_long(w.config.context + 1, 1);
  CHECK_THROWS_AS(forward_logits<float>(w, nullptr, too_long), DataError);
  std::vector<int> bad{1, 200};
  CHECK_THROWS_AS(forward_logits<float>(w, nullptr, bad), DataError);
}

TEST_CASE("greedy generation: determinism, stop token, empty prompt") {
  ModelWeights w = spiky_model(3, 9);
  GenerationSettings s;
  s.strategy = GenerationSettings::Strategy::greedy;
  s.max_new_tokens = 6;
  std::vector<int> prompt{1, 5};
  auto g1 = greedy_generate<float>(w, nullptr, prompt, s);
  auto g2 = greedy_generate<float>(w, nullptr, prompt, s);
  CHECK(g1 == g2);
  CHECK(static_cast<int>(g1.size()) <= 6);
  CHECK_THROWS_AS(greedy_generate<float>(w, nullptr, std::vector<int>{}, s), DataError);
}

TEST_CASE("beam width 1 equals greedy on many prompts") {
  GenerationSettings greedy_s;
  greedy_s.strategy = GenerationSettings::Strategy::greedy;
  greedy_s.max_new_tokens = 8;
  GenerationSettings beam_s = greedy_s;
  beam_s.strategy = GenerationSettings::Strategy::beam;
  beam_s.beam_width = 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelWeights w = spiky_model(100 + seed, 9);
    Rng rng(seed);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<int> prompt{1, 5 + rng.below_int(4)};
      CHECK(greedy_generate<float>(w, nullptr, prompt, greedy_s) ==
            beam_generate<float>(w, nullptr, prompt, beam_s));
    }
  }
}

namespace {

// Exhaustive enumeration mirroring the beam contract: candidates are every
// stopping sequence plus every live sequence at the token budget; finished
// beats live, then score, then lexicographic order.
struct Enumerated {
  std::vector<int> best_finished, best_live;
  double best_finished_score = -1e300, best_live_score = -1e300;
};

void enumerate_all(const ModelWeights& w, const GenerationSettings& s,
                   const std::vector<int>& prompt, std::vector<int>& prefix, double score,
                   int budget, Enumerated& out) {
  if (budget == 0) {
    auto better = [&](double sc, const std::vector<int>& ids) {
      return sc > out.best_live_score ||
             (sc == out.best_live_score && ids < out.best_live);
    };
    if (better(score, prefix)) {
      out.best_live = prefix;
      out.best_live_score = score;
    }
    return;
  }
  std::vector<int> seq = prompt;
  seq.insert(seq.end(), prefix.begin(), prefix.end());
  Tensor logits = forward_logits<float>(w, nullptr, seq);
  const int last = logits.shape[0] - 1;
  double m = -1e300;
  for (int j = 0; j < logits.shape[1]; ++j) m = std::max(m, (double)logits.at(last, j));
  double sum = 0.0;
  for (int j = 0; j < logits.shape[1]; ++j) sum += std::exp((double)logits.at(last, j) - m);
  const double lse = m + std::log(sum);
  for (int j = 0; j < logits.shape[1]; ++j) {
    double lp = (double)logits.at(last, j) - lse;
    if (s.is_stop(j)) {
      double sc = score + lp;
      if (sc > out.best_finished_score ||
          (sc == out.best_finished_score && prefix < out.best_finished)) {
        out.best_finished = prefix;
        out.best_finished_score = sc;
      }
    } else {
      prefix.push_back(j);
      enumerate_all(w, s, prompt, prefix, score + lp, budget - 1, out);
      prefix.pop_back();
    }
  }
}

}  // namespace

TEST_CASE("beam-4 finds the exhaustive optimum where greedy is suboptimal") {
  GenerationSettings s;
  s.max_new_tokens = 3;
  s.beam_width = 4;
  GenerationSettings greedy_s = s;
  greedy_s.strategy = GenerationSettings::Strategy::greedy;

  // Search tiny random models for one where greedy misses the enumerated
  // optimum and beam-4 finds it; the first hit is the frozen fixture.
  bool found_case = false;
  int greedy_misses = 0;
  for (std::uint64_t seed = 0; seed < 200 && !found_case; ++seed) {
    ModelWeights w = spiky_model(7000 + seed, 7);
    std::vector<int> prompt{1};
    Enumerated e;
    std::vector<int> prefix;
    enumerate_all(w, s, prompt, prefix, 0.0, 3, e);
    std::vector<int> optimal =
        e.best_finished_score > -1e299 ? e.best_finished : e.best_live;
    auto greedy = greedy_generate<float>(w, nullptr, prompt, greedy_s);
    if (greedy == optimal) continue;  // need a model where greedy misses
    ++greedy_misses;
    auto beam = beam_generate<float>(w, nullptr, prompt, s);
    if (beam != optimal) continue;  // beam-4 is approximate, keep searching
    CHECK(beam == optimal);
    CHECK(greedy != beam);
    found_case = true;
  }
  INFO("models where greedy was suboptimal: " << greedy_misses);
  CHECK(found_case);
}

TEST_CASE("all-tied logits produce the lexicographically smallest sequence") {
  // zeroed lm_head makes every token equally likely at every step
  ModelWeights w = tiny_model(8, 9);
  for (float& x : w.mutable_tensor("lm_head").data) x = 0.0f;
  GenerationSettings s;
  s.beam_width = 4;
  s.max_new_tokens = 3;
  s.stop_on_eos = true;
  s.stop_on_nl = true;
  auto out = beam_generate<float>(w, nullptr, std::vector<int>{1}, s);
  // token 0 (<pad>) is the smallest non-stop id and every score ties; a
  // finished hypothesis (stopping immediately) ties too and wins the final
  // pick, so the best sequence is the empty one
  CHECK(out == std::vector<int>{});
}

TEST_CASE("perplexity of the uniform model equals vocab size") {
  ModelWeights w = tiny_model(9, 13);
  for (float& x : w.mutable_tensor("lm_head").data) x = 0.0f;
  std::vector<int> stream;
  Rng rng(4);
  for (int i = 0; i < 50; ++i) stream.push_back(rng.below_int(13));
  double ppl = perplexity<float>(w, nullptr, stream);
  CHECK(std::abs(ppl - 13.0) / 13.0 < 1e-3);
}

TEST_CASE("perplexity matches scalar NLL recomputation") {
  ModelWeights w = tiny_model(10, 11);
  std::vector<int> stream{1, 5, 6, 7, 8, 9, 10, 5, 6};
  double ppl = perplexity<float>(w, nullptr, stream, 4);
  // windows of 4: [0..3], [4..7], [8] dropped (too short)
  double nll = 0.0;
  int n = 0;
  for (std::size_t start : {std::size_t{0}, std::size_t{4}}) {
    std::vector<int> win(stream.begin() + (long)start, stream.begin() + (long)start + 4);
    Tensor logits = forward_logits<float>(w, nullptr, win);
    for (int t = 0; t + 1 < 4; ++t) {
      double m = -1e300;
      for (int j = 0; j < 11; ++j) m = std::max(m, (double)logits.at(t, j));
      double sum = 0.0;
      for (int j = 0; j < 11; ++j) sum += std::exp((double)logits.at(t, j) - m);
      nll -= (double)logits.at(t, win[(std::size_t)t + 1]) - m - std::log(sum);
      ++n;
    }
  }
  CHECK(ppl == Catch::Approx(std::exp(nll / n)).epsilon(1e-6));
  CHECK(ppl >= 1.0);
  std::vector<int> too_short{1};
  CHECK_THROWS_AS(perplexity<float>(w, nullptr, too_short), DataError);
}
