#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sanlab/corpus.hpp"
#include "sanlab/errors.hpp"
#include "sanlab/rng.hpp"
#include "sanlab/vocab.hpp"

namespace sanlab {

enum class SetLabel { forget, sanitized, retain, forget_test, retain_test };

inline const char* set_label_name(SetLabel label) {
  switch (label) {
    case SetLabel::forget: return "K_F";
    case SetLabel::sanitized: return "K_S";
    case SetLabel::retain: return "K_R";
    case SetLabel::forget_test: return "forget-test";
    case SetLabel::retain_test: return "retain-test";
  }
  throw DataError("bad set label");
}

struct KnowledgeSet {
  SetLabel label = SetLabel::forget;
  std::vector<QAPair> pairs;
  std::uint64_t seed = 0;

  std::size_t size() const { return pairs.size(); }
};

struct SanitizationPhrase {
  std::string text = "I don't know.";

  void validate() const {
    if (text.empty()) throw ConfigError("sanitization phrase must be nonempty");
    if (tokenize_words(text).size() > 12)
      throw ConfigError("sanitization phrase must tokenize to at most 12 tokens");
  }
};

namespace split_detail {

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// "Contains the forgotten knowledge" test: case-insensitive substring in
// either direction between the two alias strings.
inline bool alias_overlap(const std::string& a, const std::string& b) {
  std::string la = lower(a), lb = lower(b);
  return la.find(lb) != std::string::npos || lb.find(la) != std::string::npos;
}

inline bool touches_forget_aliases(const QAPair& qa,
                                   const std::vector<std::string>& forget_aliases) {
  for (const std::string& alias : qa.aliases)
    for (const std::string& f : forget_aliases)
      if (alias_overlap(alias, f)) return true;
  return false;
}

inline std::map<std::string, std::vector<const QAPair*>> group_by_answer(const QaPool& pool) {
  std::map<std::string, std::vector<const QAPair*>> groups;
  for (const QAPair& qa : pool.pairs) groups[qa.answer_key].push_back(&qa);
  return groups;
}

inline std::vector<std::string> collect_forget_aliases(
    const QaPool& pool, const std::vector<std::string>& forget_keys) {
  std::set<std::string> forget(forget_keys.begin(), forget_keys.end());
  std::set<std::string> aliases;
  for (const QAPair& qa : pool.pairs)
    if (forget.count(qa.answer_key))
      for (const std::string& a : qa.aliases) aliases.insert(a);
  return {aliases.begin(), aliases.end()};
}

inline void sort_by_id(std::vector<QAPair>& pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const QAPair& a, const QAPair& b) { return a.id < b.id; });
}

}  // namespace split_detail

// Uniform pick of n distinct answer keys with enough questions, skipping any
// key in `excluded` (used for non-overlapping multi-seed suites).
inline std::vector<std::string> select_forget_answers(
    const QaPool& pool, int n, Rng& rng,
    const std::set<std::string>& excluded = {}) {
  if (n < 0) throw DataError("select_forget_answers: negative n");
  if (n == 0) return {};
  auto groups = split_detail::group_by_answer(pool);
  std::vector<std::string> eligible;
  for (const auto& [key, qas] : groups)
    if (qas.size() >= 17 && !excluded.count(key)) eligible.push_back(key);
  if (static_cast<int>(eligible.size()) < n)
    throw DataError("select_forget_answers: only " + std::to_string(eligible.size()) +
                    " eligible answers, need " + std::to_string(n));
  std::vector<int> picks = rng.sample(static_cast<int>(eligible.size()), n);
  std::vector<std::string> out;
  for (int p : picks) out.push_back(eligible[static_cast<std::size_t>(p)]);
  std::sort(out.begin(), out.end());
  return out;
}

// Exactly per_answer training questions per forget answer; everything else
// about those answers is reserved for the forget test split.
inline KnowledgeSet build_forget_set(const QaPool& pool,
                                     const std::vector<std::string>& forget_keys,
                                     int per_answer = 16) {
  if (per_answer <= 0) throw DataError("build_forget_set: per_answer must be positive");
  auto groups = split_detail::group_by_answer(pool);
  KnowledgeSet kf;
  kf.label = SetLabel::forget;
  for (const std::string& key : forget_keys) {
    auto it = groups.find(key);
    if (it == groups.end())
      throw DataError("build_forget_set: answer '" + key + "' not in pool");
    if (static_cast<int>(it->second.size()) < per_answer + 1)
      throw DataError("build_forget_set: answer '" + key + "' has only " +
                      std::to_string(it->second.size()) + " questions, need " +
                      std::to_string(per_answer + 1));
    std::vector<QAPair> train;
    for (const QAPair* qa : it->second)
      if (!qa->heldout) train.push_back(*qa);
    if (static_cast<int>(train.size()) < per_answer)
      throw DataError("build_forget_set: answer '" + key + "' has only " +
                      std::to_string(train.size()) + " training questions");
    split_detail::sort_by_id(train);
    train.resize(static_cast<std::size_t>(per_answer));
    kf.pairs.insert(kf.pairs.end(), train.begin(), train.end());
  }
  return kf;
}

// Same questions, every answer replaced by the sanitization phrase.
inline KnowledgeSet build_sanitized_set(const KnowledgeSet& kf,
                                        const SanitizationPhrase& phrase) {
  phrase.validate();
  KnowledgeSet ks;
  ks.label = SetLabel::sanitized;
  ks.seed = kf.seed;
  ks.pairs = kf.pairs;
  for (QAPair& qa : ks.pairs) {
    qa.answer = phrase.text;
    qa.aliases = {phrase.text};
  }
  return ks;
}

// Retention pairs sampled from the filtered training pool. Any pair whose
// aliases intersect a forget alias (substring, either direction) is excluded.
// N_R = round(N_F * ratio_retain / ratio_forget).
inline KnowledgeSet build_retain_set(const QaPool& pool,
                                     const std::vector<std::string>& forget_keys, int n_f,
                                     int ratio_forget, int ratio_retain, Rng& rng) {
  if (ratio_forget <= 0 || ratio_retain < 0)
    throw DataError("build_retain_set: bad mixing ratio");
  const int n_r = static_cast<int>(
      std::lround(static_cast<double>(n_f) * ratio_retain / ratio_forget));
  KnowledgeSet kr;
  kr.label = SetLabel::retain;
  if (n_r == 0) return kr;
  std::vector<std::string> forget_aliases =
      split_detail::collect_forget_aliases(pool, forget_keys);
  std::set<std::string> forget(forget_keys.begin(), forget_keys.end());
  std::vector<QAPair> candidates;
  for (const QAPair& qa : pool.pairs) {
    if (qa.heldout || forget.count(qa.answer_key)) continue;
    if (split_detail::touches_forget_aliases(qa, forget_aliases)) continue;
    candidates.push_back(qa);
  }
  split_detail::sort_by_id(candidates);
  if (static_cast<int>(candidates.size()) < n_r)
    throw DataError("build_retain_set: filtered pool has " +
                    std::to_string(candidates.size()) + " pairs, need " + std::to_string(n_r));
  std::vector<int> picks = rng.sample(static_cast<int>(candidates.size()), n_r);
  std::sort(picks.begin(), picks.end());
  for (int p : picks) kr.pairs.push_back(candidates[static_cast<std::size_t>(p)]);
  return kr;
}

struct EvalSets {
  KnowledgeSet forget_test;
  KnowledgeSet retain_test;
};

// forget-test: held-out questions about the forget answers (everything not in
// K_F). retain-test: held-out questions about non-forget answers, same alias
// filter as K_R; pools without held-out markers fall back to unused training
// questions so imported data keeps working.
inline EvalSets build_eval_sets(const QaPool& pool,
                                const std::vector<std::string>& forget_keys,
                                const KnowledgeSet& kf, const KnowledgeSet& kr) {
  std::set<std::string> kf_ids, kr_ids;
  for (const QAPair& qa : kf.pairs) kf_ids.insert(qa.id);
  for (const QAPair& qa : kr.pairs) kr_ids.insert(qa.id);
  std::set<std::string> forget(forget_keys.begin(), forget_keys.end());
  std::vector<std::string> forget_aliases =
      split_detail::collect_forget_aliases(pool, forget_keys);

  EvalSets out;
  out.forget_test.label = SetLabel::forget_test;
  out.retain_test.label = SetLabel::retain_test;
  std::vector<QAPair> retain_fallback;
  for (const QAPair& qa : pool.pairs) {
    if (forget.count(qa.answer_key)) {
      if (!kf_ids.count(qa.id)) out.forget_test.pairs.push_back(qa);
      continue;
    }
    if (kr_ids.count(qa.id)) continue;
    if (split_detail::touches_forget_aliases(qa, forget_aliases)) continue;
    if (qa.heldout)
      out.retain_test.pairs.push_back(qa);
    else
      retain_fallback.push_back(qa);
  }
  if (out.retain_test.pairs.empty()) out.retain_test.pairs = std::move(retain_fallback);
  split_detail::sort_by_id(out.forget_test.pairs);
  split_detail::sort_by_id(out.retain_test.pairs);
  if (out.forget_test.pairs.empty()) throw DataError("build_eval_sets: empty forget test");
  if (out.retain_test.pairs.empty()) throw DataError("build_eval_sets: empty retain test");
  return out;
}

struct SeedBundle {
  std::uint64_t bundle_seed = 0;
  std::vector<std::string> forget_keys;
  KnowledgeSet kf;
  KnowledgeSet ks;
  KnowledgeSet kr;
  KnowledgeSet forget_test;
  KnowledgeSet retain_test;
};

// Per-seed bundles with pairwise-disjoint forget answers across seeds.
inline std::vector<SeedBundle> build_seeded_suite(const QaPool& pool, int n_seeds,
                                                  int forget_answers, int per_answer,
                                                  const SanitizationPhrase& phrase,
                                                  int ratio_forget, int ratio_retain,
                                                  std::uint64_t base_seed) {
  if (n_seeds <= 0) throw DataError("build_seeded_suite: need at least one seed");
  std::vector<SeedBundle> bundles;
  std::set<std::string> used;
  for (int k = 0; k < n_seeds; ++k) {
    Rng rng = Rng(base_seed).child("bundle", static_cast<std::uint64_t>(k));
    SeedBundle b;
    b.bundle_seed = static_cast<std::uint64_t>(k);
    try {
      b.forget_keys = select_forget_answers(pool, forget_answers, rng, used);
    } catch (const DataError& e) {
      throw DataError("build_seeded_suite: cannot keep forget targets disjoint at seed " +
                      std::to_string(k) + ": " + e.what());
    }
    used.insert(b.forget_keys.begin(), b.forget_keys.end());
    b.kf = build_forget_set(pool, b.forget_keys, per_answer);
    b.kf.seed = b.bundle_seed;
    b.ks = build_sanitized_set(b.kf, phrase);
    b.kr = build_retain_set(pool, b.forget_keys, static_cast<int>(b.kf.size()), ratio_forget,
                            ratio_retain, rng);
    b.kr.seed = b.bundle_seed;
    EvalSets ev = build_eval_sets(pool, b.forget_keys, b.kf, b.kr);
    b.forget_test = std::move(ev.forget_test);
    b.retain_test = std::move(ev.retain_test);
    b.forget_test.seed = b.bundle_seed;
    b.retain_test.seed = b.bundle_seed;
    bundles.push_back(std::move(b));
  }
  return bundles;
}

}  // namespace sanlab
