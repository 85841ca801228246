#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "sanlab/corpus.hpp"
#include "sanlab/generate.hpp"
#include "sanlab/splits.hpp"

namespace sanlab {

// Truncate at the first line break, then drop trailing dots/commas and
// surrounding whitespace. Stripping repeats so the operation is idempotent.
inline std::string extract_answer(const std::string& generated) {
  std::string s = generated.substr(0, generated.find('\n'));
  auto is_ws = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  std::size_t end = s.size();
  while (end > 0 && (is_ws(s[end - 1]) || s[end - 1] == '.' || s[end - 1] == ',')) --end;
  std::size_t begin = 0;
  while (begin < end && is_ws(s[begin])) ++begin;
  return s.substr(begin, end - begin);
}

// Lowercase, collapse whitespace, strip punctuation at the ends, glue spaces
// around apostrophes (word-level decoding spaces them out), drop one leading
// article.
inline std::string normalize_answer(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  bool after_apostrophe = false;
  for (char raw : s) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!after_apostrophe) pending_space = true;
      continue;
    }
    if (c == '\'') {
      out += c;
      pending_space = false;
      after_apostrophe = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    after_apostrophe = false;
    out += c;
  }
  auto is_punct = [](char c) {
    return c == '.' || c == ',' || c == ':' || c == ';' || c == '?' || c == '!' ||
           c == '\'' || c == '"';
  };
  std::size_t begin = 0, end = out.size();
  while (end > begin && (is_punct(out[end - 1]) || out[end - 1] == ' ')) --end;
  while (begin < end && (is_punct(out[begin]) || out[begin] == ' ')) ++begin;
  out = out.substr(begin, end - begin);
  for (const char* article : {"a ", "an ", "the "}) {
    std::string_view a(article);
    if (out.size() > a.size() && out.compare(0, a.size(), a) == 0) {
      out = out.substr(a.size());
      break;
    }
  }
  return out;
}

// True iff the normalized extraction equals some normalized alias.
inline bool exact_match(const std::string& extracted, const std::vector<std::string>& aliases) {
  if (aliases.empty()) throw DataError("exact_match: empty alias list");
  std::string norm = normalize_answer(extracted);
  for (const std::string& alias : aliases)
    if (norm == normalize_answer(alias)) return true;
  return false;
}

// Leak test over the whole generation: any normalized alias occurs as a
// substring of the normalized text.
inline bool contains_answer(const std::string& generation,
                            const std::vector<std::string>& aliases) {
  std::string norm = normalize_answer(generation);
  for (const std::string& alias : aliases) {
    std::string a = normalize_answer(alias);
    if (!a.empty() && norm.find(a) != std::string::npos) return true;
  }
  return false;
}

enum class OutputCategory { correct, phrase, other };  // A, B, C

inline char category_letter(OutputCategory c) {
  switch (c) {
    case OutputCategory::correct: return 'A';
    case OutputCategory::phrase: return 'B';
    case OutputCategory::other: return 'C';
  }
  throw DataError("bad category");
}

// Phrase detection wins over a correct answer: a generation equal to the
// phrase is B even if the phrase happens to match an alias.
inline OutputCategory categorize(const std::string& generation,
                                 const std::vector<std::string>& aliases,
                                 const std::string& phrase) {
  std::string norm_phrase = normalize_answer(phrase);
  if (normalize_answer(extract_answer(generation)) == norm_phrase) return OutputCategory::phrase;
  if (!norm_phrase.empty()) {
    std::string norm_gen = normalize_answer(generation);
    if (norm_gen.compare(0, norm_phrase.size(), norm_phrase) == 0) return OutputCategory::phrase;
  }
  if (!aliases.empty() && exact_match(extract_answer(generation), aliases))
    return OutputCategory::correct;
  return OutputCategory::other;
}

// ---- model-level evaluation ----

struct ModelVariant {
  const ModelWeights* weights = nullptr;
  const AdapterSet* adapters = nullptr;  // may be null
};

struct EvalSettings {
  GenerationSettings answer;  // QA accuracy path: stops at the line break
  GenerationSettings leak;    // full-generation path: fixed token budget

  static EvalSettings defaults() {
    EvalSettings s;
    s.answer.strategy = GenerationSettings::Strategy::beam;
    s.answer.beam_width = 4;
    s.answer.max_new_tokens = 32;
    s.leak = s.answer;
    s.leak.max_new_tokens = 64;
    s.leak.stop_on_nl = false;  // inspect the entire generation
    return s;
  }
};

inline std::string generate_text(const ModelVariant& model, const Vocabulary& vocab,
                                 const std::string& prompt_text,
                                 const GenerationSettings& settings) {
  std::vector<int> prompt = encode(vocab, prompt_text);
  std::vector<int> out = generate(*model.weights, model.adapters, prompt, settings);
  return decode(vocab, out);
}

inline std::string answer_question(const ModelVariant& model, const Vocabulary& vocab,
                                   const std::string& question,
                                   const GenerationSettings& settings) {
  return generate_text(model, vocab, render_prompt(question), settings);
}

// Fraction of pairs whose extracted beam answer exactly matches an alias.
inline double qa_accuracy(const ModelVariant& model, const Vocabulary& vocab,
                          const std::vector<QAPair>& pairs, const GenerationSettings& settings) {
  if (pairs.empty()) throw DataError("qa_accuracy: empty set");
  int hits = 0;
  for (const QAPair& qa : pairs) {
    std::string text = answer_question(model, vocab, qa.question, settings);
    if (exact_match(extract_answer(text), qa.aliases)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// Fraction of pairs whose entire generation contains a correct answer.
inline double leakage_rate(const ModelVariant& model, const Vocabulary& vocab,
                           const std::vector<QAPair>& pairs, const GenerationSettings& settings) {
  if (pairs.empty()) throw DataError("leakage_rate: empty set");
  int leaks = 0;
  for (const QAPair& qa : pairs) {
    std::string text = answer_question(model, vocab, qa.question, settings);
    if (contains_answer(text, qa.aliases)) ++leaks;
  }
  return static_cast<double>(leaks) / static_cast<double>(pairs.size());
}

struct SetMetrics {
  int n = 0;
  double em = 0.0;
  double leakage = 0.0;
  double cat_a = 0.0;
  double cat_b = 0.0;
  double cat_c = 0.0;
};

// One pass computing EM, categorization (on the answer-path generation) and
// leakage (on the full-budget generation) for a QA set.
inline SetMetrics evaluate_set(const ModelVariant& model, const Vocabulary& vocab,
                               const std::vector<QAPair>& pairs, const EvalSettings& settings,
                               const std::string& phrase) {
  if (pairs.empty()) throw DataError("evaluate_set: empty set");
  SetMetrics m;
  m.n = static_cast<int>(pairs.size());
  int em = 0, leak = 0, a = 0, b = 0, c = 0;
  for (const QAPair& qa : pairs) {
    std::string answer_text = answer_question(model, vocab, qa.question, settings.answer);
    std::string full_text = answer_question(model, vocab, qa.question, settings.leak);
    if (exact_match(extract_answer(answer_text), qa.aliases)) ++em;
    if (contains_answer(full_text, qa.aliases)) ++leak;
    switch (categorize(answer_text, qa.aliases, phrase)) {
      case OutputCategory::correct: ++a; break;
      case OutputCategory::phrase: ++b; break;
      case OutputCategory::other: ++c; break;
    }
  }
  const double n = static_cast<double>(m.n);
  m.em = em / n;
  m.leakage = leak / n;
  m.cat_a = a / n;
  m.cat_b = b / n;
  m.cat_c = c / n;
  return m;
}

}  // namespace sanlab
