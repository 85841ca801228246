#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sanlab/errors.hpp"

namespace sanlab {

// Word-level tokenization over a closed vocabulary. Punctuation marks
// . , ? ! : ' are standalone tokens; newlines become the <nl> token.
inline bool is_punct_token_char(char c) {
  return c == '.' || c == ',' || c == '?' || c == '!' || c == ':' || c == '\'';
}

inline std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (char c : text) {
    if (c == '\n') {
      flush();
      out.emplace_back("<nl>");
    } else if (c == ' ' || c == '\t' || c == '\r') {
      flush();
    } else if (is_punct_token_char(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNl = 4;

  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> word_tokens) {
    tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>", "<nl>"};
    tokens_.insert(tokens_.end(), word_tokens.begin(), word_tokens.end());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
        throw DataError("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }

  int size() const { return static_cast<int>(tokens_.size()); }

  int id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
  }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw DataError("vocab: id out of range " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// Lexicographically sorted word tokens give a deterministic id assignment.
inline Vocabulary build_vocab(std::string_view corpus_text) {
  if (corpus_text.empty()) throw DataError("build_vocab: empty corpus");
  std::set<std::string> words;
  for (std::string& t : tokenize_words(corpus_text))
    if (t != "<nl>") words.insert(std::move(t));
  return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
}

inline std::vector<int> encode(const Vocabulary& vocab, std::string_view text) {
  std::vector<int> ids;
  for (const std::string& t : tokenize_words(text))
    ids.push_back(t == "<nl>" ? Vocabulary::kNl : vocab.id(t));
  return ids;
}

// Inverse of encode up to canonical whitespace: no space before punctuation,
// none after an apostrophe, newline for <nl>.
inline std::string decode(const Vocabulary& vocab, const std::vector<int>& ids) {
  std::string out;
  bool suppress_space = true;
  for (int id : ids) {
    const std::string& t = vocab.token(id);
    if (id == Vocabulary::kNl) {
      out += '\n';
      suppress_space = true;
      continue;
    }
    bool punct = t.size() == 1 && is_punct_token_char(t[0]);
    if (!suppress_space && !punct) out += ' ';
    out += t;
    suppress_space = (t == "'");
  }
  return out;
}

}  // namespace sanlab
