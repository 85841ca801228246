#pragma once

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "sanlab/corpus.hpp"
#include "sanlab/errors.hpp"

namespace sanlab {

// QA exchange format: one JSON object per line with required keys
// {id, question, answers: [...]}; answer_key / heldout / fact / template are
// optional and default sensibly, so external QA data drops in unchanged.
inline void export_jsonl(const std::vector<QAPair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path.string());
  for (const QAPair& qa : pairs) {
    nlohmann::json j;
    j["id"] = qa.id;
    j["question"] = qa.question;
    j["answers"] = qa.aliases;
    j["answer_key"] = qa.answer_key;
    j["heldout"] = qa.heldout;
    if (qa.fact >= 0) j["fact"] = qa.fact;
    if (qa.template_id >= 0) j["template"] = qa.template_id;
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline QaPool import_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path.string());
  QaPool pool;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": not valid JSON: " +
                      e.what());
    }
    auto fail = [&](const std::string& why) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + why);
    };
    if (!j.is_object()) fail("expected an object");
    if (!j.contains("id") || !j["id"].is_string()) fail("missing string field 'id'");
    if (!j.contains("question") || !j["question"].is_string())
      fail("missing string field 'question'");
    if (!j.contains("answers") || !j["answers"].is_array() || j["answers"].empty())
      fail("missing nonempty array field 'answers'");
    QAPair qa;
    qa.id = j["id"].get<std::string>();
    qa.question = j["question"].get<std::string>();
    if (qa.question.empty()) fail("empty question");
    for (const auto& a : j["answers"]) {
      if (!a.is_string() || a.get<std::string>().empty()) fail("answers must be nonempty strings");
      qa.aliases.push_back(a.get<std::string>());
    }
    qa.answer = qa.aliases.front();
    qa.answer_key = j.value("answer_key", qa.answer);
    qa.heldout = j.value("heldout", false);
    qa.fact = j.value("fact", -1);
    qa.template_id = j.value("template", -1);
    if (!ids.insert(qa.id).second) fail("duplicate id '" + qa.id + "'");
    pool.pairs.push_back(std::move(qa));
  }
  return pool;
}

}  // namespace sanlab
