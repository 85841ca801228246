#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "sanlab/checkpoint.hpp"
#include "sanlab/corpus.hpp"
#include "sanlab/model.hpp"
#include "sanlab/splits.hpp"
#include "sanlab/train.hpp"

namespace sanlab {

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> v{"sanitize", "sanitize-no-KR", "standard-ft",
                                          "neg-grad", "neg-task-vector"};
  return v;
}

// One JSON document fully determines a run; flags override individual keys by
// dot path. The canonical serialization's hash is stamped into every artifact.
struct ExperimentConfig {
  int schema = 1;
  std::string output_dir = "out";

  CorpusSpec corpus;
  TransformerConfig model;  // vocab_size stays 0 until a vocabulary is built

  int seeds = 5;
  int forget_answers = 5;
  int forget_per_answer = 16;
  SanitizationPhrase phrase;
  int ratio_forget = 15;
  int ratio_retain = 85;

  TrainRecipe pretrain_recipe;
  TrainRecipe finetune_recipe;  // sanitize / sanitize-no-KR / standard-ft / neg-task-vector
  TrainRecipe neg_grad_recipe;

  int eval_beam = 4;
  int eval_answer_tokens = 32;
  int eval_leak_tokens = 64;
  int eval_retain_cap = 40;  // per-seed retain-test subsample; 0 evaluates all
  int attack_controls = 20;
  std::vector<std::string> attack_methods{"orig", "sanitize"};

  ExperimentConfig() {
    pretrain_recipe.method = "pretrain";
    pretrain_recipe.lr = 1e-3;
    pretrain_recipe.batch = 32;
    pretrain_recipe.max_steps = 30000;
    pretrain_recipe.epochs = 1000000;  // bounded by max_steps and the probe target
    finetune_recipe.method = "sanitize";
    finetune_recipe.lr = 1e-3;
    finetune_recipe.batch = 16;
    finetune_recipe.epochs = 10;
    finetune_recipe.max_steps = 100000;
    neg_grad_recipe = finetune_recipe;
    neg_grad_recipe.method = "neg-grad";
    neg_grad_recipe.epochs = 5;
  }

  void validate() const {
    corpus.validate();
    if (model.layers <= 0 || model.d_model <= 0 || model.heads <= 0 || model.mlp_hidden <= 0 ||
        model.context <= 0)
      throw ConfigError("config: model dimensions must be positive");
    if (model.d_model % model.heads != 0)
      throw ConfigError("config: d_model not divisible by heads");
    if (seeds < 1) throw ConfigError("config: seeds must be >= 1");
    if (forget_answers < 1 || forget_per_answer < 1)
      throw ConfigError("config: forget set sizes must be positive");
    phrase.validate();
    if (ratio_forget <= 0 || ratio_retain < 0) throw ConfigError("config: bad K_F:K_R ratio");
    pretrain_recipe.validate();
    finetune_recipe.validate();
    neg_grad_recipe.validate();
    if (eval_beam < 1 || eval_answer_tokens < 1 || eval_leak_tokens < 1)
      throw ConfigError("config: eval generation settings must be positive");
    if (eval_retain_cap < 0 || attack_controls < 0)
      throw ConfigError("config: eval sample sizes must be nonnegative");
    for (const std::string& m : attack_methods)
      if (m != "orig" &&
          std::find(method_names().begin(), method_names().end(), m) == method_names().end())
        throw ConfigError("config: unknown attack method '" + m + "'");
  }
};

namespace config_detail {

inline json recipe_to_json(const TrainRecipe& r) {
  std::vector<std::string> targets;
  for (MatrixRole role : r.lora.targets) targets.emplace_back(role_name(role));
  return json{{"lr", r.lr},
              {"epochs", r.epochs},
              {"max_steps", r.max_steps},
              {"batch", r.batch},
              {"mask", r.mask == LossMask::full_sequence ? "full" : "answer-only"},
              {"lora", {{"rank", r.lora.rank}, {"alpha", r.lora.alpha}, {"targets", targets}}},
              {"probe_em_target", r.probe_em_target},
              {"probe_interval", r.probe_interval},
              {"probe_questions", r.probe_questions}};
}

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + where + key + "'");
}

inline TrainRecipe recipe_from_json(const json& j, TrainRecipe base, const std::string& where) {
  check_keys(j,
             {"lr", "epochs", "max_steps", "batch", "mask", "lora", "probe_em_target",
              "probe_interval", "probe_questions"},
             where);
  base.lr = j.value("lr", base.lr);
  base.epochs = j.value("epochs", base.epochs);
  base.max_steps = j.value("max_steps", base.max_steps);
  base.batch = j.value("batch", base.batch);
  if (j.contains("mask")) {
    std::string m = j["mask"].get<std::string>();
    if (m == "full")
      base.mask = LossMask::full_sequence;
    else if (m == "answer-only")
      base.mask = LossMask::answer_only;
    else
      throw ConfigError("config: mask must be 'full' or 'answer-only'");
  }
  if (j.contains("lora")) {
    const json& l = j["lora"];
    check_keys(l, {"rank", "alpha", "targets"}, where + "lora.");
    base.lora.rank = l.value("rank", base.lora.rank);
    base.lora.alpha = l.value("alpha", base.lora.alpha);
    if (l.contains("targets")) {
      base.lora.targets.clear();
      for (const auto& t : l["targets"])
        base.lora.targets.insert(role_from_name(t.get<std::string>()));
    }
  }
  base.probe_em_target = j.value("probe_em_target", base.probe_em_target);
  base.probe_interval = j.value("probe_interval", base.probe_interval);
  base.probe_questions = j.value("probe_questions", base.probe_questions);
  return base;
}

}  // namespace config_detail

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["schema"] = c.schema;
  j["output_dir"] = c.output_dir;
  j["corpus"] = {{"answer_entities", c.corpus.answer_entities},
                 {"facts_per_answer", c.corpus.facts_per_answer},
                 {"qa_templates_per_relation", c.corpus.qa_templates_per_relation},
                 {"heldout_per_answer", c.corpus.heldout_per_answer},
                 {"filler_train_sentences", c.corpus.filler_train_sentences},
                 {"filler_heldout_sentences", c.corpus.filler_heldout_sentences},
                 {"instruction_filler_lines", c.corpus.instruction_filler_lines},
                 {"phrase_texts", c.corpus.phrase_texts},
                 {"phrase_line_repeats", c.corpus.phrase_line_repeats},
                 {"seed", c.corpus.seed}};
  j["model"] = {{"layers", c.model.layers},
                {"d_model", c.model.d_model},
                {"heads", c.model.heads},
                {"mlp_hidden", c.model.mlp_hidden},
                {"context", c.model.context}};
  j["seeds"] = c.seeds;
  j["forget_answers"] = c.forget_answers;
  j["forget_per_answer"] = c.forget_per_answer;
  j["phrase"] = c.phrase.text;
  j["ratio"] = {{"forget", c.ratio_forget}, {"retain", c.ratio_retain}};
  j["recipes"] = {{"pretrain", config_detail::recipe_to_json(c.pretrain_recipe)},
                  {"finetune", config_detail::recipe_to_json(c.finetune_recipe)},
                  {"neg_grad", config_detail::recipe_to_json(c.neg_grad_recipe)}};
  j["eval"] = {{"beam", c.eval_beam},
               {"answer_tokens", c.eval_answer_tokens},
               {"leak_tokens", c.eval_leak_tokens},
               {"retain_cap", c.eval_retain_cap},
               {"attack_controls", c.attack_controls},
               {"attack_methods", c.attack_methods}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  config_detail::check_keys(j,
                            {"schema", "output_dir", "corpus", "model", "seeds",
                             "forget_answers", "forget_per_answer", "phrase", "ratio",
                             "recipes", "eval"},
                            "");
  c.schema = j.value("schema", 1);
  if (c.schema != 1) throw ConfigError("config: unsupported schema version");
  c.output_dir = j.value("output_dir", c.output_dir);
  if (j.contains("corpus")) {
    const json& jc = j["corpus"];
    config_detail::check_keys(
        jc,
        {"answer_entities", "facts_per_answer", "qa_templates_per_relation",
         "heldout_per_answer", "filler_train_sentences", "filler_heldout_sentences",
         "instruction_filler_lines", "phrase_texts", "phrase_line_repeats", "seed"},
        "corpus.");
    c.corpus.answer_entities = jc.value("answer_entities", c.corpus.answer_entities);
    c.corpus.facts_per_answer = jc.value("facts_per_answer", c.corpus.facts_per_answer);
    c.corpus.qa_templates_per_relation =
        jc.value("qa_templates_per_relation", c.corpus.qa_templates_per_relation);
    c.corpus.heldout_per_answer = jc.value("heldout_per_answer", c.corpus.heldout_per_answer);
    c.corpus.filler_train_sentences =
        jc.value("filler_train_sentences", c.corpus.filler_train_sentences);
    c.corpus.filler_heldout_sentences =
        jc.value("filler_heldout_sentences", c.corpus.filler_heldout_sentences);
    c.corpus.instruction_filler_lines =
        jc.value("instruction_filler_lines", c.corpus.instruction_filler_lines);
    c.corpus.phrase_texts = jc.value("phrase_texts", c.corpus.phrase_texts);
    c.corpus.phrase_line_repeats = jc.value("phrase_line_repeats", c.corpus.phrase_line_repeats);
    c.corpus.seed = jc.value("seed", c.corpus.seed);
  }
  if (j.contains("model")) {
    const json& jm = j["model"];
    config_detail::check_keys(jm, {"layers", "d_model", "heads", "mlp_hidden", "context"},
                              "model.");
    c.model.layers = jm.value("layers", c.model.layers);
    c.model.d_model = jm.value("d_model", c.model.d_model);
    c.model.heads = jm.value("heads", c.model.heads);
    c.model.mlp_hidden = jm.value("mlp_hidden", c.model.mlp_hidden);
    c.model.context = jm.value("context", c.model.context);
  }
  c.seeds = j.value("seeds", c.seeds);
  c.forget_answers = j.value("forget_answers", c.forget_answers);
  c.forget_per_answer = j.value("forget_per_answer", c.forget_per_answer);
  c.phrase.text = j.value("phrase", c.phrase.text);
  if (j.contains("ratio")) {
    config_detail::check_keys(j["ratio"], {"forget", "retain"}, "ratio.");
    c.ratio_forget = j["ratio"].value("forget", c.ratio_forget);
    c.ratio_retain = j["ratio"].value("retain", c.ratio_retain);
  }
  if (j.contains("recipes")) {
    const json& jr = j["recipes"];
    config_detail::check_keys(jr, {"pretrain", "finetune", "neg_grad"}, "recipes.");
    if (jr.contains("pretrain"))
      c.pretrain_recipe = config_detail::recipe_from_json(jr["pretrain"], c.pretrain_recipe,
                                                          "recipes.pretrain.");
    if (jr.contains("finetune"))
      c.finetune_recipe = config_detail::recipe_from_json(jr["finetune"], c.finetune_recipe,
                                                          "recipes.finetune.");
    if (jr.contains("neg_grad"))
      c.neg_grad_recipe = config_detail::recipe_from_json(jr["neg_grad"], c.neg_grad_recipe,
                                                          "recipes.neg_grad.");
  }
  if (j.contains("eval")) {
    const json& je = j["eval"];
    config_detail::check_keys(
        je, {"beam", "answer_tokens", "leak_tokens", "retain_cap", "attack_controls",
             "attack_methods"},
        "eval.");
    c.eval_beam = je.value("beam", c.eval_beam);
    c.eval_answer_tokens = je.value("answer_tokens", c.eval_answer_tokens);
    c.eval_leak_tokens = je.value("leak_tokens", c.eval_leak_tokens);
    c.eval_retain_cap = je.value("retain_cap", c.eval_retain_cap);
    c.attack_controls = je.value("attack_controls", c.attack_controls);
    c.attack_methods = je.value("attack_methods", c.attack_methods);
  }
  c.validate();
  return c;
}

// Dot-path override, e.g. "recipes.pretrain.lr=0.002". Values parse as JSON
// when possible, otherwise as strings.
inline void apply_override(json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value: '" + assignment + "'");
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* at = &doc;
  std::size_t begin = 0;
  while (true) {
    std::size_t dot = path.find('.', begin);
    std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    if (key.empty()) throw ConfigError("override has an empty path segment: '" + assignment + "'");
    if (dot == std::string::npos) {
      (*at)[key] = value;
      break;
    }
    at = &(*at)[key];
    begin = dot + 1;
  }
}

// FNV-1a over the canonical serialization.
inline std::string config_hash(const ExperimentConfig& c) {
  std::string bytes = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path,
                                         const std::vector<std::string>& overrides) {
  json doc;
  if (!path.empty()) {
    try {
      doc = json::parse(detail::read_file(path));
    } catch (const json::parse_error& e) {
      throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  } else {
    doc = json::object();
  }
  for (const std::string& o : overrides) apply_override(doc, o);
  return config_from_json(doc);
}

}  // namespace sanlab
