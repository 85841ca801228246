#pragma once

#include <set>
#include <string>
#include <vector>

#include "sanlab/corpus.hpp"
#include "sanlab/eval.hpp"
#include "sanlab/rng.hpp"

namespace sanlab {

// Extraction probes: cloze renderings of the reserved per-relation template,
// prefixed with the completion instruction. Direct probes target the forget
// answers, associated probes target entities linked to them, control probes
// target unrelated entities.
struct AttackProbe {
  enum class Kind { direct, associated, control };
  Kind kind = Kind::direct;
  std::string text;
  std::vector<std::string> target_aliases;
  std::string target_key;
  int fact = -1;
};

inline const char* probe_kind_name(AttackProbe::Kind k) {
  switch (k) {
    case AttackProbe::Kind::direct: return "direct";
    case AttackProbe::Kind::associated: return "associated";
    case AttackProbe::Kind::control: return "control";
  }
  throw DataError("bad probe kind");
}

inline std::vector<AttackProbe> build_attack_battery(const Corpus& corpus,
                                                     const std::vector<std::string>& forget_keys,
                                                     Rng& rng, int control_entities = 20) {
  if (forget_keys.empty()) throw DataError("attack battery: no forget answers");
  std::set<std::string> forget(forget_keys.begin(), forget_keys.end());
  std::set<int> forget_idx, adjacent_idx;
  for (const Entity& e : corpus.entities)
    if (forget.count(e.name)) forget_idx.insert(e.idx);
  if (forget_idx.size() != forget.size())
    throw DataError("attack battery: forget answers not found among corpus entities");

  std::vector<AttackProbe> probes;
  auto render = [&](const Fact& f) { return attack_prefix() + "\n" + render_attack_text(f); };

  for (const Fact& f : corpus.facts) {
    const Entity& answer = corpus.entities[static_cast<std::size_t>(f.answer_entity)];
    const bool answer_forgotten = forget_idx.count(f.answer_entity) != 0;
    const bool subject_forgotten =
        f.partner_entity >= 0 && forget_idx.count(f.partner_entity) != 0;
    if (answer_forgotten) {
      AttackProbe p;
      p.kind = AttackProbe::Kind::direct;
      p.text = render(f);
      p.target_aliases = answer.aliases;
      p.target_key = answer.name;
      p.fact = f.idx;
      probes.push_back(std::move(p));
      if (f.partner_entity >= 0) adjacent_idx.insert(f.partner_entity);
    } else if (subject_forgotten) {
      // question mentions a forget answer, gold answer is someone else
      AttackProbe p;
      p.kind = AttackProbe::Kind::associated;
      p.text = render(f);
      p.target_aliases = answer.aliases;
      p.target_key = answer.name;
      p.fact = f.idx;
      probes.push_back(std::move(p));
      adjacent_idx.insert(f.answer_entity);
    }
  }

  std::vector<int> control_pool;
  for (const Entity& e : corpus.entities)
    if (!forget_idx.count(e.idx) && !adjacent_idx.count(e.idx)) control_pool.push_back(e.idx);
  const int n_controls = std::min<int>(control_entities, static_cast<int>(control_pool.size()));
  std::vector<int> picks = rng.sample(static_cast<int>(control_pool.size()), n_controls);
  std::sort(picks.begin(), picks.end());
  for (int p : picks) {
    const int idx = control_pool[static_cast<std::size_t>(p)];
    for (const Fact& f : corpus.facts) {
      if (f.answer_entity != idx || f.partner_entity >= 0) continue;
      AttackProbe probe;
      probe.kind = AttackProbe::Kind::control;
      probe.text = render(f);
      probe.target_aliases = corpus.entities[static_cast<std::size_t>(idx)].aliases;
      probe.target_key = corpus.entities[static_cast<std::size_t>(idx)].name;
      probe.fact = f.idx;
      probes.push_back(std::move(probe));
      break;  // one probe per control entity
    }
  }

  if (probes.empty()) throw DataError("attack battery: empty battery");
  for (const AttackProbe& p : probes)
    if (corpus.pretrain_text.find(p.text) != std::string::npos)
      throw DataError("attack battery: probe leaked into the pretraining text");
  return probes;
}

struct ProbeResult {
  AttackProbe probe;
  std::string output;
  bool leak = false;
  bool em = false;
};

struct AttackSummary {
  int n_direct = 0, n_associated = 0, n_control = 0;
  double direct_leak = 0.0;
  double associated_leak = 0.0;
  double control_leak = 0.0;
  double control_em = 0.0;
};

struct AttackReport {
  AttackSummary summary;
  std::vector<ProbeResult> transcripts;
};

// Full-generation leak test per probe; control probes are also scored for
// exact match on their first generated line.
inline AttackReport run_attack_battery(const ModelVariant& model, const Vocabulary& vocab,
                                       const std::vector<AttackProbe>& probes,
                                       const GenerationSettings& settings) {
  if (probes.empty()) throw DataError("run_attack_battery: empty battery");
  AttackReport report;
  int direct_leaks = 0, assoc_leaks = 0, control_leaks = 0, control_ems = 0;
  for (const AttackProbe& p : probes) {
    ProbeResult r;
    r.probe = p;
    r.output = generate_text(model, vocab, p.text, settings);
    r.leak = contains_answer(r.output, p.target_aliases);
    r.em = exact_match(extract_answer(r.output), p.target_aliases);
    switch (p.kind) {
      case AttackProbe::Kind::direct:
        ++report.summary.n_direct;
        direct_leaks += r.leak;
        break;
      case AttackProbe::Kind::associated:
        ++report.summary.n_associated;
        assoc_leaks += r.leak;
        break;
      case AttackProbe::Kind::control:
        ++report.summary.n_control;
        control_leaks += r.leak;
        control_ems += r.em;
        break;
    }
    report.transcripts.push_back(std::move(r));
  }
  auto rate = [](int hits, int n) { return n ? static_cast<double>(hits) / n : 0.0; };
  report.summary.direct_leak = rate(direct_leaks, report.summary.n_direct);
  report.summary.associated_leak = rate(assoc_leaks, report.summary.n_associated);
  report.summary.control_leak = rate(control_leaks, report.summary.n_control);
  report.summary.control_em = rate(control_ems, report.summary.n_control);
  return report;
}

}  // namespace sanlab
