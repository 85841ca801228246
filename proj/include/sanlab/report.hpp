#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sanlab/attack.hpp"
#include "sanlab/checkpoint.hpp"
#include "sanlab/eval.hpp"

namespace sanlab {

struct MethodMetrics {
  SetMetrics forget;
  SetMetrics retain;
  double perplexity = 0.0;
};

struct SeedReport {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, MethodMetrics> methods;
  std::map<std::string, AttackSummary> attacks;
};

struct EvalReport {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<SeedReport> per_seed;
  std::map<std::string, MethodMetrics> aggregate;
  std::map<std::string, AttackSummary> attack_aggregate;
};

namespace report_detail {

inline double round6(double x) { return std::round(x * 1e6) / 1e6; }

inline void require_rate(double x, const char* what) {
  if (!(x >= 0.0 && x <= 1.0)) throw DataError(std::string("report: ") + what + " not in [0,1]");
}

inline json set_metrics_json(const SetMetrics& m) {
  require_rate(m.em, "em");
  require_rate(m.leakage, "leakage");
  require_rate(m.cat_a, "category A");
  require_rate(m.cat_b, "category B");
  require_rate(m.cat_c, "category C");
  return json{{"n", m.n},
              {"em", round6(m.em)},
              {"leakage", round6(m.leakage)},
              {"category_a", round6(m.cat_a)},
              {"category_b", round6(m.cat_b)},
              {"category_c", round6(m.cat_c)}};
}

inline SetMetrics set_metrics_from(const json& j) {
  SetMetrics m;
  m.n = j.at("n").get<int>();
  m.em = j.at("em").get<double>();
  m.leakage = j.at("leakage").get<double>();
  m.cat_a = j.at("category_a").get<double>();
  m.cat_b = j.at("category_b").get<double>();
  m.cat_c = j.at("category_c").get<double>();
  return m;
}

inline json attack_json(const AttackSummary& a) {
  return json{{"n_direct", a.n_direct},
              {"n_associated", a.n_associated},
              {"n_control", a.n_control},
              {"direct_leak", round6(a.direct_leak)},
              {"associated_leak", round6(a.associated_leak)},
              {"control_leak", round6(a.control_leak)},
              {"control_em", round6(a.control_em)}};
}

inline AttackSummary attack_from(const json& j) {
  AttackSummary a;
  a.n_direct = j.at("n_direct").get<int>();
  a.n_associated = j.at("n_associated").get<int>();
  a.n_control = j.at("n_control").get<int>();
  a.direct_leak = j.at("direct_leak").get<double>();
  a.associated_leak = j.at("associated_leak").get<double>();
  a.control_leak = j.at("control_leak").get<double>();
  a.control_em = j.at("control_em").get<double>();
  return a;
}

}  // namespace report_detail

// Arithmetic mean across per-seed reports; refuses mixed config hashes.
inline EvalReport aggregate_reports(const std::vector<SeedReport>& seeds) {
  if (seeds.empty()) throw DataError("aggregate: no per-seed reports");
  EvalReport report;
  report.config_hash = seeds.front().config_hash;
  for (const SeedReport& s : seeds) {
    if (s.config_hash != report.config_hash)
      throw DataError("aggregate: mixed config hashes '" + report.config_hash + "' vs '" +
                      s.config_hash + "'");
    report.seeds.push_back(s.seed);
  }
  report.per_seed = seeds;

  std::map<std::string, int> method_counts;
  for (const SeedReport& s : seeds)
    for (const auto& [name, m] : s.methods) {
      MethodMetrics& agg = report.aggregate[name];
      auto add_set = [](SetMetrics& dst, const SetMetrics& src) {
        dst.n += src.n;
        dst.em += src.em;
        dst.leakage += src.leakage;
        dst.cat_a += src.cat_a;
        dst.cat_b += src.cat_b;
        dst.cat_c += src.cat_c;
      };
      add_set(agg.forget, m.forget);
      add_set(agg.retain, m.retain);
      agg.perplexity += m.perplexity;
      method_counts[name] += 1;
    }
  for (auto& [name, m] : report.aggregate) {
    const double k = method_counts[name];
    auto div_set = [&](SetMetrics& s) {
      s.em /= k;
      s.leakage /= k;
      s.cat_a /= k;
      s.cat_b /= k;
      s.cat_c /= k;
    };
    div_set(m.forget);
    div_set(m.retain);
    m.perplexity /= k;
  }

  std::map<std::string, int> attack_counts;
  for (const SeedReport& s : seeds)
    for (const auto& [name, a] : s.attacks) {
      AttackSummary& agg = report.attack_aggregate[name];
      agg.n_direct += a.n_direct;
      agg.n_associated += a.n_associated;
      agg.n_control += a.n_control;
      agg.direct_leak += a.direct_leak;
      agg.associated_leak += a.associated_leak;
      agg.control_leak += a.control_leak;
      agg.control_em += a.control_em;
      attack_counts[name] += 1;
    }
  for (auto& [name, a] : report.attack_aggregate) {
    const double k = attack_counts[name];
    a.direct_leak /= k;
    a.associated_leak /= k;
    a.control_leak /= k;
    a.control_em /= k;
  }
  return report;
}

inline json report_to_json(const EvalReport& report) {
  json j;
  j["schema"] = 1;
  j["config_hash"] = report.config_hash;
  j["seeds"] = report.seeds;
  json per_seed = json::array();
  for (const SeedReport& s : report.per_seed) {
    json js;
    js["seed"] = s.seed;
    json methods;
    for (const auto& [name, m] : s.methods)
      methods[name] = {{"forget", report_detail::set_metrics_json(m.forget)},
                       {"retain", report_detail::set_metrics_json(m.retain)},
                       {"perplexity", report_detail::round6(m.perplexity)}};
    js["methods"] = std::move(methods);
    if (!s.attacks.empty()) {
      json attacks;
      for (const auto& [name, a] : s.attacks) attacks[name] = report_detail::attack_json(a);
      js["attacks"] = std::move(attacks);
    }
    per_seed.push_back(std::move(js));
  }
  j["per_seed"] = std::move(per_seed);
  json agg;
  for (const auto& [name, m] : report.aggregate)
    agg[name] = {{"forget", report_detail::set_metrics_json(m.forget)},
                 {"retain", report_detail::set_metrics_json(m.retain)},
                 {"perplexity", report_detail::round6(m.perplexity)}};
  j["aggregate"] = std::move(agg);
  if (!report.attack_aggregate.empty()) {
    json agg_attack;
    for (const auto& [name, a] : report.attack_aggregate)
      agg_attack[name] = report_detail::attack_json(a);
    j["attack_aggregate"] = std::move(agg_attack);
  }
  return j;
}

inline EvalReport report_from_json(const json& j) {
  EvalReport report;
  report.config_hash = j.at("config_hash").get<std::string>();
  report.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const json& js : j.at("per_seed")) {
    SeedReport s;
    s.seed = js.at("seed").get<std::uint64_t>();
    s.config_hash = report.config_hash;
    for (const auto& [name, jm] : js.at("methods").items()) {
      MethodMetrics m;
      m.forget = report_detail::set_metrics_from(jm.at("forget"));
      m.retain = report_detail::set_metrics_from(jm.at("retain"));
      m.perplexity = jm.at("perplexity").get<double>();
      s.methods[name] = m;
    }
    if (js.contains("attacks"))
      for (const auto& [name, ja] : js.at("attacks").items())
        s.attacks[name] = report_detail::attack_from(ja);
    report.per_seed.push_back(std::move(s));
  }
  for (const auto& [name, jm] : j.at("aggregate").items()) {
    MethodMetrics m;
    m.forget = report_detail::set_metrics_from(jm.at("forget"));
    m.retain = report_detail::set_metrics_from(jm.at("retain"));
    m.perplexity = jm.at("perplexity").get<double>();
    report.aggregate[name] = m;
  }
  if (j.contains("attack_aggregate"))
    for (const auto& [name, ja] : j.at("attack_aggregate").items())
      report.attack_aggregate[name] = report_detail::attack_from(ja);
  return report;
}

// Canonical bytes: sorted keys, fixed rounding, no timestamps. Volatile run
// metadata belongs in a sidecar file, not here.
inline void write_report(const EvalReport& report, const std::filesystem::path& path) {
  detail::write_file(path, report_to_json(report).dump(2) + "\n");
}

inline EvalReport read_report(const std::filesystem::path& path) {
  try {
    return report_from_json(json::parse(detail::read_file(path)));
  } catch (const json::exception& e) {
    throw DataError("corrupt report " + path.string() + ": " + e.what());
  }
}

// One row per (method, metric): aggregate mean first, then per-seed values.
inline std::string report_to_csv(const EvalReport& report) {
  std::string csv = "method,metric,mean";
  for (std::uint64_t s : report.seeds) csv += ",seed" + std::to_string(s);
  csv += "\n";
  auto fmt = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return std::string(buf);
  };
  for (const auto& [name, agg] : report.aggregate) {
    auto row = [&](const std::string& metric, auto getter) {
      csv += name + "," + metric + "," + fmt(getter(agg));
      for (const SeedReport& s : report.per_seed) {
        auto it = s.methods.find(name);
        csv += ",";
        if (it != s.methods.end()) csv += fmt(getter(it->second));
      }
      csv += "\n";
    };
    row("forget_em", [](const MethodMetrics& m) { return m.forget.em; });
    row("retain_em", [](const MethodMetrics& m) { return m.retain.em; });
    row("forget_leakage", [](const MethodMetrics& m) { return m.forget.leakage; });
    row("retain_leakage", [](const MethodMetrics& m) { return m.retain.leakage; });
    row("forget_category_a", [](const MethodMetrics& m) { return m.forget.cat_a; });
    row("forget_category_b", [](const MethodMetrics& m) { return m.forget.cat_b; });
    row("forget_category_c", [](const MethodMetrics& m) { return m.forget.cat_c; });
    row("retain_category_a", [](const MethodMetrics& m) { return m.retain.cat_a; });
    row("retain_category_b", [](const MethodMetrics& m) { return m.retain.cat_b; });
    row("retain_category_c", [](const MethodMetrics& m) { return m.retain.cat_c; });
    row("perplexity", [](const MethodMetrics& m) { return m.perplexity; });
  }
  return csv;
}

}  // namespace sanlab
