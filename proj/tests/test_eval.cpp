#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "sanlab/attack.hpp"
#include "sanlab/eval.hpp"
#include "sanlab/report.hpp"

using namespace sanlab;

TEST_CASE("extract_answer follows the line-break and trailing-punctuation rule") {
  CHECK(extract_answer("Calpurnia.\nQ: next") == "Calpurnia");
  CHECK(extract_answer("I don't know.\n") == "I don't know");
  CHECK(extract_answer("") == "");
  CHECK(extract_answer("Paris , ") == "Paris");
  CHECK(extract_answer("A. B.") == "A. B");
}

TEST_CASE("extract_answer is idempotent on random-ish strings") {
  Rng rng(3);
  const std::string alphabet = "ab .,\nQ:'!x";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    int len = rng.below_int(18);
    for (int i = 0; i < len; ++i)
      s += alphabet[static_cast<std::size_t>(rng.below_int((int)alphabet.size()))];
    std::string once = extract_answer(s);
    CHECK(extract_answer(once) == once);
  }
}

TEST_CASE("normalize_answer rules") {
  CHECK(normalize_answer("The Eiffel Tower.") == "eiffel tower");
  CHECK(normalize_answer("  Rudyard   Kipling ") == "rudyard kipling");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("An Orange") == "orange");
  CHECK(normalize_answer("I don' t know") == "i don't know");
  CHECK(normalize_answer("'Quoted'") == "quoted");
}

TEST_CASE("exact_match against standardized aliases") {
  CHECK(exact_match("Rudyard Kipling", {"Rudyard Kipling", "Kipling"}));
  CHECK(!exact_match("Kipling, Rudyard", {"Rudyard Kipling"}));
  CHECK(exact_match("the eiffel tower", {"Eiffel Tower"}));
  CHECK_THROWS_AS(exact_match("x", {}), DataError);
}

TEST_CASE("leak containment rule") {
  CHECK(contains_answer("his address is 1234 Oak Street, he lives there",
                        {"1234 Oak Street"}));
  CHECK(!contains_answer("I don't know.", {"1234 Oak Street"}));
  CHECK(contains_answer("well, KIPLING wrote it", {"Kipling"}));
}

TEST_CASE("exact match implies leak on the same generation") {
  Rng rng(9);
  std::vector<std::string> words{"alpha", "beta", "Gamma", "delta's", "Ep.silon"};
  for (int trial = 0; trial < 1000; ++trial) {
    std::string gen;
    int len = 1 + rng.below_int(4);
    for (int i = 0; i < len; ++i) {
      if (i) gen += " ";
      gen += words[static_cast<std::size_t>(rng.below_int((int)words.size()))];
    }
    if (rng.below_int(2)) gen += ".";
    if (rng.below_int(2)) gen += "\n" + words[0];
    std::vector<std::string> aliases{
        words[static_cast<std::size_t>(rng.below_int((int)words.size()))]};
    if (exact_match(extract_answer(gen), aliases)) CHECK(contains_answer(gen, aliases));
  }
}

TEST_CASE("categorization of the paper's running examples") {
  std::string phrase = "I don't know.";
  std::vector<std::string> aliases{"1234 Oak Street"};
  CHECK(categorize("I don't know.", aliases, phrase) == OutputCategory::phrase);
  CHECK(categorize("1234 Oak Street", aliases, phrase) == OutputCategory::correct);
  CHECK(categorize("9876 Main Street", aliases, phrase) == OutputCategory::other);
  // phrase wins even when it coincidentally matches an alias
  CHECK(categorize("I don't know.", {"I don't know."}, phrase) == OutputCategory::phrase);
  // prefix match counts as the phrase category
  CHECK(categorize("I don't know.\nQ: more", aliases, phrase) == OutputCategory::phrase);
}

TEST_CASE("categorization partitions: exactly one category per generation") {
  Rng rng(17);
  std::vector<std::string> texts{"I don't know.", "1234 Oak Street", "9876 Main Street",
                                 "", "I don't know. 1234 Oak Street", "oak", "OAK STREET."};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::string& gen = texts[static_cast<std::size_t>(rng.below_int((int)texts.size()))];
    OutputCategory c = categorize(gen, {"1234 Oak Street"}, "I don't know.");
    int hits = (c == OutputCategory::correct) + (c == OutputCategory::phrase) +
               (c == OutputCategory::other);
    CHECK(hits == 1);
  }
}

TEST_CASE("aggregate means per-seed metrics and keeps per-seed values") {
  SeedReport s0, s1;
  s0.seed = 0;
  s1.seed = 1;
  s0.config_hash = s1.config_hash = "h";
  MethodMetrics m0, m1;
  m0.forget.em = 0.2;
  m1.forget.em = 0.4;
  m0.retain.em = 0.5;
  m1.retain.em = 0.7;
  m0.perplexity = 4.0;
  m1.perplexity = 6.0;
  s0.methods["sanitize"] = m0;
  s1.methods["sanitize"] = m1;
  EvalReport r = aggregate_reports({s0, s1});
  CHECK(r.aggregate["sanitize"].forget.em == Catch::Approx(0.3));
  CHECK(r.aggregate["sanitize"].retain.em == Catch::Approx(0.6));
  CHECK(r.aggregate["sanitize"].perplexity == Catch::Approx(5.0));
  CHECK(r.per_seed.size() == 2);

  EvalReport single = aggregate_reports({s0});
  CHECK(single.aggregate["sanitize"].forget.em == Catch::Approx(0.2));

  s1.config_hash = "other";
  CHECK_THROWS_AS(aggregate_reports({s0, s1}), DataError);
}

TEST_CASE("report writes canonical bytes and round trips") {
  SeedReport s;
  s.seed = 3;
  s.config_hash = "abc123";
  MethodMetrics m;
  m.forget.n = 20;
  m.forget.em = 1.0 / 3.0;
  m.retain.n = 60;
  m.retain.em = 0.657123456;
  m.perplexity = 5.0981234;
  s.methods["orig"] = m;
  AttackSummary a;
  a.n_direct = 10;
  a.direct_leak = 0.5;
  s.attacks["orig"] = a;
  EvalReport r = aggregate_reports({s});

  auto dir = std::filesystem::temp_directory_path() / "sanlab_test";
  std::filesystem::create_directories(dir);
  auto p1 = dir / "report1.json";
  auto p2 = dir / "report2.json";
  write_report(r, p1);
  write_report(r, p2);
  CHECK(detail::read_file(p1) == detail::read_file(p2));

  EvalReport back = read_report(p1);
  CHECK(back.config_hash == "abc123");
  CHECK(back.aggregate["orig"].forget.em == Catch::Approx(1.0 / 3.0).epsilon(1e-5));
  CHECK(back.attack_aggregate["orig"].direct_leak == Catch::Approx(0.5));

  std::string csv = report_to_csv(r);
  CHECK(csv.find("method,metric,mean,seed3") == 0);
  CHECK(csv.find("orig,forget_em,0.333333") != std::string::npos);
  CHECK(csv.find("orig,perplexity,5.098123") != std::string::npos);
}

TEST_CASE("out-of-range rates are rejected at serialization") {
  SeedReport s;
  s.seed = 0;
  s.config_hash = "h";
  MethodMetrics m;
  m.forget.em = 1.5;
  s.methods["orig"] = m;
  EvalReport r;
  r.config_hash = "h";
  r.per_seed = {s};
  r.aggregate["orig"] = m;
  CHECK_THROWS_AS(report_to_json(r), DataError);
}
