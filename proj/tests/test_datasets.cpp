#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <set>

#include "sanlab/corpus.hpp"
#include "sanlab/jsonl.hpp"
#include "sanlab/splits.hpp"

using namespace sanlab;

namespace {

CorpusSpec small_spec(std::uint64_t seed = 0) {
  CorpusSpec spec;
  spec.answer_entities = 40;
  spec.filler_train_sentences = 60;
  spec.filler_heldout_sentences = 40;
  spec.instruction_filler_lines = 6;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("corpus counts follow the spec arithmetic") {
  Corpus c = generate_corpus(small_spec());
  CHECK(c.entities.size() == 40);
  CHECK(c.facts.size() == 40 * 5);
  CHECK(c.pool.pairs.size() == 40 * 20);  // questions per answer = facts x templates
  int heldout = 0;
  for (const auto& qa : c.pool.pairs) heldout += qa.heldout ? 1 : 0;
  CHECK(heldout == 40 * 4);
}

TEST_CASE("corpus generation is deterministic in the seed") {
  Corpus a = generate_corpus(small_spec(7));
  Corpus b = generate_corpus(small_spec(7));
  CHECK(a.pretrain_text == b.pretrain_text);
  CHECK(a.heldout_text == b.heldout_text);
  REQUIRE(a.pool.pairs.size() == b.pool.pairs.size());
  for (std::size_t i = 0; i < a.pool.pairs.size(); ++i) {
    CHECK(a.pool.pairs[i].id == b.pool.pairs[i].id);
    CHECK(a.pool.pairs[i].question == b.pool.pairs[i].question);
    CHECK(a.pool.pairs[i].answer == b.pool.pairs[i].answer);
  }
  Corpus c = generate_corpus(small_spec(8));
  CHECK(a.pretrain_text != c.pretrain_text);
}

TEST_CASE("paraphrases of one fact share aliases but differ in question text") {
  Corpus c = generate_corpus(small_spec());
  const QAPair& a = c.pool.pairs[0];
  const QAPair& b = c.pool.pairs[1];
  REQUIRE(a.fact == b.fact);
  CHECK(a.aliases == b.aliases);
  CHECK(a.question != b.question);
}

TEST_CASE("held-out questions never appear in the pretraining text") {
  Corpus c = generate_corpus(small_spec());
  for (const auto& qa : c.pool.pairs) {
    bool present = c.pretrain_text.find(qa.question) != std::string::npos;
    if (qa.heldout)
      CHECK(!present);
    else
      CHECK(present);
  }
}

TEST_CASE("held-out prose is disjoint from pretraining text") {
  Corpus c = generate_corpus(small_spec());
  std::istringstream in(c.heldout_text);
  std::string line;
  while (std::getline(in, line)) {
    REQUIRE(!line.empty());
    CHECK(c.pretrain_text.find(line) == std::string::npos);
  }
}

TEST_CASE("entity names and aliases are unique") {
  Corpus c = generate_corpus(small_spec());
  std::set<std::string> names;
  std::set<std::string> surnames;
  for (const auto& e : c.entities) {
    CHECK(names.insert(e.name).second);
    REQUIRE(e.aliases.size() == 2);
    CHECK(e.aliases[0] == e.name);
    CHECK(surnames.insert(e.aliases[1]).second);
  }
}

TEST_CASE("select_forget_answers: count, determinism, degenerate cases") {
  Corpus c = generate_corpus(small_spec());
  Rng r1 = Rng(3).child("pick");
  Rng r2 = Rng(3).child("pick");
  auto a = select_forget_answers(c.pool, 5, r1);
  auto b = select_forget_answers(c.pool, 5, r2);
  CHECK(a == b);
  CHECK(a.size() == 5);
  CHECK(std::set<std::string>(a.begin(), a.end()).size() == 5);
  Rng r3(4);
  CHECK(select_forget_answers(c.pool, 0, r3).empty());
  CHECK_THROWS_AS(select_forget_answers(c.pool, 1000, r3), DataError);
}

TEST_CASE("forget set sizes and partition against the forget test") {
  Corpus c = generate_corpus(small_spec());
  Rng rng = Rng(1).child("pick");
  auto keys = select_forget_answers(c.pool, 5, rng);
  KnowledgeSet kf = build_forget_set(c.pool, keys, 16);
  CHECK(kf.size() == 80);

  KnowledgeSet kf1 = build_forget_set(c.pool, {keys[0]}, 16);
  CHECK(kf1.size() == 16);

  Rng rng2(9);
  KnowledgeSet kr = build_retain_set(c.pool, keys, 80, 15, 85, rng2);
  EvalSets ev = build_eval_sets(c.pool, keys, kf, kr);
  std::set<std::string> kf_ids;
  for (const auto& qa : kf.pairs) kf_ids.insert(qa.id);
  for (const auto& qa : ev.forget_test.pairs) CHECK(!kf_ids.count(qa.id));
  CHECK(ev.forget_test.size() == 5 * 4);
}

TEST_CASE("sanitized set mirrors the forget set questions") {
  Corpus c = generate_corpus(small_spec());
  Rng rng = Rng(2).child("pick");
  auto keys = select_forget_answers(c.pool, 5, rng);
  KnowledgeSet kf = build_forget_set(c.pool, keys, 16);
  SanitizationPhrase phrase;
  KnowledgeSet ks = build_sanitized_set(kf, phrase);
  REQUIRE(ks.size() == kf.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    CHECK(ks.pairs[i].question == kf.pairs[i].question);
    CHECK(ks.pairs[i].answer == "I don't know.");
    CHECK(ks.pairs[i].aliases == std::vector<std::string>{"I don't know."});
  }
  SanitizationPhrase empty{""};
  CHECK_THROWS_AS(build_sanitized_set(kf, empty), ConfigError);
  SanitizationPhrase too_long{"a b c d e f g h i j k l m"};
  CHECK_THROWS_AS(build_sanitized_set(kf, too_long), ConfigError);
}

TEST_CASE("retain set size law and filter contract") {
  Corpus c = generate_corpus(small_spec());
  Rng rng = Rng(5).child("pick");
  auto keys = select_forget_answers(c.pool, 5, rng);
  Rng rk(11);
  KnowledgeSet kr = build_retain_set(c.pool, keys, 80, 15, 85, rk);
  CHECK(kr.size() == 453);  // round(80 * 85 / 15)

  auto forget_aliases = split_detail::collect_forget_aliases(c.pool, keys);
  for (const auto& qa : kr.pairs) {
    CHECK(!qa.heldout);
    CHECK(!split_detail::touches_forget_aliases(qa, forget_aliases));
  }

  Rng rk2(11);
  KnowledgeSet even = build_retain_set(c.pool, keys, 80, 50, 50, rk2);
  CHECK(even.size() == 80);
  Rng rk3(11);
  CHECK(build_retain_set(c.pool, keys, 80, 100, 0, rk3).size() == 0);
}

TEST_CASE("alias overlap is case-insensitive substring in both directions") {
  CHECK(split_detail::alias_overlap("Rudyard Kipling", "kipling"));
  CHECK(split_detail::alias_overlap("kipling", "Rudyard Kipling"));
  CHECK(!split_detail::alias_overlap("Kipling", "Orwell"));
}

TEST_CASE("splits are pairwise disjoint by question id") {
  Corpus c = generate_corpus(small_spec());
  Rng rng = Rng(6).child("pick");
  auto keys = select_forget_answers(c.pool, 5, rng);
  KnowledgeSet kf = build_forget_set(c.pool, keys, 16);
  Rng rk(13);
  KnowledgeSet kr = build_retain_set(c.pool, keys, static_cast<int>(kf.size()), 15, 85, rk);
  EvalSets ev = build_eval_sets(c.pool, keys, kf, kr);

  std::vector<const KnowledgeSet*> sets{&kf, &kr, &ev.forget_test, &ev.retain_test};
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const KnowledgeSet* s : sets) {
    for (const auto& qa : s->pairs) seen.insert(qa.id);
    total += s->size();
  }
  CHECK(seen.size() == total);

  std::set<std::string> forget(keys.begin(), keys.end());
  for (const auto& qa : ev.retain_test.pairs) CHECK(!forget.count(qa.answer_key));
}

TEST_CASE("seeded suite keeps forget targets disjoint across seeds") {
  Corpus c = generate_corpus(small_spec());
  SanitizationPhrase phrase;
  auto bundles = build_seeded_suite(c.pool, 5, 5, 16, phrase, 15, 85, 123);
  REQUIRE(bundles.size() == 5);
  std::set<std::string> all;
  for (const auto& b : bundles) {
    CHECK(b.forget_keys.size() == 5);
    CHECK(b.kf.size() == 80);
    CHECK(b.ks.size() == 80);
    for (const auto& k : b.forget_keys) CHECK(all.insert(k).second);
  }
  auto single = build_seeded_suite(c.pool, 1, 5, 16, phrase, 15, 85, 123);
  CHECK(single.size() == 1);
  CHECK(single[0].forget_keys == bundles[0].forget_keys);
  // 40 entities cannot supply 9 disjoint sets of 5
  CHECK_THROWS_AS(build_seeded_suite(c.pool, 9, 5, 16, phrase, 15, 85, 123), DataError);
}

TEST_CASE("jsonl export/import round trip") {
  Corpus c = generate_corpus(small_spec());
  auto dir = std::filesystem::temp_directory_path() / "sanlab_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "pool.jsonl";
  export_jsonl(c.pool.pairs, path);
  QaPool back = import_jsonl(path);
  REQUIRE(back.pairs.size() == c.pool.pairs.size());
  for (std::size_t i = 0; i < back.pairs.size(); ++i) {
    CHECK(back.pairs[i].id == c.pool.pairs[i].id);
    CHECK(back.pairs[i].question == c.pool.pairs[i].question);
    CHECK(back.pairs[i].aliases == c.pool.pairs[i].aliases);
    CHECK(back.pairs[i].answer_key == c.pool.pairs[i].answer_key);
    CHECK(back.pairs[i].heldout == c.pool.pairs[i].heldout);
  }
}

TEST_CASE("jsonl import errors carry line numbers") {
  auto dir = std::filesystem::temp_directory_path() / "sanlab_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "bad.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id":"a","question":"q?","answers":["x"]})" << "\n";
    out << R"({"id":"b","question":"q2?"})" << "\n";
  }
  try {
    import_jsonl(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    CHECK(std::string(e.what()).find("answers") != std::string::npos);
  }
}

TEST_CASE("jsonl preserves a three-alias list in order") {
  auto dir = std::filesystem::temp_directory_path() / "sanlab_test";
  std::filesystem::create_directories(dir);
  auto path = dir / "aliases.jsonl";
  {
    std::ofstream out(path);
    out << R"({"id":"a","question":"q?","answers":["First Pick","second","THIRD"]})" << "\n";
  }
  QaPool pool = import_jsonl(path);
  REQUIRE(pool.pairs.size() == 1);
  CHECK(pool.pairs[0].aliases ==
        std::vector<std::string>{"First Pick", "second", "THIRD"});
  CHECK(pool.pairs[0].answer == "First Pick");
}

TEST_CASE("attack prefix words appear in the pretraining text") {
  Corpus c = generate_corpus(small_spec());
  CHECK(c.pretrain_text.find(attack_prefix()) != std::string::npos);
}

TEST_CASE("reserved attack template never appears in pretraining text") {
  Corpus c = generate_corpus(small_spec());
  for (const Fact& f : c.facts) {
    std::string probe = render_attack_text(f);
    CHECK(c.pretrain_text.find(probe) == std::string::npos);
  }
}

TEST_CASE("corpus spec validation") {
  CorpusSpec bad = small_spec();
  bad.heldout_per_answer = 5;
  CHECK_THROWS_AS(generate_corpus(bad), ConfigError);
  CorpusSpec tiny = small_spec();
  tiny.qa_templates_per_relation = 3;  // 15 questions per answer < 17
  CHECK_THROWS_AS(generate_corpus(tiny), ConfigError);
  CorpusSpec one = small_spec();
  one.answer_entities = 1;
  CHECK_THROWS_AS(generate_corpus(one), ConfigError);
}
