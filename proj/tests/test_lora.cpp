#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sanlab/checkpoint.hpp"
#include "sanlab/forward.hpp"
#include "sanlab/generate.hpp"
#include "sanlab/lora.hpp"

using namespace sanlab;

namespace {

ModelWeights demo_model(std::uint64_t seed, int layers = 4) {
  TransformerConfig cfg;
  cfg.layers = layers;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.mlp_hidden = 24;
  cfg.context = 12;
  cfg.vocab_size = 10;
  Rng rng(seed);
  return init_model_weights<float>(cfg, rng);
}

AdapterSet randomized_adapters(const ModelWeights& w, int rank, std::uint64_t seed) {
  Rng rng(seed);
  AdapterSet set = init_adapters(w, rank, static_cast<double>(rank), rng);
  Rng noise(seed + 1);
  for (auto& [t, ad] : set.by_target)
    for (float& x : ad.b.data) x = static_cast<float>(noise.normal(0.0, 0.1));
  return set;
}

std::filesystem::path temp_prefix(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / "sanlab_test";
  std::filesystem::create_directories(dir);
  return dir / tag;
}

}  // namespace

TEST_CASE("init_adapters targets the MLP matrices, two per layer") {
  ModelWeights w = demo_model(1);
  Rng rng(5);
  AdapterSet set = init_adapters(w, 4, 4.0, rng);
  CHECK(set.by_target.size() == 8);
  for (const auto& [target, ad] : set.by_target) {
    auto role = w.role(target);
    CHECK((role == MatrixRole::mlp_in || role == MatrixRole::mlp_out));
    for (float x : ad.b.data) CHECK(x == 0.0f);
  }
}

TEST_CASE("init_adapters rejects oversized rank and empty target sets") {
  ModelWeights w = demo_model(2);
  Rng rng(5);
  CHECK_THROWS_AS(init_adapters(w, 17, 17.0, rng), ConfigError);  // min(24,16)+1
  CHECK_THROWS_AS(init_adapters(w, std::set<MatrixRole>{}, 2, 2.0, rng), ConfigError);
}

TEST_CASE("fresh adapters are forward-identity, exactly") {
  ModelWeights w = demo_model(3);
  Rng rng(7);
  AdapterSet set = init_adapters(w, 4, 4.0, rng);
  std::vector<int> ids{1, 5, 6, 7, 8};
  Tensor base = forward_logits<float>(w, nullptr, ids);
  Tensor adapted = forward_logits<float>(w, &set, ids);
  CHECK(max_abs_diff(base, adapted) == 0.0);
}

TEST_CASE("adapted_matvec hand case: 2 + 3*4*1 = 14") {
  Tensor w0({1, 1}, {2.0f});
  LoraAdapter ad;
  ad.target = "w";
  ad.rank = 1;
  ad.alpha = 1.0;
  ad.b = Tensor({1, 1}, {3.0f});
  ad.a = Tensor({1, 1}, {4.0f});
  Tensor v({1}, {1.0f});
  Tensor h = adapted_matvec(w0, ad, v);
  CHECK(h.at(0) == 14.0f);

  Tensor zero_v({1}, {0.0f});
  CHECK(adapted_matvec(w0, ad, zero_v).at(0) == 0.0f);
  ad.b.data[0] = 0.0f;
  CHECK(adapted_matvec(w0, ad, v).at(0) == 2.0f);
  Tensor bad({2}, {1.0f, 2.0f});
  CHECK_THROWS_AS(adapted_matvec(w0, ad, bad), ShapeError);
}

TEST_CASE("merged weights reproduce the adapted forward pass") {
  ModelWeights w = demo_model(4);
  AdapterSet set = randomized_adapters(w, 4, 11);
  ModelWeights merged = merge(w, set);
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    int len = 2 + rng.below_int(8);
    std::vector<int> ids;
    for (int i = 0; i < len; ++i) ids.push_back(rng.below_int(10));
    Tensor adapted = forward_logits<float>(w, &set, ids);
    Tensor direct = forward_logits<float>(merged, nullptr, ids);
    CHECK(max_abs_diff(adapted, direct) < 1e-4);
  }
}

TEST_CASE("merge leaves the base weights untouched and zero adapters are a no-op") {
  ModelWeights w = demo_model(5);
  ModelWeights snapshot = w;
  Rng rng(5);
  AdapterSet zero = init_adapters(w, 4, 4.0, rng);
  ModelWeights merged = merge(w, zero);
  for (const auto& e : w.entries()) {
    CHECK(max_abs_diff(e.tensor, snapshot.tensor(e.name)) == 0.0);
    CHECK(max_abs_diff(merged.tensor(e.name), e.tensor) == 0.0);
  }
}

TEST_CASE("double merge shifts by twice the update (1x1 algebra)") {
  ModelWeights w;
  w.config = TransformerConfig{};
  w.config.vocab_size = 1;
  w.add("m", MatrixRole::mlp_in, Tensor({1, 1}, {2.0f}));
  AdapterSet set;
  set.rank = 1;
  set.alpha = 1.0;
  LoraAdapter ad;
  ad.target = "m";
  ad.rank = 1;
  ad.alpha = 1.0;
  ad.b = Tensor({1, 1}, {3.0f});
  ad.a = Tensor({1, 1}, {4.0f});
  set.by_target.emplace("m", ad);
  ModelWeights once = merge(w, set);
  ModelWeights twice = merge(once, set);
  CHECK(once.tensor("m").at(0, 0) == 14.0f);   // 2 + 12
  CHECK(twice.tensor("m").at(0, 0) == 26.0f);  // 2 + 2*12
  ModelWeights negated = merge(w, negate(set));
  CHECK(negated.tensor("m").at(0, 0) == -10.0f);  // 2 - 12
}

TEST_CASE("negation is an involution and fixes zero adapters") {
  ModelWeights w = demo_model(6);
  AdapterSet set = randomized_adapters(w, 4, 21);
  AdapterSet twice = negate(negate(set));
  std::vector<int> ids{1, 3, 5, 7};
  CHECK(max_abs_diff(forward_logits<float>(w, &set, ids),
                     forward_logits<float>(w, &twice, ids)) == 0.0);
  Rng rng(5);
  AdapterSet zero = init_adapters(w, 2, 2.0, rng);
  AdapterSet nz = negate(zero);
  for (const auto& [t, ad] : nz.by_target)
    for (float x : ad.b.data) CHECK(x == 0.0f);
}

TEST_CASE("merge with negated set equals W0 - (alpha/r) B A within 1e-6") {
  ModelWeights w = demo_model(7);
  AdapterSet set = randomized_adapters(w, 4, 31);
  ModelWeights neg = merge(w, negate(set));
  for (const auto& [target, ad] : set.by_target) {
    Tensor delta = matmul(ad.b, ad.a);
    const Tensor& w0 = w.tensor(target);
    const Tensor& got = neg.tensor(target);
    double s = ad.scale();
    for (std::size_t i = 0; i < w0.numel(); ++i) {
      double want = static_cast<double>(w0.data[i]) - s * static_cast<double>(delta.data[i]);
      CHECK(std::abs(static_cast<double>(got.data[i]) - want) < 1e-6);
    }
  }
}

TEST_CASE("adapter save/load round trip is bit-exact") {
  ModelWeights w = demo_model(8);
  AdapterSet set = randomized_adapters(w, 4, 41);
  set.provenance = {"sanitize", 3, "deadbeef"};
  auto prefix = temp_prefix("adapters_roundtrip");
  save_adapters(set, prefix);
  AdapterSet loaded = load_adapters(prefix);
  CHECK(loaded.rank == set.rank);
  CHECK(loaded.alpha == set.alpha);
  CHECK(loaded.provenance.method == "sanitize");
  CHECK(loaded.provenance.seed == 3);
  REQUIRE(loaded.by_target.size() == set.by_target.size());
  std::vector<int> ids{1, 2, 3, 4, 5};
  CHECK(max_abs_diff(forward_logits<float>(w, &set, ids),
                     forward_logits<float>(w, &loaded, ids)) == 0.0);
}

TEST_CASE("truncated adapter binary is a load error, not silent zeros") {
  ModelWeights w = demo_model(9);
  AdapterSet set = randomized_adapters(w, 4, 51);
  auto prefix = temp_prefix("adapters_truncated");
  save_adapters(set, prefix);
  auto bin = prefix.string() + ".bin";
  auto size = std::filesystem::file_size(bin);
  std::filesystem::resize_file(bin, size - 8);
  CHECK_THROWS_AS(load_adapters(prefix), DataError);
}

TEST_CASE("adapters against a model missing the target name the tensor") {
  ModelWeights w = demo_model(10, 2);  // fewer layers than the adapters expect
  ModelWeights big = demo_model(10, 4);
  AdapterSet set = randomized_adapters(big, 4, 61);
  try {
    validate_adapters(w, set);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("layers.2.mlp.in") != std::string::npos);
  }
  std::vector<int> ids{1, 2};
  CHECK_THROWS_AS(forward_logits<float>(w, &set, ids), DataError);
}

TEST_CASE("model checkpoint round trip preserves weights and roles") {
  ModelWeights w = demo_model(11);
  auto prefix = temp_prefix("model_roundtrip");
  save_weights(w, prefix, "cafef00d");
  std::string hash;
  ModelWeights loaded = load_weights(prefix, &hash);
  CHECK(hash == "cafef00d");
  REQUIRE(loaded.entries().size() == w.entries().size());
  for (const auto& e : w.entries()) {
    CHECK(loaded.role(e.name) == e.role);
    CHECK(max_abs_diff(loaded.tensor(e.name), e.tensor) == 0.0);
  }
  std::vector<int> ids{1, 4, 6};
  CHECK(max_abs_diff(forward_logits<float>(w, nullptr, ids),
                     forward_logits<float>(loaded, nullptr, ids)) == 0.0);
}

TEST_CASE("corrupt model manifest is rejected") {
  auto prefix = temp_prefix("model_corrupt");
  std::ofstream(prefix.string() + ".json") << "{ not json";
  std::ofstream(prefix.string() + ".bin") << "xx";
  CHECK_THROWS_AS(load_weights(prefix), DataError);
}
