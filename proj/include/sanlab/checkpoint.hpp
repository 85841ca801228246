#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sanlab/lora.hpp"
#include "sanlab/model.hpp"
#include "sanlab/vocab.hpp"

namespace sanlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts need byte swaps");

using json = nlohmann::json;

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for write: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline json parse_manifest(const std::filesystem::path& path, const char* expect_format) {
  json m;
  try {
    m = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError("corrupt manifest " + path.string() + ": " + e.what());
  }
  if (!m.is_object() || m.value("format", "") != expect_format)
    throw DataError("manifest " + path.string() + " is not a " + std::string(expect_format) +
                    " file");
  return m;
}

inline void append_f32(std::string& bin, const std::vector<float>& data) {
  const char* p = reinterpret_cast<const char*>(data.data());
  bin.append(p, data.size() * sizeof(float));
}

inline std::vector<float> slice_f32(const std::string& bin, std::size_t offset,
                                    std::size_t count, const std::string& what) {
  if (offset + count * sizeof(float) > bin.size())
    throw DataError("checkpoint binary truncated while reading " + what);
  std::vector<float> out(count);
  std::memcpy(out.data(), bin.data() + offset, count * sizeof(float));
  return out;
}

}  // namespace detail

// Model checkpoint: <prefix>.json manifest + <prefix>.bin of little-endian
// row-major f32 tensors concatenated in manifest order.
inline void save_weights(const ModelWeights& weights, const std::filesystem::path& prefix,
                         const std::string& config_hash = "") {
  json manifest;
  manifest["format"] = "sanlab-model";
  manifest["schema"] = 1;
  manifest["dtype"] = "f32";
  manifest["config_hash"] = config_hash;
  manifest["model"] = {{"layers", weights.config.layers},
                       {"d_model", weights.config.d_model},
                       {"heads", weights.config.heads},
                       {"mlp_hidden", weights.config.mlp_hidden},
                       {"context", weights.config.context},
                       {"vocab_size", weights.config.vocab_size}};
  std::string bin;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& e : weights.entries()) {
    tensors.push_back({{"name", e.name},
                       {"role", role_name(e.role)},
                       {"shape", e.tensor.shape},
                       {"offset", offset}});
    detail::append_f32(bin, e.tensor.data);
    offset += e.tensor.numel() * sizeof(float);
  }
  manifest["tensors"] = std::move(tensors);
  detail::write_file(prefix.string() + ".json", manifest.dump(2) + "\n");
  detail::write_file(prefix.string() + ".bin", bin);
}

inline ModelWeights load_weights(const std::filesystem::path& prefix,
                                 std::string* config_hash_out = nullptr) {
  json m = detail::parse_manifest(prefix.string() + ".json", "sanlab-model");
  std::string bin = detail::read_file(prefix.string() + ".bin");
  ModelWeights w;
  try {
    const json& mc = m.at("model");
    w.config.layers = mc.at("layers").get<int>();
    w.config.d_model = mc.at("d_model").get<int>();
    w.config.heads = mc.at("heads").get<int>();
    w.config.mlp_hidden = mc.at("mlp_hidden").get<int>();
    w.config.context = mc.at("context").get<int>();
    w.config.vocab_size = mc.at("vocab_size").get<int>();
    if (config_hash_out) *config_hash_out = m.value("config_hash", "");
    std::size_t expected = 0;
    for (const json& t : m.at("tensors")) {
      std::vector<int> shape = t.at("shape").get<std::vector<int>>();
      std::size_t count = Tensor::checked_numel(shape);
      std::vector<float> data =
          detail::slice_f32(bin, t.at("offset").get<std::size_t>(), count,
                            t.at("name").get<std::string>());
      w.add(t.at("name").get<std::string>(), role_from_name(t.at("role").get<std::string>()),
            Tensor(std::move(shape), std::move(data)));
      expected += count * sizeof(float);
    }
    if (expected != bin.size())
      throw DataError("checkpoint binary size mismatch for " + prefix.string());
  } catch (const json::exception& e) {
    throw DataError("corrupt manifest " + prefix.string() + ".json: " + e.what());
  }
  w.config.validate();
  return w;
}

// Adapter checkpoint, same manifest+binary convention scoped to B/A pairs.
inline void save_adapters(const AdapterSet& set, const std::filesystem::path& prefix) {
  json manifest;
  manifest["format"] = "sanlab-adapters";
  manifest["schema"] = 1;
  manifest["dtype"] = "f32";
  manifest["rank"] = set.rank;
  manifest["alpha"] = set.alpha;
  manifest["provenance"] = {{"method", set.provenance.method},
                            {"seed", set.provenance.seed},
                            {"config_hash", set.provenance.config_hash}};
  std::string bin;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [target, ad] : set.by_target) {
    json entry;
    entry["target"] = target;
    entry["rank"] = ad.rank;
    entry["alpha"] = ad.alpha;
    entry["shape_b"] = ad.b.shape;
    entry["offset_b"] = offset;
    detail::append_f32(bin, ad.b.data);
    offset += ad.b.numel() * sizeof(float);
    entry["shape_a"] = ad.a.shape;
    entry["offset_a"] = offset;
    detail::append_f32(bin, ad.a.data);
    offset += ad.a.numel() * sizeof(float);
    tensors.push_back(std::move(entry));
  }
  manifest["tensors"] = std::move(tensors);
  detail::write_file(prefix.string() + ".json", manifest.dump(2) + "\n");
  detail::write_file(prefix.string() + ".bin", bin);
}

inline AdapterSet load_adapters(const std::filesystem::path& prefix) {
  json m = detail::parse_manifest(prefix.string() + ".json", "sanlab-adapters");
  std::string bin = detail::read_file(prefix.string() + ".bin");
  AdapterSet set;
  try {
    set.rank = m.at("rank").get<int>();
    set.alpha = m.at("alpha").get<double>();
    const json& prov = m.at("provenance");
    set.provenance.method = prov.value("method", "");
    set.provenance.seed = prov.value("seed", std::uint64_t{0});
    set.provenance.config_hash = prov.value("config_hash", "");
    std::size_t expected = 0;
    for (const json& t : m.at("tensors")) {
      LoraAdapter ad;
      ad.target = t.at("target").get<std::string>();
      ad.rank = t.at("rank").get<int>();
      ad.alpha = t.at("alpha").get<double>();
      std::vector<int> shape_b = t.at("shape_b").get<std::vector<int>>();
      std::vector<int> shape_a = t.at("shape_a").get<std::vector<int>>();
      std::size_t nb = Tensor::checked_numel(shape_b);
      std::size_t na = Tensor::checked_numel(shape_a);
      ad.b = Tensor(std::move(shape_b),
                    detail::slice_f32(bin, t.at("offset_b").get<std::size_t>(), nb,
                                      ad.target + ".lora_b"));
      ad.a = Tensor(std::move(shape_a),
                    detail::slice_f32(bin, t.at("offset_a").get<std::size_t>(), na,
                                      ad.target + ".lora_a"));
      expected += (nb + na) * sizeof(float);
      set.by_target.emplace(ad.target, std::move(ad));
    }
    if (expected != bin.size())
      throw DataError("adapter binary size mismatch for " + prefix.string());
  } catch (const json::exception& e) {
    throw DataError("corrupt manifest " + prefix.string() + ".json: " + e.what());
  }
  return set;
}

inline void save_vocab(const Vocabulary& vocab, const std::filesystem::path& path) {
  json j;
  j["format"] = "sanlab-vocab";
  j["schema"] = 1;
  j["tokens"] = std::vector<std::string>(vocab.tokens().begin() + 5, vocab.tokens().end());
  detail::write_file(path, j.dump(2) + "\n");
}

inline Vocabulary load_vocab(const std::filesystem::path& path) {
  json j = detail::parse_manifest(path, "sanlab-vocab");
  try {
    return Vocabulary(j.at("tokens").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError("corrupt vocab file " + path.string() + ": " + e.what());
  }
}

}  // namespace sanlab
