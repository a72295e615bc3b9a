#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wicl/model.hpp"

namespace wicl::test {

inline std::filesystem::path source_dir() { return WICL_SOURCE_DIR; }
inline std::filesystem::path toy_manifest() { return source_dir() / "data/toy/manifest.json"; }
inline std::filesystem::path toy_vocab() { return source_dir() / "data/toy/toy_vocab.json"; }
inline std::filesystem::path fixtures() { return source_dir() / "tests/fixtures"; }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ModelConfig small_config() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 96;
  c.max_seq_len = 64;
  return c;
}

// Gaussian weights; layernorm gains sit around 1.
inline Model random_model(const ModelConfig& c, std::uint32_t seed, float scale = 0.3f) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<Tensor> tensors;
  for (const auto& [name, shape] : required_tensors(c)) {
    Tensor t{name, shape, {}};
    t.data.resize(t.numel());
    const bool gain = name.find("ln_") != std::string::npos && name.ends_with(".weight");
    for (float& v : t.data) v = gain ? 1.0f + 0.1f * normal(gen) : scale * normal(gen);
    tensors.push_back(std::move(t));
  }
  return Model::from_tensors(c, std::move(tensors));
}

inline std::vector<TokenId> random_ids(std::mt19937& gen, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> d(0, static_cast<TokenId>(vocab) - 1);
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = d(gen);
  return ids;
}

inline double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// One layer whose blocks all output zero, so the final layernorm sees only
// embeddings; with zero gain its output is the bias [1, 0] and every
// position's logits are lm_head[:, 0] = `logits`.
inline Model constant_logit_model(const std::vector<float>& logits, std::size_t max_seq_len = 8) {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_model = 2;
  c.d_ff = 4;
  c.vocab_size = logits.size();
  c.max_seq_len = max_seq_len;
  std::vector<Tensor> ts;
  for (const auto& [name, shape] : required_tensors(c)) {
    Tensor t{name, shape, {}};
    t.data.assign(t.numel(), 0.0f);
    if (name == "wte" || name == "wpe")
      for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = 0.1f * static_cast<float>(i % 7) - 0.3f;
    if (name == "ln_f.bias") t.data = {1.0f, 0.0f};
    if (name == "lm_head.weight")
      for (std::size_t v = 0; v < logits.size(); ++v) t.data[v * 2] = logits[v];
    ts.push_back(std::move(t));
  }
  return Model::from_tensors(c, std::move(ts));
}

}  // namespace wicl::test
