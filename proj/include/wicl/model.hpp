#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wicl/error.hpp"

namespace wicl {

using TokenId = std::int32_t;

// Dense row-major f32 matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t n_heads = 0;
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 0;
  float layernorm_eps = 1e-5f;

  std::size_t d_head() const { return d_model / n_heads; }
  // Throws ConfigError when an invariant is violated.
  void validate() const;
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;

  std::size_t numel() const;
};

// Names and shapes of every tensor the engine needs for `config`.
std::vector<std::pair<std::string, std::vector<std::size_t>>> required_tensors(const ModelConfig& config);

// Immutable decoder-only transformer (GPT-2 layout: pre-LayerNorm blocks,
// learned absolute positions, tanh-GELU MLP). Linear weights are stored
// [out, in]. Move-only: internal views point into the owned tensors.
class Model {
 public:
  struct Layer {
    const float* ln1_w;
    const float* ln1_b;
    const float* q_w;
    const float* q_b;
    const float* k_w;
    const float* k_b;
    const float* v_w;
    const float* v_b;
    const float* proj_w;
    const float* proj_b;
    const float* ln2_w;
    const float* ln2_b;
    const float* fc_w;
    const float* fc_b;
    const float* fc_proj_w;
    const float* fc_proj_b;
  };

  // Loads `manifest.json` plus the raw tensor files it references.
  static Model load(const std::filesystem::path& manifest_path);
  // Validates names, shapes and finiteness of an in-memory tensor set.
  static Model from_tensors(ModelConfig config, std::vector<Tensor> tensors);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const noexcept { return config_; }
  const Tensor& tensor(std::string_view name) const;
  std::size_t parameter_count() const;

  const Layer& layer(std::size_t i) const { return layers_[i]; }
  const float* token_embedding() const { return wte_; }
  const float* position_embedding() const { return wpe_; }
  const float* final_norm_weight() const { return lnf_w_; }
  const float* final_norm_bias() const { return lnf_b_; }
  const float* unembedding() const { return lm_head_; }

 private:
  Model() = default;
  void bind();

  ModelConfig config_;
  std::map<std::string, Tensor, std::less<>> tensors_;
  std::vector<Layer> layers_;
  const float* wte_ = nullptr;
  const float* wpe_ = nullptr;
  const float* lnf_w_ = nullptr;
  const float* lnf_b_ = nullptr;
  const float* lm_head_ = nullptr;
};

}  // namespace wicl
