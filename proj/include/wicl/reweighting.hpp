#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wicl/engine.hpp"

namespace wicl {

enum class ReweightMode { none, skm, saw, dual };

std::string_view to_string(ReweightMode mode);
ReweightMode parse_reweight_mode(std::string_view name);

// Token range [start, end) of one demonstration example.
struct ExampleSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  friend bool operator==(const ExampleSpan&, const ExampleSpan&) = default;
};

// Throws ConfigError unless spans are nonempty, ascending and disjoint.
void check_spans(std::span<const ExampleSpan> spans);

// One strictly positive weight per demonstration example.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> weights);
  static WeightVector uniform(std::size_t k, double value = 1.0);

  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }
  const std::vector<double>& values() const noexcept { return weights_; }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
  friend auto operator<=>(const WeightVector&, const WeightVector&) = default;

 private:
  std::vector<double> weights_;
};

// Half-open layer interval [lo, hi).
struct LayerRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  bool contains(std::size_t layer) const { return layer >= lo && layer < hi; }
  friend bool operator==(const LayerRange&, const LayerRange&) = default;
};

// Validated, immutable demonstration reweighting. SKM scales the key rows of
// every span position (seen by all queries); SAW rescales the post-softmax
// mass of span positions and renormalizes the whole row, with positions
// outside every span keeping factor 1; dual applies SKM then SAW. The same
// weights apply to every head of every layer in `layers` (all layers when
// unset).
class Intervention final : public AttentionHook {
 public:
  Intervention() = default;  // mode none
  Intervention(ReweightMode mode, WeightVector weights, std::vector<ExampleSpan> spans,
               std::optional<LayerRange> layers = std::nullopt);

  ReweightMode mode() const noexcept { return mode_; }
  const WeightVector& weights() const noexcept { return weights_; }
  const std::vector<ExampleSpan>& spans() const noexcept { return spans_; }
  const std::optional<LayerRange>& layers() const noexcept { return layers_; }

  bool applies_to_layer(std::size_t layer) const override;
  void transform_keys(const AttentionContext& ctx) const override;
  void transform_probs(const AttentionContext& ctx, std::size_t query_position, std::span<const float> scores,
                       std::span<float> probs) const override;
  void check_applicable(std::size_t seq_len, std::size_t n_layers) const override;

 private:
  bool scales_keys() const { return mode_ == ReweightMode::skm || mode_ == ReweightMode::dual; }
  bool scales_probs() const { return mode_ == ReweightMode::saw || mode_ == ReweightMode::dual; }

  ReweightMode mode_ = ReweightMode::none;
  WeightVector weights_;
  std::vector<ExampleSpan> spans_;
  std::optional<LayerRange> layers_;
  // Factor per position up to the end of the last span.
  std::vector<double> position_factor_;
};

Intervention make_intervention(ReweightMode mode, WeightVector weights, std::vector<ExampleSpan> spans,
                               std::optional<LayerRange> layers = std::nullopt);

// `keys` is position-major (row p = key of position p). Rows inside span i
// are multiplied by w_i; the input is not modified.
Matrix apply_skm(const Matrix& keys, std::span<const ExampleSpan> spans, const WeightVector& weights);

// Scales entry p of a probability row by w_i when p lies in span i (1.0
// otherwise) and renormalizes the row.
std::vector<float> apply_saw(std::span<const float> row, std::span<const ExampleSpan> spans,
                             const WeightVector& weights);
std::vector<double> apply_saw(std::span<const double> row, std::span<const ExampleSpan> spans,
                              const WeightVector& weights);

}  // namespace wicl
