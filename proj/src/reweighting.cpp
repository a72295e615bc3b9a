#include "wicl/reweighting.hpp"

#include <cmath>

namespace wicl {

namespace {

void check_weights_match(std::span<const ExampleSpan> spans, const WeightVector& weights) {
  if (spans.size() != weights.size())
    throw ConfigError("intervention: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(spans.size()) + " example spans");
}

}  // namespace

std::string_view to_string(ReweightMode mode) {
  switch (mode) {
    case ReweightMode::none: return "none";
    case ReweightMode::skm: return "skm";
    case ReweightMode::saw: return "saw";
    case ReweightMode::dual: return "dual";
  }
  return "none";
}

ReweightMode parse_reweight_mode(std::string_view name) {
  if (name == "none") return ReweightMode::none;
  if (name == "skm") return ReweightMode::skm;
  if (name == "saw") return ReweightMode::saw;
  if (name == "dual") return ReweightMode::dual;
  throw ConfigError("unknown reweighting mode '" + std::string(name) + "' (none|skm|saw|dual)");
}

void check_spans(std::span<const ExampleSpan> spans) {
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].start >= spans[i].end)
      throw ConfigError("example span " + std::to_string(i) + " is empty or inverted");
    if (i > 0 && spans[i].start < spans[i - 1].end)
      throw ConfigError("example spans " + std::to_string(i - 1) + " and " + std::to_string(i) +
                        " overlap or are out of order");
  }
}

WeightVector::WeightVector(std::vector<double> weights) : weights_(std::move(weights)) {
  for (std::size_t i = 0; i < weights_.size(); ++i)
    if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i]))
      throw ConfigError("weight " + std::to_string(i) + " must be a positive finite real");
}

WeightVector WeightVector::uniform(std::size_t k, double value) { return WeightVector(std::vector<double>(k, value)); }

Intervention::Intervention(ReweightMode mode, WeightVector weights, std::vector<ExampleSpan> spans,
                           std::optional<LayerRange> layers)
    : mode_(mode), weights_(std::move(weights)), spans_(std::move(spans)), layers_(layers) {
  if (mode_ == ReweightMode::none) return;
  check_weights_match(spans_, weights_);
  check_spans(spans_);
  if (layers_ && layers_->lo >= layers_->hi)
    throw ConfigError("layer range [" + std::to_string(layers_->lo) + ", " + std::to_string(layers_->hi) +
                      ") is empty");
  if (!spans_.empty()) {
    position_factor_.assign(spans_.back().end, 1.0);
    for (std::size_t i = 0; i < spans_.size(); ++i)
      for (std::size_t p = spans_[i].start; p < spans_[i].end; ++p)
        position_factor_[p] = weights_[i];
  }
}

bool Intervention::applies_to_layer(std::size_t layer) const {
  if (mode_ == ReweightMode::none) return false;
  return !layers_ || layers_->contains(layer);
}

void Intervention::transform_keys(const AttentionContext& ctx) const {
  if (!scales_keys()) return;
  const std::size_t rows = ctx.new_keys.size() / ctx.d_head;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t p = ctx.first_position + r;
    if (p >= position_factor_.size()) break;
    const auto f = static_cast<float>(position_factor_[p]);
    for (std::size_t c = 0; c < ctx.d_head; ++c) ctx.new_keys[r * ctx.d_head + c] *= f;
  }
}

void Intervention::transform_probs(const AttentionContext&, std::size_t, std::span<const float>,
                                   std::span<float> probs) const {
  if (!scales_probs()) return;
  // probs came out of a softmax; see saw_row for the denominator
  double total = 1.0;
  for (std::size_t p = 0; p < position_factor_.size() && p < probs.size(); ++p)
    total += (position_factor_[p] - 1.0) * probs[p];
  for (std::size_t p = 0; p < probs.size(); ++p) {
    const double f = p < position_factor_.size() ? position_factor_[p] : 1.0;
    probs[p] = static_cast<float>(f * probs[p] / total);
  }
}

void Intervention::check_applicable(std::size_t seq_len, std::size_t n_layers) const {
  if (mode_ == ReweightMode::none) return;
  if (!spans_.empty() && spans_.back().end > seq_len)
    throw Error("example span [" + std::to_string(spans_.back().start) + ", " + std::to_string(spans_.back().end) +
                ") out of bounds for sequence of " + std::to_string(seq_len) + " tokens");
  if (layers_ && layers_->hi > n_layers)
    throw ConfigError("layer range end " + std::to_string(layers_->hi) + " exceeds n_layers " +
                      std::to_string(n_layers));
}

Intervention make_intervention(ReweightMode mode, WeightVector weights, std::vector<ExampleSpan> spans,
                               std::optional<LayerRange> layers) {
  return Intervention(mode, std::move(weights), std::move(spans), layers);
}

Matrix apply_skm(const Matrix& keys, std::span<const ExampleSpan> spans, const WeightVector& weights) {
  check_weights_match(spans, weights);
  check_spans(spans);
  if (!spans.empty() && spans.back().end > keys.rows)
    throw Error("apply_skm: span end " + std::to_string(spans.back().end) + " beyond " + std::to_string(keys.rows) +
                " key positions");
  Matrix out = keys;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto f = static_cast<float>(weights[i]);
    for (std::size_t p = spans[i].start; p < spans[i].end; ++p)
      for (auto& v : out.row(p)) v *= f;
  }
  return out;
}

namespace {

template <typename T>
std::vector<T> saw_row(std::span<const T> row, std::span<const ExampleSpan> spans, const WeightVector& weights) {
  check_weights_match(spans, weights);
  check_spans(spans);
  if (!spans.empty() && spans.back().end > row.size())
    throw Error("apply_saw: span end " + std::to_string(spans.back().end) + " beyond row of " +
                std::to_string(row.size()));
  double sum = 0.0;
  for (T v : row) {
    if (!(v >= T(0))) throw Error("apply_saw: negative or NaN attention entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error("apply_saw: attention row sums to " + std::to_string(sum) + ", not 1");

  std::vector<double> factor(row.size(), 1.0);
  for (std::size_t i = 0; i < spans.size(); ++i)
    for (std::size_t p = spans[i].start; p < spans[i].end; ++p) factor[p] = weights[i];
  // sum of factor * row with the row's own mass taken as exactly 1, so
  // all-ones weights return the row unchanged
  double total = 1.0;
  for (std::size_t p = 0; p < row.size(); ++p) total += (factor[p] - 1.0) * row[p];
  std::vector<T> out(row.size());
  for (std::size_t p = 0; p < row.size(); ++p) out[p] = static_cast<T>(factor[p] * row[p] / total);
  return out;
}

}  // namespace

std::vector<float> apply_saw(std::span<const float> row, std::span<const ExampleSpan> spans,
                             const WeightVector& weights) {
  return saw_row(row, spans, weights);
}

std::vector<double> apply_saw(std::span<const double> row, std::span<const ExampleSpan> spans,
                              const WeightVector& weights) {
  return saw_row(row, spans, weights);
}

}  // namespace wicl
