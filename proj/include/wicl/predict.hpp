#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wicl/engine.hpp"
#include "wicl/prompting.hpp"
#include "wicl/reweighting.hpp"

namespace wicl {

struct PredictionOutcome {
  std::string query_id;
  std::vector<double> label_logprob;  // summed verbalizer log-probs, label_map order
  std::size_t predicted = 0;
  std::optional<std::size_t> gold;

  bool correct() const { return gold.has_value() && *gold == predicted; }
};

// Index of the maximum; ties resolve to the earliest entry.
std::size_t argmax_first(const std::vector<double>& values);

// Scores label continuations of `demonstration + query`. The demonstration
// prefix is run once under the intervention and its cache forked per query,
// which is exact because causal attention never looks past a position.
class Predictor {
 public:
  Predictor(const Model& model, const Tokenizer& tokenizer, const Template& tpl, const Prompt& demonstration,
            Intervention intervention);

  std::vector<double> label_logprobs(const Fields& query) const;
  PredictionOutcome predict(const Fields& query, std::optional<std::size_t> gold = std::nullopt,
                            std::string query_id = {}) const;

 private:
  const Model* model_;
  const Tokenizer* tokenizer_;
  const Template* tpl_;
  std::shared_ptr<const Intervention> intervention_;
  std::vector<std::vector<TokenId>> verbalizers_;
  std::size_t longest_verbalizer_ = 0;
  std::size_t demo_length_ = 0;
  InferenceSession demo_session_;
};

PredictionOutcome predict_label(const Model& model, const Tokenizer& tokenizer, const Prompt& demonstration,
                                const Fields& query, const Template& tpl, const Intervention& intervention);

}  // namespace wicl
