#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "wicl/prompting.hpp"
#include "wicl/reweighting.hpp"

namespace wicl {

// How p_i is normalized: over the template's candidate verbalizers
// (softmax over label log-probs) or as the raw LM sequence probability.
enum class LabelNormalization { candidates, raw };

std::string_view to_string(LabelNormalization n);
LabelNormalization parse_label_normalization(std::string_view name);

struct ScoringOptions {
  ReweightMode mode = ReweightMode::skm;
  MaskStrategy mask = MaskStrategy::label_only;
  std::optional<LayerRange> layers;
  LabelNormalization normalization = LabelNormalization::candidates;
};

struct MspResult {
  std::vector<double> per_example_logprob;  // log p_i(w)
  double score = 0.0;                       // mean of the above
};

// Shared inputs of a scorer. The model and tokenizer are borrowed and must
// outlive every scorer built from this context.
struct TaskContext {
  const Model* model = nullptr;
  const Tokenizer* tokenizer = nullptr;
  Template tpl;
  DemonstrationSet demonstration;
  ScoringOptions options;
};

// Masked self-prediction. The k masked prompts (demonstration with example i
// hidden, followed by x_i's query) are tokenized once at construction; each
// evaluation only changes the intervention.
class MspScorer {
 public:
  explicit MspScorer(TaskContext context);

  std::size_t k() const noexcept { return prompts_.size(); }
  const TaskContext& context() const noexcept { return ctx_; }

  MspResult score(const WeightVector& w) const;
  // Normalized log-probability of every candidate label for self-prediction i.
  std::vector<double> label_distribution(std::size_t i, const WeightVector& w) const;
  double operator()(const WeightVector& w) const { return score(w).score; }

 private:
  struct MaskedPrompt {
    std::vector<TokenId> demo_ids;
    std::vector<ExampleSpan> spans;
    std::vector<std::size_t> source_example;
    std::vector<TokenId> query_ids;
    std::size_t gold = 0;
  };

  Intervention intervention_for(const MaskedPrompt& p, const WeightVector& w) const;

  TaskContext ctx_;
  std::vector<std::vector<TokenId>> verbalizers_;
  std::vector<MaskedPrompt> prompts_;
};

// Accuracy of label prediction over a held-out labeled list, with the
// demonstration reweighted by w.
class ValidationScorer {
 public:
  ValidationScorer(TaskContext context, Dataset validation);

  double score(const WeightVector& w) const;
  double operator()(const WeightVector& w) const { return score(w); }

 private:
  TaskContext ctx_;
  Dataset validation_;
  Prompt demo_;
};

// Applies `normalization` to a vector of per-label sequence log-probs.
std::vector<double> normalize_label_logprobs(const std::vector<double>& logprobs, LabelNormalization normalization);

}  // namespace wicl
