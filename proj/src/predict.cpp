#include "wicl/predict.hpp"

#include <algorithm>

namespace wicl {

std::size_t argmax_first(const std::vector<double>& values) {
  if (values.empty()) throw Error("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

Predictor::Predictor(const Model& model, const Tokenizer& tokenizer, const Template& tpl, const Prompt& demonstration,
                     Intervention intervention)
    : model_(&model), tokenizer_(&tokenizer), tpl_(&tpl),
      intervention_(std::make_shared<const Intervention>(std::move(intervention))),
      verbalizers_(encode_verbalizers(tpl, tokenizer)), demo_length_(demonstration.ids.size()),
      demo_session_(model, intervention_->mode() == ReweightMode::none ? nullptr : intervention_.get()) {
  for (const auto& v : verbalizers_) longest_verbalizer_ = std::max(longest_verbalizer_, v.size());
  intervention_->check_applicable(demonstration.ids.size(), model.config().n_layers);
  demo_session_.append(demonstration.ids, 0);
}

std::vector<double> Predictor::label_logprobs(const Fields& query) const {
  const auto query_ids = encode_query(*tpl_, query, *tokenizer_);
  if (query_ids.empty()) throw Error("predict: query renders to zero tokens");
  const std::size_t needed = demo_length_ + query_ids.size() + longest_verbalizer_ - 1;
  if (needed > model_->config().max_seq_len)
    throw Error("predict: prompt plus query plus label needs " + std::to_string(needed) +
                " tokens but max_seq_len is " + std::to_string(model_->config().max_seq_len));
  InferenceSession s = demo_session_;
  const Matrix last = s.append(query_ids, 1);
  return continuation_logprobs(s, last.row(0), verbalizers_);
}

PredictionOutcome Predictor::predict(const Fields& query, std::optional<std::size_t> gold, std::string query_id) const {
  PredictionOutcome out;
  out.query_id = std::move(query_id);
  out.label_logprob = label_logprobs(query);
  out.predicted = argmax_first(out.label_logprob);
  out.gold = gold;
  return out;
}

PredictionOutcome predict_label(const Model& model, const Tokenizer& tokenizer, const Prompt& demonstration,
                                const Fields& query, const Template& tpl, const Intervention& intervention) {
  return Predictor(model, tokenizer, tpl, demonstration, intervention).predict(query);
}

}  // namespace wicl
