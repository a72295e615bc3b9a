#include "wicl/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wicl/engine.hpp"
#include "wicl/predict.hpp"

namespace wicl {

std::string_view to_string(LabelNormalization n) {
  return n == LabelNormalization::candidates ? "candidates" : "raw";
}

LabelNormalization parse_label_normalization(std::string_view name) {
  if (name == "candidates") return LabelNormalization::candidates;
  if (name == "raw") return LabelNormalization::raw;
  throw ConfigError("unknown label normalization '" + std::string(name) + "' (candidates|raw)");
}

std::vector<double> normalize_label_logprobs(const std::vector<double>& logprobs, LabelNormalization normalization) {
  if (normalization == LabelNormalization::raw) return logprobs;
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logprobs) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logprobs) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logprobs.size());
  for (std::size_t i = 0; i < logprobs.size(); ++i) out[i] = std::min(0.0, logprobs[i] - lse);
  return out;
}

namespace {

void check_context(const TaskContext& ctx) {
  if (ctx.model == nullptr || ctx.tokenizer == nullptr) throw Error("scorer: model and tokenizer are required");
  if (ctx.demonstration.empty()) throw Error("scorer: empty demonstration");
}

}  // namespace

MspScorer::MspScorer(TaskContext context) : ctx_(std::move(context)) {
  check_context(ctx_);
  verbalizers_ = encode_verbalizers(ctx_.tpl, *ctx_.tokenizer);
  std::size_t longest = 0;
  for (const auto& v : verbalizers_) longest = std::max(longest, v.size());

  const std::size_t max_len = ctx_.model->config().max_seq_len;
  for (std::size_t i = 0; i < ctx_.demonstration.size(); ++i) {
    Prompt masked_prompt = mask_example(ctx_.tpl, ctx_.demonstration, *ctx_.tokenizer, i, ctx_.options.mask, max_len);
    MaskedPrompt mp;
    mp.demo_ids = std::move(masked_prompt.ids);
    mp.spans = std::move(masked_prompt.spans);
    mp.source_example = std::move(masked_prompt.source_example);
    mp.query_ids = encode_query(ctx_.tpl, ctx_.demonstration[i].fields, *ctx_.tokenizer);
    if (mp.query_ids.empty()) throw Error("scorer: query for example " + std::to_string(i) + " is empty");
    mp.gold = ctx_.tpl.label_index(ctx_.demonstration[i].label);
    const std::size_t needed = mp.demo_ids.size() + mp.query_ids.size() + longest - 1;
    if (needed > max_len)
      throw Error("masked prompt " + std::to_string(i) + " needs " + std::to_string(needed) +
                  " tokens but max_seq_len is " + std::to_string(max_len));
    prompts_.push_back(std::move(mp));
  }
}

Intervention MspScorer::intervention_for(const MaskedPrompt& p, const WeightVector& w) const {
  if (w.size() != k())
    throw ConfigError("weight vector has " + std::to_string(w.size()) + " entries for " + std::to_string(k()) +
                      " demonstration examples");
  if (ctx_.options.mode == ReweightMode::none) return Intervention{};
  std::vector<double> span_weights;
  span_weights.reserve(p.spans.size());
  for (std::size_t src : p.source_example) span_weights.push_back(w[src]);
  return Intervention(ctx_.options.mode, WeightVector(std::move(span_weights)), p.spans, ctx_.options.layers);
}

std::vector<double> MspScorer::label_distribution(std::size_t i, const WeightVector& w) const {
  if (i >= k()) throw Error("self-prediction index out of range");
  const MaskedPrompt& p = prompts_[i];
  const Intervention iv = intervention_for(p, w);
  const AttentionHook* hook = iv.mode() == ReweightMode::none ? nullptr : &iv;

  std::vector<TokenId> ids = p.demo_ids;
  ids.insert(ids.end(), p.query_ids.begin(), p.query_ids.end());
  if (hook != nullptr) hook->check_applicable(ids.size(), ctx_.model->config().n_layers);
  InferenceSession s(*ctx_.model, hook);
  const Matrix last = s.append(ids, 1);
  return normalize_label_logprobs(continuation_logprobs(s, last.row(0), verbalizers_), ctx_.options.normalization);
}

MspResult MspScorer::score(const WeightVector& w) const {
  MspResult r;
  r.per_example_logprob.reserve(k());
  double sum = 0.0;
  for (std::size_t i = 0; i < k(); ++i) {
    const double lp = label_distribution(i, w)[prompts_[i].gold];
    r.per_example_logprob.push_back(lp);
    sum += lp;
  }
  r.score = sum / static_cast<double>(k());
  return r;
}

ValidationScorer::ValidationScorer(TaskContext context, Dataset validation)
    : ctx_(std::move(context)), validation_(std::move(validation)) {
  check_context(ctx_);
  if (validation_.empty()) throw ConfigError("validation scorer: empty validation list");
  demo_ = build_demonstration(ctx_.tpl, ctx_.demonstration, *ctx_.tokenizer, ctx_.model->config().max_seq_len);
}

double ValidationScorer::score(const WeightVector& w) const {
  if (w.size() != ctx_.demonstration.size())
    throw ConfigError("weight vector has " + std::to_string(w.size()) + " entries for " +
                      std::to_string(ctx_.demonstration.size()) + " demonstration examples");
  Intervention iv = ctx_.options.mode == ReweightMode::none
                        ? Intervention{}
                        : Intervention(ctx_.options.mode, w, demo_.spans, ctx_.options.layers);
  const Predictor predictor(*ctx_.model, *ctx_.tokenizer, ctx_.tpl, demo_, std::move(iv));
  std::size_t correct = 0;
  for (const auto& ex : validation_)
    if (predictor.predict(ex.fields, ctx_.tpl.label_index(ex.label)).correct()) ++correct;
  return static_cast<double>(correct) / static_cast<double>(validation_.size());
}

}  // namespace wicl
