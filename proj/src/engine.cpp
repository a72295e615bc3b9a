#include "wicl/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kernels.hpp"

namespace wicl {

InferenceSession::InferenceSession(const Model& model, const AttentionHook* hook)
    : model_(&model), hook_(hook),
      cache_(model.config().n_layers, std::vector<HeadCache>(model.config().n_heads)) {}

Matrix InferenceSession::append(std::span<const TokenId> ids, std::size_t logit_rows) {
  const ModelConfig& cfg = model_->config();
  const std::size_t n = ids.size();
  if (logit_rows > n) throw Error("append: requested more logit rows than appended tokens");
  if (length_ + n > cfg.max_seq_len)
    throw Error("sequence too long: " + std::to_string(length_ + n) + " tokens, max_seq_len " +
                std::to_string(cfg.max_seq_len));
  if (n == 0) return Matrix(0, cfg.vocab_size);

  const std::size_t d = cfg.d_model;
  const std::size_t dh = cfg.d_head();
  const std::size_t heads = cfg.n_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

  std::vector<float> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
      throw Error("token id " + std::to_string(id) + " out of range for vocab_size " + std::to_string(cfg.vocab_size));
    const float* te = model_->token_embedding() + static_cast<std::size_t>(id) * d;
    const float* pe = model_->position_embedding() + (length_ + i) * d;
    for (std::size_t c = 0; c < d; ++c) x[i * d + c] = te[c] + pe[c];
  }

  std::vector<float> h(n * d), q(n * d), k(n * d), v(n * d), att(n * d), tmp(n * d);
  std::vector<float> ff(n * cfg.d_ff);
  std::vector<float> scores, probs, qh;

  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const Model::Layer& w = model_->layer(l);
    const bool hooked = hook_ != nullptr && hook_->applies_to_layer(l);

    kernels::layer_norm(x.data(), n, d, w.ln1_w, w.ln1_b, cfg.layernorm_eps, h.data());
    kernels::linear(h.data(), n, d, w.q_w, w.q_b, d, q.data());
    kernels::linear(h.data(), n, d, w.k_w, w.k_b, d, k.data());
    kernels::linear(h.data(), n, d, w.v_w, w.v_b, d, v.data());

    for (std::size_t hd = 0; hd < heads; ++hd) {
      HeadCache& hc = cache_[l][hd];
      const std::size_t old_rows = hc.keys.size() / dh;
      for (std::size_t i = 0; i < n; ++i) {
        hc.keys.insert(hc.keys.end(), k.begin() + i * d + hd * dh, k.begin() + i * d + (hd + 1) * dh);
        hc.values.insert(hc.values.end(), v.begin() + i * d + hd * dh, v.begin() + i * d + (hd + 1) * dh);
      }
      AttentionContext ctx;
      if (hooked) {
        qh.resize(n * dh);
        for (std::size_t i = 0; i < n; ++i)
          std::copy_n(q.begin() + i * d + hd * dh, dh, qh.begin() + i * dh);
        ctx.layer_index = l;
        ctx.head_index = hd;
        ctx.d_head = dh;
        ctx.first_position = old_rows;
        ctx.new_keys = std::span<float>(hc.keys).subspan(old_rows * dh);
        ctx.new_queries = qh;
        ctx.values = hc.values;
        hook_->transform_keys(ctx);
      }

      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = length_ + i;
        const float* qi = q.data() + i * d + hd * dh;
        scores.resize(t + 1);
        probs.resize(t + 1);
        float mx = -std::numeric_limits<float>::infinity();
        for (std::size_t j = 0; j <= t; ++j) {
          scores[j] = kernels::dot(qi, hc.keys.data() + j * dh, dh) * scale;
          mx = std::max(mx, scores[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          probs[j] = std::exp(scores[j] - mx);
          sum += probs[j];
        }
        for (std::size_t j = 0; j <= t; ++j) probs[j] = static_cast<float>(probs[j] / sum);
        if (hooked) hook_->transform_probs(ctx, t, scores, probs);

        float* out = att.data() + i * d + hd * dh;
        std::fill_n(out, dh, 0.0f);
        for (std::size_t j = 0; j <= t; ++j) {
          const float p = probs[j];
          const float* vj = hc.values.data() + j * dh;
          for (std::size_t c = 0; c < dh; ++c) out[c] += p * vj[c];
        }
      }
    }

    kernels::linear(att.data(), n, d, w.proj_w, w.proj_b, d, tmp.data());
    for (std::size_t i = 0; i < n * d; ++i) x[i] += tmp[i];

    kernels::layer_norm(x.data(), n, d, w.ln2_w, w.ln2_b, cfg.layernorm_eps, h.data());
    kernels::linear(h.data(), n, d, w.fc_w, w.fc_b, cfg.d_ff, ff.data());
    for (auto& f : ff) f = kernels::gelu_tanh(f);
    kernels::linear(ff.data(), n, cfg.d_ff, w.fc_proj_w, w.fc_proj_b, d, tmp.data());
    for (std::size_t i = 0; i < n * d; ++i) x[i] += tmp[i];
  }
  length_ += n;

  Matrix logits(logit_rows, cfg.vocab_size);
  if (logit_rows == 0) return logits;
  const std::size_t first = n - logit_rows;
  kernels::layer_norm(x.data() + first * d, logit_rows, d, model_->final_norm_weight(), model_->final_norm_bias(),
                      cfg.layernorm_eps, h.data());
  const std::vector<float> zero_bias(cfg.vocab_size, 0.0f);
  kernels::linear(h.data(), logit_rows, d, model_->unembedding(), zero_bias.data(), cfg.vocab_size,
                  logits.data.data());
  return logits;
}

Matrix forward(const Model& model, std::span<const TokenId> ids, const AttentionHook* hook) {
  if (hook != nullptr) hook->check_applicable(ids.size(), model.config().n_layers);
  InferenceSession s(model, hook);
  return s.append(ids, ids.size());
}

double log_softmax_at(std::span<const float> logits, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= logits.size()) throw Error("log_softmax_at: token out of range");
  float mx = -std::numeric_limits<float>::infinity();
  for (float v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (float v : logits) sum += std::exp(static_cast<double>(v) - mx);
  return static_cast<double>(logits[static_cast<std::size_t>(token)]) - mx - std::log(sum);
}

std::vector<double> continuation_logprobs(const InferenceSession& session, std::span<const float> last_logits,
                                          const std::vector<std::vector<TokenId>>& candidates) {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.empty()) throw Error("empty label token sequence");
    double lp = log_softmax_at(last_logits, c[0]);
    if (c.size() > 1) {
      InferenceSession fork = session;
      const Matrix logits = fork.append(std::span<const TokenId>(c).first(c.size() - 1), c.size() - 1);
      for (std::size_t j = 1; j < c.size(); ++j) lp += log_softmax_at(logits.row(j - 1), c[j]);
    }
    out.push_back(lp);
  }
  return out;
}

double label_logprob(const Model& model, std::span<const TokenId> prefix, std::span<const TokenId> label,
                     const AttentionHook* hook) {
  if (prefix.empty()) throw Error("label_logprob: empty prefix");
  if (label.empty()) throw Error("label_logprob: empty label");
  if (hook != nullptr) hook->check_applicable(prefix.size() + label.size(), model.config().n_layers);
  InferenceSession s(model, hook);
  const Matrix last = s.append(prefix, 1);
  return continuation_logprobs(s, last.row(0), {std::vector<TokenId>(label.begin(), label.end())})[0];
}

}  // namespace wicl
