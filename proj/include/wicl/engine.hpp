#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "wicl/model.hpp"

namespace wicl {

// View handed to an AttentionHook for one (layer, head). Key/query/value
// blocks are position-major: row p holds the d_head vector of position p.
struct AttentionContext {
  std::size_t layer_index = 0;
  std::size_t head_index = 0;
  std::size_t d_head = 0;
  // Absolute position of the first row in `new_keys` / `new_queries`.
  std::size_t first_position = 0;
  std::span<float> new_keys;
  std::span<const float> new_queries;
  // Every value row cached so far, including the new ones.
  std::span<const float> values;
};

// Intervention point inside causal self-attention. Implementations must be
// pure functions of their arguments; they are shared across threads.
class AttentionHook {
 public:
  virtual ~AttentionHook() = default;

  virtual bool applies_to_layer(std::size_t layer) const = 0;
  // Called once per head when keys for new positions enter the cache,
  // before any score involving them is computed.
  virtual void transform_keys(const AttentionContext& ctx) const = 0;
  // Called per query row after the causal softmax. `scores` are the scaled
  // pre-softmax logits and `probs` the row over positions [0, query_position].
  virtual void transform_probs(const AttentionContext& ctx, std::size_t query_position,
                               std::span<const float> scores, std::span<float> probs) const = 0;
  // Rejects a hook that cannot apply to a sequence of `seq_len` tokens on a
  // model with `n_layers` layers.
  virtual void check_applicable(std::size_t seq_len, std::size_t n_layers) const = 0;
};

// Incremental forward pass with a per-session key/value cache. A session is
// bound to one hook for its whole life, so the cache is keyed by exactly the
// token history and the intervention that produced it. Copying a session
// forks the cache.
class InferenceSession {
 public:
  explicit InferenceSession(const Model& model, const AttentionHook* hook = nullptr);

  // Runs `ids` through the model after the cached prefix and returns logits
  // for the last `logit_rows` positions of this chunk (logit_rows <= ids.size()).
  Matrix append(std::span<const TokenId> ids, std::size_t logit_rows = 1);

  std::size_t length() const noexcept { return length_; }
  const Model& model() const noexcept { return *model_; }

 private:
  struct HeadCache {
    std::vector<float> keys;
    std::vector<float> values;
  };

  const Model* model_;
  const AttentionHook* hook_;
  std::size_t length_ = 0;
  // [layer][head]
  std::vector<std::vector<HeadCache>> cache_;
};

// Full causal LM logits (seq_len x vocab_size).
Matrix forward(const Model& model, std::span<const TokenId> ids, const AttentionHook* hook = nullptr);

// log P(label | prefix): sum over the label tokens of log softmax(logits)[token],
// each conditioned on the prefix plus the earlier label tokens.
double label_logprob(const Model& model, std::span<const TokenId> prefix, std::span<const TokenId> label,
                     const AttentionHook* hook = nullptr);

// Scores every candidate continuation of a session whose last appended
// position produced `last_logits`. The session itself is left untouched.
std::vector<double> continuation_logprobs(const InferenceSession& session, std::span<const float> last_logits,
                                          const std::vector<std::vector<TokenId>>& candidates);

// log softmax(logits)[token], accumulated in double.
double log_softmax_at(std::span<const float> logits, TokenId token);

}  // namespace wicl
