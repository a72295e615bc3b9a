#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "wicl/reweighting.hpp"

namespace wicl {

// Sorted, distinct, positive quantization levels for every weight.
class CandidateWeightSet {
 public:
  explicit CandidateWeightSet(std::vector<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  bool contains(double v) const;

 private:
  std::vector<double> values_;
};

// Defaults per reweighting mode: skm {0.9, 1.0, 1.1}, saw and dual {0.8, 1.0, 1.2}.
CandidateWeightSet default_candidates(ReweightMode mode);

struct BeamConfig {
  std::size_t beam_size = 1;
  CandidateWeightSet candidates{{0.9, 1.0, 1.1}};
  // Expansions of one step may be scored on this many threads. Results do
  // not depend on it.
  std::size_t threads = 1;
};

using ScoreFn = std::function<double(const WeightVector&)>;

struct ScoredWeights {
  WeightVector weights;
  double score = 0.0;
};

struct SearchResult {
  WeightVector weights;
  double score = 0.0;
  // Every distinct vector sent to the scorer, in evaluation order.
  std::vector<ScoredWeights> trace;
  std::size_t scorer_calls = 0;
  // Expansions scored per step, memo hits included: k * min(b, reachable) * n.
  std::size_t expansions = 0;
};

// Strict ordering used for retention and the final pick: higher score first,
// then smaller sum |w_i - 1|, then lexicographically smaller weights.
bool better(const ScoredWeights& a, const ScoredWeights& b);

// Beam search over Q^k: starting from all-ones, step i tries every candidate
// at position i for each retained state and keeps the best beam_size.
SearchResult beam_search_weights(const ScoreFn& scorer, std::size_t k, const BeamConfig& config);

// Exhaustive argmax over all n^k vectors (same ordering as beam search).
SearchResult brute_force_weights(const ScoreFn& scorer, std::size_t k, const CandidateWeightSet& candidates,
                                 std::size_t cap = 10'000);

}  // namespace wicl
