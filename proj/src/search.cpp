#include "wicl/search.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

namespace wicl {

CandidateWeightSet::CandidateWeightSet(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw ConfigError("candidate weight set is empty");
  for (double v : values_)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("candidate weights must be positive finite reals");
  std::sort(values_.begin(), values_.end());
  if (std::adjacent_find(values_.begin(), values_.end()) != values_.end())
    throw ConfigError("candidate weights must be distinct");
}

bool CandidateWeightSet::contains(double v) const {
  return std::binary_search(values_.begin(), values_.end(), v);
}

CandidateWeightSet default_candidates(ReweightMode mode) {
  if (mode == ReweightMode::saw || mode == ReweightMode::dual) return CandidateWeightSet({0.8, 1.0, 1.2});
  return CandidateWeightSet({0.9, 1.0, 1.1});
}

namespace {

double distance_from_uniform(const WeightVector& w) {
  double d = 0.0;
  for (double v : w.values()) d += std::abs(v - 1.0);
  return d;
}

// Scores vectors not yet in `memo`, in order, optionally on several threads.
class MemoScorer {
 public:
  MemoScorer(const ScoreFn& fn, std::size_t threads, SearchResult& result)
      : fn_(fn), threads_(std::max<std::size_t>(threads, 1)), result_(result) {}

  std::vector<ScoredWeights> score_all(const std::vector<WeightVector>& batch) {
    std::vector<const WeightVector*> todo;
    for (const auto& w : batch)
      if (!memo_.contains(w) && std::find_if(todo.begin(), todo.end(), [&](auto* p) { return *p == w; }) == todo.end())
        todo.push_back(&w);

    std::vector<double> scores(todo.size());
    if (threads_ == 1 || todo.size() < 2) {
      for (std::size_t i = 0; i < todo.size(); ++i) scores[i] = fn_(*todo[i]);
    } else {
      std::vector<std::exception_ptr> errors(threads_);
      std::vector<std::thread> pool;
      const std::size_t workers = std::min(threads_, todo.size());
      for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < todo.size(); i += workers) scores[i] = fn_(*todo[i]);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
      memo_.emplace(*todo[i], scores[i]);
      result_.trace.push_back({*todo[i], scores[i]});
      ++result_.scorer_calls;
    }

    std::vector<ScoredWeights> out;
    out.reserve(batch.size());
    for (const auto& w : batch) out.push_back({w, memo_.at(w)});
    return out;
  }

 private:
  const ScoreFn& fn_;
  std::size_t threads_;
  SearchResult& result_;
  std::map<WeightVector, double> memo_;
};

}  // namespace

bool better(const ScoredWeights& a, const ScoredWeights& b) {
  if (a.score != b.score) return a.score > b.score;
  const double da = distance_from_uniform(a.weights);
  const double db = distance_from_uniform(b.weights);
  if (da != db) return da < db;
  return a.weights.values() < b.weights.values();
}

SearchResult beam_search_weights(const ScoreFn& scorer, std::size_t k, const BeamConfig& config) {
  if (k == 0) throw ConfigError("beam search: k must be >= 1");
  if (config.beam_size == 0) throw ConfigError("beam search: beam size must be >= 1");

  SearchResult result;
  MemoScorer memo(scorer, config.threads, result);
  std::vector<WeightVector> beam{WeightVector::uniform(k)};
  std::vector<ScoredWeights> retained;

  for (std::size_t step = 0; step < k; ++step) {
    std::vector<WeightVector> expansions;
    expansions.reserve(beam.size() * config.candidates.size());
    for (const auto& state : beam) {
      for (double q : config.candidates.values()) {
        std::vector<double> w = state.values();
        w[step] = q;
        expansions.emplace_back(std::move(w));
      }
    }
    result.expansions += expansions.size();
    retained = memo.score_all(expansions);
    std::stable_sort(retained.begin(), retained.end(), better);
    if (retained.size() > config.beam_size) retained.resize(config.beam_size);
    beam.clear();
    for (const auto& s : retained) beam.push_back(s.weights);
  }
  result.weights = retained.front().weights;
  result.score = retained.front().score;
  return result;
}

SearchResult brute_force_weights(const ScoreFn& scorer, std::size_t k, const CandidateWeightSet& candidates,
                                 std::size_t cap) {
  if (k == 0) throw ConfigError("brute force: k must be >= 1");
  const std::size_t n = candidates.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < k; ++i) {
    if (total > cap / n) throw ConfigError("brute force: n^k exceeds the cap of " + std::to_string(cap));
    total *= n;
  }
  if (total > cap) throw ConfigError("brute force: n^k exceeds the cap of " + std::to_string(cap));

  SearchResult result;
  std::vector<std::size_t> digit(k, 0);
  bool have_best = false;
  ScoredWeights best;
  for (std::size_t c = 0; c < total; ++c) {
    std::vector<double> w(k);
    for (std::size_t i = 0; i < k; ++i) w[i] = candidates.values()[digit[i]];
    ScoredWeights s{WeightVector(std::move(w)), 0.0};
    s.score = scorer(s.weights);
    ++result.scorer_calls;
    ++result.expansions;
    result.trace.push_back(s);
    if (!have_best || better(s, best)) {
      best = s;
      have_best = true;
    }
    for (std::size_t i = k; i-- > 0;) {
      if (++digit[i] < n) break;
      digit[i] = 0;
    }
  }
  result.weights = best.weights;
  result.score = best.score;
  return result;
}

}  // namespace wicl
