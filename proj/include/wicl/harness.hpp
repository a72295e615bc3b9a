#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wicl/model.hpp"
#include "wicl/predict.hpp"
#include "wicl/prompting.hpp"
#include "wicl/scoring.hpp"
#include "wicl/search.hpp"
#include "wicl/tokenizer.hpp"

namespace wicl {

enum class ScorerKind { msp, validation };

struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::byte_level;
  std::filesystem::path vocab;
  std::filesystem::path merges;  // bpe only
};

// Experiment description. Relative paths in a config file resolve against
// the file's directory.
struct ExperimentConfig {
  std::filesystem::path base_dir;
  std::filesystem::path model;
  TokenizerSpec tokenizer;
  std::filesystem::path template_path;
  std::filesystem::path train;
  std::filesystem::path eval;
  std::size_t shots = 8;
  std::vector<std::uint64_t> seeds;  // 0..99 unless given
  ReweightMode mode = ReweightMode::skm;
  std::optional<std::vector<double>> candidates;  // per-mode default when unset
  std::size_t beam_size = 1;
  std::optional<LayerRange> layers;
  MaskStrategy mask = MaskStrategy::label_only;
  LabelNormalization normalization = LabelNormalization::candidates;
  std::size_t eval_cap = 2000;
  std::uint64_t eval_seed = 0;
  ScorerKind scorer = ScorerKind::msp;
  std::filesystem::path validation;  // validation scorer only
  std::size_t threads = 1;
  std::filesystem::path output_dir;
  // Also report each demonstration example's accuracy as a 1-shot prompt.
  bool one_shot_analysis = false;
  // When > 0, run_experiment appends a correlation block for seeds[0].
  std::size_t correlation_samples = 0;

  static ExperimentConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;

  CandidateWeightSet candidate_set() const;
  ScoringOptions scoring_options() const;
};

// Loaded artifacts shared by every seed of an experiment.
struct Workspace {
  Model model;
  std::unique_ptr<Tokenizer> tokenizer;
  Template tpl;
  Dataset train;
  Dataset eval;  // already capped
  Dataset validation;

  static Workspace load(const ExperimentConfig& config);
};

// At most `cap` items, drawn without replacement by a seeded shuffle and
// kept in their original order.
Dataset cap_dataset(const Dataset& data, std::size_t cap, std::uint64_t seed);

double evaluate(const Model& model, const Tokenizer& tokenizer, const Template& tpl, const Prompt& demonstration,
                const Intervention& intervention, const Dataset& eval_set);

nlohmann::json intervention_to_json(const Intervention& intervention);
Intervention intervention_from_json(const nlohmann::json& doc);

struct SeedSearch {
  DemonstrationSet demonstration;
  Prompt prompt;
  SearchResult search;
  double msp_uniform = 0.0;
};

// balanced_sample -> build_demonstration -> beam search for one seed.
SeedSearch search_seed(const ExperimentConfig& config, const Workspace& ws, std::uint64_t seed);

struct SeedRow {
  std::uint64_t seed = 0;
  std::optional<std::string> error;
  std::vector<double> weights;
  double msp_selected = 0.0;
  double msp_uniform = 0.0;
  double accuracy_icl = 0.0;
  double accuracy_wicl = 0.0;
  std::size_t scorer_calls = 0;
  std::vector<double> one_shot_accuracy;

  bool ok() const { return !error.has_value(); }
};

struct Aggregates {
  std::size_t seeds_ok = 0;
  std::size_t seeds_failed = 0;
  double mean_msp_uniform = 0.0;
  double mean_msp_selected = 0.0;
  double mean_accuracy_icl = 0.0;
  double mean_accuracy_wicl = 0.0;
  double mean_delta = 0.0;  // wicl - icl
  std::vector<double> position_mean_weight;
};

struct CorrelationSample {
  std::vector<double> weights;
  double msp = 0.0;
  double accuracy = 0.0;
};

struct CorrelationReport {
  std::uint64_t seed = 0;
  std::vector<CorrelationSample> samples;
  std::optional<double> pearson_r;  // unset when either coordinate is constant
};

struct EvalReport {
  nlohmann::json config;
  std::vector<SeedRow> rows;
  Aggregates aggregates;
  std::optional<CorrelationReport> correlation;
};

SeedRow run_seed(const ExperimentConfig& config, const Workspace& ws, std::uint64_t seed);
Aggregates aggregate(const std::vector<SeedRow>& rows, std::size_t k);
EvalReport run_experiment(const ExperimentConfig& config, const Workspace& ws);
EvalReport run_experiment(const ExperimentConfig& config);

// Pearson product-moment correlation; nullopt on fewer than two points or a
// zero-variance coordinate.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

// Draws n_samples vectors uniformly from Q^k for the demonstration of `seed`
// and pairs each vector's MSP with its eval accuracy.
CorrelationReport correlation_report(const ExperimentConfig& config, const Workspace& ws, std::size_t n_samples,
                                     std::uint64_t seed);

// Report writers. Output depends only on the report contents.
std::string report_json(const EvalReport& report);
std::string rows_csv(const std::vector<SeedRow>& rows);
std::string position_weights_csv(const Aggregates& aggregates);
std::string correlation_csv(const CorrelationReport& correlation);
// Writes report.json, rows.csv, position_weights.csv and, when present,
// correlation.csv into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);
void write_correlation(const CorrelationReport& correlation, const std::filesystem::path& dir);

}  // namespace wicl
