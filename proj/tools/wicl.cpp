// wicl: few-shot classification with reweighted demonstrations.
//
//   wicl run --config exp.json
//   wicl search --config exp.json --seed 3
//   wicl correlate --config exp.json --samples 50
//   wicl score --config exp.json --seed 3 --weights 1,1.1,0.9,...
//   wicl predict --config exp.json --seed 3 --text "a fine film"
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wicl/harness.hpp"

namespace {

using namespace wicl;

std::vector<double> parse_weights(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("bad weight '" + item + "'");
    }
  }
  return out;
}

std::string format_weights(const std::vector<double>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + nlohmann::json(w[i]).dump();
  return s;
}

Fields parse_fields(const std::string& text, const std::vector<std::string>& extra) {
  Fields f;
  if (!text.empty()) f["text"] = text;
  for (const auto& kv : extra) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--field expects name=value, got '" + kv + "'");
    f[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weighted in-context learning experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t samples = 50;
  std::string weights_text, query_text, output_override;
  std::vector<std::string> field_args;

  auto* run = app.add_subcommand("run", "Search weights and evaluate every seed; writes the report");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--output", output_override, "report directory (overrides output_dir)");

  auto* search = app.add_subcommand("search", "Search weights for one seed and print them with their MSP");
  search->add_option("--config", config_path)->required();
  search->add_option("--seed", seed);

  auto* correlate = app.add_subcommand("correlate", "MSP vs accuracy over random weight vectors");
  correlate->add_option("--config", config_path)->required();
  correlate->add_option("--samples", samples);
  correlate->add_option("--seed", seed);
  correlate->add_option("--output", output_override);

  auto* score = app.add_subcommand("score", "One MSP evaluation");
  score->add_option("--config", config_path)->required();
  score->add_option("--seed", seed);
  score->add_option("--weights", weights_text, "comma separated, one per shot")->required();

  auto* predict = app.add_subcommand("predict", "Predict the label of one query");
  predict->add_option("--config", config_path)->required();
  predict->add_option("--seed", seed);
  predict->add_option("--text", query_text, "value of the {text} slot");
  predict->add_option("--field", field_args, "extra slot as name=value");
  predict->add_option("--weights", weights_text, "reweighting (default: none)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const ExperimentConfig config = ExperimentConfig::load(config_path);
    const Workspace ws = Workspace::load(config);

    if (*run) {
      const EvalReport report = run_experiment(config, ws);
      const auto dir = output_override.empty() ? config.output_dir : std::filesystem::path(output_override);
      write_report(report, dir);
      const Aggregates& a = report.aggregates;
      std::printf("seeds ok %zu failed %zu\n", a.seeds_ok, a.seeds_failed);
      std::printf("acc icl %.4f wicl %.4f delta %+.4f\n", a.mean_accuracy_icl, a.mean_accuracy_wicl, a.mean_delta);
      std::printf("msp uniform %.5f selected %.5f\n", a.mean_msp_uniform, a.mean_msp_selected);
      std::printf("report: %s\n", (dir / "report.json").string().c_str());
      return a.seeds_ok == 0 ? 2 : 0;
    }
    if (*search) {
      const SeedSearch s = search_seed(config, ws, seed);
      std::printf("weights %s\n", format_weights(s.search.weights.values()).c_str());
      std::printf("msp %.6f (uniform %.6f) scorer_calls %zu\n", s.search.score, s.msp_uniform,
                  s.search.scorer_calls);
      return 0;
    }
    if (*correlate) {
      const CorrelationReport c = correlation_report(config, ws, samples, seed);
      const auto dir = output_override.empty() ? config.output_dir : std::filesystem::path(output_override);
      write_correlation(c, dir);
      if (c.pearson_r)
        std::printf("pearson_r %.5f over %zu samples\n", *c.pearson_r, c.samples.size());
      else
        std::printf("pearson_r undefined (constant coordinate) over %zu samples\n", c.samples.size());
      return 0;
    }
    if (*score) {
      const DemonstrationSet demo = balanced_sample(ws.train, ws.tpl, config.shots, seed);
      const MspScorer scorer(TaskContext{&ws.model, ws.tokenizer.get(), ws.tpl, demo, config.scoring_options()});
      const MspResult r = scorer.score(WeightVector(parse_weights(weights_text)));
      for (std::size_t i = 0; i < r.per_example_logprob.size(); ++i)
        std::printf("log p_%zu %.6f\n", i + 1, r.per_example_logprob[i]);
      std::printf("msp %.6f\n", r.score);
      return 0;
    }
    if (*predict) {
      const DemonstrationSet demo = balanced_sample(ws.train, ws.tpl, config.shots, seed);
      const Prompt prompt = build_demonstration(ws.tpl, demo, *ws.tokenizer, ws.model.config().max_seq_len);
      Intervention iv;
      if (!weights_text.empty() && config.mode != ReweightMode::none)
        iv = Intervention(config.mode, WeightVector(parse_weights(weights_text)), prompt.spans, config.layers);
      const PredictionOutcome out =
          predict_label(ws.model, *ws.tokenizer, prompt, parse_fields(query_text, field_args), ws.tpl, iv);
      for (std::size_t i = 0; i < out.label_logprob.size(); ++i)
        std::printf("%s %.6f\n", ws.tpl.label_map[i].first.c_str(), out.label_logprob[i]);
      std::printf("predicted %s\n", ws.tpl.label_map[out.predicted].first.c_str());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
