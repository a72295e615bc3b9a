// Acceptance checks. One PASS/FAIL line per criterion; exit status is 1 if any
// criterion fails, unless every failing criterion was listed with
// --known-deviation.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "wicl/engine.hpp"
#include "wicl/harness.hpp"

using namespace wicl;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = WICL_SOURCE_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) detail = pass ? what : detail + "; " + what;
    pass = pass && ok;
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig toy_config(nlohmann::json overrides = nlohmann::json::object()) {
  auto doc = nlohmann::json::parse(slurp(kSource / "data/configs/toy_skm.json"));
  doc.update(overrides);
  return ExperimentConfig::from_json(doc, kSource / "data/configs");
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

Outcome identity(const Workspace& ws) {
  Outcome o;
  double worst_saw = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto demo = balanced_sample(ws.train, ws.tpl, 8, 1000 + seed);
    Prompt p = build_demonstration(ws.tpl, demo, *ws.tokenizer, ws.model.config().max_seq_len);
    const auto q = encode_query(ws.tpl, ws.eval[seed].fields, *ws.tokenizer);
    p.ids.insert(p.ids.end(), q.begin(), q.end());
    const Matrix base = forward(ws.model, p.ids);
    const Intervention skm(ReweightMode::skm, WeightVector::uniform(8), p.spans);
    const Intervention saw(ReweightMode::saw, WeightVector::uniform(8), p.spans);
    o.require(forward(ws.model, p.ids, &skm).data == base.data, "SKM logits not bit-exact");
    worst_saw = std::max(worst_saw, max_abs_diff(forward(ws.model, p.ids, &saw).data, base.data));
  }
  o.require(worst_saw <= 1e-6, "SAW max|diff| " + fmt(worst_saw));

  const auto demo = balanced_sample(ws.train, ws.tpl, 8, 0);
  const Prompt prompt = build_demonstration(ws.tpl, demo, *ws.tokenizer, ws.model.config().max_seq_len);
  const Predictor plain(ws.model, *ws.tokenizer, ws.tpl, prompt, Intervention{});
  const Predictor skm(ws.model, *ws.tokenizer, ws.tpl, prompt,
                      Intervention(ReweightMode::skm, WeightVector::uniform(8), prompt.spans));
  const Predictor saw(ws.model, *ws.tokenizer, ws.tpl, prompt,
                      Intervention(ReweightMode::saw, WeightVector::uniform(8), prompt.spans));
  std::size_t same = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto expected = plain.predict(ws.eval[i].fields).predicted;
    same += skm.predict(ws.eval[i].fields).predicted == expected && saw.predict(ws.eval[i].fields).predicted == expected;
  }
  o.require(same == 50, "labels differ on " + std::to_string(50 - same) + " of 50 queries");
  if (o.pass) o.detail = "SKM bit-exact, SAW max|diff| " + fmt(worst_saw) + ", 50/50 labels identical";
  return o;
}

Outcome saw_normalization() {
  Outcome o;
  std::mt19937 gen(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  bool nonnegative = true;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t len = 2 + gen() % 40;
    std::vector<float> row(len);
    double s = 0.0;
    for (auto& v : row) s += v = static_cast<float>(unit(gen) + 1e-3);
    for (auto& v : row) v = static_cast<float>(v / s);
    std::vector<ExampleSpan> spans;
    std::vector<double> w;
    for (std::size_t at = gen() % 3; at < len;) {
      const std::size_t end = std::min(len, at + 1 + gen() % 6);
      spans.push_back({at, end});
      w.push_back(0.5 + unit(gen));
      at = end + gen() % 2;
    }
    if (spans.empty()) {
      spans.push_back({0, 1});
      w.push_back(1.2);
    }
    const auto out = apply_saw(row, spans, WeightVector(w));
    double sum = 0.0;
    for (float v : out) {
      sum += v;
      nonnegative = nonnegative && v >= 0.0f;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  o.require(worst <= 1e-6, "row sum off by " + fmt(worst));
  o.require(nonnegative, "negative entry");
  const std::vector<double> row = {0.6, 0.4};
  const std::vector<ExampleSpan> spans = {{0, 1}, {1, 2}};
  const auto hand = apply_saw(std::span<const double>(row), spans, WeightVector({1.2, 0.8}));
  o.require(std::abs(hand[0] - 0.69231) <= 1e-5 && std::abs(hand[1] - 0.30769) <= 1e-5,
            "hand case gave [" + fmt(hand[0]) + ", " + fmt(hand[1]) + "]");
  if (o.pass) o.detail = "1000 rows, worst |sum-1| " + fmt(worst) + "; hand case [0.69231, 0.30769]";
  return o;
}

Outcome search_vs_oracle(const ExperimentConfig& config, const Workspace& ws) {
  Outcome o;
  const CandidateWeightSet q({0.9, 1.0, 1.1});
  std::string details;
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto demo = balanced_sample(ws.train, ws.tpl, k, 7);
    const MspScorer msp(TaskContext{&ws.model, ws.tokenizer.get(), ws.tpl, demo, config.scoring_options()});
    const auto exhaustive = brute_force_weights(std::cref(msp), k, q);
    BeamConfig beam{27, q, 1};
    const auto r = beam_search_weights(std::cref(msp), k, beam);
    o.require(r.weights == exhaustive.weights && r.score == exhaustive.score,
              "k=" + std::to_string(k) + " beam differs from brute force");
    o.require(r.scorer_calls <= k * 27 * 3, "k=" + std::to_string(k) + " too many scorer calls");
    details += " k=" + std::to_string(k) + ":" + std::to_string(r.scorer_calls) + "/" + std::to_string(k * 27 * 3);
  }
  if (o.pass) o.detail = "beam == brute force for k=1..3; calls" + details;
  return o;
}

Outcome greedy_lower_bound(const ExperimentConfig& config, const Workspace& ws) {
  Outcome o;
  double worst_gap = INFINITY;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SeedSearch s = search_seed(config, ws, seed);
    const double gap = s.search.score - s.msp_uniform;
    worst_gap = std::min(worst_gap, gap);
    o.require(gap >= 0.0, "seed " + std::to_string(seed) + " selected < uniform");
  }
  if (o.pass) o.detail = "20 seeds, min(selected - uniform) = " + fmt(worst_gap);
  return o;
}

Outcome masked_label_invariance(const ExperimentConfig& config, const Workspace& ws) {
  Outcome o;
  std::size_t checked = 0;
  for (auto mask : {MaskStrategy::label_only, MaskStrategy::whole_example_mask}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      ScoringOptions opts = config.scoring_options();
      opts.mask = mask;
      TaskContext ctx{&ws.model, ws.tokenizer.get(), ws.tpl, balanced_sample(ws.train, ws.tpl, 8, seed), opts};
      const WeightVector w({1.1, 0.9, 1.0, 1.1, 0.9, 1.0, 1.1, 0.9});
      const MspScorer base(ctx);
      for (std::size_t i = 0; i < 8; ++i) {
        const std::size_t gold = ws.tpl.label_index(ctx.demonstration[i].label);
        for (std::size_t l = 0; l < ws.tpl.label_count(); ++l) {
          if (l == gold) continue;
          TaskContext swapped = ctx;
          swapped.demonstration[i].label = ws.tpl.label_map[l].first;
          const auto a = base.label_distribution(i, w);
          const auto b = MspScorer(swapped).label_distribution(i, w);
          o.require(a == b, "distribution changed at i=" + std::to_string(i) + " mask " + std::string(to_string(mask)));
          // p_i is the gold entry of that distribution
          o.require(base.score(w).per_example_logprob[i] == a[gold], "p_i is not the gold entry");
          ++checked;
        }
      }
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " substitutions, label distributions bit-identical";
  return o;
}

Outcome correlation(const ExperimentConfig& config, const Workspace& ws) {
  Outcome o;
  const auto r = pearson({-1.0, -0.9, -0.8, -0.7, -0.6}, {0.4, 0.5, 0.45, 0.6, 0.62});
  const double expected = 0.92967;
  o.require(r && std::abs(*r - expected) <= 1e-4,
            "fixture r = " + (r ? fmt(*r) : std::string("undefined")) + ", expected " + fmt(expected) +
                " (standard formula on the listed points gives 0.90100)");
  const auto toy = correlation_report(config, ws, 50, 0);
  o.require(toy.pearson_r && *toy.pearson_r > 0.0,
            "toy r (50 samples) = " + (toy.pearson_r ? fmt(*toy.pearson_r) : std::string("undefined")) + " not > 0");
  if (o.pass) o.detail = "fixture r = " + fmt(*r) + "; toy r (50 samples) = " + fmt(*toy.pearson_r);
  return o;
}

Outcome end_to_end(const ExperimentConfig& config, const Workspace& ws) {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "wicl_acceptance";
  fs::remove_all(root);
  std::vector<EvalReport> reports;
  for (const char* run : {"a", "b"}) {
    reports.push_back(run_experiment(config, ws));
    write_report(reports.back(), root / run);
  }
  for (const char* file : {"report.json", "rows.csv", "position_weights.csv"}) {
    const std::string a = slurp(root / "a" / file);
    o.require(!a.empty() && a == slurp(root / "b" / file), std::string(file) + " differs between runs");
  }
  // recompute aggregates from the written rows
  const auto doc = nlohmann::json::parse(slurp(root / "a" / "report.json"));
  double icl = 0, wicl = 0, uni = 0, sel = 0;
  std::size_t n = 0;
  std::vector<double> pos(config.shots, 0.0);
  for (const auto& row : doc["rows"]) {
    if (row.contains("error")) continue;
    ++n;
    icl += row["accuracy_icl"].get<double>();
    wicl += row["accuracy_wicl"].get<double>();
    uni += row["msp_uniform"].get<double>();
    sel += row["msp_selected"].get<double>();
    for (std::size_t i = 0; i < config.shots; ++i) pos[i] += row["weights"][i].get<double>();
  }
  o.require(n == config.seeds.size(), std::to_string(config.seeds.size() - n) + " seeds failed");
  const auto& agg = doc["aggregates"];
  const auto near = [](double a, double b) { return std::abs(a - b) <= 1e-9; };
  const double dn = static_cast<double>(n);
  o.require(near(agg["mean_accuracy_icl"].get<double>(), icl / dn) &&
                near(agg["mean_accuracy_wicl"].get<double>(), wicl / dn) &&
                near(agg["mean_msp_uniform"].get<double>(), uni / dn) &&
                near(agg["mean_msp_selected"].get<double>(), sel / dn) &&
                near(agg["mean_delta"].get<double>(), (wicl - icl) / dn),
            "aggregates do not match rows");
  const auto& table = agg["position_mean_weight"];
  o.require(table.size() == config.shots, "position table has " + std::to_string(table.size()) + " entries");
  for (std::size_t i = 0; i < table.size() && i < pos.size(); ++i)
    o.require(near(table[i].get<double>(), pos[i] / dn), "position table does not match rows");
  fs::remove_all(root);
  if (o.pass)
    o.detail = "10 seeds, reports byte-identical; ICL " + fmt(icl / dn) + " -> WICL " + fmt(wicl / dn);
  return o;
}

Outcome runtime(const ExperimentConfig& base) {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  auto config = base;
  config.eval_cap = 100;
  config.seeds = {0};
  const Workspace ws = Workspace::load(config);
  const SeedRow row = run_seed(config, ws, 0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(row.ok(), "run failed: " + row.error.value_or(""));
  o.require(ws.eval.size() == 100, "eval set has " + std::to_string(ws.eval.size()) + " queries");
  o.require(seconds < 60.0, fmt(seconds) + " s");
  if (o.pass) o.detail = "8-shot search + 100-query eval in " + fmt(seconds) + " s";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance checks");
  std::vector<int> known;
  app.add_option("--known-deviation", known, "Criterion whose failure is documented and tolerated by the exit status");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> tolerated(known.begin(), known.end());

  const ExperimentConfig config = toy_config();
  const Workspace ws = Workspace::load(config);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"identity intervention", [&] { return identity(ws); }},
      {"SAW normalization", [] { return saw_normalization(); }},
      {"search vs brute force", [&] { return search_vs_oracle(config, ws); }},
      {"greedy lower bound", [&] { return greedy_lower_bound(config, ws); }},
      {"masked-label invariance", [&] { return masked_label_invariance(config, ws); }},
      {"correlation", [&] { return correlation(config, ws); }},
      {"end-to-end determinism", [&] { return end_to_end(config, ws); }},
      {"runtime budget", [&] { return runtime(config); }},
  };

  int status = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass && !tolerated.contains(id)) status = 1;
  }
  std::printf("SKIP 9 checkpoint parity: secondary; needs converted GPT-2 small fixtures "
              "(tiny reference-model parity runs in unit.model)\n");
  return status;
}
