#include "wicl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "wicl/random.hpp"

namespace wicl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string_view to_string(ScorerKind s) { return s == ScorerKind::msp ? "msp" : "validation"; }

ScorerKind parse_scorer(std::string_view name) {
  if (name == "msp") return ScorerKind::msp;
  if (name == "validation") return ScorerKind::validation;
  throw ConfigError("unknown scorer '" + std::string(name) + "' (msp|validation)");
}

TokenizerKind parse_tokenizer_kind(std::string_view name) {
  if (name == "byte_level") return TokenizerKind::byte_level;
  if (name == "bpe") return TokenizerKind::bpe;
  throw ConfigError("unknown tokenizer kind '" + std::string(name) + "' (byte_level|bpe)");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string config_relative(const fs::path& p, const fs::path& base) {
  if (p.empty()) return {};
  const auto rel = p.lexically_relative(base);
  return rel.empty() ? p.generic_string() : rel.generic_string();
}

std::optional<LayerRange> parse_layer_range(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 2) throw ConfigError("layer_range must be [lo, hi]");
  return LayerRange{j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

const std::set<std::string> kConfigKeys = {
    "model", "tokenizer", "template", "train", "eval", "shots", "seeds", "mode", "candidates", "beam_size",
    "layer_range", "mask_strategy", "label_normalization", "eval_cap", "eval_seed", "scorer", "validation",
    "threads", "output_dir", "one_shot_analysis", "correlation_samples"};

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("experiment config must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (!kConfigKeys.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  for (const char* key : {"model", "tokenizer", "template", "train", "eval"})
    if (!doc.contains(key)) throw ConfigError(std::string("config is missing '") + key + "'");

  ExperimentConfig c;
  c.base_dir = base_dir;
  try {
    c.model = resolve(base_dir, doc.at("model").get<std::string>());
    const json& tok = doc.at("tokenizer");
    c.tokenizer.kind = parse_tokenizer_kind(tok.value("kind", "byte_level"));
    c.tokenizer.vocab = resolve(base_dir, tok.at("vocab").get<std::string>());
    if (tok.contains("merges")) c.tokenizer.merges = resolve(base_dir, tok.at("merges").get<std::string>());
    c.template_path = resolve(base_dir, doc.at("template").get<std::string>());
    c.train = resolve(base_dir, doc.at("train").get<std::string>());
    c.eval = resolve(base_dir, doc.at("eval").get<std::string>());
    c.shots = doc.value("shots", c.shots);
    if (doc.contains("seeds")) {
      c.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      c.seeds.resize(100);
      std::iota(c.seeds.begin(), c.seeds.end(), std::uint64_t{0});
    }
    c.mode = parse_reweight_mode(doc.value("mode", "skm"));
    if (doc.contains("candidates")) c.candidates = doc.at("candidates").get<std::vector<double>>();
    c.beam_size = doc.value("beam_size", c.beam_size);
    if (doc.contains("layer_range")) c.layers = parse_layer_range(doc.at("layer_range"));
    c.mask = parse_mask_strategy(doc.value("mask_strategy", "label_only"));
    c.normalization = parse_label_normalization(doc.value("label_normalization", "candidates"));
    c.eval_cap = doc.value("eval_cap", c.eval_cap);
    c.eval_seed = doc.value("eval_seed", c.eval_seed);
    c.scorer = parse_scorer(doc.value("scorer", "msp"));
    if (doc.contains("validation")) c.validation = resolve(base_dir, doc.at("validation").get<std::string>());
    c.threads = doc.value("threads", c.threads);
    c.output_dir = resolve(base_dir, doc.value("output_dir", "out"));
    c.one_shot_analysis = doc.value("one_shot_analysis", false);
    c.correlation_samples = doc.value("correlation_samples", c.correlation_samples);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(doc, fs::absolute(path).parent_path());
}

json ExperimentConfig::to_json() const {
  json j = json::object();
  j["model"] = config_relative(model, base_dir);
  j["tokenizer"] = {{"kind", tokenizer.kind == TokenizerKind::bpe ? "bpe" : "byte_level"},
                    {"vocab", config_relative(tokenizer.vocab, base_dir)}};
  if (!tokenizer.merges.empty()) j["tokenizer"]["merges"] = config_relative(tokenizer.merges, base_dir);
  j["template"] = config_relative(template_path, base_dir);
  j["train"] = config_relative(train, base_dir);
  j["eval"] = config_relative(eval, base_dir);
  j["shots"] = shots;
  j["seeds"] = seeds;
  j["mode"] = wicl::to_string(mode);
  j["candidates"] = candidate_set().values();
  j["beam_size"] = beam_size;
  if (layers) j["layer_range"] = {layers->lo, layers->hi};
  j["mask_strategy"] = wicl::to_string(mask);
  j["label_normalization"] = wicl::to_string(normalization);
  j["eval_cap"] = eval_cap;
  j["eval_seed"] = eval_seed;
  j["scorer"] = to_string(scorer);
  if (!validation.empty()) j["validation"] = config_relative(validation, base_dir);
  j["threads"] = threads;
  j["output_dir"] = config_relative(output_dir, base_dir);
  j["one_shot_analysis"] = one_shot_analysis;
  j["correlation_samples"] = correlation_samples;
  return j;
}

void ExperimentConfig::validate() const {
  if (shots < 1) throw ConfigError("shots must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (eval_cap < 1) throw ConfigError("eval_cap must be >= 1");
  if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (layers && layers->lo >= layers->hi) throw ConfigError("layer_range must satisfy lo < hi");
  if (tokenizer.kind == TokenizerKind::bpe && tokenizer.merges.empty())
    throw ConfigError("bpe tokenizer needs a merges file");
  if (scorer == ScorerKind::validation && validation.empty())
    throw ConfigError("validation scorer needs a 'validation' dataset");
  if (correlation_samples != 0 && correlation_samples < 3) throw ConfigError("correlation_samples must be >= 3");
  (void)candidate_set();
}

CandidateWeightSet ExperimentConfig::candidate_set() const {
  return candidates ? CandidateWeightSet(*candidates) : default_candidates(mode);
}

ScoringOptions ExperimentConfig::scoring_options() const {
  ScoringOptions o;
  o.mode = mode;
  o.mask = mask;
  o.layers = layers;
  o.normalization = normalization;
  return o;
}

Workspace Workspace::load(const ExperimentConfig& config) {
  auto tokenizer = config.tokenizer.kind == TokenizerKind::bpe
                       ? load_bpe_tokenizer(config.tokenizer.vocab, config.tokenizer.merges)
                       : load_byte_tokenizer(config.tokenizer.vocab);
  Model model = Model::load(config.model);
  if (tokenizer->vocab_size() > model.config().vocab_size)
    throw ConfigError("tokenizer has " + std::to_string(tokenizer->vocab_size()) + " ids but the model vocabulary is " +
                      std::to_string(model.config().vocab_size));
  if (config.layers && config.layers->hi > model.config().n_layers)
    throw ConfigError("layer_range exceeds the model's " + std::to_string(model.config().n_layers) + " layers");
  Template tpl = Template::load(config.template_path);
  Dataset train = load_dataset(config.train, tpl);
  Dataset eval = cap_dataset(load_dataset(config.eval, tpl), config.eval_cap, config.eval_seed);
  Dataset validation;
  if (!config.validation.empty()) validation = load_dataset(config.validation, tpl);
  return Workspace{std::move(model), std::move(tokenizer), std::move(tpl),
                   std::move(train), std::move(eval),      std::move(validation)};
}

Dataset cap_dataset(const Dataset& data, std::size_t cap, std::uint64_t seed) {
  if (data.size() <= cap) return data;
  auto order = seeded_permutation(data.size(), seed);
  order.resize(cap);
  std::sort(order.begin(), order.end());
  Dataset out;
  out.reserve(cap);
  for (std::size_t i : order) out.push_back(data[i]);
  return out;
}

double evaluate(const Model& model, const Tokenizer& tokenizer, const Template& tpl, const Prompt& demonstration,
                const Intervention& intervention, const Dataset& eval_set) {
  if (eval_set.empty()) throw Error("evaluate: empty eval set");
  const Predictor predictor(model, tokenizer, tpl, demonstration, intervention);
  std::size_t correct = 0;
  for (const auto& ex : eval_set)
    if (predictor.predict(ex.fields, tpl.label_index(ex.label)).correct()) ++correct;
  return static_cast<double>(correct) / static_cast<double>(eval_set.size());
}

json intervention_to_json(const Intervention& iv) {
  json j = {{"mode", to_string(iv.mode())}};
  if (iv.mode() == ReweightMode::none) return j;
  j["weights"] = iv.weights().values();
  json spans = json::array();
  for (const auto& s : iv.spans()) spans.push_back({s.start, s.end});
  j["spans"] = spans;
  if (iv.layers()) j["layer_range"] = {iv.layers()->lo, iv.layers()->hi};
  return j;
}

Intervention intervention_from_json(const json& doc) {
  try {
    const ReweightMode mode = parse_reweight_mode(doc.at("mode").get<std::string>());
    if (mode == ReweightMode::none) return Intervention{};
    std::vector<ExampleSpan> spans;
    for (const auto& s : doc.at("spans")) spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    std::optional<LayerRange> layers;
    if (doc.contains("layer_range")) layers = parse_layer_range(doc.at("layer_range"));
    return Intervention(mode, WeightVector(doc.at("weights").get<std::vector<double>>()), std::move(spans), layers);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("intervention: ") + e.what());
  }
}

namespace {

TaskContext task_context(const ExperimentConfig& config, const Workspace& ws, DemonstrationSet demo) {
  return TaskContext{&ws.model, ws.tokenizer.get(), ws.tpl, std::move(demo), config.scoring_options()};
}

Intervention reweighting(const ExperimentConfig& config, const Prompt& prompt, const WeightVector& w) {
  if (config.mode == ReweightMode::none) return Intervention{};
  return Intervention(config.mode, w, prompt.spans, config.layers);
}

}  // namespace

SeedSearch search_seed(const ExperimentConfig& config, const Workspace& ws, std::uint64_t seed) {
  SeedSearch out;
  out.demonstration = balanced_sample(ws.train, ws.tpl, config.shots, seed);
  out.prompt = build_demonstration(ws.tpl, out.demonstration, *ws.tokenizer, ws.model.config().max_seq_len);
  const MspScorer msp(task_context(config, ws, out.demonstration));
  const WeightVector uniform = WeightVector::uniform(config.shots);

  if (config.mode == ReweightMode::none) {
    out.msp_uniform = msp(uniform);
    out.search.weights = uniform;
    out.search.score = out.msp_uniform;
    return out;
  }

  BeamConfig beam{config.beam_size, config.candidate_set(), config.threads};
  if (config.scorer == ScorerKind::msp) {
    out.search = beam_search_weights(std::cref(msp), config.shots, beam);
    const auto hit = std::find_if(out.search.trace.begin(), out.search.trace.end(),
                                  [&](const ScoredWeights& s) { return s.weights == uniform; });
    out.msp_uniform = hit != out.search.trace.end() ? hit->score : msp(uniform);
  } else {
    const ValidationScorer val(task_context(config, ws, out.demonstration), ws.validation);
    out.search = beam_search_weights(std::cref(val), config.shots, beam);
    out.msp_uniform = msp(uniform);
  }
  return out;
}

SeedRow run_seed(const ExperimentConfig& config, const Workspace& ws, std::uint64_t seed) {
  SeedRow row;
  row.seed = seed;
  try {
    SeedSearch s = search_seed(config, ws, seed);
    row.weights = s.search.weights.values();
    row.scorer_calls = s.search.scorer_calls;
    row.msp_uniform = s.msp_uniform;
    if (config.scorer == ScorerKind::msp || config.mode == ReweightMode::none) {
      row.msp_selected = s.search.score;
    } else {
      row.msp_selected = MspScorer(task_context(config, ws, s.demonstration))(s.search.weights);
    }
    row.accuracy_icl = evaluate(ws.model, *ws.tokenizer, ws.tpl, s.prompt, Intervention{}, ws.eval);
    row.accuracy_wicl = config.mode == ReweightMode::none
                            ? row.accuracy_icl
                            : evaluate(ws.model, *ws.tokenizer, ws.tpl, s.prompt,
                                       reweighting(config, s.prompt, s.search.weights), ws.eval);
    if (config.one_shot_analysis) {
      for (const auto& ex : s.demonstration) {
        const Prompt one = build_demonstration(ws.tpl, std::span(&ex, 1), *ws.tokenizer,
                                               ws.model.config().max_seq_len);
        row.one_shot_accuracy.push_back(evaluate(ws.model, *ws.tokenizer, ws.tpl, one, Intervention{}, ws.eval));
      }
    }
  } catch (const std::exception& e) {
    SeedRow failed;
    failed.seed = seed;
    failed.error = e.what();
    return failed;
  }
  return row;
}

Aggregates aggregate(const std::vector<SeedRow>& rows, std::size_t k) {
  Aggregates a;
  a.position_mean_weight.assign(k, 0.0);
  for (const auto& r : rows) {
    if (!r.ok()) {
      ++a.seeds_failed;
      continue;
    }
    ++a.seeds_ok;
    a.mean_msp_uniform += r.msp_uniform;
    a.mean_msp_selected += r.msp_selected;
    a.mean_accuracy_icl += r.accuracy_icl;
    a.mean_accuracy_wicl += r.accuracy_wicl;
    a.mean_delta += r.accuracy_wicl - r.accuracy_icl;
    for (std::size_t i = 0; i < k && i < r.weights.size(); ++i) a.position_mean_weight[i] += r.weights[i];
  }
  if (a.seeds_ok > 0) {
    const double n = static_cast<double>(a.seeds_ok);
    a.mean_msp_uniform /= n;
    a.mean_msp_selected /= n;
    a.mean_accuracy_icl /= n;
    a.mean_accuracy_wicl /= n;
    a.mean_delta /= n;
    for (double& w : a.position_mean_weight) w /= n;
  }
  return a;
}

EvalReport run_experiment(const ExperimentConfig& config, const Workspace& ws) {
  config.validate();
  EvalReport report;
  report.config = config.to_json();
  for (std::uint64_t seed : config.seeds) report.rows.push_back(run_seed(config, ws, seed));
  report.aggregates = aggregate(report.rows, config.shots);
  if (config.correlation_samples > 0)
    report.correlation = correlation_report(config, ws, config.correlation_samples, config.seeds.front());
  return report;
}

EvalReport run_experiment(const ExperimentConfig& config) {
  const Workspace ws = Workspace::load(config);
  return run_experiment(config, ws);
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationReport correlation_report(const ExperimentConfig& config, const Workspace& ws, std::size_t n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 3) throw ConfigError("correlation needs at least 3 samples");
  CorrelationReport out;
  out.seed = seed;
  const DemonstrationSet demo = balanced_sample(ws.train, ws.tpl, config.shots, seed);
  const Prompt prompt = build_demonstration(ws.tpl, demo, *ws.tokenizer, ws.model.config().max_seq_len);
  const MspScorer msp(task_context(config, ws, demo));
  const CandidateWeightSet q = config.candidate_set();

  Rng rng(seed);
  std::vector<double> xs, ys;
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::vector<double> w(config.shots);
    for (double& v : w) v = q.values()[rng.below(q.size())];
    CorrelationSample sample;
    sample.weights = w;
    const WeightVector wv(std::move(w));
    sample.msp = msp(wv);
    sample.accuracy = evaluate(ws.model, *ws.tokenizer, ws.tpl, prompt, reweighting(config, prompt, wv), ws.eval);
    xs.push_back(sample.msp);
    ys.push_back(sample.accuracy);
    out.samples.push_back(std::move(sample));
  }
  out.pearson_r = pearson(xs, ys);
  return out;
}

}  // namespace wicl
