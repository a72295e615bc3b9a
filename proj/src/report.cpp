#include <fstream>
#include <sstream>

#include "wicl/harness.hpp"

namespace wicl {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Shortest round-trip form, identical to the JSON report.
std::string num(double v) { return nlohmann::json(v).dump(); }

std::string join(const std::vector<double>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += num(v[i]);
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

ojson row_json(const SeedRow& r) {
  ojson j;
  j["seed"] = r.seed;
  if (!r.ok()) {
    j["error"] = *r.error;
    return j;
  }
  j["weights"] = r.weights;
  j["msp_uniform"] = r.msp_uniform;
  j["msp_selected"] = r.msp_selected;
  j["accuracy_icl"] = r.accuracy_icl;
  j["accuracy_wicl"] = r.accuracy_wicl;
  j["scorer_calls"] = r.scorer_calls;
  if (!r.one_shot_accuracy.empty()) j["one_shot_accuracy"] = r.one_shot_accuracy;
  return j;
}

ojson correlation_json(const CorrelationReport& c) {
  ojson j;
  j["seed"] = c.seed;
  j["pearson_r"] = c.pearson_r ? ojson(*c.pearson_r) : ojson(nullptr);
  ojson samples = ojson::array();
  for (const auto& s : c.samples) samples.push_back({{"weights", s.weights}, {"msp", s.msp}, {"accuracy", s.accuracy}});
  j["samples"] = samples;
  return j;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace

std::string report_json(const EvalReport& report) {
  ojson j;
  j["config"] = ojson::parse(report.config.dump());
  ojson rows = ojson::array();
  for (const auto& r : report.rows) rows.push_back(row_json(r));
  j["rows"] = rows;
  const Aggregates& a = report.aggregates;
  j["aggregates"] = {{"seeds_ok", a.seeds_ok},
                     {"seeds_failed", a.seeds_failed},
                     {"mean_msp_uniform", a.mean_msp_uniform},
                     {"mean_msp_selected", a.mean_msp_selected},
                     {"mean_accuracy_icl", a.mean_accuracy_icl},
                     {"mean_accuracy_wicl", a.mean_accuracy_wicl},
                     {"mean_delta", a.mean_delta},
                     {"position_mean_weight", a.position_mean_weight}};
  if (report.correlation) j["correlation"] = correlation_json(*report.correlation);
  return j.dump(2) + "\n";
}

std::string rows_csv(const std::vector<SeedRow>& rows) {
  std::ostringstream out;
  out << "seed,status,msp_uniform,msp_selected,accuracy_icl,accuracy_wicl,delta,scorer_calls,weights,one_shot_accuracy,"
         "error\n";
  for (const auto& r : rows) {
    out << r.seed << ',';
    if (!r.ok()) {
      out << "error,,,,,,,,," << csv_field(*r.error) << '\n';
      continue;
    }
    out << "ok," << num(r.msp_uniform) << ',' << num(r.msp_selected) << ',' << num(r.accuracy_icl) << ','
        << num(r.accuracy_wicl) << ',' << num(r.accuracy_wicl - r.accuracy_icl) << ',' << r.scorer_calls << ','
        << join(r.weights, ';') << ',' << join(r.one_shot_accuracy, ';') << ",\n";
  }
  return out.str();
}

std::string position_weights_csv(const Aggregates& a) {
  std::ostringstream out;
  out << "position,mean_weight\n";
  for (std::size_t i = 0; i < a.position_mean_weight.size(); ++i)
    out << i + 1 << ',' << num(a.position_mean_weight[i]) << '\n';
  return out.str();
}

std::string correlation_csv(const CorrelationReport& c) {
  std::ostringstream out;
  out << "sample,msp,accuracy,weights\n";
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    out << i << ',' << num(c.samples[i].msp) << ',' << num(c.samples[i].accuracy) << ','
        << join(c.samples[i].weights, ';') << '\n';
  return out.str();
}

void write_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "report.json", report_json(report));
  write_file(dir / "rows.csv", rows_csv(report.rows));
  write_file(dir / "position_weights.csv", position_weights_csv(report.aggregates));
  if (report.correlation) write_correlation(*report.correlation, dir);
}

void write_correlation(const CorrelationReport& correlation, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "correlation.csv", correlation_csv(correlation));
}

}  // namespace wicl
