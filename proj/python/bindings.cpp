#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "wicl/engine.hpp"
#include "wicl/harness.hpp"

namespace py = pybind11;
using namespace wicl;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using SpanList = std::vector<std::pair<std::size_t, std::size_t>>;

std::vector<ExampleSpan> to_spans(const SpanList& spans) {
  std::vector<ExampleSpan> out;
  for (const auto& [s, e] : spans) out.push_back({s, e});
  return out;
}

py::array_t<float> to_numpy(Matrix m) {
  py::array_t<float> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

Matrix from_numpy(const FloatArray& a) {
  if (a.ndim() != 2) throw ConfigError("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::dict search_dict(const SearchResult& r) {
  py::list trace;
  for (const auto& s : r.trace) trace.append(py::make_tuple(s.weights.values(), s.score));
  py::dict d;
  d["weights"] = r.weights.values();
  d["score"] = r.score;
  d["scorer_calls"] = r.scorer_calls;
  d["expansions"] = r.expansions;
  d["trace"] = trace;
  return d;
}

// A loaded experiment: config plus everything Workspace::load reads.
struct Experiment {
  ExperimentConfig config;
  Workspace ws;

  explicit Experiment(const std::filesystem::path& path)
      : config(ExperimentConfig::load(path)), ws(Workspace::load(config)) {}

  TaskContext context(std::uint64_t seed) const {
    return TaskContext{&ws.model, ws.tokenizer.get(), ws.tpl,
                       balanced_sample(ws.train, ws.tpl, config.shots, seed), config.scoring_options()};
  }
};

}  // namespace

PYBIND11_MODULE(_wicl, m) {
  m.doc() = "Reweighted in-context learning on a small CPU transformer";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<ModelConfig>(m, "ModelConfig")
      .def_readonly("n_layers", &ModelConfig::n_layers)
      .def_readonly("n_heads", &ModelConfig::n_heads)
      .def_readonly("d_model", &ModelConfig::d_model)
      .def_readonly("d_ff", &ModelConfig::d_ff)
      .def_readonly("vocab_size", &ModelConfig::vocab_size)
      .def_readonly("max_seq_len", &ModelConfig::max_seq_len);

  py::class_<Intervention>(m, "Intervention")
      .def(py::init<>())
      .def(py::init([](const std::string& mode, std::vector<double> weights, const SpanList& spans,
                       std::optional<std::pair<std::size_t, std::size_t>> layers) {
             std::optional<LayerRange> range;
             if (layers) range = LayerRange{layers->first, layers->second};
             return Intervention(parse_reweight_mode(mode), WeightVector(std::move(weights)), to_spans(spans), range);
           }),
           py::arg("mode"), py::arg("weights"), py::arg("spans"), py::arg("layers") = py::none())
      .def_property_readonly("mode", [](const Intervention& iv) { return std::string(to_string(iv.mode())); })
      .def_property_readonly("weights", [](const Intervention& iv) { return iv.weights().values(); });

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("manifest"))
      .def_property_readonly("config", &Model::config)
      .def("parameter_count", &Model::parameter_count)
      .def(
          "forward",
          [](const Model& model, const std::vector<TokenId>& ids, const Intervention* iv) {
            Matrix out;
            {
              py::gil_scoped_release release;
              out = forward(model, ids, iv);
            }
            return to_numpy(std::move(out));
          },
          py::arg("ids"), py::arg("intervention") = nullptr)
      .def(
          "label_logprob",
          [](const Model& model, const std::vector<TokenId>& prefix, const std::vector<TokenId>& label,
             const Intervention* iv) { return label_logprob(model, prefix, label, iv); },
          py::arg("prefix"), py::arg("label"), py::arg("intervention") = nullptr);

  py::class_<Tokenizer>(m, "Tokenizer")
      .def("encode", &Tokenizer::encode, py::arg("text"))
      .def("decode", [](const Tokenizer& t, const std::vector<TokenId>& ids) { return py::bytes(t.decode(ids)); })
      .def_property_readonly("vocab_size", &Tokenizer::vocab_size);
  m.def("load_byte_tokenizer", &load_byte_tokenizer, py::arg("vocab"));
  m.def("load_bpe_tokenizer", &load_bpe_tokenizer, py::arg("vocab"), py::arg("merges"));

  m.def(
      "apply_skm",
      [](const FloatArray& keys, const SpanList& spans, std::vector<double> weights) {
        return to_numpy(apply_skm(from_numpy(keys), to_spans(spans), WeightVector(std::move(weights))));
      },
      py::arg("keys"), py::arg("spans"), py::arg("weights"));
  m.def(
      "apply_saw",
      [](std::vector<double> row, const SpanList& spans, std::vector<double> weights) {
        const auto s = to_spans(spans);
        return apply_saw(std::span<const double>(row), s, WeightVector(std::move(weights)));
      },
      py::arg("row"), py::arg("spans"), py::arg("weights"));

  m.def(
      "beam_search",
      [](const std::function<double(const std::vector<double>&)>& scorer, std::size_t k,
         std::vector<double> candidates, std::size_t beam_size) {
        BeamConfig c{beam_size, CandidateWeightSet(std::move(candidates)), 1};
        return search_dict(beam_search_weights([&](const WeightVector& w) { return scorer(w.values()); }, k, c));
      },
      py::arg("scorer"), py::arg("k"), py::arg("candidates") = std::vector<double>{0.9, 1.0, 1.1},
      py::arg("beam_size") = 1);
  m.def(
      "brute_force",
      [](const std::function<double(const std::vector<double>&)>& scorer, std::size_t k,
         std::vector<double> candidates) {
        return search_dict(brute_force_weights([&](const WeightVector& w) { return scorer(w.values()); }, k,
                                               CandidateWeightSet(std::move(candidates))));
      },
      py::arg("scorer"), py::arg("k"), py::arg("candidates") = std::vector<double>{0.9, 1.0, 1.1});

  m.def("pearson", &pearson, py::arg("x"), py::arg("y"));

  py::class_<Experiment>(m, "Experiment")
      .def(py::init<const std::filesystem::path&>(), py::arg("config"))
      .def_property_readonly("shots", [](const Experiment& e) { return e.config.shots; })
      .def_property_readonly("seeds", [](const Experiment& e) { return e.config.seeds; })
      .def_property_readonly("model", [](const Experiment& e) -> const Model& { return e.ws.model; },
                             py::return_value_policy::reference_internal)
      .def_property_readonly("tokenizer", [](const Experiment& e) -> const Tokenizer& { return *e.ws.tokenizer; },
                             py::return_value_policy::reference_internal)
      .def(
          "msp",
          [](const Experiment& e, std::uint64_t seed, std::vector<double> weights) {
            const MspResult r = MspScorer(e.context(seed)).score(WeightVector(std::move(weights)));
            return py::make_tuple(r.score, r.per_example_logprob);
          },
          py::arg("seed"), py::arg("weights"))
      .def(
          "search",
          [](const Experiment& e, std::uint64_t seed) {
            SeedSearch s;
            {
              py::gil_scoped_release release;
              s = search_seed(e.config, e.ws, seed);
            }
            py::dict d = search_dict(s.search);
            d["msp_uniform"] = s.msp_uniform;
            return d;
          },
          py::arg("seed"))
      .def("run",
           [](const Experiment& e) {
             EvalReport r;
             {
               py::gil_scoped_release release;
               r = run_experiment(e.config, e.ws);
             }
             return report_json(r);
           })
      .def(
          "correlate",
          [](const Experiment& e, std::size_t samples, std::uint64_t seed) {
            CorrelationReport r;
            {
              py::gil_scoped_release release;
              r = correlation_report(e.config, e.ws, samples, seed);
            }
            py::list rows;
            for (const auto& s : r.samples) rows.append(py::make_tuple(s.weights, s.msp, s.accuracy));
            return py::make_tuple(rows, r.pearson_r);
          },
          py::arg("samples") = 50, py::arg("seed") = 0);
}
