#include "wicl/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace wicl {

namespace {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t read_count(const nlohmann::json& cfg, const char* key) {
  if (!cfg.contains(key)) throw ConfigError(std::string("manifest config: missing field '") + key + "'");
  const auto& v = cfg.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1)
    throw ConfigError(std::string("manifest config: '") + key + "' must be an integer >= 1");
  return v.get<std::size_t>();
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1 || max_seq_len < 1)
    throw ConfigError("model config: all counts must be >= 1");
  if (d_model % n_heads != 0)
    throw ConfigError("model config: d_model (" + std::to_string(d_model) + ") not divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  if (!(layernorm_eps > 0.0f) || !std::isfinite(layernorm_eps))
    throw ConfigError("model config: layernorm_eps must be a small positive real");
}

std::size_t Tensor::numel() const { return product(shape); }

std::vector<std::pair<std::string, std::vector<std::size_t>>> required_tensors(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  out.push_back({"wte", {c.vocab_size, c.d_model}});
  out.push_back({"wpe", {c.max_seq_len, c.d_model}});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "h." + std::to_string(l) + ".";
    out.push_back({p + "ln_1.weight", {c.d_model}});
    out.push_back({p + "ln_1.bias", {c.d_model}});
    for (const char* n : {"q", "k", "v", "proj"}) {
      out.push_back({p + "attn." + n + ".weight", {c.d_model, c.d_model}});
      out.push_back({p + "attn." + n + ".bias", {c.d_model}});
    }
    out.push_back({p + "ln_2.weight", {c.d_model}});
    out.push_back({p + "ln_2.bias", {c.d_model}});
    out.push_back({p + "mlp.fc.weight", {c.d_ff, c.d_model}});
    out.push_back({p + "mlp.fc.bias", {c.d_ff}});
    out.push_back({p + "mlp.proj.weight", {c.d_model, c.d_ff}});
    out.push_back({p + "mlp.proj.bias", {c.d_model}});
  }
  out.push_back({"ln_f.weight", {c.d_model}});
  out.push_back({"ln_f.bias", {c.d_model}});
  out.push_back({"lm_head.weight", {c.vocab_size, c.d_model}});
  return out;
}

Model Model::load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError("cannot open manifest: " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + manifest_path.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.contains("config") || !doc.contains("tensors"))
    throw ConfigError("manifest " + manifest_path.string() + ": needs 'config' and 'tensors'");
  if (doc.value("format_version", 1) != 1)
    throw ConfigError("manifest: unsupported format_version " + doc.at("format_version").dump());

  const auto& cj = doc.at("config");
  ModelConfig config;
  config.n_layers = read_count(cj, "n_layers");
  config.n_heads = read_count(cj, "n_heads");
  config.d_model = read_count(cj, "d_model");
  config.d_ff = read_count(cj, "d_ff");
  config.vocab_size = read_count(cj, "vocab_size");
  config.max_seq_len = read_count(cj, "max_seq_len");
  config.layernorm_eps = cj.value("layernorm_eps", 1e-5f);
  config.validate();

  std::map<std::string, nlohmann::json, std::less<>> entries;
  for (const auto& t : doc.at("tensors")) {
    if (!t.contains("name")) throw ConfigError("manifest: tensor entry without a name");
    entries[t.at("name").get<std::string>()] = t;
  }

  const auto base = manifest_path.parent_path();
  std::vector<Tensor> tensors;
  for (const auto& [name, shape] : required_tensors(config)) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ConfigError("tensor '" + name + "': missing from manifest");
    const auto& e = it->second;
    const std::string dtype = e.value("dtype", "f32");
    if (dtype != "f32") throw ConfigError("tensor '" + name + "': unsupported dtype '" + dtype + "'");
    Tensor t;
    t.name = name;
    t.shape = e.at("shape").get<std::vector<std::size_t>>();
    if (t.shape != shape)
      throw ConfigError("tensor '" + name + "': shape mismatch, manifest declares " + shape_str(t.shape) +
                        ", config requires " + shape_str(shape));
    const auto file = base / e.at("file").get<std::string>();
    const auto offset = e.value("byte_offset", std::uint64_t{0});
    std::ifstream bin(file, std::ios::binary);
    if (!bin) throw ConfigError("tensor '" + name + "': cannot open data file " + file.string());
    t.data.resize(t.numel());
    const auto nbytes = static_cast<std::streamsize>(t.data.size() * sizeof(float));
    bin.seekg(static_cast<std::streamoff>(offset));
    bin.read(reinterpret_cast<char*>(t.data.data()), nbytes);
    if (!bin || bin.gcount() != nbytes)
      throw ConfigError("tensor '" + name + "': data file " + file.string() + " too short (need " +
                        std::to_string(nbytes) + " bytes at offset " + std::to_string(offset) + ")");
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& v : t.data) {
        auto u = std::bit_cast<std::uint32_t>(v);
        u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
        v = std::bit_cast<float>(u);
      }
    }
    tensors.push_back(std::move(t));
  }
  return from_tensors(config, std::move(tensors));
}

Model Model::from_tensors(ModelConfig config, std::vector<Tensor> tensors) {
  config.validate();
  Model m;
  m.config_ = config;
  for (auto& t : tensors) {
    if (t.data.size() != t.numel())
      throw ConfigError("tensor '" + t.name + "': holds " + std::to_string(t.data.size()) +
                        " values for shape " + shape_str(t.shape));
    for (float v : t.data)
      if (!std::isfinite(v)) throw ConfigError("tensor '" + t.name + "': non-finite value");
    std::string name = t.name;
    m.tensors_[name] = std::move(t);
  }
  for (const auto& [name, shape] : required_tensors(config)) {
    auto it = m.tensors_.find(name);
    if (it == m.tensors_.end()) throw ConfigError("tensor '" + name + "': missing");
    if (it->second.shape != shape)
      throw ConfigError("tensor '" + name + "': shape mismatch, got " + shape_str(it->second.shape) +
                        ", expected " + shape_str(shape));
  }
  m.bind();
  return m;
}

void Model::bind() {
  auto p = [this](const std::string& n) { return tensors_.at(n).data.data(); };
  wte_ = p("wte");
  wpe_ = p("wpe");
  lnf_w_ = p("ln_f.weight");
  lnf_b_ = p("ln_f.bias");
  lm_head_ = p("lm_head.weight");
  layers_.clear();
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string h = "h." + std::to_string(l) + ".";
    layers_.push_back(Layer{
        p(h + "ln_1.weight"), p(h + "ln_1.bias"), p(h + "attn.q.weight"), p(h + "attn.q.bias"),
        p(h + "attn.k.weight"), p(h + "attn.k.bias"), p(h + "attn.v.weight"), p(h + "attn.v.bias"),
        p(h + "attn.proj.weight"), p(h + "attn.proj.bias"), p(h + "ln_2.weight"), p(h + "ln_2.bias"),
        p(h + "mlp.fc.weight"), p(h + "mlp.fc.bias"), p(h + "mlp.proj.weight"), p(h + "mlp.proj.bias"),
    });
  }
}

const Tensor& Model::tensor(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error("no tensor named '" + std::string(name) + "'");
  return it->second;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

}  // namespace wicl
