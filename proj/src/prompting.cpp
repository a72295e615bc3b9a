#include "wicl/prompting.hpp"

#include <fstream>
#include <numeric>

#include "wicl/random.hpp"

namespace wicl {

namespace {

constexpr std::string_view kAnswerSlot = "{answer}";

// Substitutes every `{name}` slot. The answer slot is replaced by `answer`.
std::string fill(std::string_view pattern, const Fields& fields, std::string_view answer) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    const auto open = pattern.find('{', i);
    if (open == std::string_view::npos) {
      out.append(pattern.substr(i));
      break;
    }
    const auto close = pattern.find('}', open);
    if (close == std::string_view::npos) {
      out.append(pattern.substr(i));
      break;
    }
    out.append(pattern.substr(i, open - i));
    const auto name = pattern.substr(open + 1, close - open - 1);
    if (name == "answer") {
      out.append(answer);
    } else {
      auto it = fields.find(std::string(name));
      if (it == fields.end()) throw Error("template slot {" + std::string(name) + "} has no value in the example");
      out.append(it->second);
    }
    i = close + 1;
  }
  return out;
}

std::string example_text(const Template& tpl, const LabeledExample& ex) {
  return render_example(tpl, ex.fields, tpl.verbalizer(tpl.label_index(ex.label)));
}

Prompt assemble(const std::vector<std::pair<std::string, std::size_t>>& parts, const Tokenizer& tokenizer,
                std::size_t max_seq_len) {
  Prompt p;
  for (const auto& [text, source] : parts) {
    const auto ids = tokenizer.encode(text);
    if (ids.empty()) throw Error("example " + std::to_string(source) + " renders to zero tokens");
    p.spans.push_back({p.ids.size(), p.ids.size() + ids.size()});
    p.source_example.push_back(source);
    p.ids.insert(p.ids.end(), ids.begin(), ids.end());
    p.text += text;
  }
  if (p.ids.size() > max_seq_len)
    throw Error("demonstration needs " + std::to_string(p.ids.size()) + " tokens but max_seq_len is " +
                std::to_string(max_seq_len));
  return p;
}

}  // namespace

Template Template::from_json(const nlohmann::ordered_json& doc) {
  Template t;
  try {
    t.name = doc.value("name", "");
    t.pattern = doc.at("pattern").get<std::string>();
    const auto& lm = doc.at("label_map");
    if (lm.is_object()) {
      for (const auto& [k, v] : lm.items()) t.label_map.emplace_back(k, v.get<std::string>());
    } else if (lm.is_array()) {
      for (const auto& e : lm) t.label_map.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    } else {
      throw ConfigError("template: label_map must be an object or a list of [label, verbalizer] pairs");
    }
    t.separator = doc.value("separator", std::string("\n"));
    t.mask_string = doc.value("mask_string", std::string("N/A"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("template: ") + e.what());
  }
  t.validate();
  return t;
}

Template Template::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open template " + path.string());
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return from_json(doc);
}

void Template::validate() const {
  const auto first = pattern.find(kAnswerSlot);
  if (first == std::string::npos || pattern.find(kAnswerSlot, first + 1) != std::string::npos)
    throw ConfigError("template pattern must contain exactly one {answer} slot");
  if (label_map.empty()) throw ConfigError("template label_map is empty");
  for (std::size_t i = 0; i < label_map.size(); ++i) {
    if (label_map[i].second.empty()) throw ConfigError("template verbalizer for '" + label_map[i].first + "' is empty");
    for (std::size_t j = 0; j < i; ++j) {
      if (label_map[i].first == label_map[j].first)
        throw ConfigError("template label '" + label_map[i].first + "' listed twice");
      if (label_map[i].second == label_map[j].second)
        throw ConfigError("template verbalizer '" + label_map[i].second + "' is not distinct");
    }
  }
}

std::size_t Template::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < label_map.size(); ++i)
    if (label_map[i].first == label) return i;
  throw Error("unknown label '" + std::string(label) + "'");
}

std::string_view Template::answer_prefix_pattern() const {
  return std::string_view(pattern).substr(0, pattern.find(kAnswerSlot));
}

std::string_view to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::label_only: return "label_only";
    case MaskStrategy::whole_example_mask: return "whole_example_mask";
    case MaskStrategy::whole_example_remove: return "whole_example_remove";
  }
  return "label_only";
}

MaskStrategy parse_mask_strategy(std::string_view name) {
  if (name == "label_only") return MaskStrategy::label_only;
  if (name == "whole_example_mask") return MaskStrategy::whole_example_mask;
  if (name == "whole_example_remove") return MaskStrategy::whole_example_remove;
  throw ConfigError("unknown mask strategy '" + std::string(name) +
                    "' (label_only|whole_example_mask|whole_example_remove)");
}

std::string render_example(const Template& tpl, const Fields& fields, std::string_view label) {
  for (const auto& [key, verb] : tpl.label_map)
    if (key == label) return fill(tpl.pattern, fields, verb);
  for (const auto& [key, verb] : tpl.label_map)
    if (verb == label) return fill(tpl.pattern, fields, verb);
  throw Error("unknown label '" + std::string(label) + "'");
}

std::string render_example(const Template& tpl, const Fields& fields, Masked) {
  return fill(tpl.pattern, fields, tpl.mask_string);
}

Prompt build_demonstration(const Template& tpl, std::span<const LabeledExample> examples, const Tokenizer& tokenizer,
                           std::size_t max_seq_len) {
  if (examples.empty()) throw Error("demonstration needs at least one example");
  std::vector<std::pair<std::string, std::size_t>> parts;
  for (std::size_t i = 0; i < examples.size(); ++i) parts.emplace_back(example_text(tpl, examples[i]) + tpl.separator, i);
  return assemble(parts, tokenizer, max_seq_len);
}

Prompt mask_example(const Template& tpl, std::span<const LabeledExample> examples, const Tokenizer& tokenizer,
                    std::size_t index, MaskStrategy strategy, std::size_t max_seq_len) {
  if (index >= examples.size())
    throw Error("mask index " + std::to_string(index) + " out of range for " + std::to_string(examples.size()) +
                " examples");
  std::vector<std::pair<std::string, std::size_t>> parts;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i != index) {
      parts.emplace_back(example_text(tpl, examples[i]) + tpl.separator, i);
      continue;
    }
    switch (strategy) {
      case MaskStrategy::label_only:
        parts.emplace_back(render_example(tpl, examples[i].fields, masked) + tpl.separator, i);
        break;
      case MaskStrategy::whole_example_mask:
        parts.emplace_back(tpl.mask_string + tpl.separator, i);
        break;
      case MaskStrategy::whole_example_remove:
        break;
    }
  }
  if (parts.empty()) return Prompt{};
  return assemble(parts, tokenizer, max_seq_len);
}

std::vector<TokenId> encode_query(const Template& tpl, const Fields& fields, const Tokenizer& tokenizer) {
  std::string text = fill(tpl.answer_prefix_pattern(), fields, "");
  if (tokenizer.kind() == TokenizerKind::bpe && !text.empty() && text.back() == ' ') text.pop_back();
  return tokenizer.encode(text);
}

std::vector<std::vector<TokenId>> encode_verbalizers(const Template& tpl, const Tokenizer& tokenizer) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& [key, verb] : tpl.label_map) {
    auto ids = tokenizer.encode(tokenizer.kind() == TokenizerKind::bpe ? " " + verb : verb);
    if (ids.empty()) throw Error("verbalizer '" + verb + "' encodes to zero tokens");
    out.push_back(std::move(ids));
  }
  return out;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

DemonstrationSet balanced_sample(const Dataset& dataset, const Template& tpl, std::size_t k, std::uint64_t seed) {
  if (dataset.empty()) throw Error("balanced_sample: empty dataset");
  if (k == 0) throw Error("balanced_sample: k must be >= 1");
  const std::size_t classes = tpl.label_count();
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[tpl.label_index(dataset[i].label)].push_back(i);

  Rng rng(seed);
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };

  std::vector<std::size_t> quota(classes, k / classes);
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order);
  for (std::size_t i = 0; i < k % classes; ++i) ++quota[order[i]];

  std::vector<std::size_t> picked;
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < quota[c])
      throw Error("balanced_sample: class '" + tpl.label_map[c].first + "' has " + std::to_string(by_class[c].size()) +
                  " items, needs " + std::to_string(quota[c]));
    shuffle(by_class[c]);
    picked.insert(picked.end(), by_class[c].begin(), by_class[c].begin() + static_cast<std::ptrdiff_t>(quota[c]));
  }
  shuffle(picked);

  DemonstrationSet out;
  out.reserve(k);
  for (std::size_t i : picked) out.push_back(dataset[i]);
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const Template& tpl) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("label")) throw ConfigError(where + ": expected an object with a label");
    LabeledExample ex;
    const auto& label = doc.at("label");
    if (label.is_number_integer()) {
      const auto idx = label.get<long long>();
      if (idx < 0 || static_cast<std::size_t>(idx) >= tpl.label_count())
        throw ConfigError(where + ": label index " + std::to_string(idx) + " out of range");
      ex.label = tpl.label_map[static_cast<std::size_t>(idx)].first;
    } else if (label.is_string()) {
      ex.label = label.get<std::string>();
      try {
        tpl.label_index(ex.label);
      } catch (const Error&) {
        throw ConfigError(where + ": label '" + ex.label + "' not in template label_map");
      }
    } else {
      throw ConfigError(where + ": label must be a string or an integer");
    }
    for (const auto& [k, v] : doc.items())
      if (k != "label" && v.is_string()) ex.fields[k] = v.get<std::string>();
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw ConfigError("dataset " + path.string() + " is empty");
  return out;
}

}  // namespace wicl
