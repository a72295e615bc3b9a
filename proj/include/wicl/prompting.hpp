#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "wicl/reweighting.hpp"
#include "wicl/tokenizer.hpp"

namespace wicl {

// Input slots of one example, e.g. {"text": ...} or {"sentence1": ..., "sentence2": ...}.
using Fields = std::map<std::string, std::string>;

struct LabeledExample {
  Fields fields;
  std::string label;  // key into Template::label_map
};

using Dataset = std::vector<LabeledExample>;
// Ordered demonstration examples (x_1, y_1) ... (x_k, y_k).
using DemonstrationSet = std::vector<LabeledExample>;

// Maps an example to text. `pattern` holds `{field}` slots plus exactly one
// `{answer}` slot; label_map is ordered (label key -> verbalizer).
struct Template {
  std::string name;
  std::string pattern;
  std::vector<std::pair<std::string, std::string>> label_map;
  std::string separator = "\n";
  std::string mask_string = "N/A";

  static Template from_json(const nlohmann::ordered_json& doc);
  static Template load(const std::filesystem::path& path);
  void validate() const;

  std::size_t label_count() const { return label_map.size(); }
  std::size_t label_index(std::string_view label) const;
  const std::string& verbalizer(std::size_t i) const { return label_map.at(i).second; }
  // Pattern text before the answer slot.
  std::string_view answer_prefix_pattern() const;
};

struct Masked {};
inline constexpr Masked masked{};

enum class MaskStrategy { label_only, whole_example_mask, whole_example_remove };

std::string_view to_string(MaskStrategy s);
MaskStrategy parse_mask_strategy(std::string_view name);

// Tokenized demonstration. spans[i] covers the tokens of the i-th example
// kept in the prompt (including its trailing separator); source_example[i]
// is that example's index in the original demonstration set.
struct Prompt {
  std::string text;
  std::vector<TokenId> ids;
  std::vector<ExampleSpan> spans;
  std::vector<std::size_t> source_example;
};

std::string render_example(const Template& tpl, const Fields& fields, std::string_view label);
std::string render_example(const Template& tpl, const Fields& fields, Masked);

// Renders and tokenizes each example separately, then concatenates, so
// span boundaries are exact token boundaries.
Prompt build_demonstration(const Template& tpl, std::span<const LabeledExample> examples, const Tokenizer& tokenizer,
                           std::size_t max_seq_len);

// Demonstration with example `index` (0-based) hidden according to `strategy`.
Prompt mask_example(const Template& tpl, std::span<const LabeledExample> examples, const Tokenizer& tokenizer,
                    std::size_t index, MaskStrategy strategy, std::size_t max_seq_len);

// Query text up to the answer slot, tokenized. For BPE tokenizers a trailing
// space before the slot moves onto the verbalizers instead.
std::vector<TokenId> encode_query(const Template& tpl, const Fields& fields, const Tokenizer& tokenizer);
// Token ids of every verbalizer, in label_map order.
std::vector<std::vector<TokenId>> encode_verbalizers(const Template& tpl, const Tokenizer& tokenizer);

// Class-balanced seeded sample of k examples: per-class counts differ by at
// most one, picks are without replacement, and the final order is shuffled.
DemonstrationSet balanced_sample(const Dataset& dataset, const Template& tpl, std::size_t k, std::uint64_t seed);

// JSON-lines dataset. A numeric "label" indexes label_map; a string label
// must be a label key.
Dataset load_dataset(const std::filesystem::path& path, const Template& tpl);

// Seeded Fisher-Yates shuffle over indices [0, n) with a portable generator.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace wicl
