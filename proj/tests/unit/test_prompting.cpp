#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "../support.hpp"
#include "wicl/prompting.hpp"

using namespace wicl;

namespace {

Template sst2() { return Template::load(test::source_dir() / "data/templates/sst2.json"); }

DemonstrationSet two_examples() {
  return {{{{"text", "great movie"}}, "positive"}, {{{"text", "dull plot"}}, "negative"}};
}

Dataset labeled(std::size_t per_class, const std::vector<std::string>& labels) {
  Dataset d;
  for (const auto& l : labels)
    for (std::size_t i = 0; i < per_class; ++i) d.push_back({{{"text", l + " " + std::to_string(i)}}, l});
  return d;
}

std::map<std::string, int> histogram(const DemonstrationSet& s) {
  std::map<std::string, int> h;
  for (const auto& e : s) ++h[e.label];
  return h;
}

}  // namespace

TEST_CASE("render_example fills the slots") {
  const Template t = sst2();
  CHECK(render_example(t, {{"text", "great movie"}}, "positive") == "Sentence: great movie Sentiment: positive");
  CHECK(render_example(t, {{"text", "great movie"}}, masked) == "Sentence: great movie Sentiment: N/A");
  CHECK(render_example(t, {{"text", ""}}, "positive") == "Sentence:  Sentiment: positive");
  CHECK_THROWS_AS(render_example(t, {{"text", "x"}}, "neutral"), Error);
  CHECK_THROWS_AS(render_example(t, {{"body", "x"}}, "positive"), Error);

  const Template rte = Template::load(test::source_dir() / "data/templates/rte.json");
  CHECK(render_example(rte, {{"sentence1", "A cat sat."}, {"sentence2", "An animal sat."}}, "entailment") ==
        "A cat sat. Question: An animal sat. True or False? Answer: True");
}

TEST_CASE("bundled templates load") {
  const std::map<std::string, std::size_t> labels = {
      {"sst2", 2}, {"cr", 2}, {"agnews", 4}, {"rte", 2}, {"trec", 6}, {"dbpedia", 14}, {"mr", 2}, {"subj", 2},
      {"sst2_t1", 2}, {"sst2_t2", 2}, {"sst2_t3", 2}, {"sst2_t4", 2}};
  for (const auto& [name, n] : labels) {
    CAPTURE(name);
    const Template t = Template::load(test::source_dir() / "data/templates" / (name + ".json"));
    CHECK(t.label_count() == n);
    CHECK(t.separator == "\n");
    CHECK(t.mask_string == "N/A");
  }
  CHECK(Template::load(test::source_dir() / "data/templates/sst2_t3.json").verbalizer(1) == "good");
}

TEST_CASE("template invariants") {
  auto doc = nlohmann::ordered_json::parse(R"({"pattern": "{text} {answer} {answer}", "label_map": {"a": "x"}})");
  CHECK_THROWS_AS(Template::from_json(doc), ConfigError);
  doc = nlohmann::ordered_json::parse(R"({"pattern": "{text} {answer}", "label_map": {"a": "x", "b": "x"}})");
  CHECK_THROWS_AS(Template::from_json(doc), ConfigError);
  doc = nlohmann::ordered_json::parse(R"({"pattern": "{text} {answer}", "label_map": {}})");
  CHECK_THROWS_AS(Template::from_json(doc), ConfigError);
  // object label maps keep file order
  doc = nlohmann::ordered_json::parse(R"({"pattern": "{text} {answer}", "label_map": {"z": "zed", "a": "ay"}})");
  const Template t = Template::from_json(doc);
  CHECK(t.label_map[0].first == "z");
  CHECK(t.label_index("a") == 1);
}

TEST_CASE("demonstration spans partition the ids") {
  const Template t = sst2();
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  SUBCASE("k = 1") {
    const DemonstrationSet one = {two_examples()[0]};
    const Prompt p = build_demonstration(t, one, tok, 1024);
    REQUIRE(p.spans.size() == 1);
    CHECK(p.spans[0].start == 0);
    CHECK(p.spans[0].end == p.ids.size());
  }
  SUBCASE("k = 2") {
    const Prompt p = build_demonstration(t, two_examples(), tok, 1024);
    REQUIRE(p.spans.size() == 2);
    CHECK(p.spans[0].start == 0);
    CHECK(p.spans[0].end == p.spans[1].start);
    CHECK(p.spans[1].end == p.ids.size());
    CHECK(p.text == "Sentence: great movie Sentiment: positive\nSentence: dull plot Sentiment: negative\n");
    const std::span<const TokenId> first(p.ids.data(), p.spans[0].length());
    CHECK(tok.decode(first) == "Sentence: great movie Sentiment: positive\n");
    CHECK(p.source_example == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("too long") { CHECK_THROWS_WITH_AS(build_demonstration(t, two_examples(), tok, 50), doctest::Contains("50"), Error); }
}

TEST_CASE("8-shot demonstration text is the rendered examples joined by newlines") {
  const Template t = sst2();
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  const Dataset train = load_dataset(test::source_dir() / "data/toy_task/train.jsonl", t);
  const DemonstrationSet demo = balanced_sample(train, t, 8, 4);
  std::string expected;
  for (const auto& ex : demo) expected += "Sentence: " + ex.fields.at("text") + " Sentiment: " + ex.label + "\n";
  const Prompt p = build_demonstration(t, demo, tok, 1024);
  CHECK(p.text == expected);
  CHECK(tok.decode(p.ids) == expected);
  for (std::size_t i = 0; i < 8; ++i) {
    const std::span<const TokenId> span(p.ids.data() + p.spans[i].start, p.spans[i].length());
    CHECK(tok.decode(span) == render_example(t, demo[i].fields, demo[i].label) + "\n");
  }
}

TEST_CASE("mask_example strategies") {
  const Template t = sst2();
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  const auto demo = two_examples();
  const Prompt full = build_demonstration(t, demo, tok, 1024);

  SUBCASE("label only, first example") {
    const Prompt p = mask_example(t, demo, tok, 0, MaskStrategy::label_only, 1024);
    CHECK(p.text == "Sentence: great movie Sentiment: N/A\nSentence: dull plot Sentiment: negative\n");
    REQUIRE(p.spans.size() == 2);
    // the second example's ids are unchanged, only shifted
    const std::vector<TokenId> a(full.ids.begin() + full.spans[1].start, full.ids.end());
    const std::vector<TokenId> b(p.ids.begin() + p.spans[1].start, p.ids.end());
    CHECK(a == b);
  }
  SUBCASE("label only edits only span i") {
    const Prompt p = mask_example(t, demo, tok, 1, MaskStrategy::label_only, 1024);
    CHECK(std::equal(full.ids.begin(), full.ids.begin() + full.spans[1].start, p.ids.begin()));
    CHECK(p.spans[0] == full.spans[0]);
  }
  SUBCASE("whole example mask") {
    const Prompt p = mask_example(t, demo, tok, 0, MaskStrategy::whole_example_mask, 1024);
    CHECK(p.text == "N/A\nSentence: dull plot Sentiment: negative\n");
    CHECK(p.spans.size() == 2);
  }
  SUBCASE("whole example remove") {
    const Prompt p = mask_example(t, demo, tok, 1, MaskStrategy::whole_example_remove, 1024);
    const DemonstrationSet first = {demo[0]};
    const Prompt alone = build_demonstration(t, first, tok, 1024);
    CHECK(p.ids == alone.ids);
    CHECK(p.text == alone.text);
    CHECK(p.spans == alone.spans);
    CHECK(p.source_example == std::vector<std::size_t>{0});
  }
  SUBCASE("index out of range") { CHECK_THROWS_AS(mask_example(t, demo, tok, 2, MaskStrategy::label_only, 1024), Error); }
  SUBCASE("deterministic") {
    for (auto s : {MaskStrategy::label_only, MaskStrategy::whole_example_mask, MaskStrategy::whole_example_remove})
      CHECK(mask_example(t, demo, tok, 0, s, 1024).ids == mask_example(t, demo, tok, 0, s, 1024).ids);
  }
}

TEST_CASE("masking hides the label completely") {
  const Template t = sst2();
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  auto demo = two_examples();
  auto flipped = demo;
  flipped[0].label = "negative";
  for (auto s : {MaskStrategy::label_only, MaskStrategy::whole_example_mask, MaskStrategy::whole_example_remove})
    CHECK(mask_example(t, demo, tok, 0, s, 1024).ids == mask_example(t, flipped, tok, 0, s, 1024).ids);
}

TEST_CASE("query and verbalizer encoding") {
  const Template t = sst2();
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  CHECK(tok.decode(encode_query(t, {{"text", "fine"}}, tok)) == "Sentence: fine Sentiment: ");
  const auto verbs = encode_verbalizers(t, tok);
  REQUIRE(verbs.size() == 2);
  CHECK(tok.decode(verbs[0]) == "negative");

  const auto dir = test::fixtures() / "bpe_tiny";
  const auto bpe = BpeTokenizer::load(dir / "vocab.json", dir / "merges.txt");
  CHECK(bpe.decode(encode_query(t, {{"text", "fine"}}, bpe)) == "Sentence: fine Sentiment:");
  CHECK(bpe.decode(encode_verbalizers(t, bpe)[1]) == " positive");
}

TEST_CASE("balanced sampling") {
  const Template t = sst2();
  SUBCASE("two classes") {
    const auto s = balanced_sample(labeled(10, {"negative", "positive"}), t, 8, 0);
    CHECK(histogram(s) == std::map<std::string, int>{{"negative", 4}, {"positive", 4}});
  }
  SUBCASE("three classes give 3, 3, 2") {
    const auto t3 = Template::from_json(
        nlohmann::ordered_json::parse(R"({"pattern": "{text} {answer}", "label_map": {"a": "A", "b": "B", "c": "C"}})"));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto h = histogram(balanced_sample(labeled(10, {"a", "b", "c"}), t3, 8, seed));
      std::vector<int> counts;
      for (const auto& [_, c] : h) counts.push_back(c);
      std::sort(counts.begin(), counts.end());
      CHECK(counts == std::vector<int>{2, 3, 3});
    }
  }
  SUBCASE("deterministic, without replacement, seed-dependent") {
    const auto data = labeled(10, {"negative", "positive"});
    const auto a = balanced_sample(data, t, 8, 7);
    const auto b = balanced_sample(data, t, 8, 7);
    CHECK(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].fields == b[i].fields);
    std::set<std::string> seen;
    for (const auto& e : a) seen.insert(e.fields.at("text"));
    CHECK(seen.size() == 8);
    bool differs = false;
    for (std::uint64_t s = 0; s < 5 && !differs; ++s)
      differs = balanced_sample(data, t, 8, s)[0].fields != a[0].fields;
    CHECK(differs);
  }
  SUBCASE("class too small") {
    CHECK_THROWS_AS(balanced_sample(labeled(3, {"negative", "positive"}), t, 8, 0), Error);
  }
}

TEST_CASE("dataset loading") {
  const Template t = sst2();
  const Dataset d = load_dataset(test::source_dir() / "data/toy_task/eval.jsonl", t);
  CHECK(d.size() == 200);
  const auto path = std::filesystem::temp_directory_path() / "wicl_ds.jsonl";
  std::ofstream(path) << "{\"text\": \"a\", \"label\": 1}\n\n{\"text\": \"b\", \"label\": \"negative\"}\n";
  const Dataset small = load_dataset(path, t);
  REQUIRE(small.size() == 2);
  CHECK(small[0].label == "positive");
  std::ofstream(path) << "{\"text\": \"a\", \"label\": \"meh\"}\n";
  CHECK_THROWS_AS(load_dataset(path, t), ConfigError);
  std::ofstream(path) << "{\"text\": \"a\", \"label\": 5}\n";
  CHECK_THROWS_AS(load_dataset(path, t), ConfigError);
  std::filesystem::remove(path);
}

TEST_CASE("seeded permutation is a fixed permutation") {
  const auto p = seeded_permutation(10, 3);
  CHECK(p == seeded_permutation(10, 3));
  auto sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
