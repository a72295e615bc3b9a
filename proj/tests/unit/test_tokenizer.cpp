#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "../support.hpp"
#include "wicl/tokenizer.hpp"

using namespace wicl;

TEST_CASE("byte tokenizer round-trips printable ASCII") {
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  CHECK(tok.encode("").empty());
  CHECK(tok.vocab_size() == 96);
  std::mt19937 gen(1);
  std::uniform_int_distribution<int> ch(32, 127);  // 127 stands in for '\n'
  std::uniform_int_distribution<int> len(0, 60);
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (int n = len(gen); n > 0; --n) {
      const int c = ch(gen);
      s += c == 127 ? '\n' : static_cast<char>(c);
    }
    const auto ids = tok.encode(s);
    CHECK(ids.size() == s.size());
    for (TokenId id : ids) CHECK(static_cast<std::size_t>(id) < tok.vocab_size());
    CHECK(tok.decode(ids) == s);
  }
}

TEST_CASE("byte tokenizer rejects bytes outside its vocabulary") {
  const auto tok = ByteTokenizer::load(test::toy_vocab());
  CHECK_THROWS_AS(tok.encode("tab\there"), Error);
  CHECK_THROWS_AS(tok.encode("caf\xc3\xa9"), Error);
}

TEST_CASE("BPE encoding matches the reference tokenizer") {
  const auto dir = test::fixtures() / "bpe_tiny";
  const auto tok = BpeTokenizer::load(dir / "vocab.json", dir / "merges.txt");
  const auto cases = nlohmann::json::parse(test::slurp(dir / "cases.json"));
  REQUIRE(cases.size() > 10);
  for (const auto& c : cases) {
    const auto text = c["text"].get<std::string>();
    CAPTURE(text);
    const auto ids = tok.encode(text);
    CHECK(ids == c["ids"].get<std::vector<TokenId>>());
    for (TokenId id : ids) CHECK(static_cast<std::size_t>(id) < tok.vocab_size());
    CHECK(tok.decode(ids) == text);
  }
}

TEST_CASE("BPE pretokenizer splits like the GPT-2 pattern") {
  using V = std::vector<std::string>;
  CHECK(BpeTokenizer::pretokenize("Hello world") == V{"Hello", " world"});
  CHECK(BpeTokenizer::pretokenize("it's") == V{"it", "'s"});
  CHECK(BpeTokenizer::pretokenize("a  b") == V{"a", " ", " b"});
  CHECK(BpeTokenizer::pretokenize("x1 23!") == V{"x", "1", " 23", "!"});
  CHECK(BpeTokenizer::pretokenize("end  ") == V{"end", "  "});
  CHECK(BpeTokenizer::pretokenize("caf\xc3\xa9 ok") == V{"caf\xc3\xa9", " ok"});
  CHECK(BpeTokenizer::pretokenize("").empty());
}

TEST_CASE("BPE applies merges in rank order") {
  std::unordered_map<std::string, TokenId> vocab;
  for (int b = 33; b < 127; ++b) vocab[std::string(1, static_cast<char>(b))] = b - 33;
  vocab["ab"] = 94;
  vocab["abc"] = 95;
  const BpeTokenizer tok(vocab, {{"a", "b"}, {"ab", "c"}});
  CHECK(tok.encode("abc") == std::vector<TokenId>{95});
  CHECK(tok.encode("abd") == std::vector<TokenId>{94, 'd' - 33});
  CHECK(tok.encode("cab") == std::vector<TokenId>{'c' - 33, 94});
}

TEST_CASE("merges file loads with or without a version header") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "wicl_bpe_header";
  fs::create_directories(dir);
  std::ofstream(dir / "vocab.json") << R"({"a":0,"b":1,"c":2,"ab":3,"abc":4})";
  std::ofstream(dir / "with.txt") << "#version: 0.2\na b\nab c\n";
  std::ofstream(dir / "without.txt") << "a b\nab c\n";
  const auto with = BpeTokenizer::load(dir / "vocab.json", dir / "with.txt");
  const auto without = BpeTokenizer::load(dir / "vocab.json", dir / "without.txt");
  CHECK(with.encode("abc") == std::vector<TokenId>{4});
  CHECK(without.encode("abc") == std::vector<TokenId>{4});
  CHECK(with.encode("cab") == std::vector<TokenId>{2, 3});
  fs::remove_all(dir);
}
