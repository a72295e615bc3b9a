#include "wicl/tokenizer.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>
#include <unicode/uchar.h>

namespace wicl {

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

// Decodes UTF-8 into (code point, byte length) pairs. Invalid bytes decode
// as themselves with length 1 so no input byte is ever dropped.
std::vector<std::pair<char32_t, std::size_t>> decode_utf8(std::string_view s) {
  std::vector<std::pair<char32_t, std::size_t>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    bool ok = len != 0 && i + len <= s.size();
    char32_t cp = 0;
    if (ok) {
      cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
      for (std::size_t k = 1; k < len; ++k) {
        const auto cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xC0) != 0x80) {
          ok = false;
          break;
        }
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    if (!ok) {
      cp = c;
      len = 1;
    }
    out.emplace_back(cp, len);
    i += len;
  }
  return out;
}

// GPT-2 byte -> code point table.
const std::array<char32_t, 256>& byte_encoder() {
  static const std::array<char32_t, 256> table = [] {
    std::array<char32_t, 256> t{};
    std::array<bool, 256> direct{};
    for (int b = '!'; b <= '~'; ++b) direct[b] = true;
    for (int b = 0xA1; b <= 0xAC; ++b) direct[b] = true;
    for (int b = 0xAE; b <= 0xFF; ++b) direct[b] = true;
    char32_t next = 256;
    for (int b = 0; b < 256; ++b) t[b] = direct[b] ? static_cast<char32_t>(b) : next++;
    return t;
  }();
  return table;
}

const std::unordered_map<char32_t, unsigned char>& byte_decoder() {
  static const std::unordered_map<char32_t, unsigned char> table = [] {
    std::unordered_map<char32_t, unsigned char> t;
    const auto& enc = byte_encoder();
    for (int b = 0; b < 256; ++b) t[enc[b]] = static_cast<unsigned char>(b);
    return t;
  }();
  return table;
}

bool is_letter(char32_t cp) {
  switch (u_charType(static_cast<UChar32>(cp))) {
    case U_UPPERCASE_LETTER:
    case U_LOWERCASE_LETTER:
    case U_TITLECASE_LETTER:
    case U_MODIFIER_LETTER:
    case U_OTHER_LETTER:
      return true;
    default:
      return false;
  }
}

bool is_number(char32_t cp) {
  switch (u_charType(static_cast<UChar32>(cp))) {
    case U_DECIMAL_DIGIT_NUMBER:
    case U_LETTER_NUMBER:
    case U_OTHER_NUMBER:
      return true;
    default:
      return false;
  }
}

bool is_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || (cp >= 0x1C && cp <= 0x20) || u_isUWhiteSpace(static_cast<UChar32>(cp));
}

}  // namespace

// ---------------------------------------------------------------------------

ByteTokenizer::ByteTokenizer(const std::map<std::string, TokenId>& vocab) {
  byte_to_id_.fill(-1);
  TokenId max_id = -1;
  for (const auto& [tok, id] : vocab) {
    if (tok.size() != 1) throw ConfigError("toy vocab: token '" + tok + "' is not a single byte");
    if (id < 0) throw ConfigError("toy vocab: negative id for token '" + tok + "'");
    max_id = std::max(max_id, id);
  }
  id_to_byte_.assign(static_cast<std::size_t>(max_id + 1), 0);
  std::vector<bool> seen(id_to_byte_.size(), false);
  for (const auto& [tok, id] : vocab) {
    const auto b = static_cast<unsigned char>(tok[0]);
    if (seen[static_cast<std::size_t>(id)]) throw ConfigError("toy vocab: duplicate id " + std::to_string(id));
    seen[static_cast<std::size_t>(id)] = true;
    byte_to_id_[b] = id;
    id_to_byte_[static_cast<std::size_t>(id)] = b;
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw ConfigError("toy vocab: ids are not contiguous, missing " + std::to_string(i));
}

ByteTokenizer ByteTokenizer::load(const std::filesystem::path& vocab_path) {
  const auto doc = read_json(vocab_path);
  if (!doc.is_object()) throw ConfigError(vocab_path.string() + ": expected an object of token -> id");
  std::map<std::string, TokenId> vocab;
  for (const auto& [k, v] : doc.items()) vocab[k] = v.get<TokenId>();
  return ByteTokenizer(vocab);
}

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto b = static_cast<unsigned char>(text[i]);
    const TokenId id = byte_to_id_[b];
    if (id < 0) {
      std::ostringstream os;
      os << "unencodable byte 0x" << std::hex << static_cast<int>(b) << " at offset " << std::dec << i;
      throw Error(os.str());
    }
    ids.push_back(id);
  }
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_byte_.size())
      throw Error("decode: id " + std::to_string(id) + " out of range");
    out += static_cast<char>(id_to_byte_[static_cast<std::size_t>(id)]);
  }
  return out;
}

// ---------------------------------------------------------------------------

BpeTokenizer::BpeTokenizer(std::unordered_map<std::string, TokenId> vocab,
                           std::vector<std::pair<std::string, std::string>> merges)
    : vocab_(std::move(vocab)) {
  TokenId max_id = -1;
  for (const auto& [tok, id] : vocab_) {
    if (id < 0) throw ConfigError("bpe vocab: negative id for '" + tok + "'");
    max_id = std::max(max_id, id);
  }
  id_to_token_.assign(static_cast<std::size_t>(max_id + 1), std::string());
  for (const auto& [tok, id] : vocab_) id_to_token_[static_cast<std::size_t>(id)] = tok;
  for (std::size_t r = 0; r < merges.size(); ++r) {
    const std::string key = merges[r].first + ' ' + merges[r].second;
    ranks_.emplace(key, r);  // first occurrence wins
  }
}

BpeTokenizer BpeTokenizer::load(const std::filesystem::path& vocab_path, const std::filesystem::path& merges_path) {
  const auto doc = read_json(vocab_path);
  std::unordered_map<std::string, TokenId> vocab;
  for (const auto& [k, v] : doc.items()) vocab[k] = v.get<TokenId>();

  std::ifstream in(merges_path);
  if (!in) throw ConfigError("cannot open " + merges_path.string());
  std::vector<std::pair<std::string, std::string>> merges;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line.rfind("#version", 0) == 0) continue;
    }
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw ConfigError(merges_path.string() + ": malformed merge line '" + line + "'");
    merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return BpeTokenizer(std::move(vocab), std::move(merges));
}

// 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+
std::vector<std::string> BpeTokenizer::pretokenize(std::string_view text) {
  const auto cps = decode_utf8(text);
  const std::size_t n = cps.size();
  std::vector<std::size_t> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + cps[i].second;

  auto cp = [&](std::size_t i) { return cps[i].first; };
  auto is_other = [&](std::size_t i) { return !is_space(cp(i)) && !is_letter(cp(i)) && !is_number(cp(i)); };

  std::vector<std::string> pieces;
  std::size_t i = 0;
  while (i < n) {
    std::size_t end = i;
    if (cp(i) == U'\'' && i + 1 < n) {
      const char32_t a = cp(i + 1);
      const char32_t b = i + 2 < n ? cp(i + 2) : 0;
      if (a == U's' || a == U't' || a == U'm' || a == U'd') end = i + 2;
      else if ((a == U'r' && b == U'e') || (a == U'v' && b == U'e') || (a == U'l' && b == U'l')) end = i + 3;
    }
    if (end == i) {
      const std::size_t j = (cp(i) == U' ' && i + 1 < n) ? i + 1 : i;
      auto run = [&](auto pred) {
        std::size_t e = j;
        while (e < n && pred(e)) ++e;
        return e;
      };
      if (is_letter(cp(j))) end = run([&](std::size_t k) { return is_letter(cp(k)); });
      else if (is_number(cp(j))) end = run([&](std::size_t k) { return is_number(cp(k)); });
      else if (is_other(j)) end = run(is_other);
    }
    if (end == i) {
      // whitespace run; leave its last char to prefix a following word
      std::size_t e = i;
      while (e < n && is_space(cp(e))) ++e;
      if (e == n || e - i == 1) end = e;
      else end = e - 1;
    }
    pieces.emplace_back(text.substr(offset[i], offset[end] - offset[i]));
    i = end;
  }
  return pieces;
}

std::vector<TokenId> BpeTokenizer::encode_piece(const std::string& piece) const {
  const auto& enc = byte_encoder();
  std::vector<std::string> symbols;
  symbols.reserve(piece.size());
  for (unsigned char b : piece) {
    std::string s;
    append_utf8(s, enc[b]);
    symbols.push_back(std::move(s));
  }
  while (symbols.size() > 1) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    std::string best_a, best_b;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = ranks_.find(symbols[i] + ' ' + symbols[i + 1]);
      if (it != ranks_.end() && it->second < best) {
        best = it->second;
        best_a = symbols[i];
        best_b = symbols[i + 1];
      }
    }
    if (best == std::numeric_limits<std::size_t>::max()) break;
    std::vector<std::string> merged;
    merged.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size();) {
      if (i + 1 < symbols.size() && symbols[i] == best_a && symbols[i + 1] == best_b) {
        merged.push_back(best_a + best_b);
        i += 2;
      } else {
        merged.push_back(std::move(symbols[i]));
        ++i;
      }
    }
    symbols = std::move(merged);
  }
  std::vector<TokenId> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = vocab_.find(s);
    if (it == vocab_.end()) throw Error("bpe: symbol '" + s + "' not in vocabulary");
    ids.push_back(it->second);
  }
  return ids;
}

std::vector<TokenId> BpeTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& piece : pretokenize(text)) {
    const auto p = encode_piece(piece);
    ids.insert(ids.end(), p.begin(), p.end());
  }
  return ids;
}

std::string BpeTokenizer::decode(std::span<const TokenId> ids) const {
  const auto& dec = byte_decoder();
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
      throw Error("decode: id " + std::to_string(id) + " out of range");
    for (const auto& [c, len] : decode_utf8(id_to_token_[static_cast<std::size_t>(id)])) {
      auto it = dec.find(c);
      if (it == dec.end()) throw Error("decode: token " + std::to_string(id) + " holds an unmapped character");
      out += static_cast<char>(it->second);
    }
  }
  return out;
}

std::unique_ptr<Tokenizer> load_byte_tokenizer(const std::filesystem::path& vocab_path) {
  return std::make_unique<ByteTokenizer>(ByteTokenizer::load(vocab_path));
}

std::unique_ptr<Tokenizer> load_bpe_tokenizer(const std::filesystem::path& vocab_path,
                                              const std::filesystem::path& merges_path) {
  return std::make_unique<BpeTokenizer>(BpeTokenizer::load(vocab_path, merges_path));
}

}  // namespace wicl
