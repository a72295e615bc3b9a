#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wicl/model.hpp"

namespace wicl {

enum class TokenizerKind { byte_level, bpe };

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenizerKind kind() const = 0;
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

// One token per byte; only bytes listed in the vocabulary are encodable.
class ByteTokenizer final : public Tokenizer {
 public:
  // `vocab` maps single-byte strings to ids.
  explicit ByteTokenizer(const std::map<std::string, TokenId>& vocab);
  // Reads `toy_vocab.json`.
  static ByteTokenizer load(const std::filesystem::path& vocab_path);

  TokenizerKind kind() const override { return TokenizerKind::byte_level; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return id_to_byte_.size(); }

 private:
  std::array<TokenId, 256> byte_to_id_;
  std::vector<unsigned char> id_to_byte_;
};

// GPT-2 style byte-level BPE: regex pre-tokenization, bytes mapped to
// printable code points, then greedy lowest-rank pair merging.
class BpeTokenizer final : public Tokenizer {
 public:
  BpeTokenizer(std::unordered_map<std::string, TokenId> vocab, std::vector<std::pair<std::string, std::string>> merges);
  // Reads `vocab.json` (token -> id) and `merges.txt` (one "a b" pair per
  // line; a leading "#version" header line is skipped).
  static BpeTokenizer load(const std::filesystem::path& vocab_path, const std::filesystem::path& merges_path);

  TokenizerKind kind() const override { return TokenizerKind::bpe; }
  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  std::size_t vocab_size() const override { return id_to_token_.size(); }

  // Pre-tokenizer pieces of `text` (raw bytes, before byte mapping).
  static std::vector<std::string> pretokenize(std::string_view text);

 private:
  std::vector<TokenId> encode_piece(const std::string& piece) const;

  std::unordered_map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::size_t> ranks_;
};

std::unique_ptr<Tokenizer> load_byte_tokenizer(const std::filesystem::path& vocab_path);
std::unique_ptr<Tokenizer> load_bpe_tokenizer(const std::filesystem::path& vocab_path,
                                              const std::filesystem::path& merges_path);

}  // namespace wicl
