#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace esiii {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNumSpecials = 4;

// Word-level tokenizer. Ids 0..3 are the specials, ids >= 4 follow the order
// of the word list. Punctuation marks are split off into their own words.
class Tokenizer {
 public:
  Tokenizer() : Tokenizer(std::vector<std::string>{}) {}
  explicit Tokenizer(std::vector<std::string> words, bool case_fold = true);

  static Tokenizer load(const std::filesystem::path& vocab_file, bool case_fold = true);
  void save(const std::filesystem::path& vocab_file) const;

  TokenSeq tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  // Splits into normalized words without mapping to ids.
  std::vector<std::string> words_of(std::string_view text) const;

  bool contains(std::string_view word) const;
  TokenId id_of(std::string_view word) const;
  const std::string& word(TokenId id) const;

  std::size_t size() const { return kNumSpecials + words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool case_fold() const { return case_fold_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
  bool case_fold_ = true;
};

}  // namespace esiii
