#include "esiii/tokenizer.hpp"

#include <array>
#include <cctype>
#include <fstream>

#include "esiii/error.hpp"

namespace esiii {
namespace {

constexpr std::array<std::string_view, 4> kSpecialNames = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_punct(char c) {
  switch (c) {
    case '.':
    case ',':
    case ':':
    case ';':
    case '?':
    case '!':
    case '\'':
    case '"':
      return true;
    default:
      return false;
  }
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> words, bool case_fold)
    : words_(std::move(words)), case_fold_(case_fold) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    const auto [it, inserted] =
        index_.emplace(words_[i], static_cast<TokenId>(i) + kNumSpecials);
    if (!inserted) throw VocabularyError("duplicate vocabulary entry: " + words_[i]);
  }
}

Tokenizer Tokenizer::load(const std::filesystem::path& vocab_file, bool case_fold) {
  std::ifstream in(vocab_file);
  if (!in) throw IoError("cannot open vocab file " + vocab_file.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    words.push_back(line);
  }
  return Tokenizer(std::move(words), case_fold);
}

void Tokenizer::save(const std::filesystem::path& vocab_file) const {
  std::ofstream out(vocab_file, std::ios::binary);
  if (!out) throw IoError("cannot write vocab file " + vocab_file.string());
  for (const auto& w : words_) out << w << '\n';
  if (!out) throw IoError("write failed: " + vocab_file.string());
}

std::vector<std::string> Tokenizer::words_of(std::string_view text) const {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc)) {
      flush();
    } else if (is_punct(ch)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(case_fold_ ? static_cast<char>(std::tolower(uc)) : ch);
    }
  }
  flush();
  return out;
}

TokenSeq Tokenizer::tokenize(std::string_view text) const {
  TokenSeq ids;
  for (const auto& w : words_of(text)) ids.push_back(id_of(w));
  return ids;
}

std::string Tokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(id);
  }
  return out;
}

bool Tokenizer::contains(std::string_view word) const {
  return index_.find(std::string(word)) != index_.end();
}

TokenId Tokenizer::id_of(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Tokenizer::word(TokenId id) const {
  static const std::array<std::string, 4> specials = {
      std::string(kSpecialNames[0]), std::string(kSpecialNames[1]),
      std::string(kSpecialNames[2]), std::string(kSpecialNames[3])};
  if (id < 0 || static_cast<std::size_t>(id) >= size())
    throw VocabularyError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                          std::to_string(size()));
  if (id < kNumSpecials) return specials[static_cast<std::size_t>(id)];
  return words_[static_cast<std::size_t>(id - kNumSpecials)];
}

}  // namespace esiii
