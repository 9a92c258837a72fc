#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "esiii/tokenizer.hpp"

namespace esiii {

// Security instruction set s_1..s_n plus the description instruction t_d.
struct InstructionCorpus {
  std::vector<std::string> instructions;
  std::string description_instruction;
  std::string label;

  std::size_t size() const { return instructions.size(); }

  // Throws ConfigError if the corpus is empty or has an empty sentence.
  void validate() const;

  friend bool operator==(const InstructionCorpus&, const InstructionCorpus&) = default;
};

// Corpus tokenized against a model vocabulary. Each target is the sentence
// followed by EOS, so the loss also rewards stopping after the sentence.
struct BoundCorpus {
  TokenSeq description;
  std::vector<TokenSeq> sentences;  // without EOS
  std::vector<TokenSeq> targets;    // sentence + EOS
};

// Checks every word is in-vocabulary and tokenizes. Throws VocabularyError
// naming the first unknown word.
BoundCorpus bind(const InstructionCorpus& corpus, const Tokenizer& tokenizer);

// The ten shipped security instructions.
InstructionCorpus default_corpus();

// File format: first line "DESC: <t_d>", then one instruction per non-empty line.
InstructionCorpus load_corpus(const std::filesystem::path& path);
void save_corpus(const InstructionCorpus& corpus, const std::filesystem::path& path);

}  // namespace esiii
