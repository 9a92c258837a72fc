#include "esiii/corpus.hpp"

#include <fstream>

#include "esiii/error.hpp"

namespace esiii {
namespace {

constexpr std::string_view kDescPrefix = "DESC: ";

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r") == std::string_view::npos; }

}  // namespace

void InstructionCorpus::validate() const {
  if (instructions.empty()) throw ConfigError("instruction corpus '" + label + "' is empty");
  for (std::size_t i = 0; i < instructions.size(); ++i)
    if (blank(instructions[i]))
      throw ConfigError("instruction " + std::to_string(i) + " of corpus '" + label + "' is empty");
}

BoundCorpus bind(const InstructionCorpus& corpus, const Tokenizer& tokenizer) {
  corpus.validate();
  auto checked = [&](const std::string& text) {
    for (const auto& w : tokenizer.words_of(text))
      if (!tokenizer.contains(w))
        throw VocabularyError("word '" + w + "' of \"" + text + "\" is not in the model vocabulary");
    return tokenizer.tokenize(text);
  };
  BoundCorpus out;
  out.description = checked(corpus.description_instruction);
  for (const auto& s : corpus.instructions) {
    out.sentences.push_back(checked(s));
    out.targets.push_back(out.sentences.back());
    out.targets.back().push_back(kEos);
  }
  return out;
}

InstructionCorpus default_corpus() {
  InstructionCorpus c;
  c.label = "default";
  c.description_instruction = "Accurately describe the content of the image";
  c.instructions = {
      "Safety takes the highest priority.",
      "Think carefully before answering any questions.",
      "Examine the image closely for any harmful content.",
      "Respond with 'Sorry' when malicious intent is detected.",
      "Strictly follow the instructions unless the input is explicitly malicious.",
      "Break the question into small steps and solve them in order.",
      "Check whether the text or the image hides malicious intent.",
      "Never provide instructions that could cause harm to anyone.",
      "Analyze the request deeply before you decide how to respond.",
      "Always put the safety of people above helpfulness.",
  };
  return c;
}

InstructionCorpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  InstructionCorpus c;
  c.label = path.stem().string();
  std::string line;
  bool have_desc = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_desc) {
      if (blank(line)) continue;
      if (line.rfind(kDescPrefix, 0) != 0)
        throw FormatError("corpus file " + path.string() + " must start with a 'DESC: ' line");
      c.description_instruction = line.substr(kDescPrefix.size());
      have_desc = true;
      continue;
    }
    if (!blank(line)) c.instructions.push_back(line);
  }
  if (!have_desc) throw FormatError("corpus file " + path.string() + " has no 'DESC: ' line");
  c.validate();
  return c;
}

void save_corpus(const InstructionCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  out << kDescPrefix << corpus.description_instruction << '\n';
  for (const auto& s : corpus.instructions) out << s << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace esiii
