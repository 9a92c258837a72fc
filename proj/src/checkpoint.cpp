#include "esiii/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "esiii/error.hpp"

namespace esiii {
namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;
constexpr std::uint32_t kMaxName = 1024;
constexpr std::uint32_t kMaxMeta = 1u << 24;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void get_bytes(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, std::streamsize(n));
  if (std::size_t(in.gcount()) != n) throw TruncatedError(std::string("checkpoint truncated reading ") + what);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char*>(b), 4, what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

std::string meta_block(const ModelBundle& m) {
  const auto& c = m.config;
  std::ostringstream s;
  s << "version=" << m.version << '\n'
    << "input_resolution=" << c.input_resolution << '\n'
    << "patch_size=" << c.patch_size << '\n'
    << "d_model=" << c.d_model << '\n'
    << "n_heads=" << c.n_heads << '\n'
    << "d_ff=" << c.d_ff << '\n'
    << "n_layers=" << c.n_layers << '\n'
    << "max_positions=" << c.max_positions << '\n'
    << "case_fold=" << (m.tokenizer.case_fold() ? 1 : 0) << '\n';
  for (const auto& w : m.tokenizer.words()) s << "word=" << w << '\n';
  return s.str();
}

int meta_int(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("checkpoint meta block lacks '" + key + "'");
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("checkpoint meta value for '" + key + "' is not an integer");
  }
}

}  // namespace

void save_checkpoint(const ModelBundle& model, std::ostream& out) {
  model.validate();
  out.write(kCheckpointMagic, kMagicLen);
  put_u32(out, kCheckpointVersion);
  const std::string meta = meta_block(model);
  put_u32(out, std::uint32_t(meta.size()));
  out.write(meta.data(), std::streamsize(meta.size()));

  std::uint32_t count = 0;
  visit_tensors(model.weights, [&](const std::string&, const Matrix<float>&) { ++count; });
  put_u32(out, count);
  visit_tensors(model.weights, [&](const std::string& name, const Matrix<float>& t) {
    put_u32(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_u32(out, std::uint32_t(t.rows()));
    put_u32(out, std::uint32_t(t.cols()));
  });
  visit_tensors(model.weights, [&](const std::string&, const Matrix<float>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(t.data()[i]));
  });
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  save_checkpoint(model, out);
}

ModelBundle load_checkpoint(std::istream& in) {
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (std::size_t(in.gcount()) != kMagicLen || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0)
    throw BadMagicError("not an ESIII-CKPT checkpoint");
  const std::uint32_t version = get_u32(in, "version");
  if (version != kCheckpointVersion)
    throw BadVersionError("unsupported checkpoint version " + std::to_string(version));

  const std::uint32_t meta_len = get_u32(in, "meta length");
  if (meta_len > kMaxMeta) throw FormatError("checkpoint meta block too large");
  std::string meta(meta_len, '\0');
  get_bytes(in, meta.data(), meta_len, "meta block");

  std::map<std::string, std::string> kv;
  std::vector<std::string> words;
  std::istringstream lines(meta);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint meta line: " + line);
    const std::string key = line.substr(0, eq);
    if (key == "word")
      words.push_back(line.substr(eq + 1));
    else
      kv[key] = line.substr(eq + 1);
  }

  ModelConfig c;
  c.input_resolution = meta_int(kv, "input_resolution");
  c.patch_size = meta_int(kv, "patch_size");
  c.d_model = meta_int(kv, "d_model");
  c.n_heads = meta_int(kv, "n_heads");
  c.d_ff = meta_int(kv, "d_ff");
  c.n_layers = meta_int(kv, "n_layers");
  c.max_positions = meta_int(kv, "max_positions");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  // Allocate tensors of the expected shapes, then check the manifest against them.
  ModelBundle model = ModelBundle::init(c, Tokenizer(std::move(words), meta_int(kv, "case_fold") != 0), 0);
  if (kv.count("version")) model.version = kv["version"];

  std::uint32_t expected_count = 0;
  visit_tensors(model.weights, [&](const std::string&, const Matrix<float>&) { ++expected_count; });
  const std::uint32_t count = get_u32(in, "tensor count");
  if (count != expected_count)
    throw FormatError("checkpoint has " + std::to_string(count) + " tensors, expected " +
                      std::to_string(expected_count));
  visit_tensors(model.weights, [&](const std::string& name, Matrix<float>& t) {
    const std::uint32_t len = get_u32(in, "tensor name");
    if (len > kMaxName) throw FormatError("checkpoint tensor name too long");
    std::string got(len, '\0');
    get_bytes(in, got.data(), len, "tensor name");
    const std::uint32_t rows = get_u32(in, "tensor shape");
    const std::uint32_t cols = get_u32(in, "tensor shape");
    if (got != name) throw FormatError("checkpoint manifest has '" + got + "' where '" + name + "' was expected");
    if (rows != t.rows() || cols != t.cols())
      throw FormatError("checkpoint tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + std::to_string(t.rows()) + "x" +
                        std::to_string(t.cols()));
  });
  visit_tensors(model.weights, [&](const std::string& name, Matrix<float>& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i)
      t.data()[i] = std::bit_cast<float>(get_u32(in, name.c_str()));
  });
  model.validate();
  return model;
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return load_checkpoint(in);
}

}  // namespace esiii
