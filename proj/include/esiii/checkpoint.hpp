#pragma once

#include <filesystem>
#include <iosfwd>

#include "esiii/model.hpp"

namespace esiii {

inline constexpr char kCheckpointMagic[] = "ESIII-CKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic, u32 version, u32-length meta block (config and vocabulary as
// "key=value" lines), u32 tensor count, then per tensor u32 name length, name,
// u32 rows, u32 cols; then every tensor's little-endian float32 payload in
// manifest order.
void save_checkpoint(const ModelBundle& model, std::ostream& out);
void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path);

ModelBundle load_checkpoint(std::istream& in);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace esiii
