#pragma once

#include <filesystem>

#include "fedhal/model.hpp"
#include "fedhal/wire.hpp"

namespace fedhal {

/// Checkpoint format: magic "FDFH", version u32, tensor count u32, then per
/// tensor: name length u32, name bytes, rank u32, dims as u64, row-major
/// little-endian 64-bit reals. Scalars are rank-0 tensors.
wire::Bytes encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(const wire::Bytes& bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedhal
