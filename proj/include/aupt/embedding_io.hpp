#pragma once

#include <filesystem>

#include "aupt/tensor.hpp"

namespace aupt {

/// AUE1 embedding container. Fixed little-endian layout:
///   bytes 0-3   magic "AUE1"
///   bytes 4-7   version u32 = 1
///   bytes 8-11  row count u32
///   bytes 12-15 column count u32
///   bytes 16-23 reserved, zero
///   then rows*cols float32, row-major
/// Values are float32 on disk and widened to double in memory, so a write
/// of float32-representable data round-trips bit-exactly.
inline constexpr std::size_t kEmbeddingHeaderBytes = 24;

void write_embeddings(const Tensor& matrix, const std::filesystem::path& path);
Tensor read_embeddings(const std::filesystem::path& path);

/// Write bytes to `path` atomically (temp file + rename).
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);

/// Round every entry through float32; the in-memory twin of the storage
/// precision, applied at generation time so round trips are the identity.
void quantize_to_f32(Tensor& t);

} // namespace aupt
