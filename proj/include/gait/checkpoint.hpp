#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gait/gait_net.hpp"
#include "gait/tensor.hpp"

namespace gait {

/// Binary tensor container shared by checkpoints and feature caches.
///
///   "GPL1" | u32 LE header length | UTF-8 header | f32 LE blobs in header order
///
/// Header lines are either `@key value...` metadata or `name d0 d1 ...` tensor
/// entries. Tensor names must be non-empty, contain no whitespace and not
/// start with '@'.
struct TensorContainer {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  // Value of a metadata key; throws DataError when missing.
  const std::string& meta_value(std::string_view key) const;
  const std::string* find_meta(std::string_view key) const;
};

std::string encode_container(const TensorContainer& container);
// `source` names the input in diagnostics. Throws DataError on any malformation.
TensorContainer decode_container(std::string_view bytes, std::string_view source = "<memory>");

void write_container(const std::filesystem::path& path, const TensorContainer& container);
TensorContainer read_container(const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never see a partial file.
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

// 16 hex digits of the 64-bit FNV-1a hash.
std::string content_hash(std::string_view bytes);

std::string encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::string_view bytes, std::string_view source = "<memory>");
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

// content_hash of the encoded checkpoint; identifies the parameters a feature
// cache was built from.
std::string params_hash(const ModelParams& params);

}  // namespace gait
