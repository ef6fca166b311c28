#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "demark/nn/model.hpp"

namespace demark::nn {

// Model file layout (all integers little-endian):
//   "DMRK" | u32 version | u64 input_dim | f64 input_scale | f64 output_scale
//   | u32 layer_count | per layer: u8 kind, u8 activation, u64 units,
//   u64 kernel_size, u64 stride | weight blob (f64 LE, per layer weight then
//   bias, row-major) | u64 FNV-1a checksum of every preceding byte.

inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const ModelGraph& model);
ModelGraph decode_model(const std::vector<std::uint8_t>& bytes);

void save_model(const ModelGraph& model, const std::filesystem::path& path);
ModelGraph load_model(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);
/// Hex FNV-1a of the encoded model; used as provenance in reports.
std::string model_checksum(const ModelGraph& model);

}  // namespace demark::nn
