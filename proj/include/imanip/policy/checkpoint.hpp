#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imanip/policy/policy.hpp"

namespace imanip::policy {

// IMCKPT1 layout (little-endian):
//   "IMCKPT1\0"                      8 bytes
//   u32 header_len, header           JSON: config, registry, block counts
//   u32 n_params
//   n_params × { str name, u8 trainable, u32 rank, rank × u64 dim }
//   payload                          float64 values, table order
//   u32 crc32                        over every preceding byte
std::vector<std::uint8_t> encode_checkpoint(const PolicyModel& model);
PolicyModel decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const PolicyModel& model, const std::string& path);
PolicyModel load_checkpoint(const std::string& path);

// SHA-256 of the encoded checkpoint; used to show evaluation is side-effect free.
std::string model_hash(const PolicyModel& model);

}  // namespace imanip::policy
