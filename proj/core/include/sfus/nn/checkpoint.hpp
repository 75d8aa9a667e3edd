#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfus/nn/autograd.hpp"

namespace sfus::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameter file layout (all integers little-endian):
///   "SFUS" | u32 version | repeated { u32 name_len | name | u32 rank |
///   u64 dims[rank] | f32 payload[prod(dims)] }
/// Metadata travels as entries named "meta:<key>=<value>" with dims [0].
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> meta;

  const Tensor* find(const std::string& name) const;
};

Checkpoint make_checkpoint(const ParameterSet& params,
                           std::map<std::string, std::string> meta = {});
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every tensor of `ckpt` into `params`; names and shapes must match
/// exactly and no parameter may be left unset.
void load_parameters(ParameterSet& params, const Checkpoint& ckpt);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

}  // namespace sfus::nn
