#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "upix/model/model.hpp"

namespace upix {

// Malformed or inconsistent file contents (bad magic, version, truncation, shapes).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char checkpoint_magic[4] = {'U', 'P', 'I', 'X'};
inline constexpr std::uint32_t checkpoint_version = 1;

// Layout (all integers and floats little-endian):
//   "UPIX" u32 version
//   config: u32 layers dim heads mlp_ratio patch channels vocab cond_stride split[3], f64 rope_base
//   u32 tensor count, then per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank], f64 payload
std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const ParamTree& params);
std::pair<ModelConfig, ParamTree> parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamTree& params);
std::pair<ModelConfig, ParamTree> load_checkpoint(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace upix
