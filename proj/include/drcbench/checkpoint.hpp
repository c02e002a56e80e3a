#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "drcbench/tensor.hpp"

namespace drc {

struct NamedTensor {
    std::string name;
    ad::Shape shape;
    std::vector<float> data;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "DRCW", u32 version, then per tensor: u32 name length, name bytes,
/// u32 rank, u32 dims..., float32 payload. Little-endian throughout.
void write_checkpoint(const std::vector<NamedTensor>& tensors, const std::filesystem::path& path);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace drc
