#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace calica::nn {

/// One named float32 buffer of a checkpoint. Reserved "config/..." entries
/// carry the model configuration so a checkpoint is self-describing.
struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;

    bool operator==(const CheckpointEntry&) const = default;
};

/// Binary layout (little-endian): magic "CALICA01", uint32 entry count,
/// then per entry: uint32 name length + bytes, uint32 rank + int32 dims,
/// float32 values (count = product of dims). Round-trips bit-exactly.
std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::vector<CheckpointEntry>& entries,
                     const std::filesystem::path& path);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

}  // namespace calica::nn
