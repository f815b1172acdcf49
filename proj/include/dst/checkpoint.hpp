#pragma once

#include "dst/model.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dst {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::size_t epochs = 0;
    double final_train_loss = 0.0;
    double best_val_loss = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::string> station_ids;
    /// One entry per training run that produced these weights, oldest first.
    std::vector<std::string> lineage;

    friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
    ModelParams params;
    CheckpointMeta meta;
};

/**
 * Binary layout, all integers little-endian:
 *
 *   "DSTTNCKP" | u32 version | u64 payload size | payload | u32 CRC-32
 *
 * The CRC covers every preceding byte. The payload holds the model config
 * and the metadata as length-prefixed key=value text, then a u32 tensor
 * count and per tensor: u32 name length, name, u32 rank, u64 dims, f64
 * values.
 */
[[nodiscard]] std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws IntegrityError on a bad magic, size or checksum and VersionError on an unknown version.
[[nodiscard]] Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Config as the key=value lines stored in checkpoints.
[[nodiscard]] std::string model_config_text(const ModelConfig& config);
[[nodiscard]] ModelConfig parse_model_config_text(const std::string& text);

}  // namespace dst
