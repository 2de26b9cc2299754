#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ladder/model.hpp"

namespace ladder {

/// Version this build writes and accepts.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A model restored from disk together with its token inventories, which the
/// CLI needs to encode fresh data against the same indices.
struct CheckpointData {
  LadderModel model;
  std::vector<std::string> vocab;   // input tokens in index order
  std::vector<std::string> labels;  // target labels in index order
};

/// Binary model snapshot:
///   magic "LDDR" | u32 version | u64 header length | UTF-8 header |
///   per tensor: u64 element count, elements as little-endian float64.
/// The header is key=value lines carrying the model config, vocab, labels,
/// and an ordered tensor manifest with shapes; the payload follows the
/// manifest order exactly, so a round trip is bit-exact. Tokens must be
/// whitespace-free (the generators and loader guarantee it); offending
/// tokens → ContractError, as do inventory sizes that contradict the model.
void save_checkpoint(const LadderModel& model, const std::vector<std::string>& vocab,
                     const std::vector<std::string>& labels, const std::string& path);

/// Restores a checkpoint, validating magic, version, header consistency,
/// manifest shapes, and payload lengths. Truncated or malformed files raise
/// FormatError naming the byte offset; a version this build does not read
/// raises VersionError.
CheckpointData load_checkpoint(const std::string& path);

}  // namespace ladder
