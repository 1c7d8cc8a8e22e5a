#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rnncnn/adam.hpp"
#include "rnncnn/config.hpp"
#include "rnncnn/corpus.hpp"
#include "rnncnn/model.hpp"

namespace rnncnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Everything needed to encode with a model or to resume its training.
struct TrainState {
  TrainConfig config;
  Vocabulary vocab;
  Model<float> model;
  std::uint64_t step = 0;
  // One entry per model tensor; empty until the tensor is first updated.
  std::vector<std::optional<AdamState<float>>> adam;
  // Encoder input table of the frozen-encoder control.
  std::optional<Tensor<float>> frozen_embedding;
};

// Layout: "ASV1", u32 version, u32 length + key=value config text, tensor
// table [u32 name length, name, u32 rank, u32 dims..., f32 payload], then a
// CRC32 of every preceding byte. All integers and floats little-endian.
// Written to a temporary file and renamed into place.
void save_checkpoint(const TrainState& state, const std::string& path);

// Throws FormatError on a bad magic, VersionError on an unknown version and
// CorruptionError on checksum failure or truncation.
TrainState load_checkpoint(const std::string& path);

std::vector<std::uint8_t> serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::string& origin = "checkpoint");

}  // namespace rnncnn
