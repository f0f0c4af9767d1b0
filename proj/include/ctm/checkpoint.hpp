#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "ctm/corpus.hpp"
#include "ctm/model.hpp"

namespace ctm {

inline constexpr std::string_view kCheckpointHeader = "ctm-ckpt-v1";

/// A trained model together with the vocabulary its columns index.
struct Checkpoint {
  TopicModel model;
  Vocabulary vocab;
};

/// First line is the version header, the rest a JSON document with config,
/// every parameter tensor and the batch-norm running statistics.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view text);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ctm
