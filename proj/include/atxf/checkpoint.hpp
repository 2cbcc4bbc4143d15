#pragma once

// Checkpoint file layout:
//   "ATXF" | u16 version | u32 header length | UTF-8 JSON header |
//   float32 LE payloads in directory order | SHA-256 of the payload (32 bytes)
// All integers little-endian. The JSON header holds the model config,
// provenance, vocabulary fingerprint and the tensor directory
// (name, shape, byte offset into the payload).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "atxf/model.hpp"
#include "atxf/vocabulary.hpp"
#include "json.hpp"

namespace atxf {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Provenance {
    std::string domain;
    std::optional<std::string> source_domain;  // set for transfer-initialised runs

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct Checkpoint {
    std::string vocabulary_fingerprint;
    Provenance provenance;
    model::ModelParameters<float> parameters;

    const model::ModelConfig& config() const { return parameters.config(); }
    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

nlohmann::json to_json(const model::ModelConfig& config);
// Missing keys keep their defaults; unknown keys and wrong types throw ConfigError.
model::ModelConfig model_config_from_json(const nlohmann::json& j);

// Writes to a temporary sibling then renames. Throws IoError.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

// Throws CheckpointError for bad magic, unsupported version, malformed header,
// missing fingerprint, truncated payload or checksum mismatch; IoError if unreadable.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// As above, then refuses (TransferError) a checkpoint built over another vocabulary.
Checkpoint load_checkpoint(const std::filesystem::path& path, const Vocabulary& active);

// TransferError unless the checkpoint was trained with `active`.
void require_vocabulary(const Checkpoint& checkpoint, const Vocabulary& active);

}  // namespace atxf
