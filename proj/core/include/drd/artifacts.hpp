#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace drd {

// Reusing an artifact produced under a different configuration.
class HashMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An upstream artifact a stage needs does not exist.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ArtifactMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version = DRD_VERSION;
  std::string stage;
};

nlohmann::json to_json(const ArtifactMeta& meta);

// <artifact>.meta.json
std::filesystem::path meta_path(const std::filesystem::path& artifact);
// <artifact>.runtime.json, kept apart so the artifact bytes stay
// reproducible.
std::filesystem::path runtime_path(const std::filesystem::path& artifact);

void write_meta(const std::filesystem::path& artifact, const ArtifactMeta& meta);
std::optional<ArtifactMeta> read_meta(const std::filesystem::path& artifact);
void write_runtime(const std::filesystem::path& artifact, double seconds);

enum class CacheState { missing, hit, mismatch };

// hit: the artifact and its sidecar exist and carry `config_hash`.
CacheState cache_state(const std::filesystem::path& artifact, const std::string& config_hash);

// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace drd
