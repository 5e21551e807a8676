#include "drd/artifacts.hpp"

#include <fstream>
#include <sstream>

#include "drd/types.hpp"

namespace drd {

nlohmann::json to_json(const ArtifactMeta& meta) {
  return {{"config_hash", meta.config_hash}, {"seed", meta.seed}, {"tool_version", meta.tool_version}, {"stage", meta.stage}};
}

std::filesystem::path meta_path(const std::filesystem::path& artifact) {
  return artifact.string() + ".meta.json";
}

std::filesystem::path runtime_path(const std::filesystem::path& artifact) {
  return artifact.string() + ".runtime.json";
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_meta(const std::filesystem::path& artifact, const ArtifactMeta& meta) {
  write_json_file(meta_path(artifact), to_json(meta));
}

std::optional<ArtifactMeta> read_meta(const std::filesystem::path& artifact) {
  auto path = meta_path(artifact);
  if (!std::filesystem::exists(path)) return std::nullopt;
  auto j = read_json_file(path);
  ArtifactMeta meta;
  meta.config_hash = j.value("config_hash", "");
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.tool_version = j.value("tool_version", "");
  meta.stage = j.value("stage", "");
  return meta;
}

void write_runtime(const std::filesystem::path& artifact, double seconds) {
  write_json_file(runtime_path(artifact), {{"seconds", seconds}});
}

CacheState cache_state(const std::filesystem::path& artifact, const std::string& config_hash) {
  if (!std::filesystem::exists(artifact)) return CacheState::missing;
  auto meta = read_meta(artifact);
  if (!meta || meta->config_hash != config_hash) return CacheState::mismatch;
  return CacheState::hit;
}

}  // namespace drd
