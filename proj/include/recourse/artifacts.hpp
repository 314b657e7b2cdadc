#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "recourse/neural.hpp"
#include "recourse/surrogate.hpp"

namespace recourse {

inline constexpr int kManifestVersion = 1;
inline constexpr int kBundleVersion = 1;

std::string sha256_hex(std::string_view bytes);

/// Whole file as bytes; ParseError "file not found: <path>" when absent.
std::string read_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// Stable serialization used for every artifact: two-space indent, trailing newline.
std::string dump_json(const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// A file next to the manifest/bundle, bound by content hash.
struct ArtifactRef {
  std::string file;  // relative to the referencing document
  std::string sha256;

  nlohmann::json to_json() const;
  static ArtifactRef from_json(const nlohmann::json& doc, const std::string& what);
};

/// Hash of `dir / ref.file`; throws ArtifactMismatch when it differs from ref.sha256.
void verify_artifact(const std::filesystem::path& dir, const ArtifactRef& ref, const std::string& what);

/// Writes the model document with schema hash and metadata; returns the ref.
ArtifactRef save_model(const std::filesystem::path& dir, const std::string& file, nlohmann::json model,
                       const std::string& schema_sha256, const nlohmann::json& metadata);

BlackBox load_blackbox(const std::filesystem::path& path);
Autoencoder load_autoencoder(const std::filesystem::path& path);

struct Manifest {
  ArtifactRef schema;
  ArtifactRef blackbox;
  ArtifactRef autoencoder;
  std::string test_rows;  // CSV of held-out rows, may be empty
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  static Manifest from_json(const nlohmann::json& doc);
};

/// Writes a bundle bound to the manifest's model hashes.
void save_bundle(const std::filesystem::path& path, const SurrogateBundle& bundle, const Manifest& manifest);

/// Loads a bundle and the models it names, refusing with ArtifactMismatch
/// when any model or schema file no longer matches its recorded hash.
SurrogateBundle load_bundle(const std::filesystem::path& path);

/// Plane summary for reports: feature, kind, positive class, fit quality.
nlohmann::json fit_quality_table(const SurrogateBundle& bundle);

}  // namespace recourse
