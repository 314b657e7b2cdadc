#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "recourse/explain.hpp"
#include "recourse/neural.hpp"
#include "recourse/surrogate.hpp"
#include "recourse/tabular.hpp"

namespace recourse {

/// Everything a pipeline run needs; relative paths resolve against the
/// config file's directory. RECOURSE_FORGE_DIR overrides artifacts_dir.
struct ProjectConfig {
  std::filesystem::path data;
  std::optional<std::filesystem::path> schema;  // fixed schema instead of inference
  std::filesystem::path artifacts_dir = "artifacts";
  SchemaHints hints;

  std::uint64_t seed = 7;
  std::vector<std::size_t> blackbox_hidden;
  TrainConfig blackbox_train;
  std::vector<std::size_t> encoder_hidden;
  std::size_t latent_dim = 2;
  TrainConfig autoencoder_train;

  SurrogateConfig surrogate;
  double sampler_scale = 3.0;
  std::uint64_t surrogate_seed = 8;

  ExplainRequest explain_defaults;

  static ProjectConfig load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});
  static ProjectConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                 std::optional<std::uint64_t> seed_override = {});
  void validate() const;

  std::filesystem::path manifest_path() const { return artifacts_dir / "manifest.json"; }
  std::filesystem::path bundle_path() const { return artifacts_dir / "bundle.json"; }
};

/// Exit codes: 0 success, 1 domain failure, 2 usage or I/O error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

int cmd_train(const ProjectConfig& config, std::ostream& out);
int cmd_fit(const ProjectConfig& config, std::ostream& out);

}  // namespace recourse
