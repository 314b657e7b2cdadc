#include "recourse/artifacts.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <sstream>

#include "recourse/error.hpp"

namespace recourse {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr))
    throw Error("sha256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in || fs::is_directory(path)) throw ParseError("file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("cannot write " + path.string());
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

json read_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": invalid JSON: " + e.what());
  }
}

json ArtifactRef::to_json() const { return json{{"file", file}, {"sha256", sha256}}; }

ArtifactRef ArtifactRef::from_json(const json& doc, const std::string& what) {
  if (!doc.is_object() || !doc.contains("file") || !doc.contains("sha256"))
    throw ParseError(what + ": expected {file, sha256}", what);
  return {doc.at("file").get<std::string>(), doc.at("sha256").get<std::string>()};
}

void verify_artifact(const fs::path& dir, const ArtifactRef& ref, const std::string& what) {
  const std::string actual = sha256_hex(read_file(dir / ref.file));
  if (actual != ref.sha256)
    throw ArtifactMismatch("artifact mismatch: " + what + " (" + ref.file + ") has sha256 " + actual +
                           ", expected " + ref.sha256);
}

ArtifactRef save_model(const fs::path& dir, const std::string& file, json model, const std::string& schema_sha256,
                       const json& metadata) {
  model["schema_sha256"] = schema_sha256;
  model["metadata"] = metadata;
  const std::string text = dump_json(model);
  write_file(dir / file, text);
  return {file, sha256_hex(text)};
}

BlackBox load_blackbox(const fs::path& path) { return BlackBox::from_json(read_json_file(path)); }

Autoencoder load_autoencoder(const fs::path& path) { return Autoencoder::from_json(read_json_file(path)); }

json Manifest::to_json() const {
  return json{{"version", kManifestVersion},
              {"schema", schema.to_json()},
              {"blackbox", blackbox.to_json()},
              {"autoencoder", autoencoder.to_json()},
              {"test_rows", test_rows},
              {"metadata", metadata}};
}

Manifest Manifest::from_json(const json& doc) {
  if (!doc.is_object() || doc.value("version", 0) != kManifestVersion)
    throw ParseError("manifest: unsupported version", "version");
  const auto ref = [&](const char* key) {
    if (!doc.contains(key)) throw ParseError(std::string("manifest: missing ") + key, key);
    return ArtifactRef::from_json(doc.at(key), key);
  };
  Manifest m;
  m.schema = ref("schema");
  m.blackbox = ref("blackbox");
  m.autoencoder = ref("autoencoder");
  try {
    m.test_rows = doc.value("test_rows", std::string());
    m.metadata = doc.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

json fit_quality_table(const SurrogateBundle& bundle) {
  json rows = json::array();
  const auto add = [&](const Hyperplane& h) {
    rows.push_back(json{{"feature", h.kind == PlaneKind::prediction ? std::string("<prediction>") : h.feature},
                        {"positive", h.positive},
                        {"fit_quality", h.fit_quality},
                        {"converged", h.converged}});
  };
  add(bundle.prediction_plane);
  for (const auto& [name, planes] : bundle.feature_planes)
    for (const auto& h : planes) add(h);
  return rows;
}

void save_bundle(const fs::path& path, const SurrogateBundle& bundle, const Manifest& manifest) {
  json planes = json::object();
  for (const auto& [name, list] : bundle.feature_planes) {
    json arr = json::array();
    for (const auto& h : list) arr.push_back(h.to_json());
    planes[name] = std::move(arr);
  }
  const json doc{{"version", kBundleVersion},
                 {"kind", "surrogate-bundle"},
                 {"schema", manifest.schema.to_json()},
                 {"blackbox", manifest.blackbox.to_json()},
                 {"autoencoder", manifest.autoencoder.to_json()},
                 {"latent_dim", bundle.latent_dim()},
                 {"sample_count", bundle.sample_count},
                 {"seed", bundle.seed},
                 {"sampler", bundle.sampler.to_json()},
                 {"config", bundle.config.to_json()},
                 {"prediction_plane", bundle.prediction_plane.to_json()},
                 {"feature_planes", std::move(planes)},
                 {"fit_failures", bundle.fit_failures},
                 {"fit_quality", fit_quality_table(bundle)}};
  write_file(path, dump_json(doc));
}

SurrogateBundle load_bundle(const fs::path& path) {
  const json doc = read_json_file(path);
  if (!doc.is_object() || doc.value("kind", std::string()) != "surrogate-bundle")
    throw ParseError(path.string() + ": not a surrogate bundle");
  if (doc.value("version", 0) != kBundleVersion) throw ParseError(path.string() + ": unsupported bundle version");
  const fs::path dir = path.parent_path();
  try {
    const auto schema_ref = ArtifactRef::from_json(doc.at("schema"), "schema");
    const auto bb_ref = ArtifactRef::from_json(doc.at("blackbox"), "blackbox");
    const auto ae_ref = ArtifactRef::from_json(doc.at("autoencoder"), "autoencoder");
    verify_artifact(dir, schema_ref, "schema");
    verify_artifact(dir, bb_ref, "blackbox");
    verify_artifact(dir, ae_ref, "autoencoder");

    SurrogateBundle b;
    b.schema = DatasetSchema::from_json(read_json_file(dir / schema_ref.file));
    const json bb_doc = read_json_file(dir / bb_ref.file);
    const json ae_doc = read_json_file(dir / ae_ref.file);
    for (const json* m : {&bb_doc, &ae_doc})
      if (m->value("schema_sha256", std::string()) != schema_ref.sha256)
        throw ArtifactMismatch("artifact mismatch: model was trained against a different schema");
    auto bb = std::make_shared<BlackBox>(BlackBox::from_json(bb_doc));
    auto ae = std::make_shared<Autoencoder>(Autoencoder::from_json(ae_doc));
    if (bb->input_width() != b.schema.encoded_width() || ae->data_width() != b.schema.encoded_width())
      throw ArtifactMismatch("artifact mismatch: model width differs from schema");
    b.blackbox = std::move(bb);
    b.codec = std::move(ae);

    b.sample_count = doc.at("sample_count").get<std::size_t>();
    b.seed = doc.at("seed").get<std::uint64_t>();
    b.sampler = SamplerConfig::from_json(doc.at("sampler"));
    b.config = SurrogateConfig::from_json(doc.at("config"));
    b.prediction_plane = Hyperplane::from_json(doc.at("prediction_plane"));
    for (const auto& [name, arr] : doc.at("feature_planes").items()) {
      auto& list = b.feature_planes[name];
      for (const auto& h : arr) list.push_back(Hyperplane::from_json(h));
    }
    b.fit_failures = doc.at("fit_failures").get<std::map<std::string, std::string>>();
    for (const auto& [name, list] : b.feature_planes)
      for (const auto& h : list)
        if (h.normal.size() != b.latent_dim()) throw ParseError("bundle: plane width differs from latent size");
    return b;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": malformed bundle: " + e.what());
  }
}

}  // namespace recourse
