#include "recourse/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "recourse/artifacts.hpp"
#include "recourse/error.hpp"
#include "recourse/metrics.hpp"
#include "recourse/service.hpp"
#include "recourse/synthetic.hpp"

namespace recourse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& s, const std::string& flag) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError(flag + ": cannot parse '" + item + "' as a number", flag);
    }
  }
  if (out.empty()) throw ParseError(flag + ": expected at least one value", flag);
  return out;
}

std::vector<std::size_t> arch(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> a{in};
  a.insert(a.end(), hidden.begin(), hidden.end());
  a.push_back(out);
  return a;
}

Dataset load_data(const ProjectConfig& cfg) {
  if (cfg.schema) return read_rows_csv(cfg.data, DatasetSchema::from_json(read_json_file(*cfg.schema)));
  return ingest_csv(cfg.data, cfg.hints);
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& idx) {
  Dataset out{data.schema, {}, {}};
  for (std::size_t i : idx) {
    out.rows.push_back(data.rows[i]);
    out.labels.push_back(data.labels[i]);
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string value_text(const Value& v) {
  if (const auto* d = std::get_if<double>(&v)) return fixed(*d, 4);
  return std::get<std::string>(v);
}

}  // namespace

ProjectConfig ProjectConfig::from_json(const json& doc, const fs::path& base, std::optional<std::uint64_t> seed_override) {
  ProjectConfig c;
  try {
    if (!doc.is_object()) throw ParseError("config must be a JSON object");
    if (!doc.contains("data")) throw ParseError("config: missing 'data'", "data");
    c.data = resolve(base, doc.at("data").get<std::string>());
    if (doc.contains("schema")) c.schema = resolve(base, doc.at("schema").get<std::string>());
    c.artifacts_dir = resolve(base, doc.value("artifacts_dir", std::string("artifacts")));
    if (doc.contains("schema_hints")) c.hints = SchemaHints::from_json(doc.at("schema_hints"));

    c.seed = seed_override.value_or(doc.value("seed", c.seed));
    TrainConfig base_train;
    base_train.seed = c.seed;
    const json bb = doc.value("blackbox", json::object());
    c.blackbox_hidden = bb.value("hidden", std::vector<std::size_t>{});
    c.blackbox_train = TrainConfig::from_json(bb.value("train", json::object()), base_train);
    const json ae = doc.value("autoencoder", json::object());
    c.encoder_hidden = ae.value("hidden", std::vector<std::size_t>{});
    c.latent_dim = ae.value("latent_dim", c.latent_dim);
    c.autoencoder_train = TrainConfig::from_json(ae.value("train", json::object()), base_train);

    const json sur = doc.value("surrogate", json::object());
    c.surrogate = SurrogateConfig::from_json(sur);
    c.sampler_scale = sur.value("sampler_scale", c.sampler_scale);
    c.surrogate_seed = sur.value("seed", c.seed + 1);

    const json ex = doc.value("explain", json::object());
    c.explain_defaults.eps0 = ex.value("eps0", c.explain_defaults.eps0);
    c.explain_defaults.d_eps = ex.value("d_eps", c.explain_defaults.d_eps);
    c.explain_defaults.eps_max = ex.value("eps_max", c.explain_defaults.eps_max);
    c.explain_defaults.robust_margin_steps = ex.value("margin_steps", c.explain_defaults.robust_margin_steps);
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  if (seed_override) {
    c.blackbox_train.seed = c.autoencoder_train.seed = *seed_override;
    c.surrogate_seed = *seed_override + 1;
  }
  if (const char* dir = std::getenv("RECOURSE_FORGE_DIR"); dir && *dir) c.artifacts_dir = dir;
  c.validate();
  return c;
}

ProjectConfig ProjectConfig::load(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  return from_json(read_json_file(path), path.parent_path(), seed_override);
}

void ProjectConfig::validate() const {
  blackbox_train.validate();
  autoencoder_train.validate();
  if (latent_dim == 0) throw ParseError("autoencoder.latent_dim must be positive", "latent_dim");
  if (!(sampler_scale > 0.0)) throw ParseError("surrogate.sampler_scale must be positive", "sampler_scale");
  if (!(surrogate.lasso.lambda >= 0.0)) throw ParseError("surrogate.lasso.lambda must be >= 0", "lambda");
  if (!(surrogate.svm.c > 0.0)) throw ParseError("surrogate.svm.C must be positive", "C");
  if (!(explain_defaults.d_eps > 0.0)) throw ParseError("explain.d_eps must be positive", "d_eps");
  if (!(explain_defaults.eps_max > 0.0)) throw ParseError("explain.eps_max must be positive", "eps_max");
  for (std::size_t h : blackbox_hidden)
    if (h == 0) throw ParseError("blackbox.hidden widths must be positive", "hidden");
  for (std::size_t h : encoder_hidden)
    if (h == 0) throw ParseError("autoencoder.hidden widths must be positive", "hidden");
}

int cmd_train(const ProjectConfig& cfg, std::ostream& out) {
  const Dataset data = load_data(cfg);
  if (data.rows.empty()) throw PreconditionError("no rows in " + cfg.data.string());
  const DatasetSchema& schema = data.schema;

  std::vector<EncodedVector> x;
  for (const auto& r : data.rows) x.push_back(encode(r, schema));

  const auto bb_arch = arch(schema.encoded_width(), cfg.blackbox_hidden, schema.target_labels().size());
  const auto enc_arch = arch(schema.encoded_width(), cfg.encoder_hidden, cfg.latent_dim);
  const BlackBoxFit bb = train_blackbox(x, data.labels, bb_arch, cfg.blackbox_train);
  const AutoencoderFit ae = train_autoencoder(x, schema.block_layout(), enc_arch, cfg.autoencoder_train);

  const DataSplit split = split_indices(data.rows.size(), cfg.blackbox_train.split, cfg.blackbox_train.seed);
  const fs::path dir = cfg.artifacts_dir;
  fs::create_directories(dir);

  Manifest m;
  const std::string schema_text = dump_json(schema.to_json());
  write_file(dir / "schema.json", schema_text);
  m.schema = {"schema.json", sha256_hex(schema_text)};
  m.blackbox = save_model(dir, "blackbox.json", bb.model.to_json(), m.schema.sha256,
                          json{{"architecture", bb_arch}, {"train", cfg.blackbox_train.to_json()},
                               {"val_accuracy", bb.val_accuracy}});
  m.autoencoder = save_model(dir, "autoencoder.json", ae.model.to_json(), m.schema.sha256,
                             json{{"encoder_architecture", enc_arch}, {"train", cfg.autoencoder_train.to_json()},
                                  {"val_recon_loss", ae.recon_loss}});
  write_rows_csv(dir / "train.csv", subset(data, split.train));
  write_rows_csv(dir / "test.csv", subset(data, split.test));
  m.test_rows = "test.csv";
  m.metadata = json{{"data_sha256", sha256_hex(read_file(cfg.data))},
                    {"rows", data.rows.size()},
                    {"train_rows", split.train.size()},
                    {"val_rows", split.val.size()},
                    {"test_rows", split.test.size()},
                    {"seed", cfg.seed}};
  write_file(cfg.manifest_path(), dump_json(m.to_json()));

  out << "rows                " << data.rows.size() << " (train " << split.train.size() << ", val "
      << split.val.size() << ", test " << split.test.size() << ")\n";
  out << "blackbox val acc    " << fixed(bb.val_accuracy, 4) << "\n";
  out << "autoencoder val     " << fixed(ae.recon_loss, 6) << "\n";
  out << "blackbox.json       " << m.blackbox.sha256 << "\n";
  out << "autoencoder.json    " << m.autoencoder.sha256 << "\n";
  out << "manifest            " << cfg.manifest_path().string() << "\n";
  return 0;
}

int cmd_fit(const ProjectConfig& cfg, std::ostream& out) {
  const fs::path dir = cfg.artifacts_dir;
  const Manifest m = Manifest::from_json(read_json_file(cfg.manifest_path()));
  verify_artifact(dir, m.schema, "schema");
  verify_artifact(dir, m.blackbox, "blackbox");
  verify_artifact(dir, m.autoencoder, "autoencoder");

  const DatasetSchema schema = DatasetSchema::from_json(read_json_file(dir / m.schema.file));
  auto bb = std::make_shared<BlackBox>(load_blackbox(dir / m.blackbox.file));
  auto ae = std::make_shared<Autoencoder>(load_autoencoder(dir / m.autoencoder.file));
  const Dataset train = read_rows_csv(dir / "train.csv", schema);
  std::vector<EncodedVector> x;
  for (const auto& r : train.rows) x.push_back(encode(r, schema));

  const SamplerConfig sampler = SamplerConfig::from_data(*ae, x, cfg.sampler_scale);
  const SurrogateBundle bundle = build_surrogate(ae, bb, schema, sampler, cfg.surrogate, cfg.surrogate_seed);
  save_bundle(cfg.bundle_path(), bundle, m);

  char buf[160];
  std::snprintf(buf, sizeof buf, "%-20s %-12s %12s %10s\n", "plane", "positive", "fit_quality", "converged");
  out << buf;
  for (const auto& row : fit_quality_table(bundle)) {
    std::snprintf(buf, sizeof buf, "%-20s %-12s %12.4f %10s\n", row["feature"].get<std::string>().c_str(),
                  row["positive"].get<std::string>().c_str(), row["fit_quality"].get<double>(),
                  row["converged"].get<bool>() ? "yes" : "no");
    out << buf;
  }
  for (const auto& [feature, why] : bundle.fit_failures) out << "fit failed for " << feature << ": " << why << "\n";
  out << "samples             " << bundle.sample_count << "\n";
  out << "bundle              " << cfg.bundle_path().string() << "\n";
  return 0;
}

namespace {

struct Common {
  std::string config;
  std::string bundle;
  std::optional<std::uint64_t> seed;
};

// Bundle and explain defaults from --bundle or --config (or RECOURSE_FORGE_DIR).
std::pair<fs::path, ExplainRequest> locate_bundle(const Common& c) {
  if (!c.bundle.empty()) return {c.bundle, ExplainRequest{}};
  if (!c.config.empty()) {
    const auto cfg = ProjectConfig::load(c.config, c.seed);
    return {cfg.bundle_path(), cfg.explain_defaults};
  }
  if (const char* dir = std::getenv("RECOURSE_FORGE_DIR"); dir && *dir) return {fs::path(dir) / "bundle.json", {}};
  throw ParseError("pass --bundle or --config", "bundle");
}

struct VariantFlags {
  std::string variant = "ce1";
  std::string feature;
  std::string free;
  std::optional<double> eps0, eps_max;
  std::optional<std::size_t> margin;

  void add(CLI::App* app) {
    app->add_option("--variant", variant, "ce1, ce2 or ce3")->check(CLI::IsMember({"ce1", "ce2", "ce3"}, CLI::ignore_case));
    app->add_option("--feature", feature, "Target feature for ce2");
    app->add_option("--free", free, "Comma-separated features ce3 may change");
    app->add_option("--eps0", eps0, "Initial step");
    app->add_option("--eps-max", eps_max, "Line-search budget");
    app->add_option("--margin-steps", margin, "Extra steps past the first valid point");
  }

  // `all_features_ok`: evaluate runs ce2 over every mutable feature when none is named.
  void apply(ExplainRequest& req, const DatasetSchema& schema, bool all_features_ok = false) const {
    req.variant = variant_from(variant);
    if (req.variant == Variant::ce2) {
      if (feature.empty() && !all_features_ok) throw ParseError("--variant ce2 needs --feature", "feature");
      if (!feature.empty() && !schema.index_of(feature)) throw ParseError("unknown feature '" + feature + "'", "feature");
      req.target_feature = feature;
    }
    if (req.variant == Variant::ce3) {
      for (const auto& f : split_list(free)) {
        if (!schema.index_of(f)) throw ParseError("unknown feature '" + f + "'", "free");
        req.free_set.insert(f);
      }
      if (req.free_set.empty()) throw ParseError("--variant ce3 needs --free", "free");
    }
    if (eps0) req.eps0 = *eps0;
    if (eps_max) req.eps_max = *eps_max;
    if (margin) req.robust_margin_steps = *margin;
  }
};

std::string result_table(const ExplainResult& r, const RawRow& input, const DatasetSchema& schema) {
  std::ostringstream out;
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-20s %16s %16s\n", "feature", "input", "counterfactual");
  out << buf;
  const RawRow x = canonical_row(input, schema);
  for (const auto& f : schema.features()) {
    const bool changed = std::find(r.changed_features.begin(), r.changed_features.end(), f.name) !=
                         r.changed_features.end();
    const std::string cf = r.counterfactual ? value_text(r.counterfactual->values.at(f.name)) : "-";
    std::snprintf(buf, sizeof buf, "%-20s %16s %16s%s\n", f.name.c_str(), value_text(x.values.at(f.name)).c_str(),
                  cf.c_str(), changed ? "  *" : "");
    out << buf;
  }
  const auto& labels = schema.target_labels();
  out << "prediction           " << labels[r.diagnostics.original_label] << " -> "
      << (r.diagnostics.counterfactual_label ? labels[*r.diagnostics.counterfactual_label] : "-") << "\n";
  out << "valid                " << (r.valid ? "yes" : "no") << "\n";
  out << "sparsity             " << r.sparsity << "\n";
  out << "proximity            " << fixed(r.proximity, 4) << "\n";
  out << "steps                " << r.steps_taken << "\n";
  out << "elapsed_us           " << r.elapsed_us << "\n";
  return out.str();
}

int run_explain(const Common& common, const VariantFlags& vf, const std::string& row_json, const std::string& csv,
                std::optional<std::size_t> index, std::optional<double> d_eps, bool table, std::ostream& out) {
  auto [bundle_path, defaults] = locate_bundle(common);
  const SurrogateBundle bundle = load_bundle(bundle_path);

  ExplainRequest req = defaults;
  if (!row_json.empty()) {
    json doc;
    try {
      doc = json::parse(row_json);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("--row: invalid JSON: ") + e.what(), "row");
    }
    req.row = row_from_json(doc);
  } else {
    if (!index) throw ParseError("pass --row or --index", "row");
    fs::path source = csv;
    if (source.empty()) {
      const Manifest m = Manifest::from_json(read_json_file(bundle_path.parent_path() / "manifest.json"));
      source = bundle_path.parent_path() / m.test_rows;
    }
    const Dataset rows = read_rows_csv(source, bundle.schema);
    if (*index >= rows.rows.size())
      throw ParseError("--index " + std::to_string(*index) + " out of range (" + std::to_string(rows.rows.size()) +
                           " rows)",
                       "index");
    req.row = rows.rows[*index];
  }
  vf.apply(req, bundle.schema);
  if (d_eps) req.d_eps = *d_eps;
  if (common.seed) req.seed = *common.seed;

  const ExplainResult r = explain(bundle, req);
  if (table)
    out << result_table(r, req.row, bundle.schema);
  else
    out << r.to_json().dump(2) << "\n";
  return r.valid ? 0 : 1;
}

struct EvalFlags {
  std::string test;
  std::string d_eps;
  std::size_t repeats = 1;
  std::optional<std::size_t> limit;
  bool robustness = false;
  double perturb_scale = 0.05;
  std::string per_case_csv;
};

json mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
  return json{{"mean", mean}, {"std", sd}};
}

int run_evaluate(const Common& common, const VariantFlags& vf, const EvalFlags& ef, bool table, std::ostream& out) {
  auto [bundle_path, defaults] = locate_bundle(common);
  const SurrogateBundle bundle = load_bundle(bundle_path);
  fs::path source = ef.test;
  if (source.empty()) {
    const Manifest m = Manifest::from_json(read_json_file(bundle_path.parent_path() / "manifest.json"));
    source = bundle_path.parent_path() / m.test_rows;
  }
  Dataset data = read_rows_csv(source, bundle.schema);
  if (data.rows.empty()) throw PreconditionError("no test rows in " + source.string());
  if (ef.limit && *ef.limit < data.rows.size()) data.rows.resize(*ef.limit);
  if (ef.repeats == 0) throw ParseError("--repeats must be at least 1", "repeats");

  ExplainRequest proto = defaults;
  proto.row = data.rows.front();
  vf.apply(proto, bundle.schema, true);
  const std::vector<double> d_list =
      ef.d_eps.empty() ? std::vector<double>{defaults.d_eps} : parse_doubles(ef.d_eps, "--d-eps");
  const std::uint64_t seed = common.seed.value_or(0);

  VariantConfig vc;
  vc.variant = proto.variant;
  vc.feature = proto.target_feature;
  vc.free_set = proto.free_set;
  vc.eps0 = proto.eps0;
  vc.eps_max = proto.eps_max;
  vc.margin_steps = proto.robust_margin_steps;

  if (ef.robustness) {
    std::vector<std::vector<RobustnessPoint>> runs;
    for (std::size_t r = 0; r < ef.repeats; ++r)
      runs.push_back(evaluate_robustness(bundle, data.rows, d_list, ef.perturb_scale, seed + r, vc));
    if (table) {
      for (std::size_t r = 0; r < runs.size(); ++r) {
        if (runs.size() > 1) out << "# run " << r << " (seed " << seed + r << ")\n";
        out << robustness_table(runs[r]);
      }
    } else {
      json doc{{"perturb_scale", ef.perturb_scale}, {"runs", json::array()}};
      for (const auto& run : runs) {
        json pts = json::array();
        for (const auto& p : run) pts.push_back(p.to_json());
        doc["runs"].push_back(std::move(pts));
      }
      if (runs.size() > 1) {
        json summary = json::array();
        for (std::size_t k = 0; k < d_list.size(); ++k) {
          std::vector<double> rob, prox;
          for (const auto& run : runs) {
            rob.push_back(run[k].robustness_pct);
            prox.push_back(run[k].mean_proximity);
          }
          summary.push_back(json{{"d_eps", d_list[k]}, {"robustness_pct", mean_std(rob)}, {"mean_proximity", mean_std(prox)}});
        }
        doc["summary"] = std::move(summary);
      }
      out << doc.dump(2) << "\n";
    }
    return 0;
  }

  json all = json::array();
  for (double d : d_list) {
    std::vector<EvalReport> reports;
    for (std::size_t r = 0; r < ef.repeats; ++r) {
      VariantConfig cfg = vc;
      cfg.d_eps = d;
      cfg.seed = seed + r;
      reports.push_back(evaluate(bundle, data.rows, cfg));
    }
    if (!ef.per_case_csv.empty()) write_file(ef.per_case_csv, reports.front().per_case_csv());
    if (reports.size() == 1) {
      if (table)
        out << reports.front().to_table();
      else
        all.push_back(reports.front().to_json());
      continue;
    }
    std::vector<double> validity, sparsity, prox, runtime;
    for (const auto& rep : reports) {
      validity.push_back(rep.validity_pct);
      sparsity.push_back(rep.mean_sparsity);
      prox.push_back(rep.mean_proximity);
      runtime.push_back(rep.mean_runtime_us);
    }
    const json summary{{"d_eps", d},
                       {"repeats", reports.size()},
                       {"validity_pct", mean_std(validity)},
                       {"mean_sparsity", mean_std(sparsity)},
                       {"mean_proximity", mean_std(prox)},
                       {"mean_runtime_us", mean_std(runtime)}};
    if (table) {
      out << "variant " << variant_name(vc.variant) << "  d_eps " << fixed(d, 3) << "  repeats " << reports.size()
          << "\n";
      for (const char* key : {"validity_pct", "mean_sparsity", "mean_proximity", "mean_runtime_us"}) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-18s %.4f ± %.4f\n", key, summary[key]["mean"].get<double>(),
                      summary[key]["std"].get<double>());
        out << buf;
      }
    } else {
      all.push_back(summary);
    }
  }
  if (!table) out << (all.size() == 1 ? all.front() : all).dump(2) << "\n";
  return 0;
}

int guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ArtifactMismatch& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConstraintError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Counterfactual explanations from autoencoder latent-space hyperplanes", "recourse-forge"};
  app.require_subcommand(1);
  Common common;
  bool as_json = false, as_table = false;

  const auto add_common = [&](CLI::App* sub, bool bundle) {
    sub->add_option("--config", common.config, "Project config JSON");
    if (bundle) sub->add_option("--bundle", common.bundle, "Surrogate bundle JSON");
    sub->add_option("--seed", common.seed, "Seed override");
  };
  const auto add_format = [&](CLI::App* sub) {
    auto* j = sub->add_flag("--json", as_json, "JSON output (default)");
    auto* t = sub->add_flag("--table", as_table, "Plain-text table output");
    j->excludes(t);
  };

  auto* train = app.add_subcommand("train", "Train the black box and autoencoder");
  add_common(train, false);
  train->get_option("--config")->required();
  auto* fit = app.add_subcommand("fit", "Sample the latent space and fit hyperplanes");
  add_common(fit, false);
  fit->get_option("--config")->required();

  VariantFlags vf;
  std::string row_json, csv_path;
  std::optional<std::size_t> index;
  std::optional<double> d_eps_one;
  auto* expl = app.add_subcommand("explain", "Explain one row");
  add_common(expl, true);
  add_format(expl);
  vf.add(expl);
  expl->add_option("--row", row_json, "Input row as a JSON object");
  expl->add_option("--csv", csv_path, "CSV to take the row from (default: the held-out test rows)");
  expl->add_option("--index", index, "0-based row index into the CSV");
  expl->add_option("--d-eps", d_eps_one, "Line-search step");

  EvalFlags ef;
  auto* eval = app.add_subcommand("evaluate", "Validity, sparsity, proximity, runtime and robustness");
  add_common(eval, true);
  add_format(eval);
  eval->add_option("--variant", vf.variant)->check(CLI::IsMember({"ce1", "ce2", "ce3"}, CLI::ignore_case));
  eval->add_option("--feature", vf.feature, "Target feature for ce2 (default: every mutable feature)");
  eval->add_option("--free", vf.free, "Comma-separated features ce3 may change");
  eval->add_option("--eps0", vf.eps0);
  eval->add_option("--eps-max", vf.eps_max);
  eval->add_option("--margin-steps", vf.margin);
  eval->add_option("--test", ef.test, "Test CSV (default: the held-out test rows)");
  eval->add_option("--d-eps", ef.d_eps, "Step size, or a comma-separated sweep");
  eval->add_option("--repeats", ef.repeats, "Runs with consecutive seeds; reports mean ± stddev");
  eval->add_option("--limit", ef.limit, "Use only the first N rows");
  eval->add_flag("--robustness", ef.robustness, "Robustness sweep instead of the standard metrics");
  eval->add_option("--perturb-scale", ef.perturb_scale, "Input perturbation, normalized units");
  eval->add_option("--per-case-csv", ef.per_case_csv, "Write per-row records");

  ServiceOptions so;
  auto* serve = app.add_subcommand("serve", "HTTP service");
  add_common(serve, true);
  serve->add_option("--port", so.port, "Listen port");
  serve->add_option("--host", so.host, "Listen address");
  serve->add_option("--workers", so.workers, "Handler threads");

  std::size_t synth_rows = 500;
  double synth_margin = 0.5;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write the two-blob demo dataset");
  synth->add_option("--rows", synth_rows);
  synth->add_option("--margin", synth_margin);
  synth->add_option("--seed", common.seed);
  synth->add_option("--out", synth_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  const bool table = as_table && !as_json;

  return guarded(
      [&]() -> int {
        if (*train) return cmd_train(ProjectConfig::load(common.config, common.seed), out);
        if (*fit) return cmd_fit(ProjectConfig::load(common.config, common.seed), out);
        if (*expl) return run_explain(common, vf, row_json, csv_path, index, d_eps_one, table, out);
        if (*eval) return run_evaluate(common, vf, ef, table, out);
        if (*synth) {
          write_file(synth_out, make_blobs_csv(synth_rows, common.seed.value_or(1), synth_margin));
          out << "wrote " << synth_rows << " rows to " << synth_out << "\n";
          return 0;
        }
        if (*serve) {
          auto [bundle_path, defaults] = locate_bundle(common);
          so.defaults = defaults;
          ExplainService service(so);
          service.load(bundle_path);
          out << "listening on " << so.host << ":" << so.port << std::endl;
          service.serve();
          return 0;
        }
        return 2;
      },
      err);
}

}  // namespace recourse
