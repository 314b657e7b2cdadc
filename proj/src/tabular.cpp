#include "recourse/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "recourse/csv.hpp"
#include "recourse/error.hpp"

namespace recourse {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string kind_name(FeatureKind k) { return k == FeatureKind::continuous ? "continuous" : "categorical"; }

FeatureKind kind_from_name(const std::string& s) {
  if (s == "continuous") return FeatureKind::continuous;
  if (s == "categorical") return FeatureKind::categorical;
  throw ParseError("unknown feature kind '" + s + "'", "kind");
}

std::string cell_location(std::size_t line, const std::string& column) {
  return "line " + std::to_string(line) + ", column '" + column + "'";
}

Dataset build_dataset(const csv::Document& doc, const SchemaHints& hints) {
  if (doc.header.empty()) throw ParseError("empty file");
  if (doc.records.empty()) throw ParseError("empty file: header without data rows");

  const std::string target = hints.target_name.value_or(doc.header.back());
  std::optional<std::size_t> target_col;
  {
    std::set<std::string> seen;
    for (std::size_t c = 0; c < doc.header.size(); ++c) {
      if (!seen.insert(doc.header[c]).second) throw ParseError("duplicate column '" + doc.header[c] + "'", doc.header[c]);
      if (doc.header[c] == target) target_col = c;
    }
  }
  if (!target_col) throw ParseError("missing column '" + target + "' (target)", target);
  for (const auto& [name, hint] : hints.features) {
    if (std::find(doc.header.begin(), doc.header.end(), name) == doc.header.end())
      throw ParseError("missing column '" + name + "' named in schema hints", name);
  }

  const std::size_t n = doc.records.size();
  std::vector<FeatureSpec> specs;
  std::vector<std::size_t> columns;
  std::vector<std::vector<double>> numeric(doc.header.size());

  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    if (c == *target_col) continue;
    const std::string& name = doc.header[c];
    FeatureSpec spec;
    spec.name = name;
    const auto hint_it = hints.features.find(name);
    const FeatureHint* hint = hint_it == hints.features.end() ? nullptr : &hint_it->second;

    std::size_t non_numeric = 0;
    std::set<std::string> distinct;
    for (const auto& rec : doc.records) {
      if (!parse_number(rec[c])) ++non_numeric;
      distinct.insert(std::string(trim(rec[c])));
    }

    FeatureKind kind;
    if (hint && hint->kind) {
      kind = *hint->kind;
    } else if (hint && !hint->categories.empty()) {
      kind = FeatureKind::categorical;
    } else {
      const bool mostly_text = 2 * non_numeric > n;
      kind = (mostly_text && distinct.size() <= hints.max_categories) ? FeatureKind::categorical
                                                                       : FeatureKind::continuous;
    }
    spec.kind = kind;
    spec.is_mutable = hint && hint->is_mutable ? *hint->is_mutable : true;

    if (kind == FeatureKind::categorical) {
      if (hint && !hint->categories.empty()) {
        spec.categories = hint->categories;
        for (std::size_t r = 0; r < n; ++r) {
          const std::string v(trim(doc.records[r][c]));
          if (!spec.category_index(v))
            throw ParseError(cell_location(doc.lines[r], name) + ": unknown category '" + v + "'", name);
        }
      } else {
        spec.categories.assign(distinct.begin(), distinct.end());
      }
      if (spec.categories.size() < 2)
        throw ParseError("categorical column '" + name + "' has fewer than 2 categories", name);
    } else {
      auto& values = numeric[c];
      values.reserve(n);
      for (std::size_t r = 0; r < n; ++r) {
        auto v = parse_number(doc.records[r][c]);
        if (!v)
          throw ParseError(cell_location(doc.lines[r], name) + ": cannot parse '" + doc.records[r][c] +
                               "' as a number",
                           name);
        values.push_back(*v);
      }
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      spec.min = *lo;
      spec.max = *hi;
      spec.mad = median_absolute_deviation(values);
    }
    specs.push_back(std::move(spec));
    columns.push_back(c);
  }

  std::set<std::string> label_set;
  for (const auto& rec : doc.records) label_set.insert(std::string(trim(rec[*target_col])));
  std::vector<std::string> labels(label_set.begin(), label_set.end());
  if (labels.size() < 2) throw ParseError("target column '" + target + "' has fewer than 2 distinct labels", target);

  Dataset out{DatasetSchema(std::move(specs), target, labels), {}, {}};
  out.rows.reserve(n);
  out.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    RawRow row;
    for (std::size_t f = 0; f < out.schema.size(); ++f) {
      const auto& spec = out.schema.feature(f);
      const std::size_t c = columns[f];
      if (spec.is_categorical()) {
        row.values[spec.name] = std::string(trim(doc.records[r][c]));
      } else {
        row.values[spec.name] = numeric[c][r];
      }
    }
    out.rows.push_back(std::move(row));
    out.labels.push_back(*out.schema.label_index(trim(doc.records[r][*target_col])));
  }
  return out;
}

}  // namespace

double FeatureSpec::mad_divisor() const {
  return std::max({mad, 1e-6 * (max - min), 1e-12});
}

std::optional<std::size_t> FeatureSpec::category_index(std::string_view value) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == value) return i;
  return std::nullopt;
}

DatasetSchema::DatasetSchema(std::vector<FeatureSpec> features, std::string target_name,
                             std::vector<std::string> target_labels)
    : features_(std::move(features)), target_name_(std::move(target_name)), target_labels_(std::move(target_labels)) {
  if (features_.empty()) throw ParseError("schema has no features");
  if (target_labels_.size() < 2) throw ParseError("schema needs at least 2 target labels", "target_labels");
  std::set<std::string> names;
  for (const auto& f : features_) {
    if (f.name.empty()) throw ParseError("feature with empty name");
    if (f.name == target_name_) throw ParseError("feature '" + f.name + "' collides with the target name", f.name);
    if (!names.insert(f.name).second) throw ParseError("duplicate feature '" + f.name + "'", f.name);
    if (f.is_categorical()) {
      if (f.categories.size() < 2) throw ParseError("categorical feature '" + f.name + "' needs >= 2 categories", f.name);
      std::set<std::string> cats(f.categories.begin(), f.categories.end());
      if (cats.size() != f.categories.size()) throw ParseError("duplicate category in '" + f.name + "'", f.name);
    } else {
      if (!(f.min <= f.max)) throw ParseError("feature '" + f.name + "' has min > max", f.name);
      if (!(f.mad >= 0.0)) throw ParseError("feature '" + f.name + "' has negative mad", f.name);
    }
    offsets_.push_back(encoded_width_);
    encoded_width_ += f.width();
  }
  std::set<std::string> labels(target_labels_.begin(), target_labels_.end());
  if (labels.size() != target_labels_.size()) throw ParseError("duplicate target label", "target_labels");
}

const FeatureSpec& DatasetSchema::feature(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw ParseError("unknown feature '" + std::string(name) + "'", std::string(name));
  return features_[*idx];
}

std::optional<std::size_t> DatasetSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  return std::nullopt;
}

std::optional<std::size_t> DatasetSchema::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < target_labels_.size(); ++i)
    if (target_labels_[i] == label) return i;
  return std::nullopt;
}

std::vector<BlockSpan> DatasetSchema::block_layout() const {
  std::vector<BlockSpan> out;
  for (std::size_t i = 0; i < features_.size(); ++i)
    out.push_back({offsets_[i], features_[i].width(), features_[i].is_categorical()});
  return out;
}

bool DatasetSchema::operator==(const DatasetSchema& other) const { return to_json() == other.to_json(); }

nlohmann::json DatasetSchema::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features_) {
    nlohmann::json j{{"name", f.name}, {"kind", kind_name(f.kind)}, {"mutable", f.is_mutable}};
    if (f.is_categorical()) {
      j["categories"] = f.categories;
    } else {
      j["min"] = f.min;
      j["max"] = f.max;
      j["mad"] = f.mad;
    }
    feats.push_back(std::move(j));
  }
  return {{"version", kSchemaVersion},
          {"normalization", "min-max"},
          {"features", std::move(feats)},
          {"target_name", target_name_},
          {"target_labels", target_labels_},
          {"encoded_width", encoded_width_}};
}

DatasetSchema DatasetSchema::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("version").get<int>() != kSchemaVersion)
      throw ParseError("unsupported schema version " + doc.at("version").dump(), "version");
    std::vector<FeatureSpec> feats;
    for (const auto& j : doc.at("features")) {
      FeatureSpec f;
      f.name = j.at("name").get<std::string>();
      f.kind = kind_from_name(j.at("kind").get<std::string>());
      f.is_mutable = j.value("mutable", true);
      if (f.is_categorical()) {
        f.categories = j.at("categories").get<std::vector<std::string>>();
      } else {
        f.min = j.at("min").get<double>();
        f.max = j.at("max").get<double>();
        f.mad = j.at("mad").get<double>();
      }
      feats.push_back(std::move(f));
    }
    DatasetSchema schema(std::move(feats), doc.at("target_name").get<std::string>(),
                         doc.at("target_labels").get<std::vector<std::string>>());
    if (doc.contains("encoded_width") && doc["encoded_width"].get<std::size_t>() != schema.encoded_width())
      throw ParseError("encoded_width does not match features", "encoded_width");
    return schema;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed schema document: ") + e.what());
  }
}

SchemaHints SchemaHints::from_json(const nlohmann::json& doc) {
  SchemaHints hints;
  try {
    if (doc.contains("target_name")) hints.target_name = doc["target_name"].get<std::string>();
    hints.max_categories = doc.value("max_categories", kMaxInferredCategories);
    if (doc.contains("features")) {
      for (const auto& j : doc["features"]) {
        FeatureHint h;
        if (j.contains("kind")) h.kind = kind_from_name(j["kind"].get<std::string>());
        if (j.contains("categories")) h.categories = j["categories"].get<std::vector<std::string>>();
        if (j.contains("mutable")) h.is_mutable = j["mutable"].get<bool>();
        hints.features[j.at("name").get<std::string>()] = std::move(h);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed schema hints: ") + e.what());
  }
  return hints;
}

Dataset ingest_csv(const std::filesystem::path& path, const SchemaHints& hints) {
  return build_dataset(csv::read_file(path), hints);
}

Dataset ingest_csv_text(const std::string& text, const SchemaHints& hints) {
  return build_dataset(csv::parse(text), hints);
}

Dataset read_rows_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
  const auto doc = csv::read_file(path);
  if (doc.records.empty()) throw ParseError("empty file: no data rows in " + path.string());
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t c = 0; c < doc.header.size(); ++c)
      if (doc.header[c] == name) return c;
    return std::nullopt;
  };
  std::vector<std::size_t> cols;
  for (const auto& f : schema.features()) {
    auto c = column(f.name);
    if (!c) throw ParseError("missing column '" + f.name + "'", f.name);
    cols.push_back(*c);
  }
  const auto target_col = column(schema.target_name());

  Dataset out{schema, {}, {}};
  for (std::size_t r = 0; r < doc.records.size(); ++r) {
    RawRow row;
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const auto& spec = schema.feature(f);
      const std::string& cell = doc.records[r][cols[f]];
      if (spec.is_categorical()) {
        row.values[spec.name] = std::string(trim(cell));
      } else {
        auto v = parse_number(cell);
        if (!v)
          throw ParseError(cell_location(doc.lines[r], spec.name) + ": cannot parse '" + cell + "' as a number",
                           spec.name);
        row.values[spec.name] = *v;
      }
    }
    validate_row(row, schema);
    std::size_t label = std::numeric_limits<std::size_t>::max();
    if (target_col) {
      auto idx = schema.label_index(trim(doc.records[r][*target_col]));
      if (!idx)
        throw ParseError(cell_location(doc.lines[r], schema.target_name()) + ": unknown label '" +
                             doc.records[r][*target_col] + "'",
                         schema.target_name());
      label = *idx;
    }
    out.rows.push_back(std::move(row));
    out.labels.push_back(label);
  }
  return out;
}

void write_rows_csv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  std::vector<std::string> header;
  for (const auto& f : data.schema.features()) header.push_back(f.name);
  header.push_back(data.schema.target_name());
  out << csv::format_row(header) << '\n';
  for (std::size_t r = 0; r < data.rows.size(); ++r) {
    std::vector<std::string> fields;
    for (const auto& f : data.schema.features()) {
      const Value& v = data.rows[r].values.at(f.name);
      fields.push_back(std::holds_alternative<double>(v) ? format_number(std::get<double>(v))
                                                         : std::get<std::string>(v));
    }
    const std::size_t label = r < data.labels.size() ? data.labels[r] : std::numeric_limits<std::size_t>::max();
    fields.push_back(label < data.schema.target_labels().size() ? data.schema.target_labels()[label] : "");
    out << csv::format_row(fields) << '\n';
  }
}

void validate_row(const RawRow& row, const DatasetSchema& schema) {
  for (const auto& f : schema.features()) {
    auto it = row.values.find(f.name);
    if (it == row.values.end()) throw ParseError("missing feature '" + f.name + "'", f.name);
    if (f.is_categorical()) {
      const auto* s = std::get_if<std::string>(&it->second);
      std::string label = s ? *s : format_number(std::get<double>(it->second));
      if (!f.category_index(label))
        throw ParseError("unknown category '" + label + "' for feature '" + f.name + "'", f.name);
    } else {
      if (const auto* s = std::get_if<std::string>(&it->second)) {
        if (!parse_number(*s)) throw ParseError("feature '" + f.name + "' expects a number, got '" + *s + "'", f.name);
      } else if (!std::isfinite(std::get<double>(it->second))) {
        throw ParseError("feature '" + f.name + "' is not finite", f.name);
      }
    }
  }
}

namespace {

double continuous_of(const Value& v, const FeatureSpec& f) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  auto parsed = parse_number(std::get<std::string>(v));
  if (!parsed) throw ParseError("feature '" + f.name + "' expects a number", f.name);
  return *parsed;
}

std::size_t category_of(const Value& v, const FeatureSpec& f) {
  std::string label = std::holds_alternative<std::string>(v) ? std::get<std::string>(v) : format_number(std::get<double>(v));
  auto idx = f.category_index(label);
  if (!idx) throw ParseError("unknown category '" + label + "' for feature '" + f.name + "'", f.name);
  return *idx;
}

}  // namespace

RawRow canonical_row(const RawRow& row, const DatasetSchema& schema) {
  validate_row(row, schema);
  RawRow out;
  for (const auto& f : schema.features()) {
    const Value& v = row.values.at(f.name);
    if (f.is_categorical())
      out.values[f.name] = f.categories[category_of(v, f)];
    else
      out.values[f.name] = continuous_of(v, f);
  }
  return out;
}

double normalized_value(const FeatureSpec& spec, double raw) {
  const double range = spec.range();
  return range > 0.0 ? (raw - spec.min) / range : 0.0;
}

EncodedVector encode(const RawRow& row, const DatasetSchema& schema) {
  EncodedVector out{Vec(schema.encoded_width(), 0.0)};
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema.feature(i);
    auto it = row.values.find(f.name);
    if (it == row.values.end()) throw ParseError("missing feature '" + f.name + "'", f.name);
    const std::size_t off = schema.offset(i);
    if (f.is_categorical()) {
      out.data[off + category_of(it->second, f)] = 1.0;
    } else {
      out.data[off] = std::clamp(normalized_value(f, continuous_of(it->second, f)), 0.0, 1.0);
    }
  }
  return out;
}

RawRow decode(const EncodedVector& vec, const DatasetSchema& schema) {
  if (vec.size() != schema.encoded_width())
    throw PreconditionError("encoded vector has width " + std::to_string(vec.size()) + ", schema expects " +
                            std::to_string(schema.encoded_width()));
  RawRow row;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema.feature(i);
    const std::size_t off = schema.offset(i);
    if (f.is_categorical()) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < f.categories.size(); ++c)
        if (vec.data[off + c] > vec.data[off + best]) best = c;
      row.values[f.name] = f.categories[best];
    } else {
      row.values[f.name] = f.min + vec.data[off] * f.range();
    }
  }
  return row;
}

EncodedVector harden(const EncodedVector& vec, const DatasetSchema& schema) {
  return encode(decode(vec, schema), schema);
}

FeatureDiff l0_feature_diff(const RawRow& a, const RawRow& b, const DatasetSchema& schema, double tolerance) {
  FeatureDiff out;
  for (const auto& f : schema.features()) {
    const Value& va = a.values.at(f.name);
    const Value& vb = b.values.at(f.name);
    bool changed;
    if (f.is_categorical()) {
      changed = category_of(va, f) != category_of(vb, f);
    } else {
      const double diff = std::abs(continuous_of(va, f) - continuous_of(vb, f));
      const double range = f.range();
      changed = range > 0.0 ? diff / range > tolerance : diff > tolerance;
    }
    if (changed) {
      ++out.count;
      out.changed.push_back(f.name);
    }
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw PreconditionError("median of an empty column");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + mid);
  return 0.5 * (lower + upper);
}

double median_absolute_deviation(const std::vector<double>& values) {
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - m));
  return median(std::move(dev));
}

nlohmann::json row_to_json(const RawRow& row) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [name, value] : row.values) {
    if (const auto* d = std::get_if<double>(&value))
      out[name] = *d;
    else
      out[name] = std::get<std::string>(value);
  }
  return out;
}

RawRow row_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("row must be a JSON object", "row");
  RawRow row;
  for (const auto& [name, value] : doc.items()) {
    if (value.is_number())
      row.values[name] = value.get<double>();
    else if (value.is_string())
      row.values[name] = value.get<std::string>();
    else
      throw ParseError("row." + name + " must be a number or a string", "row." + name);
  }
  return row;
}

}  // namespace recourse
