#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "recourse/linalg.hpp"

namespace recourse {

/// Continuous values closer than this (in min-max normalized units) are
/// treated as unchanged when counting changed features.
inline constexpr double kEqualityTolerance = 1e-4;

/// Hint-free ingestion treats a mostly non-numeric column with at most this
/// many distinct values as categorical.
inline constexpr std::size_t kMaxInferredCategories = 20;

inline constexpr int kSchemaVersion = 1;

enum class FeatureKind { continuous, categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> categories;  // categorical only
  double min = 0.0;                     // continuous only
  double max = 0.0;
  double mad = 0.0;
  bool is_mutable = true;

  bool is_categorical() const { return kind == FeatureKind::categorical; }
  std::size_t width() const { return is_categorical() ? categories.size() : 1; }
  double range() const { return max - min; }
  /// Divisor used by proximity; never zero even for constant columns.
  double mad_divisor() const;
  std::optional<std::size_t> category_index(std::string_view value) const;
};

/// One contiguous run of encoded slots with a shared output activation.
struct BlockSpan {
  std::size_t offset = 0;
  std::size_t width = 0;
  bool categorical = false;
};

class DatasetSchema {
 public:
  DatasetSchema() = default;
  /// Validates every invariant and throws ParseError on violation.
  DatasetSchema(std::vector<FeatureSpec> features, std::string target_name,
                std::vector<std::string> target_labels);

  const std::vector<FeatureSpec>& features() const { return features_; }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  const FeatureSpec& feature(std::string_view name) const;
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::size_t size() const { return features_.size(); }

  const std::string& target_name() const { return target_name_; }
  const std::vector<std::string>& target_labels() const { return target_labels_; }
  std::optional<std::size_t> label_index(std::string_view label) const;

  std::size_t encoded_width() const { return encoded_width_; }
  std::size_t offset(std::size_t feature) const { return offsets_.at(feature); }
  std::vector<BlockSpan> block_layout() const;

  nlohmann::json to_json() const;
  static DatasetSchema from_json(const nlohmann::json& doc);

  bool operator==(const DatasetSchema& other) const;

 private:
  std::vector<FeatureSpec> features_;
  std::string target_name_;
  std::vector<std::string> target_labels_;
  std::vector<std::size_t> offsets_;
  std::size_t encoded_width_ = 0;
};

using Value = std::variant<double, std::string>;

struct RawRow {
  std::map<std::string, Value> values;

  bool operator==(const RawRow&) const = default;
};

/// Model-space image of a row: continuous slots in [0,1], one block per
/// categorical feature.
struct EncodedVector {
  Vec data;

  std::size_t size() const { return data.size(); }
  bool operator==(const EncodedVector&) const = default;
};

/// Per-column overrides for ingestion.
struct FeatureHint {
  std::optional<FeatureKind> kind;
  std::vector<std::string> categories;  // fixes category order when non-empty
  std::optional<bool> is_mutable;
};

struct SchemaHints {
  std::optional<std::string> target_name;  // default: last column
  std::map<std::string, FeatureHint> features;
  std::size_t max_categories = kMaxInferredCategories;

  static SchemaHints from_json(const nlohmann::json& doc);
};

struct Dataset {
  DatasetSchema schema;
  std::vector<RawRow> rows;
  std::vector<std::size_t> labels;  // index into schema.target_labels()
};

/// Reads a CSV, infers the schema and computes min/max/MAD per continuous column.
Dataset ingest_csv(const std::filesystem::path& path, const SchemaHints& hints = {});
Dataset ingest_csv_text(const std::string& text, const SchemaHints& hints = {});

/// Reads rows against an existing schema (no inference). The target column
/// is optional; rows without it get label SIZE_MAX.
Dataset read_rows_csv(const std::filesystem::path& path, const DatasetSchema& schema);
void write_rows_csv(const std::filesystem::path& path, const Dataset& data);

EncodedVector encode(const RawRow& row, const DatasetSchema& schema);
RawRow decode(const EncodedVector& vec, const DatasetSchema& schema);
/// Snaps a soft vector onto a schema-valid hard vector: encode(decode(v)).
EncodedVector harden(const EncodedVector& vec, const DatasetSchema& schema);

/// Value of one continuous feature in normalized units (no clamping).
double normalized_value(const FeatureSpec& spec, double raw);

struct FeatureDiff {
  std::size_t count = 0;
  std::vector<std::string> changed;
};

FeatureDiff l0_feature_diff(const RawRow& a, const RawRow& b, const DatasetSchema& schema,
                            double tolerance = kEqualityTolerance);

/// Schema features only, continuous values as numbers, categories as their labels.
RawRow canonical_row(const RawRow& row, const DatasetSchema& schema);

/// Checks that every schema feature is present with a usable value.
void validate_row(const RawRow& row, const DatasetSchema& schema);

double median(std::vector<double> values);
double median_absolute_deviation(const std::vector<double>& values);

nlohmann::json row_to_json(const RawRow& row);
RawRow row_from_json(const nlohmann::json& doc);

}  // namespace recourse
