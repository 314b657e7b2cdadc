#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "recourse/error.hpp"
#include "recourse/rng.hpp"
#include "recourse/tabular.hpp"

using namespace recourse;

namespace {

// Median by rank counting: the value(s) with at most half the sample on
// either side. Deliberately independent of sorting.
double rank_median(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<double> order;
  for (std::size_t k = 0; k < n; ++k) {
    for (double x : v) {
      std::size_t below = 0, equal = 0;
      for (double y : v) {
        below += y < x;
        equal += y == x;
      }
      if (below <= k && k < below + equal) {
        order.push_back(x);
        break;
      }
    }
  }
  return n % 2 ? order[n / 2] : 0.5 * (order[n / 2 - 1] + order[n / 2]);
}

double brute_mad(const std::vector<double>& v) {
  const double m = rank_median(v);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - m));
  return rank_median(dev);
}

}  // namespace

TEST_CASE("ingest: three-row example") {
  const auto data = ingest_csv_text("age,color,y\n20,r,0\n30,g,1\n40,r,0\n");
  const auto& s = data.schema;
  REQUIRE(s.size() == 2);
  const auto& age = s.feature("age");
  CHECK(age.kind == FeatureKind::continuous);
  CHECK(age.min == 20.0);
  CHECK(age.max == 40.0);
  CHECK(age.mad == 10.0);
  const auto& color = s.feature("color");
  CHECK(color.kind == FeatureKind::categorical);
  CHECK(color.categories == std::vector<std::string>{"g", "r"});
  CHECK(s.encoded_width() == 3);
  CHECK(s.target_name() == "y");
  CHECK(s.target_labels() == std::vector<std::string>{"0", "1"});
  CHECK(data.labels == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("ingest: errors name their location") {
  CHECK_THROWS_WITH_AS(ingest_csv_text(""), "empty file", ParseError);
  try {
    ingest_csv_text("age,y\n20,0\nbanana,1\n30,0\n40,1\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()) == "line 3, column 'age': cannot parse 'banana' as a number");
    CHECK(e.field() == "age");
  }
  SchemaHints hints;
  hints.target_name = "label";
  CHECK_THROWS_WITH_AS(ingest_csv_text("a,y\n1,0\n2,1\n", hints), "missing column 'label' (target)", ParseError);
  CHECK_THROWS_AS(ingest_csv_text("a,y\n1,0\n2,0\n"), ParseError);  // single label
}

TEST_CASE("ingest: hints override inference and fix category order") {
  SchemaHints hints;
  hints.features["code"].kind = FeatureKind::categorical;
  hints.features["code"].categories = {"3", "1", "2"};
  hints.features["age"].is_mutable = false;
  const auto data = ingest_csv_text("age,code,y\n20,1,a\n30,2,b\n40,3,a\n", hints);
  CHECK(data.schema.feature("code").categories == std::vector<std::string>{"3", "1", "2"});
  CHECK_FALSE(data.schema.feature("age").is_mutable);
  CHECK(data.schema.feature("code").is_mutable);
}

TEST_CASE("encode/decode examples") {
  const auto data = ingest_csv_text("age,color,y\n20,r,0\n30,g,1\n40,r,0\n");
  const auto& s = data.schema;
  RawRow r;
  r.values = {{"age", 30.0}, {"color", std::string("g")}};
  CHECK(encode(r, s).data == Vec{0.5, 1.0, 0.0});
  r.values["age"] = 20.0;
  CHECK(encode(r, s).data[0] == 0.0);
  r.values["age"] = 40.0;
  CHECK(encode(r, s).data[0] == 1.0);
  r.values["age"] = 55.0;  // out of range clamps
  CHECK(encode(r, s).data[0] == 1.0);

  CHECK(std::get<double>(decode({{0.5, 1.0, 0.0}}, s).values.at("age")) == 30.0);
  CHECK(std::get<std::string>(decode({{0.5, 0.2, 0.8}}, s).values.at("color")) == "r");
  CHECK(std::get<std::string>(decode({{0.5, 0.5, 0.5}}, s).values.at("color")) == "g");
  CHECK_THROWS_AS(decode({{0.5, 1.0}}, s), PreconditionError);

  r.values["color"] = std::string("blue");
  CHECK_THROWS_AS(encode(r, s), ParseError);
}

TEST_CASE("decode(encode(r)) round-trips every training row") {
  Rng rng(3);
  std::string text = "a,b,c,y\n";
  for (int i = 0; i < 100; ++i) {
    text += std::to_string(rng.uniform(-5, 5)) + "," + std::to_string(rng.uniform(0, 1000)) + "," +
            std::string(1, static_cast<char>('p' + rng.below(3))) + "," + std::to_string(rng.below(2)) + "\n";
  }
  const auto data = ingest_csv_text(text);
  for (const auto& r : data.rows) {
    const auto back = decode(encode(r, data.schema), data.schema);
    CHECK(l0_feature_diff(r, back, data.schema).count == 0);
  }
}

TEST_CASE("harden snaps a soft vector to a schema-valid hard one") {
  const auto data = ingest_csv_text("age,color,y\n20,r,0\n30,g,1\n40,r,0\n");
  const auto h = harden({{0.25, 0.4, 0.6}}, data.schema);
  CHECK(h.data == Vec{0.25, 0.0, 1.0});
}

TEST_CASE("l0_feature_diff") {
  const auto data = ingest_csv_text("age,color,y\n0,r,0\n1,g,1\n0.5,r,0\n");
  const auto& s = data.schema;
  RawRow a;
  a.values = {{"age", 0.30}, {"color", std::string("g")}};
  RawRow b = a;
  CHECK(l0_feature_diff(a, b, s).count == 0);
  CHECK(l0_feature_diff(a, b, s).changed.empty());
  b.values["color"] = std::string("r");
  const auto d = l0_feature_diff(a, b, s);
  CHECK(d.count == 1);
  CHECK(d.changed == std::vector<std::string>{"color"});
  b = a;
  b.values["age"] = 0.300001;
  CHECK(l0_feature_diff(a, b, s).count == 0);
  b.values["age"] = 0.31;
  CHECK(l0_feature_diff(a, b, s).changed == std::vector<std::string>{"age"});
}

TEST_CASE("MAD matches a rank-counting oracle on a random 100-row table") {
  Rng rng(11);
  for (int col = 0; col < 8; ++col) {
    std::vector<double> v;
    const std::size_t n = 100 - (col % 2);  // even and odd lengths
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so ties occur.
      v.push_back(col < 4 ? std::round(rng.uniform(0, 20)) : rng.normal() * (col + 1));
    }
    CHECK(median_absolute_deviation(v) == doctest::Approx(brute_mad(v)).epsilon(1e-12));
    CHECK(median(v) == doctest::Approx(rank_median(v)).epsilon(1e-12));
  }
  CHECK(median_absolute_deviation({4, 4, 4}) == 0.0);
}

TEST_CASE("mad divisor guards constant columns") {
  FeatureSpec f;
  f.min = 0;
  f.max = 10;
  f.mad = 0;
  CHECK(f.mad_divisor() == doctest::Approx(1e-5));
  f.max = 0;
  CHECK(f.mad_divisor() == 1e-12);
  f.mad = 2;
  CHECK(f.mad_divisor() == 2);
}

TEST_CASE("schema JSON round-trip and validation") {
  const auto data = ingest_csv_text("age,color,y\n20,r,0\n30,g,1\n40,r,0\n");
  const auto doc = data.schema.to_json();
  CHECK(doc.at("version") == kSchemaVersion);
  CHECK(doc.at("normalization") == "min-max");
  const auto back = DatasetSchema::from_json(doc);
  CHECK(back == data.schema);
  CHECK(back.to_json() == doc);

  FeatureSpec one_cat;
  one_cat.name = "c";
  one_cat.kind = FeatureKind::categorical;
  one_cat.categories = {"only"};
  CHECK_THROWS_AS(DatasetSchema({one_cat}, "y", {"a", "b"}), ParseError);
  FeatureSpec clash;
  clash.name = "y";
  CHECK_THROWS_AS(DatasetSchema({clash}, "y", {"a", "b"}), ParseError);
  FeatureSpec ok;
  ok.name = "x";
  CHECK_THROWS_AS(DatasetSchema({ok, ok}, "y", {"a", "b"}), ParseError);
}

TEST_CASE("validate_row and canonical_row") {
  const auto data = ingest_csv_text("age,color,y\n20,r,0\n30,g,1\n40,r,0\n");
  RawRow r;
  r.values = {{"age", std::string("25")}, {"color", std::string("g")}, {"extra", 1.0}};
  CHECK_NOTHROW(validate_row(r, data.schema));
  const auto c = canonical_row(r, data.schema);
  CHECK(std::get<double>(c.values.at("age")) == 25.0);
  CHECK(c.values.count("extra") == 0);
  r.values.erase("color");
  try {
    validate_row(r, data.schema);
    FAIL("expected failure");
  } catch (const ParseError& e) {
    CHECK(e.field() == "color");
  }
}

TEST_CASE("row JSON") {
  RawRow r;
  r.values = {{"a", 1.5}, {"b", std::string("x")}};
  CHECK(row_from_json(row_to_json(r)) == r);
  CHECK_THROWS_AS(row_from_json(nlohmann::json::parse(R"({"a": [1]})")), ParseError);
}
