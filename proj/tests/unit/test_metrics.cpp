#include <doctest.h>

#include <cmath>

#include "../support/fixture.hpp"
#include "recourse/error.hpp"
#include "recourse/metrics.hpp"

using namespace recourse;

TEST_CASE("proximity examples") {
  const auto schema = fixture::continuous_schema(1, 0.0, 8.0);  // mad = 2
  const auto x = fixture::row({{"x1", 3.0}});
  CHECK(proximity(x, x, schema) == 0.0);
  CHECK(proximity(x, fixture::row({{"x1", 5.0}}), schema) == doctest::Approx(1.0));
  CHECK(proximity(x, fixture::row({{"x1", 3.0 + 1e-6}}), schema) == 0.0);

  FeatureSpec a, b;
  a.name = "a";
  a.kind = b.kind = FeatureKind::categorical;
  a.categories = b.categories = {"p", "q"};
  b.name = "b";
  const DatasetSchema cats({a, b}, "y", {"neg", "pos"});
  RawRow u, v;
  u.values = {{"a", std::string("p")}, {"b", std::string("q")}};
  v.values = {{"a", std::string("p")}, {"b", std::string("p")}};
  CHECK(proximity(u, v, cats) == doctest::Approx(0.5));

  // Two continuous features: sqrt(1^2 + 2^2).
  const auto two = fixture::continuous_schema(2, 0.0, 4.0);  // mad = 1
  CHECK(proximity(fixture::row({{"x1", 0.0}, {"x2", 0.0}}), fixture::row({{"x1", 1.0}, {"x2", 2.0}}), two) ==
        doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("aggregate arithmetic") {
  std::vector<CaseRecord> cases(4);
  for (std::size_t i = 0; i < 4; ++i) {
    cases[i].row_index = i;
    cases[i].valid = i != 2;
    cases[i].sparsity = i + 1;
    cases[i].proximity = 1.0 + static_cast<double>(i);
    cases[i].runtime_us = 10.0;
  }
  const auto r = EvalReport::aggregate(cases, {});
  CHECK(r.validity_pct == doctest::Approx(75.0));
  CHECK(r.n_valid == 3);
  CHECK(r.mean_sparsity == doctest::Approx((1 + 2 + 4) / 3.0));
  CHECK(r.mean_proximity == doctest::Approx((1 + 2 + 4) / 3.0));
  CHECK(r.mean_runtime_us == doctest::Approx(10.0));
  CHECK(r.consistent());

  for (auto& c : cases) c.valid = true;
  CHECK(EvalReport::aggregate(std::vector<CaseRecord>(cases.begin(), cases.end()), {}).validity_pct == 100.0);

  auto broken = r;
  broken.validity_pct = 80.0;
  CHECK_FALSE(broken.consistent());

  for (auto& c : cases) c.valid = false;
  const auto none = EvalReport::aggregate(cases, {});
  CHECK(none.validity_pct == 0.0);
  CHECK(none.to_json()["mean_proximity"].is_null());
}

TEST_CASE("evaluate on blobs") {
  const auto& p = fixture::blobs();
  const auto r = evaluate(p.bundle, p.test_rows, {});
  CHECK(r.validity_pct == 100.0);
  CHECK(r.mean_sparsity <= 2.0);
  CHECK(r.n_cases == p.test_rows.size());
  CHECK(r.consistent());
  CHECK(r.to_table().find("validity") != std::string::npos);
  CHECK_THROWS_AS(evaluate(p.bundle, {}, {}), PreconditionError);

  VariantConfig ce2;
  ce2.variant = Variant::ce2;
  const auto all = evaluate(p.bundle, p.test_rows, ce2);
  CHECK(all.n_cases == 2 * p.test_rows.size());
  CHECK(all.mean_sparsity == doctest::Approx(1.0));
  CHECK(all.consistent());
}

TEST_CASE("robustness: zero perturbation is fully robust, and runs repeat") {
  const auto& p = fixture::blobs();
  const std::vector<double> sweep{0.05, 0.1, 0.3};
  for (const auto& pt : evaluate_robustness(p.bundle, p.test_rows, sweep, 0.0, 3)) {
    CHECK(pt.n_valid > 0);
    CHECK(pt.robustness_pct == 100.0);
  }
  const std::vector<RawRow> one{p.test_rows.front()};
  const auto a = evaluate_robustness(p.bundle, one, sweep, 0.05, 9);
  const auto b = evaluate_robustness(p.bundle, one, sweep, 0.05, 9);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].to_json() == b[i].to_json());
  CHECK(robustness_table(a).find("0.3") != std::string::npos);
}
