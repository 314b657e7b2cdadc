#include <doctest.h>

#include <cmath>

#include "../support/fixture.hpp"
#include "recourse/error.hpp"
#include "recourse/rng.hpp"

using namespace recourse;

namespace {

// Proximal gradient (ISTA) on the same objective, written independently of
// the coordinate-descent solver: fit rows are those with i % 5 != 4.
double ista_objective(const std::vector<Vec>& z, const Vec& t, double lambda) {
  const std::size_t d = z.front().size();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (i % 5 != 4) rows.push_back(i);
  const double m = static_cast<double>(rows.size());
  // Lipschitz bound of the smooth part over (w, b): largest eigenvalue of
  // (1/m) [Z 1]^T [Z 1] is at most its trace.
  double L = 1.0;
  for (std::size_t r : rows)
    for (double v : z[r]) L += v * v / m;
  Vec w(d, 0.0);
  double b = 0.0;
  const auto objective = [&](const Vec& ww, double bb) {
    double sq = 0.0, l1 = 0.0;
    for (std::size_t r : rows) {
      double e = bb - t[r];
      for (std::size_t j = 0; j < d; ++j) e += ww[j] * z[r][j];
      sq += e * e;
    }
    for (double v : ww) l1 += std::abs(v);
    return sq / (2 * m) + lambda * l1;
  };
  for (int it = 0; it < 200000; ++it) {
    Vec gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t r : rows) {
      double e = b - t[r];
      for (std::size_t j = 0; j < d; ++j) e += w[j] * z[r][j];
      for (std::size_t j = 0; j < d; ++j) gw[j] += e * z[r][j] / m;
      gb += e / m;
    }
    double moved = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = w[j] - gw[j] / L;
      const double next = std::copysign(std::max(0.0, std::abs(v) - lambda / L), v);
      moved = std::max(moved, std::abs(next - w[j]));
      w[j] = next;
    }
    b -= gb / L;
    moved = std::max(moved, std::abs(gb / L));
    if (moved < 1e-13) break;
  }
  return objective(w, b);
}

std::vector<Vec> random_points(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<Vec> z(n, Vec(d));
  for (auto& p : z)
    for (double& v : p) v = rng.normal();
  return z;
}

}  // namespace

TEST_CASE("lasso: noiseless recovery at lambda 0") {
  Rng rng(1);
  const auto z = random_points(rng, 200, 2);
  Vec t;
  for (const auto& p : z) t.push_back(2 * p[0] - p[1] + 0.5);
  LassoConfig cfg;
  cfg.lambda = 0.0;
  cfg.tol = 1e-12;
  const auto h = fit_lasso(z, t, cfg);
  CHECK(h.converged);
  CHECK(h.normal[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(h.normal[1] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(h.offset == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(h.fit_quality == doctest::Approx(1.0));
}

TEST_CASE("lasso: large lambda shrinks to the mean") {
  Rng rng(2);
  const auto z = random_points(rng, 100, 3);
  Vec t;
  for (const auto& p : z) t.push_back(p[0] + 3.0 + 0.1 * rng.normal());
  LassoConfig cfg;
  cfg.lambda = 100.0;
  const auto h = fit_lasso(z, t, cfg);
  CHECK(h.normal == Vec{0.0, 0.0, 0.0});
  double mean = 0.0, m = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!is_holdout(i)) {
      mean += t[i];
      ++m;
    }
  CHECK(h.offset == doctest::Approx(mean / m).epsilon(1e-12));
  CHECK(h.degenerate());
}

TEST_CASE("lasso: objective matches an ISTA oracle and satisfies KKT") {
  Rng rng(3);
  for (int inst = 0; inst < 5; ++inst) {
    const auto z = random_points(rng, 120, 5);
    Vec t;
    for (const auto& p : z) t.push_back(0.8 * p[0] - 0.3 * p[2] + 0.05 * p[4] + 0.1 * rng.normal());
    LassoConfig cfg;
    cfg.lambda = 0.1;
    cfg.tol = 1e-12;
    const auto h = fit_lasso(z, t, cfg);
    CHECK(lasso_objective(z, t, h.normal, h.offset, cfg.lambda) ==
          doctest::Approx(ista_objective(z, t, cfg.lambda)).epsilon(1e-6));
    const Vec g = lasso_smooth_gradient(z, t, h);
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (h.normal[j] == 0.0)
        CHECK(std::abs(g[j]) <= cfg.lambda + 1e-6);
      else
        CHECK(g[j] == doctest::Approx(-cfg.lambda * std::copysign(1.0, h.normal[j])).epsilon(1e-6));
    }
  }
}

TEST_CASE("svm: symmetric 1-D points") {
  // Repeat the four points so the holdout (every fifth) has something to score.
  std::vector<Vec> z;
  std::vector<int> y;
  for (int rep = 0; rep < 5; ++rep)
    for (double v : {-2.0, -1.0, 1.0, 2.0}) {
      z.push_back({v});
      y.push_back(v > 0 ? 1 : -1);
    }
  const auto h = fit_linear_svm(z, y, {});
  const double crossing = -h.offset / h.normal[0];
  CHECK(crossing > -1.0);
  CHECK(crossing < 1.0);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK((h.signed_value(z[i]) >= 0 ? 1 : -1) == y[i]);

  std::vector<int> flipped;
  for (int v : y) flipped.push_back(-v);
  const auto f = fit_linear_svm(z, flipped, {});
  CHECK(f.normal[0] * h.normal[0] < 0.0);
  CHECK(-f.offset / f.normal[0] == doctest::Approx(crossing).epsilon(1e-6));
}

TEST_CASE("svm: random separable 3-D sets are fit exactly") {
  Rng rng(5);
  for (int inst = 0; inst < 10; ++inst) {
    Vec w_true(3);
    for (double& v : w_true) v = rng.normal();
    const double b_true = rng.uniform(-0.5, 0.5);
    std::vector<Vec> z;
    std::vector<int> y;
    while (z.size() < 200) {
      Vec p{rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)};
      const double s = (dot(w_true, p) + b_true) / norm(w_true);
      if (std::abs(s) < 0.3) continue;
      z.push_back(p);
      y.push_back(s > 0 ? 1 : -1);
    }
    const auto h = fit_linear_svm(z, y, {});
    std::size_t correct = 0, held = 0, held_correct = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const bool ok = (h.signed_value(z[i]) >= 0 ? 1 : -1) == y[i];
      correct += ok;
      if (is_holdout(i)) {
        ++held;
        held_correct += ok;
      }
    }
    CHECK(correct == z.size());
    // Reported quality is exactly the holdout recount.
    CHECK(h.fit_quality == static_cast<double>(held_correct) / static_cast<double>(held));
  }
}

TEST_CASE("svm: single class is rejected") {
  std::vector<Vec> z{{0.0}, {1.0}, {2.0}};
  CHECK_THROWS_AS(fit_linear_svm(z, {1, 1, 1}, {}), TrainingError);
}

namespace {

// Identity-like codec on a 2-feature [-1, 1] schema; black box 1[z1 > 0].
struct SignSetup {
  DatasetSchema schema = fixture::continuous_schema(2, -1.0, 1.0);
  fixture::RawValueCodec codec{schema};
  fixture::ThresholdClassifier bb{2, 0, 0.5};
  SamplerConfig sampler{3.0, {0.0, 0.0}, {1.0 / 3.0, 1.0 / 3.0}};
};

}  // namespace

TEST_CASE("sample_latent_space: box bound, determinism, balance") {
  SignSetup s;
  SamplerConfig wide{3.0, {0.0, 0.0}, {1.0, 1.0}};
  const auto a = sample_latent_space(s.codec, s.bb, 1000, wide, 42);
  for (const auto& x : a)
    for (double v : x.z.z) {
      CHECK(v >= -3.0);
      CHECK(v <= 3.0);
    }
  const auto b = sample_latent_space(s.codec, s.bb, 1000, wide, 42);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].z == b[i].z);

  std::size_t pos = 0;
  for (const auto& x : a) pos += x.label;
  CHECK(std::abs(static_cast<double>(pos) / 1000.0 - 0.5) <= 0.05);

  CHECK_THROWS_AS(sample_latent_space(s.codec, s.bb, 2, wide, 1), PreconditionError);
  fixture::ConstantClassifier constant(2);
  CHECK_THROWS_AS(sample_latent_space(s.codec, constant, 100, wide, 1), TrainingError);
}

TEST_CASE("build_surrogate: cardinality with a binary categorical feature") {
  // Schema: two continuous features and a binary categorical one.
  FeatureSpec a, b, c;
  a.name = "a";
  a.min = -1;
  a.max = 1;
  b.name = "b";
  b.min = -1;
  b.max = 1;
  c.name = "c";
  c.kind = FeatureKind::categorical;
  c.categories = {"no", "yes"};
  const DatasetSchema schema({a, b, c}, "y", {"neg", "pos"});

  // Latent (z1, z2, z3): a = z1, b = z2, c = yes iff z3 > 0.
  class Codec final : public LatentCodec {
   public:
    LatentVector encode_latent(const EncodedVector& x) const override {
      return {{2 * x.data[0] - 1, 2 * x.data[1] - 1, x.data[3] - x.data[2]}};
    }
    EncodedVector decode_latent(const LatentVector& z) const override {
      const double p = 1.0 / (1.0 + std::exp(-4 * z.z[2]));
      return {{(z.z[0] + 1) / 2, (z.z[1] + 1) / 2, 1 - p, p}};
    }
    std::size_t latent_dim() const override { return 3; }
    std::size_t data_width() const override { return 4; }
  };
  auto codec = std::make_shared<Codec>();
  auto bb = std::make_shared<fixture::ThresholdClassifier>(4, 0, 0.5);
  SamplerConfig sampler{3.0, {0, 0, 0}, {0.3, 0.3, 0.3}};
  const auto bundle = build_surrogate(codec, bb, schema, sampler, {}, 3);
  CHECK(bundle.feature_planes.size() == 3);
  for (const auto& [name, planes] : bundle.feature_planes) CHECK(planes.size() == 1);
  CHECK(bundle.feature_planes.at("c").front().positive == "yes");
  CHECK(bundle.prediction_plane.positive == "pos");
  CHECK(bundle.prediction_plane.fit_quality >= 0.95);
  CHECK(bundle.sample_count == 600);
  CHECK(bundle.fit_failures.empty());

  SurrogateConfig tiny;
  tiny.k = 3;
  CHECK_THROWS_AS(build_surrogate(codec, bb, schema, sampler, tiny, 3), PreconditionError);
}

TEST_CASE("blobs surrogate: prediction plane quality") {
  const auto& p = fixture::blobs();
  CHECK(p.bundle.prediction_plane.fit_quality >= 0.75);
  CHECK(p.bundle.feature_planes.size() == 2);
  for (const auto& [name, planes] : p.bundle.feature_planes) {
    REQUIRE(planes.size() == 1);
    CHECK_FALSE(planes.front().degenerate());
  }
}

TEST_CASE("hyperplane and config JSON round-trip") {
  Hyperplane h;
  h.normal = {0.1, -2.5};
  h.offset = 1.0 / 3.0;
  h.kind = PlaneKind::categorical_feature;
  h.feature = "c";
  h.positive = "yes";
  h.fit_quality = 0.875;
  CHECK(Hyperplane::from_json(nlohmann::json::parse(h.to_json().dump())) == h);
  SurrogateConfig cfg;
  cfg.k = 77;
  cfg.lasso.lambda = 0.25;
  CHECK(SurrogateConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  CHECK(SurrogateConfig{}.resolved_k(3) == 600);
  CHECK(SurrogateConfig{}.resolved_k(1000) == 50000);
}
