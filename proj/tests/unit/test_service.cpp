#include <doctest.h>

#include <sstream>
#include <thread>

#include <httplib.h>

#include "../support/fixture.hpp"
#include "recourse/service.hpp"

using namespace recourse;
using nlohmann::json;

namespace {

std::shared_ptr<const SurrogateBundle> blobs_bundle(bool freeze_f2 = false) {
  auto b = std::make_shared<SurrogateBundle>(fixture::blobs().bundle);
  if (freeze_f2) {
    auto fs = b->schema.features();
    fs[1].is_mutable = false;
    b->schema = DatasetSchema(fs, b->schema.target_name(), b->schema.target_labels());
  }
  return b;
}

json row_json(const RawRow& r) {
  json doc = json::object();
  for (const auto& [k, v] : r.values) std::visit([&](const auto& x) { doc[k] = x; }, v);
  return doc;
}

std::vector<json> lines(const std::string& body) {
  std::vector<json> out;
  std::istringstream in(body);
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("service: nothing works before a bundle is loaded") {
  ExplainService svc;
  const auto r = svc.get_schema();
  CHECK(r.status == 409);
  CHECK(json::parse(r.body)["message"] == "no bundle loaded");
  CHECK(svc.post_explain("{}").status == 409);
  CHECK(svc.post_batch("[]").status == 409);
  CHECK(json::parse(svc.get_health().body)["bundle_loaded"] == false);
}

TEST_CASE("service: schema summary") {
  ExplainService svc;
  svc.load(blobs_bundle(), "id-1");
  const auto r = svc.get_schema();
  REQUIRE(r.status == 200);
  const auto doc = json::parse(r.body);
  CHECK(doc["features"].size() == 2);
  CHECK(doc["features"][0]["kind"] == "continuous");
  CHECK(doc["features"][0].contains("min"));
  CHECK(doc["bundle_id"] == "id-1");
  CHECK(doc["defaults"]["d_eps"] == 0.1);
  CHECK_THROWS(svc.load(blobs_bundle(), "id-2"));
}

TEST_CASE("service: categorical features list their categories") {
  FeatureSpec a, c;
  a.name = "a";
  a.min = 0;
  a.max = 1;
  c.name = "c";
  c.kind = FeatureKind::categorical;
  c.categories = {"p", "q", "r"};
  c.is_mutable = false;
  auto b = std::make_shared<SurrogateBundle>();
  b->schema = DatasetSchema({a, c}, "y", {"n", "y"});
  ExplainService svc;
  svc.load(b, "cat");
  const auto doc = json::parse(svc.get_schema().body);
  CHECK(doc["features"][1]["categories"] == json{"p", "q", "r"});
  CHECK(doc["features"][1]["mutable"] == false);
}

TEST_CASE("service: explain statuses") {
  ExplainService svc;
  svc.load(blobs_bundle(true), "frozen");
  const auto& rows = fixture::blobs().test_rows;

  const auto ok = svc.post_explain(json{{"row", row_json(rows[0])}, {"variant", "ce1"}}.dump());
  CHECK(ok.status == 200);
  CHECK(json::parse(ok.body)["valid"] == true);

  const auto bad = svc.post_explain(json{{"variant", "ce1"}}.dump());
  CHECK(bad.status == 400);
  CHECK(json::parse(bad.body)["field"] == "row");
  CHECK(svc.post_explain("{not json").status == 400);

  const auto frozen =
      svc.post_explain(json{{"row", row_json(rows[0])}, {"variant", "ce3"}, {"free_set", {"f1", "f2"}}}.dump());
  CHECK(frozen.status == 422);
  CHECK(json::parse(frozen.body)["code"] == "constraint_violation");
}

TEST_CASE("service: batch stream") {
  ExplainService svc;
  svc.load(blobs_bundle(), "b");
  const auto& rows = fixture::blobs().test_rows;

  const auto empty = svc.post_batch("[]");
  CHECK(empty.status == 200);
  CHECK(empty.body.empty());
  CHECK(svc.post_batch(R"({"x": 1})").status == 400);

  json reqs = json::array();
  for (std::size_t i = 0; i < 10; ++i) reqs.push_back({{"row", row_json(rows[i])}});
  reqs[4] = json{{"variant", "ce1"}};
  const auto r = svc.post_batch(reqs.dump());
  CHECK(r.content_type == "application/x-ndjson");
  const auto out = lines(r.body);
  REQUIRE(out.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    if (i == 4) {
      CHECK(out[i]["index"] == 4);
      CHECK(out[i]["error"]["field"] == "row");
      continue;
    }
    // Order preserved: each line is the single-request answer for its row.
    auto single = json::parse(svc.post_explain(reqs[i].dump()).body);
    auto line = out[i];
    single.erase("elapsed_us");
    line.erase("elapsed_us");
    CHECK(line == single);
  }
  CHECK(lines(svc.post_batch(json{{"requests", reqs}}.dump()).body).size() == 10);
}

TEST_CASE("service: concurrent handlers share one bundle") {
  ExplainService svc;
  svc.load(blobs_bundle(), "b");
  const auto body = json{{"row", row_json(fixture::blobs().test_rows[3])}}.dump();
  auto expected = json::parse(svc.post_explain(body).body);
  expected.erase("elapsed_us");
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t)
    threads.emplace_back([&] {
      for (int i = 0; i < 20; ++i) {
        auto got = json::parse(svc.post_explain(body).body);
        got.erase("elapsed_us");
        if (got != expected) ++mismatches;
      }
    });
  for (auto& t : threads) t.join();
  CHECK(mismatches == 0);
}

TEST_CASE("service: real HTTP round trip") {
  ServiceOptions opts;
  opts.port = 0;
  opts.workers = 2;
  ExplainService svc(opts);
  svc.load(blobs_bundle(), "http");
  std::thread server([&] { svc.serve(); });
  REQUIRE(svc.wait_until_ready(5000));

  httplib::Client client("127.0.0.1", svc.bound_port());
  const auto health = client.Get("/v1/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  const auto schema = client.Get("/v1/schema");
  REQUIRE(schema);
  CHECK(json::parse(schema->body)["features"].size() == 2);

  const auto& rows = fixture::blobs().test_rows;
  const auto res = client.Post("/v1/explain", json{{"row", row_json(rows[0])}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["valid"] == true);

  json reqs = json::array();
  for (std::size_t i = 0; i < 5; ++i) reqs.push_back({{"row", row_json(rows[i])}});
  const auto batch = client.Post("/v1/explain/batch", reqs.dump(), "application/json");
  REQUIRE(batch);
  CHECK(batch->status == 200);
  CHECK(lines(batch->body).size() == 5);

  const auto missing = client.Post("/v1/explain", "{}", "application/json");
  REQUIRE(missing);
  CHECK(missing->status == 400);

  svc.stop();
  server.join();
}
