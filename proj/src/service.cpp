#include "recourse/service.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "recourse/artifacts.hpp"
#include "recourse/error.hpp"

namespace recourse {

using nlohmann::json;

json error_envelope(const std::string& code, const std::string& message, const std::string& field) {
  json doc{{"code", code}, {"message", message}};
  if (!field.empty()) doc["field"] = field;
  return doc;
}

namespace {

HttpReply reply(int status, const json& doc) { return {status, doc.dump(), "application/json"}; }

HttpReply error_reply(int status, const std::string& code, const std::string& message,
                      const std::string& field = {}) {
  return reply(status, error_envelope(code, message, field));
}

HttpReply no_bundle() { return error_reply(409, "no_bundle", "no bundle loaded"); }

json schema_summary(const DatasetSchema& schema) {
  json features = json::array();
  for (const auto& f : schema.features()) {
    json entry{{"name", f.name}, {"kind", f.is_categorical() ? "categorical" : "continuous"}, {"mutable", f.is_mutable}};
    if (f.is_categorical()) {
      entry["categories"] = f.categories;
    } else {
      entry["min"] = f.min;
      entry["max"] = f.max;
    }
    features.push_back(std::move(entry));
  }
  return json{{"target", schema.target_name()}, {"labels", schema.target_labels()}, {"features", std::move(features)}};
}

}  // namespace

struct ExplainService::Server {
  httplib::Server http;
  std::atomic<int> port{0};
};

ExplainService::ExplainService(ServiceOptions options)
    : options_(std::move(options)), server_(std::make_shared<Server>()) {}

void ExplainService::load(const std::filesystem::path& bundle_path) {
  auto bundle = std::make_shared<const SurrogateBundle>(load_bundle(bundle_path));
  load(std::move(bundle), sha256_hex(read_file(bundle_path)));
}

void ExplainService::load(std::shared_ptr<const SurrogateBundle> bundle, std::string bundle_id) {
  std::lock_guard lock(mutex_);
  if (bundle_) throw PreconditionError("a bundle is already loaded");
  bundle_ = std::move(bundle);
  bundle_id_ = std::move(bundle_id);
}

bool ExplainService::loaded() const { return snapshot() != nullptr; }

std::shared_ptr<const SurrogateBundle> ExplainService::snapshot() const {
  std::lock_guard lock(mutex_);
  return bundle_;
}

HttpReply ExplainService::get_health() const {
  return reply(200, json{{"status", "ok"}, {"bundle_loaded", loaded()}});
}

HttpReply ExplainService::get_schema() const {
  const auto bundle = snapshot();
  if (!bundle) return no_bundle();
  json doc = schema_summary(bundle->schema);
  {
    std::lock_guard lock(mutex_);
    doc["bundle_id"] = bundle_id_;
  }
  doc["defaults"] = json{{"eps0", options_.defaults.eps0},
                         {"d_eps", options_.defaults.d_eps},
                         {"eps_max", options_.defaults.eps_max},
                         {"robust_margin_steps", options_.defaults.robust_margin_steps}};
  return reply(200, doc);
}

HttpReply ExplainService::post_explain(const std::string& body) const {
  const auto bundle = snapshot();
  if (!bundle) return no_bundle();
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "bad_request", "body is not valid JSON");
  }
  try {
    const ExplainRequest req = ExplainRequest::from_json(doc, options_.defaults);
    return reply(200, explain(*bundle, req).to_json());
  } catch (const ParseError& e) {
    return error_reply(400, "bad_request", e.what(), e.field());
  } catch (const ConstraintError& e) {
    return error_reply(422, "constraint_violation", e.what(), e.field());
  } catch (const DirectionError& e) {
    return error_reply(422, "direction_unavailable", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

std::variant<std::vector<ExplainService::BatchEntry>, HttpReply> ExplainService::plan_batch(
    const std::string& body) const {
  if (!snapshot()) return no_bundle();
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "bad_request", "body is not valid JSON");
  }
  if (doc.is_object() && doc.contains("requests")) doc = doc.at("requests");
  if (!doc.is_array()) return error_reply(400, "bad_request", "body must be a JSON array of requests");
  std::vector<BatchEntry> entries;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    try {
      entries.emplace_back(ExplainRequest::from_json(doc[i], options_.defaults));
    } catch (const ParseError& e) {
      entries.emplace_back(json{{"index", i}, {"error", error_envelope("bad_request", e.what(), e.field())}});
    } catch (const json::exception& e) {
      entries.emplace_back(json{{"index", i}, {"error", error_envelope("bad_request", e.what())}});
    }
  }
  return entries;
}

std::string ExplainService::batch_line(const BatchEntry& entry) const {
  if (const auto* err = std::get_if<json>(&entry)) return err->dump() + "\n";
  const auto bundle = snapshot();
  const auto items = explain_batch(*bundle, {std::get<ExplainRequest>(entry)});
  const auto& item = items.front();
  if (item.result) return item.result->to_json().dump() + "\n";
  const std::string code = item.error_kind == "parse"          ? "bad_request"
                           : item.error_kind == "constraint"   ? "constraint_violation"
                           : item.error_kind == "direction"    ? "direction_unavailable"
                                                               : "internal";
  return json{{"error", error_envelope(code, item.error, item.error_field)}}.dump() + "\n";
}

HttpReply ExplainService::post_batch(const std::string& body) const {
  auto plan = plan_batch(body);
  if (auto* r = std::get_if<HttpReply>(&plan)) return *r;
  HttpReply out{200, "", "application/x-ndjson"};
  for (const auto& entry : std::get<std::vector<BatchEntry>>(plan)) out.body += batch_line(entry);
  return out;
}

void ExplainService::serve() {
  auto& http = server_->http;
  const std::size_t workers = std::max<std::size_t>(1, options_.workers);
  http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };

  const auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  http.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_health()); });
  http.Get("/v1/schema", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_schema()); });
  http.Post("/v1/explain", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, post_explain(req.body));
  });
  http.Post("/v1/explain/batch", [this, send](const httplib::Request& req, httplib::Response& res) {
    auto plan = plan_batch(req.body);
    if (auto* r = std::get_if<HttpReply>(&plan)) return send(res, *r);
    auto entries = std::make_shared<std::vector<BatchEntry>>(std::move(std::get<std::vector<BatchEntry>>(plan)));
    res.status = 200;
    res.set_chunked_content_provider("application/x-ndjson",
                                     [this, entries, next = std::size_t{0}](std::size_t, httplib::DataSink& sink) mutable {
                                       if (next < entries->size()) {
                                         const std::string line = batch_line((*entries)[next++]);
                                         sink.write(line.data(), line.size());
                                       } else {
                                         sink.done();
                                       }
                                       return true;
                                     });
  });
  http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    res.status = 500;
    res.set_content(error_envelope("internal", "unhandled error").dump(), "application/json");
  });

  if (options_.port == 0) {
    const int port = http.bind_to_any_port(options_.host);
    if (port < 0) throw Error("cannot bind " + options_.host);
    server_->port = port;
  } else {
    if (!http.bind_to_port(options_.host, options_.port))
      throw Error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    server_->port = options_.port;
  }
  http.listen_after_bind();
}

void ExplainService::stop() { server_->http.stop(); }

int ExplainService::bound_port() const { return server_->port.load(); }

bool ExplainService::wait_until_ready(int timeout_ms) const {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (server_->port.load() != 0 && server_->http.is_running()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return false;
}

}  // namespace recourse
