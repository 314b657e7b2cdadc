#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "recourse/explain.hpp"

namespace recourse {

/// What an HTTP handler produced; kept transport-free so handlers can be
/// exercised directly.
struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// {code, message, field?}
nlohmann::json error_envelope(const std::string& code, const std::string& message, const std::string& field = {});

struct ServiceOptions {
  int port = 8080;
  std::string host = "127.0.0.1";
  std::size_t workers = 4;
  ExplainRequest defaults;  // hyperparameters used when a request omits them
};

class ExplainService {
 public:
  explicit ExplainService(ServiceOptions options = {});

  /// Loads and activates a bundle. Refused once one is active: the bundle
  /// is immutable for the life of the session.
  void load(const std::filesystem::path& bundle_path);
  void load(std::shared_ptr<const SurrogateBundle> bundle, std::string bundle_id);
  bool loaded() const;

  HttpReply get_schema() const;
  HttpReply get_health() const;
  HttpReply post_explain(const std::string& body) const;
  /// Whole NDJSON body at once; the HTTP route streams the same lines.
  HttpReply post_batch(const std::string& body) const;

  /// A parsed batch element: a request, or the error line to emit for it.
  using BatchEntry = std::variant<ExplainRequest, nlohmann::json>;
  /// Parses a batch body; on a malformed top level returns the 4xx reply instead.
  std::variant<std::vector<BatchEntry>, HttpReply> plan_batch(const std::string& body) const;
  std::string batch_line(const BatchEntry& entry) const;

  /// Binds and blocks until stop() is called.
  void serve();
  void stop();
  /// Port actually bound (useful with port 0); 0 before serve() binds.
  int bound_port() const;
  bool wait_until_ready(int timeout_ms) const;

 private:
  std::shared_ptr<const SurrogateBundle> snapshot() const;

  ServiceOptions options_;
  mutable std::mutex mutex_;
  std::shared_ptr<const SurrogateBundle> bundle_;
  std::string bundle_id_;
  struct Server;
  std::shared_ptr<Server> server_;
};

}  // namespace recourse
