#ifndef BSODA_SERVICE_SERVICE_HPP
#define BSODA_SERVICE_SERVICE_HPP

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <json.hpp>

#include "bsoda/session/session.hpp"

namespace httplib {
class Server;
}

namespace bsoda {

struct ServiceConfig {
  SessionConfig session{};
  std::chrono::seconds idle_timeout{30 * 60};
  std::size_t top_k = 5;
};

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

/// JSON session API over an in-memory session store. Handlers are plain
/// functions of (method, path, body) so they can be driven without a socket;
/// bind_routes attaches them to an HTTP server.
///
/// Routes:
///   POST /v1/sessions                {initial: [{symptom, present}]}
///   POST /v1/sessions/{id}/answers   {symptom, present}
///   GET  /v1/sessions/{id}
///   GET  /v1/catalog
///   GET  /v1/health
class ApiService {
 public:
  using Clock = std::chrono::steady_clock;

  /// engine may be null, in which case session routes answer 503.
  ApiService(std::shared_ptr<const Engine> engine, ServiceConfig config,
             std::map<std::string, std::string> fingerprints = {});

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body);

  ApiResponse create_session(const std::string& body);
  ApiResponse answer(const std::string& id, const std::string& body);
  ApiResponse get_session(const std::string& id);
  ApiResponse catalog() const;
  ApiResponse health() const;

  /// Drops sessions idle for longer than the timeout; returns how many.
  std::size_t evict_expired();
  std::size_t live_sessions() const;

  /// Test hook for idle expiry.
  void set_clock(std::function<Clock::time_point()> now) { now_ = std::move(now); }

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
    Clock::time_point last_activity;
    Entry(const Engine& engine, SessionConfig config, std::string id)
        : session(engine, config, std::move(id)) {}
  };

  std::shared_ptr<Entry> find(const std::string& id);
  nlohmann::ordered_json turn_payload(const std::string& id, const Session& session) const;

  std::shared_ptr<const Engine> engine_;
  ServiceConfig config_;
  std::map<std::string, std::string> fingerprints_;
  std::function<Clock::time_point()> now_ = [] { return Clock::now(); };
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t created_ = 0;
};

/// Registers every route of `service` on `server`.
void bind_routes(httplib::Server& server, ApiService& service);

/// Blocking HTTP server on host:port.
void serve(ApiService& service, const std::string& host, int port);

/// 32 hex characters from the system entropy source.
std::string new_session_token();

}  // namespace bsoda

#endif  // BSODA_SERVICE_SERVICE_HPP
