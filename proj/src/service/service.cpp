#include "bsoda/service/service.hpp"

#include <httplib.h>

#include <random>
#include <set>
#include <variant>

namespace bsoda {

using json = nlohmann::ordered_json;

namespace {

ApiResponse error(int status, std::string message, json extra = json::object()) {
  json body{{"error", std::move(message)}};
  for (auto& [k, v] : extra.items()) body[k] = v;
  return {status, std::move(body)};
}

/// Rejects anything but an object whose keys are exactly `required`.
std::optional<std::string> check_fields(const nlohmann::json& j, const std::set<std::string>& required,
                                        const std::string& where) {
  if (!j.is_object()) return where + " must be a JSON object";
  for (const auto& [k, v] : j.items()) {
    if (!required.contains(k)) return where + ": unknown field '" + k + "'";
  }
  for (const auto& k : required) {
    if (!j.contains(k)) return where + ": missing field '" + k + "'";
  }
  return std::nullopt;
}

struct Answer {
  std::string code;
  bool present = false;
};

/// Parses {symptom: string, present: bool}; returns an error message on failure.
std::variant<Answer, std::string> parse_answer(const nlohmann::json& j, const std::string& where) {
  if (auto e = check_fields(j, {"symptom", "present"}, where)) return *e;
  if (!j["symptom"].is_string()) return where + ".symptom must be a string";
  if (!j["present"].is_boolean()) return where + ".present must be a boolean";
  return Answer{j["symptom"].get<std::string>(), j["present"].get<bool>()};
}

std::optional<nlohmann::json> parse_body(const std::string& body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return std::nullopt;
  return j;
}

json symptom_json(const KnowledgeBase& kb, SymptomId s) {
  return {{"code", kb.symptom(s).code}, {"name", kb.symptom(s).name}};
}

}  // namespace

std::string new_session_token() {
  std::random_device rd;
  std::uniform_int_distribution<std::uint32_t> dist;
  std::string token;
  static const char* hex = "0123456789abcdef";
  for (int i = 0; i < 4; ++i) {
    std::uint32_t w = dist(rd);
    for (int n = 0; n < 8; ++n, w >>= 4) token.push_back(hex[w & 0xF]);
  }
  return token;
}

ApiService::ApiService(std::shared_ptr<const Engine> engine, ServiceConfig config,
                       std::map<std::string, std::string> fingerprints)
    : engine_(std::move(engine)), config_(config), fingerprints_(std::move(fingerprints)) {}

json ApiService::turn_payload(const std::string& id, const Session& session) const {
  const KnowledgeBase& kb = engine_->kb;
  const SessionRecord& rec = session.record();
  const RoundRecord& last = rec.rounds.back();
  json out{{"session", id}, {"round", rec.inquiries()}, {"budget", session.config().max_inquiries}};
  out["question"] = rec.pending() ? symptom_json(kb, *rec.pending()) : json(nullptr);
  out["summary"] = {{"top", summary_to_json(last.diagnosis, kb, config_.top_k)},
                    {"candidates", last.num_candidates}};
  if (rec.termination) {
    out["diagnosis"] = {{"reason", to_string(*rec.termination)},
                        {"rounds", rec.inquiries()},
                        {"top", summary_to_json(last.diagnosis, kb, config_.top_k)}};
  } else {
    out["diagnosis"] = nullptr;
  }
  return out;
}

ApiResponse ApiService::create_session(const std::string& body) {
  if (!engine_) return error(503, "models not loaded");
  auto j = parse_body(body);
  if (!j) return error(400, "request body is not valid JSON");
  if (auto e = check_fields(*j, {"initial"}, "body")) return error(400, *e);
  if (!(*j)["initial"].is_array()) return error(400, "body.initial must be an array");

  std::vector<std::pair<SymptomId, BinaryValue>> initial;
  std::set<SymptomId> seen;
  bool any_positive = false;
  for (const auto& item : (*j)["initial"]) {
    auto parsed = parse_answer(item, "initial[]");
    if (auto* msg = std::get_if<std::string>(&parsed)) return error(400, *msg);
    const Answer& a = std::get<Answer>(parsed);
    const auto s = engine_->kb.find_symptom(a.code);
    if (!s) return error(400, "unknown symptom code", {{"code", a.code}});
    if (!seen.insert(*s).second) return error(400, "symptom listed twice", {{"code", a.code}});
    initial.emplace_back(*s, a.present ? 1 : 0);
    any_positive = any_positive || a.present;
  }
  if (!any_positive) return error(400, "at least one symptom must be present");

  std::string id = new_session_token();
  SessionConfig sc = config_.session;
  std::shared_ptr<Entry> entry;
  {
    std::lock_guard lock(store_mutex_);
    sc.seed = config_.session.seed + created_++;
    entry = std::make_shared<Entry>(*engine_, sc, id);
  }
  std::lock_guard session_lock(entry->mutex);
  entry->session.start(initial);
  entry->last_activity = now_();
  {
    std::lock_guard lock(store_mutex_);
    sessions_.emplace(id, entry);
  }
  return {201, turn_payload(id, entry->session)};
}

std::shared_ptr<ApiService::Entry> ApiService::find(const std::string& id) {
  evict_expired();
  std::lock_guard lock(store_mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

ApiResponse ApiService::answer(const std::string& id, const std::string& body) {
  if (!engine_) return error(503, "models not loaded");
  auto entry = find(id);
  if (!entry) return error(404, "unknown or expired session");
  auto j = parse_body(body);
  if (!j) return error(400, "request body is not valid JSON");
  auto parsed = parse_answer(*j, "body");
  if (auto* msg = std::get_if<std::string>(&parsed)) return error(400, *msg);
  const Answer& a = std::get<Answer>(parsed);
  const auto s = engine_->kb.find_symptom(a.code);
  if (!s) return error(400, "unknown symptom code", {{"code", a.code}});

  std::lock_guard lock(entry->mutex);
  Session& session = entry->session;
  if (session.complete()) return error(409, "session complete");
  if (session.pending() != s) {
    return error(409, "symptom is not the pending question",
                 {{"pending", engine_->kb.symptom(*session.pending()).code}});
  }
  session.answer(*s, a.present ? 1 : 0);
  entry->last_activity = now_();
  return {200, turn_payload(id, session)};
}

ApiResponse ApiService::get_session(const std::string& id) {
  if (!engine_) return error(503, "models not loaded");
  auto entry = find(id);
  if (!entry) return error(404, "unknown or expired session");
  std::lock_guard lock(entry->mutex);
  json out = turn_payload(id, entry->session);
  out["transcript"] = session_to_json(entry->session.record(), engine_->kb, false);
  return {200, std::move(out)};
}

ApiResponse ApiService::catalog() const {
  if (!engine_) return error(503, "models not loaded");
  const KnowledgeBase& kb = engine_->kb;
  json symptoms = json::array();
  for (std::uint32_t i = 0; i < kb.num_symptoms(); ++i) symptoms.push_back(symptom_json(kb, SymptomId(i)));
  json diseases = json::array();
  for (std::uint32_t i = 0; i < kb.num_diseases(); ++i) {
    const auto& d = kb.disease(DiseaseId(i));
    diseases.push_back({{"code", d.code}, {"name", d.name}});
  }
  return {200, {{"symptoms", std::move(symptoms)}, {"diseases", std::move(diseases)}}};
}

ApiResponse ApiService::health() const {
  json fp = json::object();
  for (const auto& [k, v] : fingerprints_) fp[k] = v;
  return {engine_ ? 200 : 503,
          {{"status", engine_ ? "ok" : "models not loaded"},
           {"sessions", live_sessions()},
           {"fingerprints", std::move(fp)}}};
}

std::size_t ApiService::evict_expired() {
  const auto now = now_();
  std::lock_guard lock(store_mutex_);
  std::size_t removed = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    std::unique_lock entry_lock(it->second->mutex, std::try_to_lock);
    if (entry_lock.owns_lock() && now - it->second->last_activity > config_.idle_timeout) {
      entry_lock.unlock();
      it = sessions_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

std::size_t ApiService::live_sessions() const {
  std::lock_guard lock(store_mutex_);
  return sessions_.size();
}

ApiResponse ApiService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::string prefix = "/v1/sessions/";
  try {
    if (path == "/v1/health" && method == "GET") return health();
    if (path == "/v1/catalog" && method == "GET") return catalog();
    if (path == "/v1/sessions" && method == "POST") return create_session(body);
    if (path.rfind(prefix, 0) == 0) {
      const std::string rest = path.substr(prefix.size());
      const auto slash = rest.find('/');
      if (slash == std::string::npos && method == "GET" && !rest.empty()) return get_session(rest);
      if (slash != std::string::npos && rest.substr(slash) == "/answers" && method == "POST") {
        return answer(rest.substr(0, slash), body);
      }
    }
    return error(404, "no such route");
  } catch (const ContractError& e) {
    return error(409, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

void bind_routes(httplib::Server& server, ApiService& service) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  // Keep-alive clients pin a worker each, so size the pool well past the core count.
  server.new_task_queue = [] { return new httplib::ThreadPool(64); };
  server.Get("/v1/health", forward);
  server.Get("/v1/catalog", forward);
  server.Post("/v1/sessions", forward);
  server.Get(R"(/v1/sessions/([0-9a-f]+))", forward);
  server.Post(R"(/v1/sessions/([0-9a-f]+)/answers)", forward);
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(nlohmann::json{{"error", "no such route"}}.dump(), "application/json");
  });
}

void serve(ApiService& service, const std::string& host, int port) {
  httplib::Server server;
  bind_routes(server, service);
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace bsoda
