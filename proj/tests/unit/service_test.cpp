#include <gtest/gtest.h>

#include <atomic>
#include <set>
#include <thread>

#include "bsoda/service/service.hpp"
#include "engine_fixture.hpp"
#include "test_support.hpp"

// After Eigen: resolv.h defines a _res macro that collides with Eigen parameter names.
#include <httplib.h>

namespace bsoda {
namespace {

using json = nlohmann::json;

KnowledgeBase service_kb() {
  return testing::make_kb(8, {{{0, 0.8}, {1, 0.5}, {2, 0.4}},
                              {{1, 0.6}, {3, 0.7}, {4, 0.5}},
                              {{5, 0.9}, {6, 0.3}},
                              {{6, 0.5}, {7, 0.6}, {0, 0.2}}});
}

ServiceConfig quick_service() {
  ServiceConfig c;
  c.session.n_mc = 20;
  c.session.max_inquiries = 4;
  return c;
}

class ServiceTest : public ::testing::Test {
 protected:
  ServiceTest()
      : engine_(testing::random_engine(service_kb(), testing::full_index(8), 41)),
        service_(engine_, quick_service(), {{"kb", "abc"}, {"diag", "def"}}) {}

  ApiResponse create(const std::string& body) { return service_.handle("POST", "/v1/sessions", body); }
  ApiResponse answer(const std::string& id, const std::string& body) {
    return service_.handle("POST", "/v1/sessions/" + id + "/answers", body);
  }
  static std::string answer_body(const std::string& code, bool present) {
    return json{{"symptom", code}, {"present", present}}.dump();
  }

  std::shared_ptr<const Engine> engine_;
  ApiService service_;
};

TEST_F(ServiceTest, CreateReturnsQuestionFromCandidates) {
  const ApiResponse r = create(R"({"initial": [{"symptom": "s00", "present": true}]})");
  ASSERT_EQ(r.status, 201) << r.body.dump();
  EXPECT_EQ(r.body["session"].get<std::string>().size(), 32u);
  EXPECT_EQ(r.body["round"], 0);
  ASSERT_TRUE(r.body["question"].is_object());
  const std::string code = r.body["question"]["code"];
  EXPECT_NE(code, "s00");
  EXPECT_TRUE(r.body["diagnosis"].is_null());
  EXPECT_LE(r.body["summary"]["top"].size(), 5u);
  EXPECT_EQ(r.body["summary"]["candidates"], 7);
}

TEST_F(ServiceTest, CreateRejectsBadBodies) {
  const ApiResponse unknown = create(R"({"initial": [{"symptom": "zzz", "present": true}]})");
  EXPECT_EQ(unknown.status, 400);
  EXPECT_EQ(unknown.body["code"], "zzz");
  EXPECT_EQ(create(R"({"initial": [{"symptom": "s00", "present": false}]})").status, 400);
  EXPECT_EQ(create(R"({"initial": []})").status, 400);
  EXPECT_EQ(create(R"({"initial": [{"symptom": "s00", "present": true}], "extra": 1})").status, 400);
  EXPECT_EQ(create(R"({"initial": [{"symptom": "s00", "present": true, "note": "x"}]})").status, 400);
  EXPECT_EQ(create(R"({"initial": [{"symptom": "s00", "present": "yes"}]})").status, 400);
  EXPECT_EQ(create(R"({"initial": [{"symptom": "s00", "present": true}, {"symptom": "s00", "present": true}]})").status,
            400);
  EXPECT_EQ(create("not json").status, 400);
  EXPECT_EQ(create("[1, 2]").status, 400);
}

TEST_F(ServiceTest, AnswerFlowToCompletion) {
  const ApiResponse r = create(R"({"initial": [{"symptom": "s01", "present": true}]})");
  const std::string id = r.body["session"];
  json turn = r.body;
  std::size_t rounds = 0;
  while (turn["diagnosis"].is_null()) {
    const ApiResponse next = answer(id, answer_body(turn["question"]["code"], rounds % 2 == 0));
    ASSERT_EQ(next.status, 200) << next.body.dump();
    turn = next.body;
    ++rounds;
    EXPECT_EQ(turn["round"], rounds);
  }
  EXPECT_LE(rounds, 4u);
  EXPECT_TRUE(parse_termination_reason(turn["diagnosis"]["reason"].get<std::string>()).has_value());
  EXPECT_EQ(turn["diagnosis"]["rounds"], rounds);
  EXPECT_EQ(turn["diagnosis"]["top"].size(), 4u);

  const ApiResponse after = answer(id, answer_body("s02", true));
  EXPECT_EQ(after.status, 409);
  EXPECT_EQ(after.body["error"], "session complete");

  const ApiResponse t = service_.handle("GET", "/v1/sessions/" + id, "");
  ASSERT_EQ(t.status, 200);
  const json& transcript = t.body["transcript"];
  std::size_t questions = 0;
  for (const auto& round : transcript["rounds"]) questions += round.contains("asked") && !round["asked"].is_null();
  EXPECT_EQ(questions, rounds);
}

TEST_F(ServiceTest, AnsweringTwiceConflicts) {
  const ApiResponse r = create(R"({"initial": [{"symptom": "s03", "present": true}]})");
  const std::string id = r.body["session"];
  const std::string q = r.body["question"]["code"];
  ASSERT_EQ(answer(id, answer_body(q, false)).status, 200);
  const ApiResponse again = answer(id, answer_body(q, false));
  EXPECT_EQ(again.status, 409);
}

TEST_F(ServiceTest, AnswerValidation) {
  const ApiResponse r = create(R"({"initial": [{"symptom": "s03", "present": true}]})");
  const std::string id = r.body["session"];
  EXPECT_EQ(answer("0123456789abcdef0123456789abcdef", answer_body("s00", true)).status, 404);
  EXPECT_EQ(answer(id, "{").status, 400);
  EXPECT_EQ(answer(id, R"({"symptom": "s00"})").status, 400);
  EXPECT_EQ(answer(id, R"({"symptom": "s00", "present": true, "why": 1})").status, 400);
  EXPECT_EQ(answer(id, answer_body("nope", true)).status, 400);
  EXPECT_EQ(service_.handle("GET", "/v1/sessions/ffff", "").status, 404);
}

TEST_F(ServiceTest, CatalogAndHealth) {
  const ApiResponse c = service_.handle("GET", "/v1/catalog", "");
  ASSERT_EQ(c.status, 200);
  EXPECT_EQ(c.body["symptoms"].size(), 8u);
  EXPECT_EQ(c.body["diseases"].size(), 4u);
  EXPECT_EQ(c.body["symptoms"][0]["name"], "symptom s00");
  const ApiResponse h = service_.handle("GET", "/v1/health", "");
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body["fingerprints"]["kb"], "abc");
  EXPECT_EQ(h.body["fingerprints"]["diag"], "def");
  EXPECT_EQ(service_.handle("DELETE", "/v1/catalog", "").status, 404);
}

TEST_F(ServiceTest, IdleSessionsExpire) {
  auto now = ApiService::Clock::now();
  service_.set_clock([&] { return now; });
  const ApiResponse r = create(R"({"initial": [{"symptom": "s00", "present": true}]})");
  const std::string id = r.body["session"];
  EXPECT_EQ(service_.live_sessions(), 1u);
  now += std::chrono::minutes(29);
  EXPECT_EQ(service_.handle("GET", "/v1/sessions/" + id, "").status, 200);
  now += std::chrono::minutes(31);
  EXPECT_EQ(answer(id, answer_body(r.body["question"]["code"], true)).status, 404);
  EXPECT_EQ(service_.live_sessions(), 0u);
}

TEST(ServiceWithoutModels, Returns503) {
  ApiService service(nullptr, quick_service());
  EXPECT_EQ(service.handle("POST", "/v1/sessions", R"({"initial": []})").status, 503);
  EXPECT_EQ(service.handle("GET", "/v1/catalog", "").status, 503);
  EXPECT_EQ(service.handle("GET", "/v1/health", "").status, 503);
}

TEST(ServiceDegenerate, ImmediateDiagnosis) {
  const KnowledgeBase kb = load_knowledge_base(testing::source_dir() / "data/two_disease_kb.json");
  ServiceConfig c;
  c.session.seed = 4;
  ApiService service(testing::trained_engine(kb, 1000, 3), c);
  const ApiResponse r = service.handle("POST", "/v1/sessions", R"({"initial": [{"symptom": "a", "present": true}]})");
  ASSERT_EQ(r.status, 201);
  EXPECT_TRUE(r.body["question"].is_null());
  EXPECT_EQ(r.body["diagnosis"]["reason"], "confidence");
  EXPECT_EQ(r.body["diagnosis"]["top"][0]["disease"], "d0");
}

TEST(SessionToken, HexAndDistinct) {
  std::set<std::string> seen;
  for (int i = 0; i < 200; ++i) {
    const std::string t = new_session_token();
    EXPECT_EQ(t.size(), 32u);
    EXPECT_EQ(t.find_first_not_of("0123456789abcdef"), std::string::npos);
    seen.insert(t);
  }
  EXPECT_EQ(seen.size(), 200u);
}

TEST_F(ServiceTest, ParallelSessionsOverHttpStayConsistent) {
  httplib::Server server;
  bind_routes(server, service_);
  const int port = server.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  constexpr int kSessions = 100;
  std::atomic<int> consistent{0};
  std::vector<std::string> failures(kSessions);
  std::vector<std::thread> clients;
  for (int i = 0; i < kSessions; ++i) {
    clients.emplace_back([&, i] {
      httplib::Client client("127.0.0.1", port);
      client.set_read_timeout(120, 0);
      const std::string first = "s0" + std::to_string(i % 8);
      auto res = client.Post("/v1/sessions", json{{"initial", {{{"symptom", first}, {"present", true}}}}}.dump(),
                             "application/json");
      if (!res || res->status != 201) {
        failures[i] = "create failed";
        return;
      }
      json turn = json::parse(res->body);
      const std::string id = turn["session"];
      std::vector<std::string> asked;
      Rng answers(static_cast<std::uint64_t>(i));
      while (turn["diagnosis"].is_null()) {
        const std::string q = turn["question"]["code"];
        asked.push_back(q);
        auto next = client.Post("/v1/sessions/" + id + "/answers",
                                json{{"symptom", q}, {"present", answers.bernoulli(0.5)}}.dump(), "application/json");
        if (!next || next->status != 200) {
          failures[i] = "answer failed";
          return;
        }
        turn = json::parse(next->body);
      }
      auto t = client.Get("/v1/sessions/" + id);
      if (!t || t->status != 200) {
        failures[i] = "transcript failed";
        return;
      }
      const json transcript = json::parse(t->body)["transcript"];
      std::vector<std::string> recorded;
      for (const auto& round : transcript["rounds"]) {
        if (!round["asked"].is_null()) recorded.push_back(round["asked"]);
      }
      const bool ok = transcript["id"] == id && recorded == asked &&
                      transcript["initial"][0]["symptom"] == first &&
                      std::set<std::string>(asked.begin(), asked.end()).size() == asked.size();
      if (ok) {
        ++consistent;
      } else {
        failures[i] = "inconsistent transcript";
      }
    });
  }
  for (auto& t : clients) t.join();
  server.stop();
  listener.join();
  for (int i = 0; i < kSessions; ++i) EXPECT_TRUE(failures[i].empty()) << i << ": " << failures[i];
  EXPECT_EQ(consistent.load(), kSessions);
  EXPECT_EQ(service_.live_sessions(), static_cast<std::size_t>(kSessions));
}

TEST(ServiceHttp, UnknownRouteIsJson404) {
  ApiService service(nullptr, quick_service());
  httplib::Server server;
  bind_routes(server, service);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread listener([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/v2/nothing");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
  server.stop();
  listener.join();
}

}  // namespace
}  // namespace bsoda
