#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "earth/error.hpp"
#include "earth/feedback.hpp"
#include "earth/mock_backends.hpp"
#include "earth/pipeline.hpp"
#include "earth/run_store.hpp"
#include "earth/service.hpp"
#include "schema_validator.hpp"
#include "test_util.hpp"

using namespace earth;
using nlohmann::json;

namespace {

// One mock run and a live service, shared by every case in this file.
struct Live {
  testutil::TempDir dir;
  store::RunStore store{dir.path()};
  feedback::FeedbackHub hub{store};
  service::Service svc{store, hub};
  std::thread thread;
  int port = -1;
  std::string run_id;
  testutil::SchemaSet schemas{EARTH_SCHEMA_DIR};

  Live() {
    PipelineConfig cfg;
    cfg.run_seed = 3;
    gateway::GatewayOptions o;
    o.run_seed = 3;
    gateway::Gateway gw(gateway::make_mock_backends(3), o);
    run_id = pipeline::run_full_pipeline(cfg, gw, store).run_id;
    port = svc.bind("127.0.0.1", 0);
    thread = std::thread([this] { svc.run(); });
    while (!svc.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Live() {
    svc.stop();
    thread.join();
  }

  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }

  void conforms(const std::string& schema, const json& body) {
    const auto errors = schemas.validate(schema, body);
    for (const auto& e : errors) MESSAGE(schema << ": " << e);
    CHECK(errors.empty());
  }
};

Live& live() {
  static Live l;
  return l;
}

json rating_body(const std::string& rater, const std::string& cand, int overall, int creativity = 4) {
  return {{"rater_id", rater},     {"candidate_id", cand},        {"creativity", creativity},
          {"expressiveness", 4},   {"emotional_resonance", 3},    {"overall_impact", overall},
          {"metaphor_label", true}, {"suggestion", "simplify the ending"}};
}

std::string create_batch(httplib::Client& c, const json& body) {
  auto res = c.Post("/batches", body.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 201);
  const auto j = json::parse(res->body);
  live().conforms("rating_batch.schema.json", j);
  return j["batch_id"].get<std::string>();
}

}  // namespace

TEST_CASE("service: empty store lists no runs") {
  testutil::TempDir dir;
  store::RunStore st(dir.path());
  feedback::FeedbackHub hub(st);
  service::Service svc(st, hub);
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread th([&] { svc.run(); });
  while (!svc.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  httplib::Client c("127.0.0.1", port);
  auto res = c.Get("/runs");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body) == json::array());
  svc.stop();
  th.join();
}

TEST_CASE("service: run views") {
  auto& l = live();
  auto c = l.client();
  auto runs = c.Get("/runs");
  REQUIRE(runs);
  CHECK(runs->status == 200);
  l.conforms("run_list.schema.json", json::parse(runs->body));
  CHECK(runs->get_header_value("Access-Control-Allow-Origin") == "*");

  auto run = c.Get("/runs/" + l.run_id);
  REQUIRE(run);
  CHECK(run->status == 200);
  l.conforms("run_manifest.schema.json", json::parse(run->body));

  auto r = c.Get("/runs/" + l.run_id + "/candidates?stage=R");
  REQUIRE(r);
  const auto page = json::parse(r->body);
  l.conforms("candidates_page.schema.json", page);
  CHECK(page["candidates"].size() == 20);
  CHECK(page["next_cursor"].is_null());

  auto report = c.Get("/runs/" + l.run_id + "/report");
  REQUIRE(report);
  CHECK(report->status == 200);
  l.conforms("report_summary.schema.json", json::parse(report->body));

  const auto t = json::parse(c.Get("/runs/" + l.run_id + "/candidates?stage=T&limit=1")->body);
  const auto img = c.Get("/runs/" + l.run_id + "/images/" + t["candidates"][0]["id"].get<std::string>());
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/png");
}

TEST_CASE("service: cursor pagination walks every candidate once") {
  auto& l = live();
  auto c = l.client();
  std::vector<std::string> ids;
  std::string cursor;
  for (int guard = 0; guard < 100; ++guard) {
    auto res = c.Get("/runs/" + l.run_id + "/candidates?limit=17" + (cursor.empty() ? "" : "&cursor=" + cursor));
    REQUIRE(res);
    const auto page = json::parse(res->body);
    for (const auto& cand : page["candidates"]) ids.push_back(cand["id"].get<std::string>());
    if (page["next_cursor"].is_null()) break;
    cursor = page["next_cursor"].get<std::string>();
  }
  CHECK(ids.size() == 50 + 75 + 20 + 20);
  CHECK(std::is_sorted(ids.begin(), ids.end()));
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("service: 404 paths") {
  auto& l = live();
  auto c = l.client();
  for (const std::string& path : std::vector<std::string>{"/runs/run-nope", "/runs/run-nope/candidates", "/runs/run-nope/report",
                                 "/batches/run-nope-b0001", "/batches/run-nope-b0001/analytics",
                                 "/runs/" + l.run_id + "/images/T-9999"}) {
    auto res = c.Get(path);
    REQUIRE(res);
    CHECK_MESSAGE(res->status == 404, path);
    l.conforms("error.schema.json", json::parse(res->body));
  }
  auto res = c.Post("/batches", json{{"run_id", "run-nope"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
}

TEST_CASE("service: 422 paths") {
  auto& l = live();
  auto c = l.client();
  const auto batch = create_batch(c, {{"run_id", l.run_id}});
  auto bad_json = c.Post("/batches/" + batch + "/ratings", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 422);
  l.conforms("error.schema.json", json::parse(bad_json->body));

  auto zero = c.Post("/batches/" + batch + "/ratings", rating_body("ann", "T-0001", 0).dump(), "application/json");
  REQUIRE(zero);
  CHECK(zero->status == 422);
  auto six = c.Post("/batches/" + batch + "/ratings", rating_body("ann", "T-0001", 4, 6).dump(), "application/json");
  CHECK(six->status == 422);
  auto outside = c.Post("/batches/" + batch + "/ratings", rating_body("ann", "E-0001", 4).dump(), "application/json");
  CHECK(outside->status == 422);
  auto no_run = c.Post("/batches", json{{"candidate_ids", json::array()}}.dump(), "application/json");
  CHECK(no_run->status == 422);
  auto bad_ids = c.Post("/batches", json{{"run_id", l.run_id}, {"candidate_ids", {"X-1"}}}.dump(), "application/json");
  CHECK(bad_ids->status == 422);
  auto bad_stage = c.Get("/runs/" + l.run_id + "/candidates?stage=Q");
  CHECK(bad_stage->status == 422);
  auto bad_limit = c.Get("/runs/" + l.run_id + "/candidates?limit=0");
  CHECK(bad_limit->status == 422);
  auto no_rater = c.Get("/batches/" + batch + "/next");
  CHECK(no_rater->status == 422);
}

TEST_CASE("service: rating flow, replacement idempotency, 204 and 409") {
  auto& l = live();
  auto c = l.client();
  const auto batch = create_batch(c, {{"run_id", l.run_id}, {"candidate_ids", {"T-0001", "T-0002"}}});

  auto next = c.Get("/batches/" + batch + "/next?rater=ann");
  REQUIRE(next);
  CHECK(next->status == 200);
  const auto item = json::parse(next->body);
  l.conforms("next_item.schema.json", item);
  CHECK(item["candidate"]["id"] == "T-0001");
  CHECK(item["position"] == 0);
  CHECK(item["total"] == 2);
  CHECK(item["image_url"].is_string());

  auto post = [&](const json& body) {
    auto res = c.Post("/batches/" + batch + "/ratings", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto ack = json::parse(res->body);
    l.conforms("rating_ack.schema.json", ack);
    return ack;
  };
  CHECK(post(rating_body("ann", "T-0001", 3))["replaced"] == false);
  // Same (rater, candidate) again replaces rather than duplicates.
  for (int i = 0; i < 3; ++i) {
    const auto ack = post(rating_body("ann", "T-0001", 5));
    CHECK(ack["replaced"] == true);
    CHECK(ack["ratings_in_batch"] == 1);
  }
  post(rating_body("bob", "T-0001", 4));
  post(rating_body("ann", "T-0002", 2));

  const auto listed = json::parse(c.Get("/batches/" + batch + "/ratings")->body);
  l.conforms("rating_list.schema.json", listed);
  CHECK(listed.size() == 3);

  auto done = c.Get("/batches/" + batch + "/next?rater=ann");
  REQUIRE(done);
  CHECK(done->status == 204);

  auto analytics = c.Get("/batches/" + batch + "/analytics");
  REQUIRE(analytics);
  const auto a = json::parse(analytics->body);
  l.conforms("analytics.schema.json", a);
  const auto& cands = a["aggregate"]["candidates"];
  REQUIRE(cands.size() == 2);
  CHECK(cands[0]["candidate_id"] == "T-0001");
  CHECK(cands[0]["mean_overall_impact"].get<double>() == (5.0 + 4.0) / 2.0);
  CHECK(cands[0]["mean_creativity"].get<double>() == 4.0);
  CHECK(cands[1]["mean_overall_impact"].get<double>() == 2.0);
  CHECK(a["aggregate"]["rating_count"] == 3);
  bool saw_simplify = false;
  for (const auto& k : a["keywords"]) {
    if (k["term"] == "simplify") saw_simplify = k["count"] == 3;
  }
  CHECK(saw_simplify);

  auto closed = c.Post("/batches/" + batch + "/close", "", "application/json");
  REQUIRE(closed);
  CHECK(closed->status == 200);
  auto late = c.Post("/batches/" + batch + "/ratings", rating_body("cat", "T-0001", 4).dump(), "application/json");
  REQUIRE(late);
  CHECK(late->status == 409);
  l.conforms("error.schema.json", json::parse(late->body));
}

TEST_CASE("service: analytics of an unrated batch conforms") {
  auto& l = live();
  auto c = l.client();
  const auto batch = create_batch(c, {{"run_id", l.run_id}});
  const auto a = json::parse(c.Get("/batches/" + batch + "/analytics")->body);
  l.conforms("analytics.schema.json", a);
  CHECK(a["aggregate"].is_null());
}

TEST_CASE("service: CORS preflight") {
  auto c = live().client();
  auto res = c.Options("/batches");
  REQUIRE(res);
  CHECK(res->status == 204);
  CHECK(res->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("service address parsing") {
  CHECK(service::parse_address("0.0.0.0:8080") == std::pair<std::string, int>{"0.0.0.0", 8080});
  CHECK_THROWS_AS(service::parse_address("localhost"), Error);
  CHECK_THROWS_AS(service::parse_address("h:99999"), Error);
}
