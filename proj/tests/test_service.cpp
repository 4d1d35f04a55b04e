#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "annotrace/hash.hpp"
#include "annotrace/pipeline.hpp"
#include "annotrace/png.hpp"
#include "annotrace/scenario.hpp"
#include "annotrace/service.hpp"
#include "oracles.hpp"

using namespace annotrace;
using oracle::TempDir;

namespace {

// Two demo bundles under one root; the first one has been annotated.
class Running {
 public:
  Running() : service_(root_.path()) {
    auto a = demo_scenario();
    write_scenario(root_.path() / "one", a);
    a.manifest.session_id = "demo-s2";
    a.manifest.subject_pseudonym = "subject-2";
    write_scenario(root_.path() / "two", a);
    PipelineConfig cfg;
    cfg.bundle = root_.path() / "one";
    run_pipeline(cfg);
    port_ = service_.bind_any_port("127.0.0.1");
    thread_ = std::thread([this] { service_.run(); });
    while (!service_.running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Running() {
    service_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }
  std::filesystem::path bundle(const char* name) const { return root_.path() / name; }

 private:
  TempDir root_;
  Service service_;
  int port_ = 0;
  std::thread thread_;
};

Json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return Json::parse(r->body);
}

}  // namespace

TEST_CASE("session listing and manifests") {
  Running s;
  auto c = s.client();
  const auto list = body_of(c.Get("/sessions"));
  REQUIRE(list.size() == 2);
  CHECK(list[0]["session_id"] == "demo-s1");
  CHECK(list[1]["session_id"] == "demo-s2");
  const auto one = c.Get("/sessions/demo-s2");
  CHECK(one->status == 200);
  CHECK(Json::parse(one->body)["subject_pseudonym"] == "subject-2");
  CHECK(c.Get("/sessions/nope")->status == 404);
  CHECK(body_of(c.Get("/sessions/nope"))["error"] == "MissingFile");
}

TEST_CASE("annotations can be read, added and revised") {
  Running s;
  auto c = s.client();
  auto all = body_of(c.Get("/sessions/demo-s1/annotations"));
  CHECK(all.size() == 11);
  CHECK(body_of(c.Get("/sessions/demo-s1/annotations?kind=Rename")).size() == 3);
  CHECK(body_of(c.Get("/sessions/demo-s2/annotations")).empty());
  CHECK(c.Get("/sessions/demo-s1/annotations?kind=Bogus")->status == 400);

  const Json comment{{"kind", "Comment"}, {"t_start", 1683729500000}, {"payload", {{"text", "checks the key"}}},
                     {"author", "rev-1"}};
  const auto posted = c.Post("/sessions/demo-s2/annotations", comment.dump(), "application/json");
  REQUIRE(posted);
  CHECK(posted->status == 201);
  const auto created = Json::parse(posted->body);
  CHECK(created["status"] == "manual");
  const auto listed = body_of(c.Get("/sessions/demo-s2/annotations"));
  REQUIRE(listed.size() == 1);
  CHECK(listed[0] == created);
  CHECK(listed[0]["provenance"]["source"] == "human");
  CHECK(c.Post("/sessions/demo-s2/annotations", R"({"kind":"Comment"})", "application/json")->status == 400);
  CHECK(c.Post("/sessions/demo-s2/annotations", "not json", "application/json")->status == 400);

  const auto rename = body_of(c.Get("/sessions/demo-s1/annotations?kind=Rename"))[0];
  const std::string path = "/sessions/demo-s1/annotations/" + rename["id"].get<std::string>();
  const auto before = AnnotationLog(s.bundle("one") / "annotations.jsonl").records().size();
  const auto patched = c.Patch(path, R"({"status":"confirmed","expected_revision":1,"author":"rev-1"})",
                               "application/json");
  REQUIRE(patched);
  CHECK(patched->status == 200);
  CHECK(Json::parse(patched->body)["revision"] == 2);

  const auto confirmed = body_of(c.Get("/sessions/demo-s1/annotations?status=confirmed"));
  REQUIRE(confirmed.size() == 1);
  CHECK(confirmed[0]["id"] == rename["id"]);
  CHECK(confirmed[0]["provenance"]["source"] == "human");
  CHECK(body_of(c.Get("/sessions/demo-s1/annotations")).size() == 11);

  const auto records = AnnotationLog(s.bundle("one") / "annotations.jsonl").records();
  REQUIRE(records.size() == before + 1);
  CHECK(records.back().predecessor == rename["id"].get<std::string>() + "@1");
  CHECK(records.back().provenance.who == "rev-1");

  const auto stale = c.Patch(path, R"({"status":"rejected","expected_revision":1})", "application/json");
  CHECK(stale->status == 409);
  CHECK(Json::parse(stale->body)["current"]["revision"] == 2);
  CHECK(c.Patch("/sessions/demo-s1/annotations/a-missing", R"({"status":"rejected"})", "application/json")->status ==
        404);
  CHECK(c.Patch("/sessions/nope/annotations/x", R"({})", "application/json")->status == 404);
  CHECK(c.Patch(path, R"({"payload":{"scope":"function"}})", "application/json")->status == 400);
}

TEST_CASE("frames are served as PNG with an ETag") {
  Running s;
  auto c = s.client();
  const auto r = c.Get("/sessions/demo-s1/frames/26.png");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  const std::vector<std::uint8_t> bytes(r->body.begin(), r->body.end());
  const auto frame = decode_png(bytes);
  CHECK(frame == reconstruct_frame(load_bundle(s.bundle("one")), 26));
  const auto etag = r->get_header_value("ETag");
  CHECK(etag == "\"" + sha256_hex(std::span<const std::uint8_t>(bytes)) + "\"");

  const auto again = c.Get("/sessions/demo-s1/frames/26.png", {{"If-None-Match", etag}});
  CHECK(again->status == 304);
  CHECK(again->body.empty());
  CHECK(c.Get("/sessions/demo-s1/frames/9999.png")->status == 404);
}

TEST_CASE("event queries") {
  Running s;
  auto c = s.client();
  const auto all = body_of(c.Get("/sessions/demo-s1/events"));
  const auto bundle = load_bundle(s.bundle("one"));
  CHECK(all.size() == bundle.events().size());
  const auto keys = body_of(c.Get("/sessions/demo-s1/events?type=key"));
  CHECK(!keys.empty());
  for (const auto& e : keys) CHECK(e["type"] == "key");

  const auto from = demo_time(14, 38, 0).millis_utc;
  const auto to = demo_time(14, 39, 0).millis_utc;
  const auto window = body_of(c.Get("/sessions/demo-s1/events?from=" + std::to_string(from) +
                                    "&to=" + std::to_string(to)));
  std::size_t expected = 0;
  for (const auto& e : bundle.events()) expected += e.t.millis_utc >= from && e.t.millis_utc <= to;
  CHECK(window.size() == expected);
  CHECK(c.Get("/sessions/demo-s1/events?type=mouse")->status == 400);
  CHECK(c.Get("/sessions/demo-s1/events?from=abc")->status == 400);
}

TEST_CASE("scatter and CORS") {
  Running s;
  auto c = s.client();
  const auto scatter = c.Get("/sessions/demo-s1/scatter.csv");
  REQUIRE(scatter);
  CHECK(scatter->status == 200);
  CHECK(scatter->body == scatter_from_bundle(s.bundle("one"), demo_scenario().map));
  CHECK(scatter->get_header_value("Access-Control-Allow-Origin") == "*");

  const auto pre = c.Options("/sessions/demo-s1/annotations");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("PATCH") != std::string::npos);
}

TEST_CASE("bind addresses") {
  CHECK(parse_bind_address("8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
  CHECK(parse_bind_address("0.0.0.0:9000") == std::pair<std::string, int>{"0.0.0.0", 9000});
  CHECK(parse_bind_address(":81") == std::pair<std::string, int>{"127.0.0.1", 81});
  CHECK_THROWS_AS(parse_bind_address("host:x"), Error);
  CHECK_THROWS_AS(parse_bind_address("70000"), Error);
}
