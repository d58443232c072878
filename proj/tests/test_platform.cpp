#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pedocds/error.hpp"
#include "pedocds/platform.hpp"
#include "support.hpp"
#include "trial_model.hpp"

// After Eigen (pulled in above); see server.cpp.
#include <httplib.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <thread>

using namespace pedocds;
using namespace pedocds::platform;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("pedocds-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string fixed_clock() { return "2026-01-01T00:00:00Z"; }

struct Fixture {
  TempDir tmp;
  Service service;

  Fixture() : service(make_config(tmp.path), fixed_clock) {}

  static Config make_config(const fs::path& store) {
    Config c = load_config(testing::data_dir(), true);
    c.store_dir = store;
    return c;
  }

  Response call(const std::string& method, const std::string& path, const json& body = nullptr,
                std::map<std::string, std::string> query = {}) {
    Request r;
    r.method = method;
    r.path = path;
    r.body = body.is_null() ? "" : body.dump();
    r.query = std::move(query);
    return service.handle(r);
  }
  json ok(const std::string& method, const std::string& path, const json& body = nullptr,
          std::map<std::string, std::string> query = {}) {
    const auto res = call(method, path, body, std::move(query));
    INFO(method << " " << path << " -> " << res.status << " " << res.body);
    CHECK(res.status < 300);
    return json::parse(res.body);
  }
};

json participant_json(int n) {
  return json::parse(testing::slurp(testing::data_dir() / "fixtures" /
                                    ("participant" + std::to_string(n) + ".profile.json")));
}

std::string fixture_csv(const std::string& name) { return testing::slurp(testing::data_dir() / "fixtures" / name); }

struct Run {
  int code = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(PEDOCDS_CLI) + " --data " + testing::data_dir().string() + " " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace

TEST_CASE("store: versions, conflicts, missing records") {
  TempDir tmp;
  Store store(tmp.path, fixed_clock);
  const auto v1 = store.put("profile", "P1", {{"a", 1}});
  CHECK(v1.version == 1);
  CHECK(v1.created_at == "2026-01-01T00:00:00Z");
  CHECK(fs::exists(tmp.path / "profile" / "P1" / "v1.json"));
  const auto v2 = store.put("profile", "P1", {{"a", 2}});
  CHECK(v2.version == 2);
  CHECK(store.get("profile", "P1").body == json{{"a", 2}});
  CHECK(store.get("profile", "P1", 1).body == json{{"a", 1}});
  CHECK(store.latest_version("profile", "P1") == 2);
  CHECK(store.history("profile", "P1").size() == 2);
  CHECK(store.list("profile") == std::vector<std::string>{"P1"});

  CHECK_THROWS_AS(store.put("profile", "P1", {{"a", 3}}, 1), ConflictError);
  CHECK_THROWS_AS(store.put("profile", "P1", {{"a", 3}}, 5), ConflictError);
  CHECK(store.put("profile", "P1", {{"a", 3}}, 3).version == 3);
  CHECK_THROWS_AS(store.get("profile", "nobody"), NotFoundError);
  CHECK_THROWS_AS(store.get("profile", "P1", 9), NotFoundError);
  CHECK_THROWS_AS(store.put("widget", "x", {}), ValidationError);
  CHECK_THROWS_AS(store.put("profile", "../escape", {}), ValidationError);
  CHECK(store.latest_version("profile", "nobody") == 0);

  const auto env = envelope_from_json(envelope_to_json(v1));
  CHECK(env.id == "P1");
  CHECK(env.body == v1.body);
}

TEST_CASE("store: concurrent writers get distinct versions") {
  TempDir tmp;
  Store store(tmp.path);
  std::vector<std::thread> threads;
  std::atomic<int> conflicts{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      for (int k = 0; k < 10; ++k) {
        try {
          store.put("trial", "T", {{"writer", i}, {"k", k}});
        } catch (const ConflictError&) {
          ++conflicts;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(conflicts == 0);
  CHECK(store.latest_version("trial", "T") == 80);
}

TEST_CASE("status mapping") {
  CHECK(status_for(ValidationError("x")) == 400);
  CHECK(status_for(NotFoundError("x")) == 404);
  CHECK(status_for(ConflictError("x")) == 409);
  CHECK(status_for(std::runtime_error("x")) == 500);
}

TEST_CASE("config and default models") {
  const Config c = load_config(testing::data_dir(), true);
  CHECK(c.target.zones == std::set<std::string>{"forefoot"});
  CHECK(c.zoning.heel_end_pct == 30);
  const auto models = load_models_dir(c.resolve(c.models_dir));
  CHECK(models.size() == 30);
  CHECK(models.count("FWT") == 1);
}

TEST_CASE("catalog and profiles") {
  Fixture f;
  const auto cat = f.ok("GET", "/catalog");
  CHECK(cat["features"].size() == 39);

  auto res = f.call("POST", "/profiles", participant_json(1));
  CHECK(res.status == 201);
  CHECK(json::parse(res.body)["version"] == 1);
  CHECK(f.ok("GET", "/profiles") == json{"participant-1"});
  CHECK(f.ok("GET", "/profiles/participant-1")["body"]["values"]["FO"] == json{"FO3"});

  auto bad = participant_json(1);
  bad["values"]["FO"] = {"FO9"};
  res = f.call("POST", "/profiles", bad);
  CHECK(res.status == 400);

  CHECK(f.call("GET", "/profiles/nobody").status == 404);
  CHECK(f.call("GET", "/nowhere").status == 404);
  CHECK(f.call("DELETE", "/catalog").status == 400);
  Request raw{"POST", "/recommend", "{not json", "application/json", {}};
  CHECK(f.service.handle(raw).status == 400);
}

TEST_CASE("recommend") {
  Fixture f;
  const auto out = f.ok("POST", "/recommend", {{"profile", participant_json(1)}, {"explain", true}});
  const auto& rx = out["prescription"];
  CHECK(rx["values"]["FWT"] == json{"FWT3"});
  CHECK(rx["sources"]["FWT"]["origin"] == "RULE");
  CHECK(rx["sources"]["FWT"]["rule"] == "Rule 1");
  CHECK(rx["values"]["INST"] == json{"INST2"});
  CHECK(rx["values"].size() == 30);
  CHECK(out["explanations"]["FWT"].get<std::string>().find("Rule 1") != std::string::npos);

  SUBCASE("by stored profile id") {
    f.ok("POST", "/profiles", participant_json(2));
    const auto by_id = f.ok("POST", "/recommend", {{"profile_id", "participant-2"}});
    CHECK(by_id["prescription"]["values"]["FWT"] == json{"FWT3"});
  }
  SUBCASE("with a stored ruleset and no models") {
    f.ok("POST", "/rulesets", {{"id", "only-fo"}, {"text", "rule \"fo\": if FO == FO3 then INST := INST1"}});
    const auto o = f.ok("POST", "/recommend",
                        {{"profile", participant_json(1)}, {"ruleset_id", "only-fo"}, {"model_ids", json::array()}});
    CHECK(o["prescription"]["values"]["INST"] == json{"INST1"});
    CHECK_FALSE(o["prescription"]["values"].contains("FWT"));
    CHECK(f.call("POST", "/rulesets", {{"id", "broken"}, {"text", "rule \"x\": if FO == FO9 then FWT := FWT1"}})
              .status == 400);
  }
  SUBCASE("errors") {
    CHECK(f.call("POST", "/recommend", json::object()).status == 400);
    CHECK(f.call("POST", "/recommend", {{"profile_id", "ghost"}}).status == 404);
    CHECK(f.call("POST", "/recommend", {{"profile", participant_json(1)}, {"model_ids", {"nope"}}}).status == 404);
  }
}

TEST_CASE("whatif shows the rule change") {
  Fixture f;
  const auto out = f.ok("POST", "/whatif", {{"profile", participant_json(1)}, {"overrides", {{"FCPA", "FCPA2"}}}});
  const auto& fwt = out["diff"]["FWT"];
  CHECK(fwt["changed"] == true);
  CHECK(fwt["before"]["codes"] == json{"FWT3"});
  CHECK(fwt["before"]["source"]["origin"] == "RULE");
  CHECK(fwt["after"]["source"]["origin"] != "RULE");
  CHECK(out["profile"]["values"]["FCPA"] == json{"FCPA2"});
  CHECK(out["diff"].size() == 30);
  CHECK(f.call("POST", "/whatif", {{"profile", participant_json(1)}, {"overrides", {{"FCPA", "FCPA9"}}}}).status ==
        400);
}

TEST_CASE("pure endpoints render identical bytes") {
  Fixture f;
  const json rec{{"profile", participant_json(3)}, {"explain", true}};
  const json rocker{{"foot", {{"length", 270}, {"mth_line", 190}}}, {"shoe_interior_length", 285}};
  const json cmp{{"baseline_csv", fixture_csv("baseline.pressure.csv")},
                 {"intervention_csv", fixture_csv("intervention.pressure.csv")}};
  for (const auto& [path, body] : std::vector<std::pair<std::string, json>>{
           {"/recommend", rec},
           {"/whatif", {{"profile", participant_json(1)}, {"overrides", {{"FO", "FO1"}}}}},
           {"/geometry/rocker", rocker},
           {"/pressure/compare", cmp}}) {
    const auto a = f.call("POST", path, body);
    const auto b = f.call("POST", path, body);
    CHECK(a.status == 200);
    CHECK(a.body == b.body);
  }
  CHECK(f.call("GET", "/catalog").body == f.call("GET", "/catalog").body);
}

TEST_CASE("geometry endpoints") {
  Fixture f;
  const json foot{{"length", 270}, {"mth_line", 195}};
  auto out = f.ok("POST", "/geometry/rocker", {{"foot", foot}, {"shoe_interior_length", 280}});
  CHECK(out["sheet"] == "rocker");

  out = f.ok("POST", "/geometry/fit", {{"foot", foot}, {"shoe_interior_length", 278}});
  CHECK(out["ok"] == false);
  CHECK(out["toe_allowance_mm"] == 8.0);

  out = f.ok("POST", "/geometry/heel", {{"sex", "male"}, {"FWHH", "FWHH1"}});
  CHECK(out["sheet"] == "heel_height");

  out = f.ok("POST", "/geometry/insole", {{"FWT", "FWT2"}, {"INSBLM", "INSBLM1"}, {"INSMLM", "INSMLM1"}, {"INSTLM", "INSTLM1"}});
  CHECK(out.contains("sheet"));
  out = f.ok("POST", "/geometry/met-addition", {{"mth_line", 195}});
  CHECK(out.contains("sheet"));
  out = f.ok("POST", "/geometry/mla", {{"cast_height", 22}});
  CHECK(out.contains("sheet"));
  out = f.ok("POST", "/geometry/cutout", {{"roi", {{"radius", 6}}}});
  CHECK(out.contains("sheet"));

  CHECK(f.call("POST", "/geometry/wings", json::object()).status == 404);
  CHECK(f.call("POST", "/geometry/rocker", {{"foot", foot}}).status == 400);
}

TEST_CASE("pressure recordings and compare") {
  Fixture f;
  Request up{"POST", "/pressure/recordings", fixture_csv("baseline.pressure.csv"), "text/csv",
             {{"id", "base"}, {"side", "left"}}};
  auto res = f.service.handle(up);
  CHECK(res.status == 201);
  CHECK(json::parse(res.body)["version"] == 1);
  res = f.call("POST", "/pressure/recordings", {{"id", "int"}, {"csv", fixture_csv("intervention.pressure.csv")}});
  CHECK(res.status == 201);
  CHECK(f.ok("GET", "/pressure/recordings") == json{"base", "int"});
  CHECK(f.call("POST", "/pressure/recordings", {{"csv", "t,r,c,p\n"}}).status == 400);

  const auto report = f.ok("POST", "/pressure/compare", {{"baseline_id", "base"}, {"intervention_id", "int"}});
  CHECK(report["met"] == true);
  bool found = false;
  for (const auto& z : report["zones"]) {
    if (z["zone"] != "forefoot") continue;
    found = true;
    CHECK(z["ppp_reduction_pct"].get<double>() == doctest::Approx(35.0));
  }
  CHECK(found);
  CHECK(f.call("POST", "/pressure/compare", {{"baseline_id", "base"}}).status == 400);
  CHECK(f.call("POST", "/pressure/compare", {{"baseline_id", "ghost"}, {"intervention_id", "int"}}).status == 404);
}

TEST_CASE("trials over the service") {
  Fixture f;
  const json rx = testing::small_prescription();
  auto res = f.call("POST", "/trials", {{"trial_id", "TR1"}, {"patient_id", "P1"}, {"prescription", rx}, {"date", "2026-01-01"}});
  CHECK(res.status == 201);
  CHECK(json::parse(res.body)["state"]["state"] == "Baseline");
  CHECK(f.call("POST", "/trials", {{"trial_id", "TR1"}, {"patient_id", "P1"}, {"prescription", rx}}).status == 409);
  CHECK(f.call("POST", "/trials", {{"trial_id", "TR2"}, {"patient_id", "P1"}}).status == 400);

  const json visit1{{"label", "T1"}, {"date", "2026-01-10"}, {"satisfaction", 4}};
  CHECK(f.call("POST", "/trials/TR1/events", {{"type", "modification"}, {"evaluation", pressure::report_to_json(testing::offload_report(false))}, {"visit", visit1}}).status == 409);
  CHECK(f.ok("POST", "/trials/TR1/events", {{"type", "fitting"}, {"visit", visit1}})["state"]["state"] == "Fitted");

  SUBCASE("stale expected_version") {
    CHECK(f.call("POST", "/trials/TR1/events", {{"type", "withdraw"}, {"expected_version", 2}}).status == 409);
    CHECK(f.ok("POST", "/trials/TR1/events", {{"type", "withdraw"}, {"expected_version", 3}})["state"]["reason"] ==
          "withdrawn");
  }
  SUBCASE("rounds exhausted") {
    const json unmet = pressure::report_to_json(testing::offload_report(false));
    for (int i = 2; i <= 4; ++i) {
      const json v{{"label", "T" + std::to_string(i)}, {"date", "2026-02-0" + std::to_string(i)}};
      f.ok("POST", "/trials/TR1/events", {{"type", "modification"}, {"evaluation", unmet}, {"visit", v}});
    }
    res = f.call("POST", "/trials/TR1/events", {{"type", "modification"}, {"evaluation", unmet}});
    CHECK(res.status == 409);
    const auto state = f.ok("GET", "/trials/TR1")["state"];
    CHECK(state["state"] == "Closed");
    CHECK(state["reason"] == "rounds_exhausted");
    CHECK(f.ok("GET", "/trials/TR1/events").size() == 6);
    CHECK(f.service.store().latest_version("trial", "TR1") == 6);
  }
  SUBCASE("goal met through a compare request") {
    const json cmp{{"baseline_csv", fixture_csv("baseline.pressure.csv")},
                   {"intervention_csv", fixture_csv("intervention.pressure.csv")}};
    const auto out = f.ok("POST", "/trials/TR1/events",
                          {{"type", "modification"}, {"compare", cmp}, {"visit", {{"label", "T2"}, {"date", "2026-02-01"}}}});
    CHECK(out["state"]["reason"] == "goal_met");
  }
  CHECK(f.call("GET", "/trials/ghost").status == 404);
  CHECK(f.call("POST", "/trials/TR1/events", {{"type", "party"}}).status >= 400);
}

TEST_CASE("models: train, fetch, evaluate") {
  Fixture f;
  const json dataset = json::parse(testing::slurp(testing::data_dir() / "reference.dataset.json"));
  json body = dataset.is_array() ? json{{"records", dataset}} : dataset;
  body["id"] = "reference";
  CHECK(f.call("POST", "/datasets", body).status == 201);

  auto res = f.call("POST", "/models/train", {{"dataset_id", "reference"}, {"targets", {"FWT", "INST"}}, {"seed", 42}});
  REQUIRE(res.status == 201);
  const auto trained = json::parse(res.body)["models"];
  REQUIRE(trained.size() == 2);
  const std::string id = trained[0]["id"];

  CHECK(f.ok("GET", "/models")["stored"].size() == 2);
  CHECK(f.ok("GET", "/models")["defaults"].size() == 30);
  CHECK(f.ok("GET", "/models/" + id)["version"] == 1);
  CHECK(f.ok("GET", "/models/tree-FWS")["default"] == true);

  const auto ev = f.ok("GET", "/models/" + id + "/eval", nullptr, {{"protocol", "resubstitution"}});
  CHECK(ev["protocol"] == "resubstitution");
  CHECK(ev["model_id"] == id);
  CHECK(f.ok("GET", "/models/" + id + "/eval")["protocol"] == "loo");
  CHECK(f.call("GET", "/models/" + id + "/eval", nullptr, {{"protocol", "kfold"}}).status == 400);
  CHECK(f.call("GET", "/models/ghost").status == 404);
  CHECK(f.call("POST", "/models/train", {{"dataset_id", "ghost"}}).status == 404);
}

TEST_CASE("cli exit codes and output") {
  auto r = run_cli("recommend --profile " + (testing::data_dir() / "fixtures/participant1.profile.json").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("FWT3") != std::string::npos);
  CHECK(r.out.find("Rule 1") != std::string::npos);
  CHECK(r.out.find("INST2") != std::string::npos);
  CHECK(r.out.find("Rule 2") != std::string::npos);

  r = run_cli("pressure compare --baseline " + (testing::data_dir() / "fixtures/baseline.pressure.csv").string() +
              " --intervention " + (testing::data_dir() / "fixtures/intervention.pressure.csv").string());
  CHECK(r.code == 0);
  CHECK(r.out.find("35% reduction") != std::string::npos);
  CHECK(r.out.find("goal met") != std::string::npos);

  TempDir tmp;
  const auto bad = tmp.path / "bad.rules";
  std::ofstream(bad) << "rule \"x\": if FO == FO9 then FWT := FWT1\n";
  r = run_cli("rules check " + bad.string());
  CHECK(r.code == 2);
  CHECK(r.out.find("code FO9 not in feature FO") != std::string::npos);
  CHECK(run_cli("rules check " + (testing::data_dir() / "rules/paper.rules").string()).code == 0);

  r = run_cli("geom fit --foot-length 270 --shoe-length 278");
  CHECK(r.code == 1);
  CHECK(run_cli("no-such-command").code == 2);

  const auto log = tmp.path / "trial.json";
  r = run_cli("trial start --log " + log.string() + " --id TR --patient P1 --prescription " +
              (testing::data_dir() / "fixtures/participant1.profile.json").string());
  CHECK(r.code != 0);  // a profile is not a prescription
}

TEST_CASE("http server answers over a socket") {
  const int port = 20000 + static_cast<int>(::getpid() % 20000);
  TempDir store;
  const pid_t child = ::fork();
  REQUIRE(child >= 0);
  if (child == 0) {
    ::setenv("PEDOCDS_DATA", testing::data_dir().c_str(), 1);
    ::execl(PEDOCDS_CLI, PEDOCDS_CLI, "serve", "--host", "127.0.0.1", "--port", std::to_string(port).c_str(),
            "--store", store.path.c_str(), static_cast<char*>(nullptr));
    std::_Exit(127);
  }
  httplib::Client client("127.0.0.1", port);
  httplib::Result res;
  for (int i = 0; i < 100 && !res; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    res = client.Get("/catalog");
  }
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["features"].size() == 39);
  auto post = client.Post("/recommend", json{{"profile", participant_json(1)}}.dump(), "application/json");
  REQUIRE(post);
  CHECK(post->status == 200);
  CHECK(json::parse(post->body)["prescription"]["values"]["FWT"] == json{"FWT3"});
  auto missing = client.Get("/profiles/ghost");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  ::kill(child, SIGTERM);
  ::waitpid(child, nullptr, 0);
}
