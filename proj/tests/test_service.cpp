#include <atomic>
#include <future>
#include <thread>

#include "aan/service.hpp"
#include "aan/session_log.hpp"
#include "helpers.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

using namespace aan;

namespace {

Scenario small_scenario() {
    Scenario s = load_scenario(std::string(AAN_SOURCE_DIR) + "/scenarios/task1_stage1.json");
    s.cfg.iterations = 3;
    s.cfg.episodes = 2;
    return s;
}

std::string force_body(const ForceEvent& e) {
    return Json{{"t", e.time}, {"f", to_json(e.force)}}.dump();
}

Json body_of(const ServiceReply& r) { return Json::parse(r.body); }

}  // namespace

TEST_CASE("a posted force becomes a shifted via-point") {
    SessionService svc(small_scenario());
    const auto v0 = svc.version();
    const auto f = svc.post_force(R"({"t": 2.0, "fx": 12.0, "fy": 0.0})");
    REQUIRE(f.status == 200);
    CHECK(body_of(f)["clears_threshold"] == true);
    CHECK(svc.pending_events() == 1);
    const auto a = svc.post_advance();
    REQUIRE(a.status == 200);
    CHECK(svc.version() == v0 + 1);
    CHECK(svc.pending_events() == 0);
    const Json state = body_of(a);
    REQUIRE(state["vias"].size() == 1);
    CHECK(state["vias"][0]["time"].get<double>() == doctest::Approx(2.05).epsilon(1e-12));
    CHECK(state["iteration"] == 1);
}

TEST_CASE("an empty advance adds no vias and keeps the endpoints") {
    const Scenario sc = small_scenario();
    SessionService svc(sc);
    const auto a = svc.post_advance();
    REQUIRE(a.status == 200);
    const Json state = body_of(a);
    CHECK(state["vias"].empty());
    const auto& ref = state["reference"]["x"];
    const Vec first = vec_from_json(ref.front());
    const Vec last = vec_from_json(ref.back());
    CHECK((first - sc.task.desired.position(0)).norm() <= 1e-3);
    CHECK((last - sc.task.desired.position(sc.task.desired.size() - 1)).norm() <= 1e-3);
}

TEST_CASE("request validation") {
    SessionService svc(small_scenario());
    CHECK(svc.post_force("not json").status == 400);
    CHECK(svc.post_force(R"({"fx": 1, "fy": 2})").status == 400);
    CHECK(svc.post_force(R"({"t": 1.0, "fx": 1})").status == 400);
    CHECK(svc.post_force(R"({"t": 1.0, "f": [1, 2, 3]})").status == 400);
    CHECK(svc.post_force(R"({"t": 11.0, "fx": 1, "fy": 2})").status == 422);
    CHECK(svc.post_force(R"({"t": -0.1, "fx": 1, "fy": 2})").status == 422);
    CHECK(svc.pending_events() == 0);
    CHECK(svc.get_replay("x").status == 400);
    CHECK(svc.get_replay("-1").status == 400);
    CHECK(svc.get_replay("99").status == 404);
    CHECK(svc.get_replay("1").status == 200);
}

TEST_CASE("concurrent advance is refused while one runs") {
    SessionService svc(small_scenario());
    std::promise<void> entered;
    std::promise<void> release;
    auto release_f = release.get_future().share();
    std::atomic<bool> first{true};
    svc.set_advance_hook([&] {
        if (first.exchange(false)) {
            entered.set_value();
            release_f.wait();
        }
    });
    auto running = std::async(std::launch::async, [&] { return svc.post_advance(); });
    entered.get_future().wait();
    const auto busy = svc.post_advance();
    CHECK(busy.status == 409);
    CHECK(body_of(busy)["error"] == "busy");
    CHECK(svc.post_reset().status == 409);
    CHECK(svc.get_state().status == 200);
    release.set_value();
    CHECK(running.get().status == 200);
    CHECK(svc.version() == 1);
}

TEST_CASE("completed sessions refuse to advance until reset") {
    Scenario sc = small_scenario();
    sc.cfg.iterations = 1;
    SessionService svc(sc);
    CHECK(svc.post_advance().status == 200);
    const auto done = svc.post_advance();
    CHECK(done.status == 409);
    CHECK(body_of(done)["error"] == "complete");
    CHECK(svc.post_reset().status == 200);
    CHECK(svc.version() == 2);
    CHECK(body_of(svc.get_state())["iteration"] == 0);
    CHECK(svc.post_advance().status == 200);
}

TEST_CASE("events posted over HTTP reproduce the offline session log") {
    const Scenario sc = small_scenario();
    const TherapySession offline = run_session(sc.cfg, sc.task, sc.patient, sc.therapist);
    const std::string expected = session_jsonl(sc, "proposed", offline);

    SessionService svc(sc);
    const int port = svc.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    cli.set_read_timeout(120, 0);
    std::size_t posted = 0;
    for (std::size_t i = 1; i < offline.log.size(); ++i) {
        for (const auto& e : offline.log[i].events) {
            auto r = cli.Post("/force", force_body(e), "application/json");
            REQUIRE(r);
            REQUIRE(r->status == 200);
            ++posted;
        }
        auto r = cli.Post("/advance");
        REQUIRE(r);
        REQUIRE(r->status == 200);
        CHECK(Json::parse(r->body)["version"] == i);
    }
    CHECK(posted > 0);
    auto log = cli.Get("/log");
    REQUIRE(log);
    CHECK(log->status == 200);
    CHECK(log->body == expected);
    auto state = cli.Get("/state");
    REQUIRE(state);
    CHECK(Json::parse(state->body)["complete"] == true);
    svc.stop();
    CHECK_FALSE(svc.running());
}

TEST_CASE("version waits wake on change and time out otherwise") {
    SessionService svc(small_scenario());
    CHECK(svc.wait_version(0, std::chrono::milliseconds(20)) == 0);
    auto waiter = std::async(std::launch::async, [&] { return svc.wait_version(0, std::chrono::seconds(60)); });
    CHECK(svc.post_advance().status == 200);
    CHECK(waiter.get() == 1);
}
