#include "aan/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "aan/format.hpp"
#include "aan/session_log.hpp"

namespace aan {

namespace {

ServiceReply json_reply(int status, const Json& j) {
    return ServiceReply{status, j.dump(), "application/json"};
}

ServiceReply error_reply(int status, std::string_view kind, const std::string& message) {
    return json_reply(status, Json{{"error", kind}, {"message", message}});
}

int status_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::Busy:
            return 409;
        case ErrorKind::OutOfRange:
            return 422;
        case ErrorKind::InvalidArgument:
        case ErrorKind::Config:
        case ErrorKind::Dimension:
        case ErrorKind::Ordering:
            return 400;
        default:
            return 500;
    }
}

}  // namespace

SessionService::SessionService(Scenario scenario)
    : scenario_(std::move(scenario)),
      session_(start_session(scenario_.cfg, scenario_.task, scenario_.patient)) {}

SessionService::~SessionService() {
    stop();
}

std::uint64_t SessionService::version() const {
    std::lock_guard lock(version_mutex_);
    return version_;
}

void SessionService::bump_version() {
    {
        std::lock_guard lock(version_mutex_);
        ++version_;
    }
    version_cv_.notify_all();
}

std::uint64_t SessionService::wait_version(std::uint64_t seen, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(version_mutex_);
    version_cv_.wait_for(lock, timeout, [&] { return version_ != seen || stopping_.load(); });
    return version_;
}

std::size_t SessionService::pending_events() const {
    std::lock_guard lock(pending_mutex_);
    return pending_.size();
}

void SessionService::set_advance_hook(std::function<void()> hook) {
    std::lock_guard lock(advance_mutex_);
    advance_hook_ = std::move(hook);
}

Json SessionService::state_json() const {
    const auto& s = session_;
    Json vertices = Json::array();
    for (const auto& v : s.task.vertices) {
        vertices.push_back(to_json(v));
    }
    Json actuals = Json::array();
    Json vias = Json::array();
    Json metrics = Json::array();
    for (const auto& rec : s.log) {
        for (const auto& v : rec.vias) {
            vias.push_back(Json{{"iteration", rec.iteration}, {"time", v.time}, {"mean", to_json(v.mean)}});
        }
        Json m = to_json(rec.metrics);
        m["iteration"] = rec.iteration;
        metrics.push_back(std::move(m));
    }
    if (!s.log.empty()) {
        for (const auto& ep : s.log.back().episodes) {
            actuals.push_back(display_trajectory(ep.actual));
        }
    }
    return Json{{"version", version()},
                {"iteration", s.iteration},
                {"iterations", s.cfg.iterations},
                {"complete", s.iteration >= s.cfg.iterations},
                {"pending_events", pending_events()},
                {"config",
                 {{"duration", s.cfg.duration},
                  {"force_threshold", s.cfg.force_threshold},
                  {"via_time_shift", s.cfg.via_time_shift},
                  {"episodes", s.cfg.episodes},
                  {"dims", s.cfg.dims}}},
                {"task",
                 {{"name", s.task.name},
                  {"vertices", std::move(vertices)},
                  {"keypoint_times", s.task.keypoint_times},
                  {"desired", display_trajectory(s.task.desired)}}},
                {"preference", preference_band(s.preference)},
                {"reference", display_trajectory(s.reference)},
                {"actuals", std::move(actuals)},
                {"vias", std::move(vias)},
                {"metrics", std::move(metrics)}};
}

ServiceReply SessionService::get_state() const {
    std::shared_lock lock(state_mutex_);
    return json_reply(200, state_json());
}

ServiceReply SessionService::get_replay(const std::string& episode) const {
    std::size_t j = 0;
    const auto* end = episode.data() + episode.size();
    const auto res = std::from_chars(episode.data(), end, j);
    if (episode.empty() || res.ec != std::errc() || res.ptr != end) {
        return error_reply(400, "invalid_argument", "episode must be a non-negative integer");
    }
    std::shared_lock lock(state_mutex_);
    const auto& eps = session_.log.back().episodes;
    if (j >= eps.size()) {
        return error_reply(404, "out_of_range",
                           "episode " + episode + " does not exist (have " + std::to_string(eps.size()) + ")");
    }
    Json body = display_trajectory(eps[j].actual);
    body["episode"] = j;
    body["iteration"] = session_.log.back().iteration;
    return json_reply(200, body);
}

ServiceReply SessionService::post_force(const std::string& body) {
    const SessionConfig& cfg = scenario_.cfg;  // immutable after construction
    ForceEvent e;
    try {
        const Json j = Json::parse(body);
        if (!j.is_object() || !j.contains("t") || !j.at("t").is_number()) {
            return error_reply(400, "invalid_argument", "body must be an object with numeric t");
        }
        e.time = j.at("t").get<double>();
        e.force.resize(cfg.dims);
        if (j.contains("f")) {
            e.force = vec_from_json(j.at("f"), cfg.dims);
        } else {
            static constexpr const char* kAxes[] = {"fx", "fy", "fz"};
            if (cfg.dims > 3) {
                return error_reply(400, "invalid_argument", "use \"f\": [...] for more than three axes");
            }
            for (Eigen::Index a = 0; a < cfg.dims; ++a) {
                const char* key = kAxes[a];
                if (!j.contains(key) || !j.at(key).is_number()) {
                    return error_reply(400, "invalid_argument", std::string("missing numeric ") + key);
                }
                e.force[a] = j.at(key).get<double>();
            }
        }
    } catch (const nlohmann::json::exception& ex) {
        return error_reply(400, "invalid_argument", std::string("malformed JSON: ") + ex.what());
    } catch (const Error& ex) {
        return error_reply(400, to_string(ex.kind()), ex.what());
    }
    if (!std::isfinite(e.time) || !e.force.allFinite()) {
        return error_reply(400, "invalid_argument", "force event must be finite");
    }
    if (e.time < 0.0 || e.time > cfg.duration) {
        return error_reply(422, "out_of_range", "t must lie in [0, " + format_double(cfg.duration) + "]");
    }
    const double mag = e.force.norm();
    std::size_t count = 0;
    {
        std::lock_guard lock(pending_mutex_);
        pending_.push_back(e);
        count = pending_.size();
    }
    return json_reply(200, Json{{"accepted", true},
                                {"t", e.time},
                                {"magnitude", mag},
                                {"clears_threshold", mag > cfg.force_threshold},
                                {"pending", count}});
}

ServiceReply SessionService::post_advance() {
    std::unique_lock adv(advance_mutex_, std::try_to_lock);
    if (!adv.owns_lock()) {
        return error_reply(409, "busy", "an iteration is already executing");
    }
    if (session_.iteration >= session_.cfg.iterations) {
        return error_reply(409, "complete", "session finished all " + std::to_string(session_.cfg.iterations) +
                                                " iterations; POST /reset to start again");
    }
    std::vector<ForceEvent> events;
    {
        std::lock_guard lock(pending_mutex_);
        events.swap(pending_);
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const ForceEvent& a, const ForceEvent& b) { return a.time < b.time; });
    try {
        if (advance_hook_) {
            advance_hook_();
        }
        // Only this thread writes, so reading the session unlocked is safe.
        PendingIteration next = prepare_iteration(session_, event_via_source(events), events);
        {
            std::unique_lock lock(state_mutex_);
            commit_iteration(session_, std::move(next));
        }
    } catch (const Error& e) {
        {
            std::lock_guard lock(pending_mutex_);
            pending_.insert(pending_.begin(), events.begin(), events.end());
        }
        spdlog::warn("advance failed: {}", e.what());
        return error_reply(status_for(e), to_string(e.kind()), e.what());
    }
    bump_version();
    std::shared_lock lock(state_mutex_);
    return json_reply(200, state_json());
}

ServiceReply SessionService::post_reset() {
    std::unique_lock adv(advance_mutex_, std::try_to_lock);
    if (!adv.owns_lock()) {
        return error_reply(409, "busy", "an iteration is executing");
    }
    TherapySession fresh = start_session(scenario_.cfg, scenario_.task, scenario_.patient);
    {
        std::unique_lock lock(state_mutex_);
        session_ = std::move(fresh);
    }
    {
        std::lock_guard lock(pending_mutex_);
        pending_.clear();
    }
    bump_version();
    std::shared_lock lock(state_mutex_);
    return json_reply(200, state_json());
}

ServiceReply SessionService::get_log() const {
    std::shared_lock lock(state_mutex_);
    return ServiceReply{200, session_jsonl(scenario_, "proposed", session_), "application/x-ndjson"};
}

void SessionService::register_routes() {
    auto& srv = *server_;
    auto send = [](httplib::Response& res, const ServiceReply& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
    srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    srv.Get("/state", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_state()); });
    srv.Get("/replay", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, get_replay(req.has_param("episode") ? req.get_param_value("episode") : ""));
    });
    srv.Get("/log", [this, send](const httplib::Request&, httplib::Response& res) { send(res, get_log()); });
    srv.Post("/force",
             [this, send](const httplib::Request& req, httplib::Response& res) { send(res, post_force(req.body)); });
    srv.Post("/advance", [this, send](const httplib::Request&, httplib::Response& res) { send(res, post_advance()); });
    srv.Post("/reset", [this, send](const httplib::Request&, httplib::Response& res) { send(res, post_reset()); });
    srv.Get("/events", [this](const httplib::Request&, httplib::Response& res) {
        res.set_header("Cache-Control", "no-cache");
        auto seen = std::make_shared<std::uint64_t>(~std::uint64_t{0});
        res.set_chunked_content_provider("text/event-stream", [this, seen](std::size_t, httplib::DataSink& sink) {
            if (stopping_) {
                return false;
            }
            const std::uint64_t v = *seen == ~std::uint64_t{0} ? version() : wait_version(*seen, std::chrono::seconds(15));
            if (stopping_) {
                return false;
            }
            std::string msg;
            if (v != *seen) {
                msg = "event: version\ndata: {\"version\":" + std::to_string(v) + "}\n\n";
                *seen = v;
            } else {
                msg = ": keep-alive\n\n";
            }
            return sink.write(msg.data(), msg.size());
        });
    });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            res.status = status_for(e);
            res.set_content(Json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 500;
            res.set_content(Json{{"error", "internal"}, {"message", e.what()}}.dump(), "application/json");
        }
    });
}

int SessionService::start(const std::string& host, int port) {
    require(!running_, ErrorKind::InvalidArgument, "service already running");
    server_ = std::make_unique<httplib::Server>();
    register_routes();
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (!server_->bind_to_port(host, port)) {
        bound = -1;
    }
    require(bound > 0, ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    stopping_ = false;
    running_ = true;
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    spdlog::info("session service listening on {}:{}", host, bound);
    return bound;
}

void SessionService::stop() {
    if (!running_) {
        return;
    }
    {
        std::lock_guard lock(version_mutex_);
        stopping_ = true;
    }
    version_cv_.notify_all();
    server_->stop();
    if (thread_.joinable()) {
        thread_.join();
    }
    running_ = false;
}

}  // namespace aan
