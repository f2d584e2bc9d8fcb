#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "aan/scenario.hpp"

namespace httplib {
class Server;
}

namespace aan {

/// Result of an endpoint call: HTTP status plus JSON (or JSONL) body.
struct ServiceReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// One live session behind an HTTP boundary. All mutation goes through the
/// advance lock; readers see whole iterations only.
class SessionService {
public:
    explicit SessionService(Scenario scenario);
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    // Endpoint logic, callable without a socket.
    ServiceReply get_state() const;
    ServiceReply get_replay(const std::string& episode) const;
    ServiceReply post_force(const std::string& body);
    ServiceReply post_advance();
    ServiceReply post_reset();
    ServiceReply get_log() const;

    std::uint64_t version() const;
    std::size_t pending_events() const;

    /// Blocks until the version differs from `seen`, the timeout passes, or the
    /// service stops. Returns the current version.
    std::uint64_t wait_version(std::uint64_t seen, std::chrono::milliseconds timeout) const;

    /// Test hook run inside /advance while the advance lock is held.
    void set_advance_hook(std::function<void()> hook);

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    void stop();
    bool running() const { return running_; }

private:
    Json state_json() const;  // caller holds state_mutex_ (shared)
    void bump_version();
    void register_routes();

    Scenario scenario_;
    TherapySession session_;
    std::uint64_t version_ = 0;

    mutable std::shared_mutex state_mutex_;
    std::mutex advance_mutex_;
    mutable std::mutex pending_mutex_;
    std::vector<ForceEvent> pending_;
    std::function<void()> advance_hook_;

    mutable std::mutex version_mutex_;
    mutable std::condition_variable version_cv_;

    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::atomic<bool> stopping_{false};
};

}  // namespace aan
