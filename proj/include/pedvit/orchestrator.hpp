#pragma once

// Edge-side dispatch of stage-1 windows to workers and all-or-nothing
// gather of their results.
//
// Privacy dispatch invariant: a window is only ever written to the socket of
// the server the plan assigns it to, including on retry.

#include <pedvit/net.hpp>
#include <pedvit/partition.hpp>
#include <pedvit/vit.hpp>
#include <pedvit/wire.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pedvit {

class PrivacyInvariantViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct TransmissionRecord {
    std::size_t server = 0;
    std::size_t window_index = 0;
    std::uint64_t task_id = 0;
    int attempt = 0;
};

class GatherError : public std::runtime_error {
public:
    GatherError(std::vector<std::size_t> failed, std::vector<TransmissionRecord> log, const std::string& detail)
        : std::runtime_error(describe(failed, detail)), failed_(std::move(failed)), log_(std::move(log)) {}

    const std::vector<std::size_t>& failed_windows() const noexcept { return failed_; }
    const std::vector<TransmissionRecord>& transmissions() const noexcept { return log_; }

private:
    static std::string describe(const std::vector<std::size_t>& failed, const std::string& detail) {
        std::string s = "gather failed for windows [";
        for (std::size_t i = 0; i < failed.size(); ++i) s += (i ? "," : "") + std::to_string(failed[i]);
        s += "]";
        if (!detail.empty()) s += ": " + detail;
        return s;
    }

    std::vector<std::size_t> failed_;
    std::vector<TransmissionRecord> log_;
};

inline constexpr std::chrono::milliseconds kDefaultDeadline{30000};

inline std::chrono::milliseconds deadline_from_env() {
    if (const char* v = std::getenv("PEDVIT_DEADLINE_MS")) {
        char* end = nullptr;
        const long long ms = std::strtoll(v, &end, 10);
        if (end != v && *end == '\0' && ms > 0) return std::chrono::milliseconds(ms);
    }
    return kDefaultDeadline;
}

struct WindowTask {
    std::size_t window_index = 0;
    TokenGrid tokens;
};

struct GatherOptions {
    std::chrono::milliseconds deadline = deadline_from_env();
    std::uint64_t weight_hash = 0;
    std::uint16_t layer_start = 0;
    std::uint16_t layer_end = 0;
};

struct GatherResult {
    std::vector<StageOutput> outputs; // sorted by window_index
    std::vector<TransmissionRecord> transmissions;
    std::vector<std::chrono::nanoseconds> server_wall; // per server in plan order
};

inline void check_dispatch_allowed(const AssignmentPlan& plan, std::size_t server, std::size_t window) {
    if (window >= plan.window_to_server.size() || plan.window_to_server[window] != server)
        throw PrivacyInvariantViolation("window " + std::to_string(window) + " is not assigned to server " +
                                        std::to_string(server));
}

// Connection to one worker. Every send goes through the plan check.
class ServerChannel {
public:
    ServerChannel(std::size_t server, net::Endpoint ep, const AssignmentPlan& plan, const GatherOptions& opts,
                  std::mutex& log_mu, std::vector<TransmissionRecord>& log)
        : server_(server), ep_(std::move(ep)), plan_(plan), opts_(opts), log_mu_(log_mu), log_(log) {}

    StageOutput run(const WindowTask& task, std::uint64_t task_id, int attempt) {
        check_dispatch_allowed(plan_, server_, task.window_index);
        const auto deadline = net::Clock::now() + opts_.deadline;
        if (!sock_.valid()) handshake(deadline);
        wire::TaskMsg msg;
        msg.task_id = task_id;
        msg.window_index = static_cast<std::uint16_t>(task.window_index);
        msg.layer_start = opts_.layer_start;
        msg.layer_end = opts_.layer_end;
        msg.weight_hash = opts_.weight_hash;
        msg.h = static_cast<std::uint16_t>(task.tokens.height);
        msg.w = static_cast<std::uint16_t>(task.tokens.width);
        msg.embed_dim = static_cast<std::uint16_t>(task.tokens.dim());
        msg.tensor = task.tokens.tokens.data();
        {
            std::lock_guard lk(log_mu_);
            log_.push_back({server_, task.window_index, task_id, attempt});
        }
        net::write_message(sock_, msg, deadline);
        auto reply = net::read_message(sock_, deadline);
        if (!reply) throw net::ClosedError("server closed connection");
        if (const auto* err = std::get_if<wire::ErrorMsg>(&*reply))
            throw RemoteError("server error " + std::to_string(static_cast<int>(err->code)) + ": " + err->message);
        const auto* res = std::get_if<wire::ResultMsg>(&*reply);
        if (!res || res->task_id != task_id || res->window_index != msg.window_index || res->h != msg.h ||
            res->w != msg.w || res->embed_dim != msg.embed_dim)
            throw wire::ProtocolError("unexpected reply to task " + std::to_string(task_id));
        return StageOutput{task.window_index,
                           TokenGrid(res->h, res->w, Matrix(std::size_t{res->h} * res->w, res->embed_dim, res->tensor)),
                           opts_.layer_start, opts_.layer_end};
    }

    void reset() noexcept { sock_.close(); }

    class RemoteError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

private:
    void handshake(net::Clock::time_point deadline) {
        sock_ = net::connect_tcp(ep_, deadline);
        net::write_message(sock_, wire::Hello{wire::kProtocolVersion, opts_.weight_hash}, deadline);
        auto reply = net::read_message(sock_, deadline);
        if (!reply) throw net::ClosedError("server closed during handshake");
        if (const auto* err = std::get_if<wire::ErrorMsg>(&*reply)) {
            sock_.close();
            throw RemoteError("handshake rejected (code " + std::to_string(static_cast<int>(err->code)) +
                              "): " + err->message);
        }
        if (!std::holds_alternative<wire::HelloAck>(*reply)) throw wire::ProtocolError("expected HELLO-ACK");
    }

    std::size_t server_;
    net::Endpoint ep_;
    const AssignmentPlan& plan_;
    const GatherOptions& opts_;
    std::mutex& log_mu_;
    std::vector<TransmissionRecord>& log_;
    net::Socket sock_;
};

// Servers are driven concurrently, one channel each; a server's windows go
// over its channel in index order. A failed attempt (timeout, disconnect,
// bad reply) is retried once on a fresh connection to the same server.
// Worker ERROR replies are not retried.
inline GatherResult dispatch_and_gather(const std::vector<WindowTask>& windows, const AssignmentPlan& plan,
                                        const std::vector<net::Endpoint>& endpoints, const GatherOptions& opts) {
    if (endpoints.size() != plan.servers.size())
        throw PlanningError("dispatch: endpoint list does not match plan servers");
    for (const auto& w : windows)
        if (w.window_index >= plan.window_to_server.size())
            throw PlanningError("dispatch: window " + std::to_string(w.window_index) + " not covered by plan");

    std::vector<std::vector<const WindowTask*>> per_server(plan.servers.size());
    for (const auto& w : windows) per_server[plan.window_to_server[w.window_index]].push_back(&w);

    std::mutex mu;
    GatherResult result;
    result.server_wall.assign(plan.servers.size(), std::chrono::nanoseconds{0});
    std::vector<std::size_t> failed;
    std::string first_failure;
    std::exception_ptr violation;

    std::vector<std::thread> threads;
    for (std::size_t s = 0; s < per_server.size(); ++s) {
        if (per_server[s].empty()) continue;
        threads.emplace_back([&, s] {
            const auto t0 = net::Clock::now();
            ServerChannel channel(s, endpoints[s], plan, opts, mu, result.transmissions);
            for (const WindowTask* task : per_server[s]) {
                const std::uint64_t task_id = (static_cast<std::uint64_t>(s) << 32) | task->window_index;
                std::string why;
                bool done = false;
                for (int attempt = 0; attempt < 2 && !done; ++attempt) {
                    try {
                        StageOutput out = channel.run(*task, task_id, attempt);
                        std::lock_guard lk(mu);
                        result.outputs.push_back(std::move(out));
                        done = true;
                    } catch (const PrivacyInvariantViolation&) {
                        std::lock_guard lk(mu);
                        violation = std::current_exception();
                        return;
                    } catch (const ServerChannel::RemoteError& e) {
                        why = e.what();
                        channel.reset();
                        break;
                    } catch (const std::exception& e) {
                        why = e.what();
                        channel.reset();
                    }
                }
                if (!done) {
                    std::lock_guard lk(mu);
                    failed.push_back(task->window_index);
                    if (first_failure.empty())
                        first_failure = plan.servers[s] + " (" + endpoints[s].to_string() + "): " + why;
                }
            }
            std::lock_guard lk(mu);
            result.server_wall[s] = net::Clock::now() - t0;
        });
    }
    for (auto& t : threads) t.join();

    if (violation) std::rethrow_exception(violation);
    if (!failed.empty()) {
        std::sort(failed.begin(), failed.end());
        throw GatherError(std::move(failed), std::move(result.transmissions), first_failure);
    }
    std::sort(result.outputs.begin(), result.outputs.end(),
              [](const StageOutput& a, const StageOutput& b) { return a.window_index < b.window_index; });
    return result;
}

} // namespace pedvit
