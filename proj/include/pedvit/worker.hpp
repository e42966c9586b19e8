#pragma once

// Stage-1 worker: holds preloaded weights and runs the window-attention
// layers for each TASK it receives. One thread per connection; weights are
// shared read-only.

#include <pedvit/model_config.hpp>
#include <pedvit/net.hpp>
#include <pedvit/vit.hpp>
#include <pedvit/weights.hpp>
#include <pedvit/wire.hpp>

#include <atomic>
#include <chrono>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <ostream>
#include <thread>

namespace pedvit {

// Test hook: decides what happens to the seq-th task seen by this worker.
struct FaultAction {
    enum class Kind { proceed, drop_connection, delay } kind = Kind::proceed;
    std::chrono::milliseconds delay{0};

    static FaultAction proceed() { return {}; }
    static FaultAction drop() { return {Kind::drop_connection, {}}; }
    static FaultAction stall(std::chrono::milliseconds d) { return {Kind::delay, d}; }
};

struct WorkerOptions {
    std::function<FaultAction(const wire::TaskMsg&, std::size_t seq)> fault_hook;
    // Called after each completed task with its compute time.
    std::function<void(const wire::TaskMsg&, std::chrono::nanoseconds)> on_task;
    std::ostream* log = nullptr;
};

class Worker {
public:
    Worker(std::shared_ptr<const WeightSet> weights, ModelConfig cfg, WorkerOptions opts = {})
        : weights_(std::move(weights)), cfg_(cfg), opts_(std::move(opts)) {}

    Worker(const Worker&) = delete;
    Worker& operator=(const Worker&) = delete;
    ~Worker() { stop(); }

    // Binds and starts accepting. Throws net::AddressInUse if the port is taken.
    void start(const net::Endpoint& listen) {
        listener_ = net::listen_tcp(listen);
        port_ = net::bound_port(listener_);
        stopping_ = false;
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    // Stops accepting; connections finish their current task and exit.
    void stop() {
        stopping_ = true;
        if (acceptor_.joinable()) acceptor_.join();
        listener_.close();
        std::list<std::thread> conns;
        {
            std::lock_guard lk(mu_);
            conns.swap(connections_);
        }
        for (auto& t : conns)
            if (t.joinable()) t.join();
    }

    std::uint16_t port() const noexcept { return port_; }
    std::uint64_t weight_hash() const noexcept { return weights_->content_hash; }
    std::size_t tasks_completed() const noexcept { return completed_.load(); }

    // Protocol state machine for one connection, independent of sockets.
    struct Session {
        bool greeted = false;
    };

    // Returns the reply, or nullopt when the connection must be closed.
    std::optional<wire::Message> handle(Session& session, const wire::Message& msg) const {
        if (const auto* h = std::get_if<wire::Hello>(&msg)) {
            if (h->version != wire::kProtocolVersion)
                return wire::ErrorMsg{0, wire::ErrorCode::version,
                                      "protocol version " + std::to_string(h->version) + " unsupported"};
            if (h->weight_hash != weights_->content_hash)
                return wire::ErrorMsg{0, wire::ErrorCode::model_skew, "weight hash mismatch"};
            session.greeted = true;
            return wire::HelloAck{wire::kProtocolVersion, weights_->content_hash,
                                  static_cast<std::uint16_t>(cfg_.window_r),
                                  static_cast<std::uint16_t>(cfg_.window_r),
                                  static_cast<std::uint16_t>(cfg_.embed_dim)};
        }
        if (const auto* t = std::get_if<wire::TaskMsg>(&msg)) {
            if (!session.greeted) return wire::ErrorMsg{t->task_id, wire::ErrorCode::internal, "HELLO required"};
            if (t->weight_hash != weights_->content_hash)
                return wire::ErrorMsg{t->task_id, wire::ErrorCode::model_skew, "weight hash mismatch"};
            if (t->layer_start != 0 || t->layer_end != cfg_.window_layers)
                return wire::ErrorMsg{t->task_id, wire::ErrorCode::shape, "unsupported layer range"};
            try {
                TokenGrid grid(t->h, t->w, Matrix(static_cast<std::size_t>(t->h) * t->w, t->embed_dim, t->tensor));
                StageOutput out = encode_window_stage(grid, *weights_, cfg_, t->window_index);
                return wire::ResultMsg{t->task_id, t->window_index, t->h, t->w, t->embed_dim,
                                       std::move(out.tokens.tokens.data())};
            } catch (const ShapeError& e) {
                return wire::ErrorMsg{t->task_id, wire::ErrorCode::shape, e.what()};
            }
        }
        return std::nullopt;
    }

private:
    void accept_loop() {
        while (!stopping_) {
            pollfd p{listener_.fd(), POLLIN, 0};
            if (::poll(&p, 1, 50) <= 0) continue;
            const int fd = ::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
            if (fd < 0) continue;
            std::lock_guard lk(mu_);
            connections_.emplace_back([this, fd] { serve_connection(net::Socket(fd)); });
        }
    }

    void serve_connection(net::Socket sock) {
        Session session;
        try {
            while (!stopping_) {
                pollfd p{sock.fd(), POLLIN, 0};
                const int rc = ::poll(&p, 1, 50);
                if (rc == 0) continue;
                if (rc < 0) {
                    if (errno == EINTR) continue;
                    return;
                }
                const auto io_deadline = net::Clock::now() + std::chrono::seconds(30);
                auto msg = net::read_message(sock, io_deadline);
                if (!msg) return;
                const auto* task = std::get_if<wire::TaskMsg>(&*msg);
                const auto t0 = net::Clock::now();
                if (task && opts_.fault_hook) {
                    const auto action = opts_.fault_hook(*task, seq_.fetch_add(1));
                    if (action.kind == FaultAction::Kind::drop_connection) return;
                    if (action.kind == FaultAction::Kind::delay) std::this_thread::sleep_for(action.delay);
                }
                const auto c0 = net::Clock::now();
                auto reply = handle(session, *msg);
                const auto compute = net::Clock::now() - c0;
                if (!reply) return;
                // Bookkeeping precedes the reply so a client that has its
                // result also sees the counters updated.
                const bool result = task && std::holds_alternative<wire::ResultMsg>(*reply);
                if (result) {
                    ++completed_;
                    if (opts_.on_task) opts_.on_task(*task, compute);
                }
                net::write_message(sock, *reply, io_deadline);
                if (result) {
                    log_task(*task, net::Clock::now() - t0);
                } else if (std::holds_alternative<wire::HelloAck>(*reply) && opts_.log) {
                    std::lock_guard lk(log_mu_);
                    *opts_.log << "hello-ack weight_hash=" << std::hex << weights_->content_hash << std::dec
                               << std::endl;
                }
            }
        } catch (const std::exception& e) {
            // Malformed or truncated frame: drop the connection, keep serving others.
            if (opts_.log) {
                std::lock_guard lk(log_mu_);
                *opts_.log << "connection closed: " << e.what() << std::endl;
            }
        }
    }

    void log_task(const wire::TaskMsg& t, net::Clock::duration d) {
        if (!opts_.log) return;
        const double ms = std::chrono::duration<double, std::milli>(d).count();
        std::lock_guard lk(log_mu_);
        *opts_.log << "{\"task_id\":" << t.task_id << ",\"window_index\":" << t.window_index << ",\"ms\":" << ms
                   << "}" << std::endl;
    }

    std::shared_ptr<const WeightSet> weights_;
    ModelConfig cfg_;
    WorkerOptions opts_;
    net::Socket listener_;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> seq_{0};
    std::atomic<std::size_t> completed_{0};
    std::thread acceptor_;
    std::mutex mu_;
    std::mutex log_mu_;
    std::list<std::thread> connections_;
};

} // namespace pedvit
