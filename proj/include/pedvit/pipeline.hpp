#pragma once

// End-to-end encoding: local (monolithic) and distributed
// (embed -> split -> remote stage 1 -> merge -> local stage 2).

#include <pedvit/orchestrator.hpp>
#include <pedvit/partition.hpp>
#include <pedvit/vit.hpp>
#include <pedvit/worker.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pedvit {

struct EncodeTimings {
    std::chrono::nanoseconds total{0};
    std::chrono::nanoseconds stage1{0};  // window-layer compute
    std::chrono::nanoseconds network{0}; // dispatch wall time not spent computing
    std::chrono::nanoseconds stage2{0};  // other edge compute: embed, split, merge, global, neck
};

struct DistributedEncoding {
    TokenGrid embedding;
    AssignmentPlan partition_plan;
    AssignmentPlan task_plan;
    GatherResult gather;
    EncodeTimings timings;
};

inline std::vector<WindowTask> make_window_tasks(const Image& image, const WeightSet& w, const ModelConfig& cfg) {
    auto windows = embed_windows(image, w, cfg);
    std::vector<WindowTask> tasks;
    tasks.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) tasks.push_back({i, std::move(windows[i])});
    return tasks;
}

inline GatherOptions gather_options_for(const WeightSet& w, const ModelConfig& cfg,
                                        std::chrono::milliseconds deadline = deadline_from_env()) {
    GatherOptions o;
    o.deadline = deadline;
    o.weight_hash = w.content_hash;
    o.layer_start = 0;
    o.layer_end = static_cast<std::uint16_t>(cfg.window_layers);
    return o;
}

// `stage1_critical` supplies the remote compute critical path when the
// caller can observe it (in-process workers); otherwise all dispatch time
// is attributed to the network.
inline DistributedEncoding encode_distributed(const Image& image, const WeightSet& w, const ModelConfig& cfg,
                                              const PartitionScheme& scheme, const AssignmentPlan& plan,
                                              const std::vector<net::Endpoint>& endpoints,
                                              const GatherOptions& opts,
                                              const std::function<std::chrono::nanoseconds()>& stage1_critical = {}) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    DistributedEncoding out;
    out.partition_plan = plan;
    if (plan.window_to_server.size() != scheme.count())
        throw PlanningError("plan covers " + std::to_string(plan.window_to_server.size()) + " windows, scheme " +
                            scheme.to_string() + " has " + std::to_string(scheme.count()));
    out.task_plan = derive_task_plan(plan, attention_window_owners(scheme, cfg));
    const auto tasks = make_window_tasks(image, w, cfg);
    const auto t1 = Clock::now();
    out.gather = dispatch_and_gather(tasks, out.task_plan, endpoints, opts);
    const auto t2 = Clock::now();
    out.embedding = encode_global_stage(merge_windows(out.gather.outputs, cfg.windows_per_side()), w, cfg);
    const auto t3 = Clock::now();

    const auto dispatch = t2 - t1;
    out.timings.stage1 = stage1_critical ? std::min<std::chrono::nanoseconds>(stage1_critical(), dispatch)
                                         : std::chrono::nanoseconds{0};
    out.timings.network = dispatch - out.timings.stage1;
    out.timings.stage2 = (t1 - t0) + (t3 - t2);
    out.timings.total = t3 - t0;
    return out;
}

struct LocalEncoding {
    TokenGrid embedding;
    EncodeTimings timings;
};

// Same computation as encode_monolithic, instrumented per stage.
inline LocalEncoding encode_local_timed(const Image& image, const WeightSet& w, const ModelConfig& cfg) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    TokenGrid x = pad_grid(patch_embed(image, w, cfg), cfg.padded_grid());
    const auto t1 = Clock::now();
    for (std::size_t i = 0; i < cfg.window_layers; ++i) x = attention_block(x, w.layers[i], AttentionMode::window, cfg);
    const auto t2 = Clock::now();
    LocalEncoding out;
    out.embedding = encode_global_stage(x, w, cfg);
    const auto t3 = Clock::now();
    out.timings.stage1 = t2 - t1;
    out.timings.stage2 = (t1 - t0) + (t3 - t2);
    out.timings.total = t3 - t0;
    return out;
}

// A set of in-process loopback workers, used by tests and the bench command.
class LocalWorkerPool {
public:
    LocalWorkerPool(std::size_t count, std::shared_ptr<const WeightSet> weights, const ModelConfig& cfg,
                    std::function<WorkerOptions(std::size_t)> options_for = {}) {
        compute_ns_ = std::make_unique<std::atomic<long long>[]>(count);
        for (std::size_t i = 0; i < count; ++i) {
            compute_ns_[i] = 0;
            WorkerOptions o = options_for ? options_for(i) : WorkerOptions{};
            auto user_cb = o.on_task;
            o.on_task = [this, i, user_cb](const wire::TaskMsg& t, std::chrono::nanoseconds d) {
                compute_ns_[i] += d.count();
                if (user_cb) user_cb(t, d);
            };
            auto wk = std::make_unique<Worker>(weights, cfg, std::move(o));
            wk->start({"127.0.0.1", 0});
            endpoints_.push_back({"127.0.0.1", wk->port()});
            names_.push_back("worker-" + std::to_string(i));
            workers_.push_back(std::move(wk));
        }
    }

    // Workers go first: their task callbacks write into compute_ns_.
    ~LocalWorkerPool() {
        for (auto& w : workers_) w->stop();
    }

    const std::vector<net::Endpoint>& endpoints() const noexcept { return endpoints_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    Worker& worker(std::size_t i) { return *workers_.at(i); }
    std::size_t size() const noexcept { return workers_.size(); }

    void reset_compute() {
        for (std::size_t i = 0; i < workers_.size(); ++i) compute_ns_[i] = 0;
    }
    // Longest per-worker summed compute since the last reset.
    std::chrono::nanoseconds compute_critical_path() const {
        long long mx = 0;
        for (std::size_t i = 0; i < workers_.size(); ++i) mx = std::max<long long>(mx, compute_ns_[i].load());
        return std::chrono::nanoseconds(mx);
    }

private:
    std::vector<std::unique_ptr<Worker>> workers_;
    std::vector<net::Endpoint> endpoints_;
    std::vector<std::string> names_;
    std::unique_ptr<std::atomic<long long>[]> compute_ns_;
};

} // namespace pedvit
