#include "test_util.hpp"

#include <pedvit/net.hpp>
#include <pedvit/orchestrator.hpp>
#include <pedvit/pipeline.hpp>
#include <pedvit/worker.hpp>

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

using namespace pedvit;
using namespace std::chrono_literals;

namespace {

const ModelConfig kToy = toy_config();

std::shared_ptr<const WeightSet> toy_weights() {
    static const auto w = std::make_shared<const WeightSet>(random_weights(kToy));
    return w;
}

net::Socket connect_to(const Worker& w) {
    return net::connect_tcp({"127.0.0.1", w.port()}, net::Clock::now() + 2s);
}

wire::Message roundtrip(const net::Socket& s, const wire::Message& m) {
    const auto deadline = net::Clock::now() + 5s;
    net::write_message(s, m, deadline);
    auto reply = net::read_message(s, deadline);
    if (!reply) throw std::runtime_error("connection closed");
    return *reply;
}

wire::TaskMsg task_for(const TokenGrid& win, std::size_t index, std::uint64_t hash) {
    wire::TaskMsg t;
    t.task_id = 42;
    t.window_index = static_cast<std::uint16_t>(index);
    t.layer_start = 0;
    t.layer_end = static_cast<std::uint16_t>(kToy.window_layers);
    t.weight_hash = hash;
    t.h = t.w = static_cast<std::uint16_t>(win.height);
    t.embed_dim = static_cast<std::uint16_t>(win.dim());
    t.tensor = win.tokens.data();
    return t;
}

std::vector<StageOutput> gather_with(LocalWorkerPool& pool, const AssignmentPlan& plan,
                                     const std::vector<WindowTask>& tasks, std::chrono::milliseconds deadline = 5s) {
    return dispatch_and_gather(tasks, plan, pool.endpoints(), gather_options_for(*toy_weights(), kToy, deadline))
        .outputs;
}

} // namespace

TEST(Worker, HelloGetsAck) {
    std::ostringstream log;
    WorkerOptions opts;
    opts.log = &log;
    Worker w(toy_weights(), kToy, opts);
    w.start({"127.0.0.1", 0});
    const auto s = connect_to(w);
    const auto reply = roundtrip(s, wire::Hello{wire::kProtocolVersion, toy_weights()->content_hash});
    const auto& ack = std::get<wire::HelloAck>(reply);
    EXPECT_EQ(ack.weight_hash, toy_weights()->content_hash);
    EXPECT_EQ(ack.max_h, 4);
    EXPECT_EQ(ack.embed_dim, 32);
    w.stop();
    EXPECT_NE(log.str().find("hello-ack"), std::string::npos);
}

TEST(Worker, StaleHashGetsModelSkewAndConnectionStaysOpen) {
    Worker w(toy_weights(), kToy);
    w.start({"127.0.0.1", 0});
    const auto s = connect_to(w);
    const auto hash = toy_weights()->content_hash;
    ASSERT_TRUE(std::holds_alternative<wire::HelloAck>(roundtrip(s, wire::Hello{1, hash})));
    const auto win = make_window_tasks(testutil::random_image(64, 64, 1), *toy_weights(), kToy)[0].tokens;

    const auto err = std::get<wire::ErrorMsg>(roundtrip(s, task_for(win, 0, hash ^ 1)));
    EXPECT_EQ(err.code, wire::ErrorCode::model_skew);
    EXPECT_EQ(err.task_id, 42u);
    // Same connection still serves a valid task.
    EXPECT_TRUE(std::holds_alternative<wire::ResultMsg>(roundtrip(s, task_for(win, 0, hash))));
}

TEST(Worker, ResultIsBitExactWithLocalStage) {
    Worker w(toy_weights(), kToy);
    w.start({"127.0.0.1", 0});
    const auto s = connect_to(w);
    const auto hash = toy_weights()->content_hash;
    roundtrip(s, wire::Hello{1, hash});
    const auto tasks = make_window_tasks(testutil::random_image(64, 64, 2), *toy_weights(), kToy);
    for (std::size_t i : {0u, 5u, 15u}) {
        const auto res = std::get<wire::ResultMsg>(roundtrip(s, task_for(tasks[i].tokens, i, hash)));
        EXPECT_EQ(res.window_index, i);
        EXPECT_EQ(res.tensor, encode_window_stage(tasks[i].tokens, *toy_weights(), kToy, i).tokens.tokens.data());
    }
    EXPECT_EQ(w.tasks_completed(), 3u);
}

TEST(Worker, IdenticalTasksGiveIdenticalResultBytes) {
    Worker w(toy_weights(), kToy);
    w.start({"127.0.0.1", 0});
    const auto s = connect_to(w);
    const auto hash = toy_weights()->content_hash;
    roundtrip(s, wire::Hello{1, hash});
    const auto win = make_window_tasks(testutil::random_image(64, 64, 3), *toy_weights(), kToy)[7].tokens;
    const auto a = wire::encode_frame(roundtrip(s, task_for(win, 7, hash)));
    const auto b = wire::encode_frame(roundtrip(s, task_for(win, 7, hash)));
    EXPECT_EQ(a, b);
}

TEST(Worker, ProtocolStateMachine) {
    Worker w(toy_weights(), kToy);
    Worker::Session session;
    const auto hash = toy_weights()->content_hash;
    const auto win = make_window_tasks(testutil::random_image(64, 64, 4), *toy_weights(), kToy)[0].tokens;

    // Task before HELLO.
    EXPECT_TRUE(std::holds_alternative<wire::ErrorMsg>(*w.handle(session, task_for(win, 0, hash))));
    EXPECT_EQ(std::get<wire::ErrorMsg>(*w.handle(session, wire::Hello{9, hash})).code, wire::ErrorCode::version);
    EXPECT_EQ(std::get<wire::ErrorMsg>(*w.handle(session, wire::Hello{1, hash + 1})).code,
              wire::ErrorCode::model_skew);
    ASSERT_TRUE(std::holds_alternative<wire::HelloAck>(*w.handle(session, wire::Hello{1, hash})));

    auto bad_range = task_for(win, 0, hash);
    bad_range.layer_end = 3;
    EXPECT_EQ(std::get<wire::ErrorMsg>(*w.handle(session, bad_range)).code, wire::ErrorCode::shape);

    wire::TaskMsg bad_shape = task_for(win, 0, hash);
    bad_shape.h = 2;
    bad_shape.w = 8;
    EXPECT_EQ(std::get<wire::ErrorMsg>(*w.handle(session, bad_shape)).code, wire::ErrorCode::shape);

    // A worker never accepts a RESULT or ACK from a client.
    EXPECT_FALSE(w.handle(session, wire::ResultMsg{}).has_value());
}

TEST(Worker, MalformedFrameClosesOnlyThatConnection) {
    Worker w(toy_weights(), kToy);
    w.start({"127.0.0.1", 0});
    const auto bad = connect_to(w);
    const std::vector<std::uint8_t> garbage{5, 0, 0, 0, 77, 1, 2, 3, 4};
    net::send_all(bad, garbage, net::Clock::now() + 1s);
    EXPECT_FALSE(net::read_message(bad, net::Clock::now() + 2s).has_value());

    const auto good = connect_to(w);
    EXPECT_TRUE(std::holds_alternative<wire::HelloAck>(roundtrip(good, wire::Hello{1, toy_weights()->content_hash})));
}

TEST(Worker, PortInUse) {
    Worker a(toy_weights(), kToy);
    a.start({"127.0.0.1", 0});
    Worker b(toy_weights(), kToy);
    EXPECT_THROW(b.start({"127.0.0.1", a.port()}), net::AddressInUse);
}

TEST(Worker, StopFinishesInFlightTask) {
    std::atomic<bool> entered{false};
    WorkerOptions opts;
    opts.fault_hook = [&](const wire::TaskMsg&, std::size_t) {
        entered = true;
        return FaultAction::stall(300ms);
    };
    Worker w(toy_weights(), kToy, opts);
    w.start({"127.0.0.1", 0});
    const auto s = connect_to(w);
    const auto hash = toy_weights()->content_hash;
    roundtrip(s, wire::Hello{1, hash});
    const auto win = make_window_tasks(testutil::random_image(64, 64, 5), *toy_weights(), kToy)[0].tokens;
    net::write_message(s, task_for(win, 0, hash), net::Clock::now() + 1s);
    while (!entered) std::this_thread::sleep_for(5ms);
    w.stop();
    const auto reply = net::read_message(s, net::Clock::now() + 2s);
    ASSERT_TRUE(reply.has_value());
    EXPECT_TRUE(std::holds_alternative<wire::ResultMsg>(*reply));
}

TEST(Gather, SixteenWindowsOnFourWorkersMatchMonolithic) {
    LocalWorkerPool pool(4, toy_weights(), kToy);
    const Image img = testutil::random_image(64, 64, 6);
    const auto plan = plan_assignment(4, pool.names(), AssignmentPolicy::strict());
    const auto enc = encode_distributed(img, *toy_weights(), kToy, {2, 2}, plan, pool.endpoints(),
                                        gather_options_for(*toy_weights(), kToy, 5s));
    EXPECT_LE(testutil::max_rel_error(enc.embedding, encode_monolithic(img, *toy_weights(), kToy)), 1e-5);
    ASSERT_EQ(enc.gather.outputs.size(), 16u);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(enc.gather.outputs[i].window_index, i);
    for (const auto& t : enc.gather.transmissions)
        EXPECT_EQ(t.server, enc.task_plan.window_to_server[t.window_index]);
}

TEST(Gather, RoundRobinPlanMatchesMonolithic) {
    LocalWorkerPool pool(4, toy_weights(), kToy);
    const Image img = testutil::random_image(64, 64, 7);
    const auto plan = plan_assignment(16, pool.names(), AssignmentPolicy::round_robin(4));
    const auto enc = encode_distributed(img, *toy_weights(), kToy, {4, 4}, plan, pool.endpoints(),
                                        gather_options_for(*toy_weights(), kToy, 5s));
    EXPECT_LE(testutil::max_rel_error(enc.embedding, encode_monolithic(img, *toy_weights(), kToy)), 1e-5);
    std::map<std::size_t, std::set<std::size_t>> seen;
    for (const auto& t : enc.gather.transmissions) seen[t.server].insert(t.window_index);
    for (const auto& [server, wins] : seen)
        for (auto w : wins) EXPECT_EQ(w % 4, server);
}

TEST(Gather, DroppedWorkerFailsWithItsWindows) {
    LocalWorkerPool pool(4, toy_weights(), kToy, [](std::size_t i) {
        WorkerOptions o;
        if (i == 2) o.fault_hook = [](const wire::TaskMsg&, std::size_t) { return FaultAction::drop(); };
        return o;
    });
    const auto plan = plan_assignment(16, pool.names(), AssignmentPolicy::round_robin(4));
    const auto tasks = make_window_tasks(testutil::random_image(64, 64, 8), *toy_weights(), kToy);
    try {
        gather_with(pool, plan, tasks);
        FAIL() << "expected GatherError";
    } catch (const GatherError& e) {
        EXPECT_EQ(e.failed_windows(), (std::vector<std::size_t>{2, 6, 10, 14}));
        EXPECT_NE(std::string(e.what()).find("2,6,10,14"), std::string::npos);
        for (const auto& t : e.transmissions()) EXPECT_EQ(t.server, plan.window_to_server[t.window_index]);
    }
}

TEST(Gather, TimeoutIsRetriedOnceOnSameServer) {
    LocalWorkerPool pool(4, toy_weights(), kToy, [](std::size_t i) {
        WorkerOptions o;
        if (i == 1)
            o.fault_hook = [](const wire::TaskMsg&, std::size_t seq) {
                return seq == 0 ? FaultAction::stall(600ms) : FaultAction::proceed();
            };
        return o;
    });
    const Image img = testutil::random_image(64, 64, 9);
    const auto plan = plan_assignment(16, pool.names(), AssignmentPolicy::round_robin(4));
    const auto tasks = make_window_tasks(img, *toy_weights(), kToy);
    const auto res = dispatch_and_gather(tasks, plan, pool.endpoints(), gather_options_for(*toy_weights(), kToy, 200ms));
    ASSERT_EQ(res.outputs.size(), 16u);

    std::map<std::size_t, std::vector<TransmissionRecord>> by_window;
    for (const auto& t : res.transmissions) {
        EXPECT_EQ(t.server, plan.window_to_server[t.window_index]);
        by_window[t.window_index].push_back(t);
    }
    ASSERT_EQ(by_window[1].size(), 2u);
    EXPECT_EQ(by_window[1][0].attempt, 0);
    EXPECT_EQ(by_window[1][1].attempt, 1);
    EXPECT_EQ(by_window[1][0].server, by_window[1][1].server);
    EXPECT_EQ(by_window[1][0].task_id, by_window[1][1].task_id);
    for (const auto& [w, recs] : by_window)
        if (w != 1) {
            EXPECT_EQ(recs.size(), 1u) << "window " << w;
        }

    std::vector<StageOutput> outs = res.outputs;
    const TokenGrid emb = encode_global_stage(merge_windows(outs, 4), *toy_weights(), kToy);
    EXPECT_LE(testutil::max_rel_error(emb, encode_monolithic(img, *toy_weights(), kToy)), 1e-5);
}

TEST(Gather, PersistentTimeoutFailsAfterOneRetry) {
    LocalWorkerPool pool(2, toy_weights(), kToy, [](std::size_t i) {
        WorkerOptions o;
        if (i == 0) o.fault_hook = [](const wire::TaskMsg&, std::size_t) { return FaultAction::stall(400ms); };
        return o;
    });
    const auto plan = plan_assignment(4, pool.names(), AssignmentPolicy::round_robin(2));
    ModelConfig cfg = kToy;
    const auto tasks = make_window_tasks(testutil::random_image(64, 64, 10), *toy_weights(), kToy);
    std::vector<WindowTask> four(tasks.begin(), tasks.begin() + 4);
    try {
        dispatch_and_gather(four, plan, pool.endpoints(), gather_options_for(*toy_weights(), cfg, 100ms));
        FAIL() << "expected GatherError";
    } catch (const GatherError& e) {
        EXPECT_EQ(e.failed_windows(), (std::vector<std::size_t>{0, 2}));
        std::size_t attempts_on_0 = 0;
        for (const auto& t : e.transmissions())
            if (t.window_index == 0) {
                ++attempts_on_0;
                EXPECT_EQ(t.server, 0u);
            }
        EXPECT_EQ(attempts_on_0, 2u);
    }
}

TEST(Gather, ModelSkewIsNotRetried) {
    LocalWorkerPool pool(1, toy_weights(), kToy);
    const auto plan = plan_assignment(1, pool.names(), AssignmentPolicy::strict());
    const auto tasks = make_window_tasks(testutil::random_image(64, 64, 11), *toy_weights(), kToy);
    auto opts = gather_options_for(*toy_weights(), kToy, 2s);
    opts.weight_hash ^= 0xff;
    try {
        dispatch_and_gather({tasks[0]}, plan, pool.endpoints(), opts);
        FAIL() << "expected GatherError";
    } catch (const GatherError& e) {
        EXPECT_EQ(e.failed_windows(), std::vector<std::size_t>{0});
        EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos);
    }
}

TEST(Gather, UnreachableServerFails) {
    std::uint16_t port;
    {
        Worker w(toy_weights(), kToy);
        w.start({"127.0.0.1", 0});
        port = w.port();
    }
    const auto plan = plan_assignment(1, {"gone"}, AssignmentPolicy::strict());
    const auto tasks = make_window_tasks(testutil::random_image(64, 64, 12), *toy_weights(), kToy);
    EXPECT_THROW(dispatch_and_gather({tasks[0]}, plan, {{"127.0.0.1", port}},
                                     gather_options_for(*toy_weights(), kToy, 500ms)),
                 GatherError);
}

TEST(Privacy, ChannelRefusesWindowOutsidePlan) {
    LocalWorkerPool pool(2, toy_weights(), kToy);
    const auto plan = plan_assignment(2, pool.names(), AssignmentPolicy::strict());
    const auto opts = gather_options_for(*toy_weights(), kToy, 2s);
    std::mutex mu;
    std::vector<TransmissionRecord> log;
    ServerChannel ch(0, pool.endpoints()[0], plan, opts, mu, log);
    const auto tasks = make_window_tasks(testutil::random_image(64, 64, 13), *toy_weights(), kToy);
    EXPECT_THROW(ch.run(tasks[1], 1, 0), PrivacyInvariantViolation);
    EXPECT_TRUE(log.empty());
    EXPECT_EQ(pool.worker(0).tasks_completed(), 0u);
    EXPECT_NO_THROW(ch.run(tasks[0], 0, 0));
    EXPECT_EQ(log.size(), 1u);
}

TEST(Privacy, CheckDispatchAllowed) {
    const auto plan = plan_assignment(4, {"a", "b"}, AssignmentPolicy::round_robin(2));
    EXPECT_NO_THROW(check_dispatch_allowed(plan, 0, 2));
    EXPECT_THROW(check_dispatch_allowed(plan, 1, 2), PrivacyInvariantViolation);
    EXPECT_THROW(check_dispatch_allowed(plan, 0, 9), PrivacyInvariantViolation);
}

TEST(Gather, ReverseArrivalOrderGivesSameEmbedding) {
    // Later windows answer first.
    LocalWorkerPool pool(4, toy_weights(), kToy, [](std::size_t i) {
        WorkerOptions o;
        o.fault_hook = [i](const wire::TaskMsg&, std::size_t) {
            return FaultAction::stall(std::chrono::milliseconds(40 * (3 - static_cast<int>(i))));
        };
        return o;
    });
    const Image img = testutil::random_image(64, 64, 14);
    const auto plan = plan_assignment(4, pool.names(), AssignmentPolicy::strict());
    const auto tasks = make_window_tasks(img, *toy_weights(), kToy);
    const auto task_plan = derive_task_plan(plan, attention_window_owners({2, 2}, kToy));
    auto outs = dispatch_and_gather(tasks, task_plan, pool.endpoints(), gather_options_for(*toy_weights(), kToy, 5s))
                    .outputs;
    const TokenGrid a = encode_global_stage(merge_windows(outs, 4), *toy_weights(), kToy);
    std::reverse(outs.begin(), outs.end());
    const TokenGrid b = encode_global_stage(merge_windows(outs, 4), *toy_weights(), kToy);
    EXPECT_EQ(a, b);
}

TEST(Deadline, EnvironmentOverride) {
    ::setenv("PEDVIT_DEADLINE_MS", "1234", 1);
    EXPECT_EQ(deadline_from_env(), 1234ms);
    ::setenv("PEDVIT_DEADLINE_MS", "bogus", 1);
    EXPECT_EQ(deadline_from_env(), kDefaultDeadline);
    ::unsetenv("PEDVIT_DEADLINE_MS");
    EXPECT_EQ(deadline_from_env(), 30000ms);
}

TEST(Endpoint, Parse) {
    const auto e = net::parse_endpoint("10.0.0.5:9000");
    EXPECT_EQ(e.host, "10.0.0.5");
    EXPECT_EQ(e.port, 9000);
    EXPECT_EQ(net::parse_endpoint("localhost").port, wire::kDefaultPort);
    EXPECT_ANY_THROW(net::parse_endpoint("host:notaport"));
}
