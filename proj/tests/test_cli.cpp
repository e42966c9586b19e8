#include "test_util.hpp"

#include <pedvit/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace pedvit;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = PEDVIT_SOURCE_DIR "/configs/";

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("pedvit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string toy_image() const {
        const auto p = path("in.ppm");
        save_ppm(p, testutil::random_image(64, 64, 77));
        return p;
    }

    fs::path dir_;
};

int run_binary(const std::string& args) {
    const int rc = std::system((std::string(PEDVIT_BINARY) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_F(CliTest, FlopsPassthrough) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_flops(kConfigs + "toy.json", true, out, err), cli::ok);
    const auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j["window_share"].get<double>(), estimate_flops(toy_config()).window_share());
    EXPECT_EQ(j["layers"].size(), 8u);
}

TEST_F(CliTest, FlopsSamH) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_flops(kConfigs + "sam_h.json", true, out, err), cli::ok);
    EXPECT_NEAR(nlohmann::json::parse(out.str())["window_share"].get<double>(), 0.848, 0.010);
    std::ostringstream text;
    ASSERT_EQ(cli::cmd_flops(kConfigs + "sam_h.json", false, text, err), cli::ok);
    EXPECT_NE(text.str().find("window_share 0.84"), std::string::npos);
}

TEST_F(CliTest, FlopsNoGlobalLayers) {
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_flops(kConfigs + "toy_g0.json", true, out, err), cli::ok);
    EXPECT_EQ(nlohmann::json::parse(out.str())["window_share"].get<double>(), 1.0);
}

TEST_F(CliTest, ShippedConfigsMatchBuiltins) {
    EXPECT_EQ(load_model_config(kConfigs + "toy.json"), toy_config());
    EXPECT_EQ(load_model_config(kConfigs + "sam_h.json"), sam_h_config());
}

TEST_F(CliTest, EncodeLocalMatchesDistributed) {
    const auto img = toy_image();
    std::ostringstream out, err;
    cli::EncodeArgs local;
    local.config = kConfigs + "toy.json";
    local.image = img;
    local.local = true;
    local.out = path("local.pedw");
    ASSERT_EQ(cli::cmd_encode(local, out, err), cli::ok) << err.str();

    const auto weights = std::make_shared<const WeightSet>(random_weights(toy_config()));
    LocalWorkerPool pool(4, weights, toy_config());
    cli::EncodeArgs dist = local;
    dist.local = false;
    dist.scheme = "2x2";
    for (const auto& e : pool.endpoints()) dist.servers.push_back(e.to_string());
    dist.out = path("dist.pedw");
    ASSERT_EQ(cli::cmd_encode(dist, out, err), cli::ok) << err.str();
    EXPECT_NE(out.str().find("exposure 0.25"), std::string::npos);

    const auto a = cli::embedding_from_file(load_pedw(local.out));
    const auto b = cli::embedding_from_file(load_pedw(dist.out));
    EXPECT_EQ(a.height, 16u);
    EXPECT_LE(testutil::max_rel_error(b, a), 1e-5);
}

TEST_F(CliTest, EncodeLocalIsByteIdentical) {
    cli::EncodeArgs a;
    a.config = kConfigs + "toy.json";
    a.image = toy_image();
    a.local = true;
    std::ostringstream out, err;
    a.out = path("one.pedw");
    ASSERT_EQ(cli::cmd_encode(a, out, err), cli::ok);
    a.out = path("two.pedw");
    ASSERT_EQ(cli::cmd_encode(a, out, err), cli::ok);
    EXPECT_EQ(read_file(path("one.pedw")), read_file(path("two.pedw")));
}

TEST_F(CliTest, EncodeStrictWithTooFewServersIsPlanError) {
    cli::EncodeArgs a;
    a.config = kConfigs + "toy.json";
    a.image = toy_image();
    a.scheme = "5x5";
    for (int i = 0; i < 10; ++i) a.servers.push_back("127.0.0.1:" + std::to_string(20000 + i));
    a.out = path("never.pedw");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_encode(a, out, err), cli::plan_failed);
    EXPECT_FALSE(fs::exists(a.out));
}

TEST_F(CliTest, EncodeGatherFailureListsWindows) {
    std::uint16_t port;
    {
        Worker w(std::make_shared<const WeightSet>(random_weights(toy_config())), toy_config());
        w.start({"127.0.0.1", 0});
        port = w.port();
    }
    cli::EncodeArgs a;
    a.config = kConfigs + "toy.json";
    a.image = toy_image();
    a.scheme = "1x1";
    a.servers = {"127.0.0.1:" + std::to_string(port)};
    a.deadline_ms = 300;
    a.out = path("never.pedw");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_encode(a, out, err), cli::gather_failed);
    EXPECT_NE(err.str().find("0,1,2"), std::string::npos);
    EXPECT_FALSE(fs::exists(a.out));
}

TEST_F(CliTest, CorruptedWeightsExitTwo) {
    const auto w = path("w.pedw");
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_gen_weights(kConfigs + "toy.json", 3, w, out, err), cli::ok);
    auto bytes = read_file(w);
    bytes[bytes.size() / 2] ^= 0x01;
    write_file_atomic(w, bytes);

    cli::WorkerArgs wa;
    wa.listen = "127.0.0.1:0";
    wa.weights = w;
    wa.config = kConfigs + "toy.json";
    std::atomic<bool> stop{true};
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_worker(wa, stop, log), cli::bad_weights);
    EXPECT_NE(log.str().find("hash mismatch"), std::string::npos);

    cli::EncodeArgs ea;
    ea.config = kConfigs + "toy.json";
    ea.weights = w;
    ea.image = toy_image();
    ea.local = true;
    ea.out = path("e.pedw");
    EXPECT_EQ(cli::cmd_encode(ea, out, err), cli::bad_weights);
}

TEST_F(CliTest, WorkerServesAndShutsDownOnStop) {
    const auto w = path("w.pedw");
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_gen_weights(kConfigs + "toy.json", kDefaultWeightSeed, w, out, err), cli::ok);
    cli::WorkerArgs wa;
    wa.listen = "127.0.0.1:0";
    wa.weights = w;
    wa.config = kConfigs + "toy.json";
    std::atomic<bool> stop{false};
    std::atomic<std::uint16_t> port{0};
    std::ostringstream log;
    int rc = -1;
    std::thread t([&] { rc = cli::cmd_worker(wa, stop, log, [&](std::uint16_t p) { port = p; }); });
    while (port == 0) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    const auto weights = load_weights(w, toy_config());
    const Image img = testutil::random_image(64, 64, 3);
    const auto plan = plan_assignment(1, {"w"}, AssignmentPolicy::strict());
    const auto enc = encode_distributed(img, weights, toy_config(), {1, 1}, plan, {{"127.0.0.1", port}},
                                        gather_options_for(weights, toy_config(), std::chrono::seconds(5)));
    EXPECT_LE(testutil::max_rel_error(enc.embedding, encode_monolithic(img, weights, toy_config())), 1e-5);
    stop = true;
    t.join();
    EXPECT_EQ(rc, cli::ok);
    EXPECT_NE(log.str().find("hello-ack"), std::string::npos);
    EXPECT_NE(log.str().find("\"window_index\":15"), std::string::npos);
    EXPECT_NE(log.str().find("shutdown after 16 tasks"), std::string::npos);
}

TEST_F(CliTest, WorkerPortBusyExitThree) {
    const auto w = path("w.pedw");
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_gen_weights(kConfigs + "toy.json", 1, w, out, err), cli::ok);
    const auto holder = net::listen_tcp({"127.0.0.1", 0});
    cli::WorkerArgs wa;
    wa.listen = "127.0.0.1:" + std::to_string(net::bound_port(holder));
    wa.weights = w;
    wa.config = kConfigs + "toy.json";
    std::atomic<bool> stop{true};
    std::ostringstream log;
    EXPECT_EQ(cli::cmd_worker(wa, stop, log), cli::port_busy);
}

TEST_F(CliTest, PrivacyEmptyCorpusExitSix) {
    cli::PrivacyArgs a;
    a.corpus = dir_.string();
    a.out = path("report.json");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_privacy(a, out, err), cli::empty_corpus);
    EXPECT_FALSE(fs::exists(a.out));
}

TEST_F(CliTest, PrivacyReportShapeAndDeterminism) {
    const auto corpus_dir = dir_ / "corpus";
    write_corpus(corpus_dir, synthetic_corpus());
    cli::PrivacyArgs a;
    a.corpus = corpus_dir.string();
    a.adversaries = "mean_fill,tile_replicate,diffusion_inpaint:50";
    a.out = path("r1.json");
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_privacy(a, out, err), cli::ok) << err.str();
    a.out = path("r2.json");
    ASSERT_EQ(cli::cmd_privacy(a, out, err), cli::ok);
    EXPECT_EQ(read_file(path("r1.json")), read_file(path("r2.json")));

    std::ifstream in(path("r1.json"));
    const auto doc = nlohmann::json::parse(in);
    ASSERT_EQ(doc["reports"].size(), 9u);
    std::map<std::string, double> exposure;
    for (const auto& r : doc["reports"]) exposure[r["scheme"]] = r["exposure_ratio"];
    EXPECT_EQ(exposure["2x2"], 0.25);
    EXPECT_DOUBLE_EQ(exposure["4x3"], 1.0 / 12);
    EXPECT_EQ(exposure["5x5"], 0.04);
}

TEST_F(CliTest, BenchAccounting) {
    const auto weights = std::make_shared<const WeightSet>(random_weights(toy_config()));
    const auto rep = cli::run_bench(toy_config(), weights, cli::synthetic_input(toy_config()), 3, 4);
    ASSERT_EQ(rep.rows.size(), 6u);
    ASSERT_EQ(rep.means.size(), 2u);
    for (const auto& r : rep.rows) {
        EXPECT_NEAR(r.stage1_ms + r.network_ms + r.stage2_ms, r.encoder_ms, 0.05 * r.encoder_ms) << r.configuration;
        if (r.configuration == "local")
            EXPECT_EQ(r.network_ms, 0.0);
        else
            EXPECT_GT(r.network_ms, 0.0);
        EXPECT_GE(r.run, 1u);
    }
    std::ostringstream out;
    cli::print_bench(rep, out);
    EXPECT_NE(out.str().find("mean"), std::string::npos);
}

TEST_F(CliTest, ScoreAndMiou) {
    {
        std::ofstream(path("gt.json")) << R"([{"class_id":0,"confidence":1,"bbox":[0,0,10,10]}])";
        std::ofstream(path("pred.json"))
            << R"([{"class_id":0,"confidence":0.9,"bbox":[0,0,10,10]},{"class_id":0,"confidence":0.8,"bbox":[5,5,10,10]}])";
    }
    std::ostringstream out, err;
    ASSERT_EQ(cli::cmd_score({path("gt.json")}, {path("pred.json")}, {}, out, err), cli::ok) << err.str();
    const auto j = nlohmann::json::parse(out.str());
    EXPECT_EQ(j["precision"], 0.5);
    EXPECT_EQ(j["recall"], 1.0);
    EXPECT_EQ(j["mean_iou"], 1.0);

    BinaryMask a(8, 8), b(8, 8);
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x) {
            a.at(x, y) = 1;
            b.at(x + 2, y) = 1;
        }
    save_pgm(path("a.pgm"), a);
    save_pgm(path("b.pgm"), b);
    std::ostringstream m;
    ASSERT_EQ(cli::cmd_miou({path("a.pgm")}, {path("b.pgm")}, m, err), cli::ok);
    EXPECT_NE(m.str().find("miou 0.333"), std::string::npos);
}

TEST_F(CliTest, BinaryExitCodes) {
    EXPECT_EQ(run_binary("flops --config " + kConfigs + "sam_h.json"), 0);
    EXPECT_EQ(run_binary("no-such-command"), cli::usage);
    EXPECT_EQ(run_binary("privacy --corpus " + dir_.string() + " --out " + path("r.json")), cli::empty_corpus);
    EXPECT_EQ(run_binary("encode --config " + kConfigs + "toy.json --image " + toy_image() +
                         " --scheme 5x5 --policy strict --servers " +
                         "a:1,b:1,c:1,d:1,e:1,f:1,g:1,h:1,i:1,j:1 --out " + path("x.pedw")),
              cli::plan_failed);
    ASSERT_EQ(run_binary("gen-weights --config " + kConfigs + "toy.json --out " + path("w.pedw")), 0);
    auto bytes = read_file(path("w.pedw"));
    bytes[100] ^= 0x40;
    write_file_atomic(path("w.pedw"), bytes);
    EXPECT_EQ(run_binary("worker --listen 127.0.0.1:0 --config " + kConfigs + "toy.json --weights " + path("w.pedw")),
              cli::bad_weights);
}

TEST_F(CliTest, SmallerImagesAreZeroPadded) {
    const Image small = testutil::random_image(60, 60, 5);
    const Image padded = cli::pad_to_model(small, toy_config());
    ASSERT_EQ(padded.width, 64u);
    EXPECT_EQ(crop(padded, {0, 0, 60, 60}), small);
    EXPECT_EQ(padded.at(63, 63, 0), 0.0f);
    EXPECT_EQ(padded.at(61, 10, 2), 0.0f);
    EXPECT_THROW(cli::pad_to_model(testutil::random_image(65, 64, 1), toy_config()), ShapeError);

    save_ppm(path("small.ppm"), small);
    cli::EncodeArgs a;
    a.config = kConfigs + "toy.json";
    a.image = path("small.ppm");
    a.local = true;
    a.out = path("small.pedw");
    std::ostringstream out, err;
    EXPECT_EQ(cli::cmd_encode(a, out, err), cli::ok) << err.str();
}
