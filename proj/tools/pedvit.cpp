#include <pedvit/cli.hpp>

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

} // namespace

int main(int argc, char** argv) {
    using namespace pedvit;
    CLI::App app{"Privacy-enhanced distributed ViT encoder"};
    app.require_subcommand(1);

    cli::WorkerArgs worker;
    auto* w = app.add_subcommand("worker", "Serve stage-1 window attention tasks");
    w->add_option("--listen", worker.listen, "host:port to bind")->capture_default_str();
    w->add_option("--weights", worker.weights, "PEDW weight file")->required();
    w->add_option("--config", worker.config, "model config JSON")->required();

    cli::EncodeArgs enc;
    std::string enc_servers;
    auto* e = app.add_subcommand("encode", "Encode an image locally or across workers");
    e->add_option("--config", enc.config, "model config JSON")->required();
    e->add_option("--weights", enc.weights, "PEDW weight file (default: seeded random weights)");
    e->add_option("--seed", enc.seed, "seed used when --weights is absent");
    e->add_option("--image", enc.image, "input PPM image")->required();
    e->add_option("--scheme", enc.scheme, "partition scheme MxN (default: one window per attention window)");
    e->add_option("--servers", enc_servers, "comma-separated host:port list");
    e->add_option("--policy", enc.policy, "strict | rr:K")->capture_default_str();
    e->add_option("--out", enc.out, "output PEDW embedding file")->required();
    e->add_flag("--local", enc.local, "run the monolithic encoder in-process");
    e->add_option("--deadline-ms", enc.deadline_ms, "per-task deadline (default PEDVIT_DEADLINE_MS or 30000)");

    cli::BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Time local and distributed encoding");
    b->add_option("--config", bench.config, "model config JSON")->required();
    b->add_option("--weights", bench.weights, "PEDW weight file (default: seeded random weights)");
    b->add_option("--seed", bench.seed, "seed used when --weights is absent");
    b->add_option("--image", bench.image, "input PPM image (default: synthetic)");
    b->add_option("--repeat", bench.repeat, "timed runs after one warm-up")->capture_default_str();
    b->add_option("--workers", bench.workers, "in-process loopback workers, 0 for local only")->capture_default_str();

    cli::PrivacyArgs priv;
    auto* p = app.add_subcommand("privacy", "Run the reconstruction privacy sweep");
    p->add_option("--corpus", priv.corpus, "directory of PPM images")->required();
    p->add_option("--schemes", priv.schemes, "comma-separated MxN list")->capture_default_str();
    p->add_option("--adversaries", priv.adversaries, "comma-separated adversary list")->capture_default_str();
    p->add_option("--out", priv.out, "report JSON path")->required();

    std::string flops_config;
    bool flops_json = false;
    auto* f = app.add_subcommand("flops", "Per-layer FLOPs and window/global share");
    f->add_option("--config", flops_config, "model config JSON")->required();
    f->add_flag("--json", flops_json, "emit JSON");

    std::string gw_config, gw_out;
    std::uint64_t gw_seed = kDefaultWeightSeed;
    auto* g = app.add_subcommand("gen-weights", "Write seeded random weights as PEDW");
    g->add_option("--config", gw_config, "model config JSON")->required();
    g->add_option("--seed", gw_seed, "64-bit seed");
    g->add_option("--out", gw_out, "output PEDW path")->required();

    std::string corpus_dir;
    auto* c = app.add_subcommand("gen-corpus", "Write the bundled synthetic corpus as PPM files");
    c->add_option("--out", corpus_dir, "output directory")->required();

    std::vector<std::string> score_gt, score_pred;
    MatchParams match;
    auto* s = app.add_subcommand("score", "Score detector JSON output against ground truth");
    s->add_option("--gt", score_gt, "ground-truth detection JSON (one per image)")->required();
    s->add_option("--pred", score_pred, "predicted detection JSON (one per image)")->required();
    s->add_option("--conf-min", match.conf_min)->capture_default_str();
    s->add_option("--iou-min", match.iou_min)->capture_default_str();

    std::vector<std::string> miou_gt, miou_pred;
    auto* m = app.add_subcommand("miou", "Mean IoU of paired PGM masks");
    m->add_option("--gt", miou_gt, "ground-truth masks")->required();
    m->add_option("--pred", miou_pred, "predicted masks")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? cli::ok : cli::usage;
    }

    if (w->parsed()) {
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        return cli::cmd_worker(worker, g_stop, std::cerr);
    }
    if (e->parsed()) {
        std::stringstream ss(enc_servers);
        for (std::string tok; std::getline(ss, tok, ',');)
            if (!tok.empty()) enc.servers.push_back(tok);
        return cli::cmd_encode(enc, std::cout, std::cerr);
    }
    if (b->parsed()) return cli::cmd_bench(bench, std::cout, std::cerr);
    if (p->parsed()) return cli::cmd_privacy(priv, std::cout, std::cerr);
    if (f->parsed()) return cli::cmd_flops(flops_config, flops_json, std::cout, std::cerr);
    if (g->parsed()) return cli::cmd_gen_weights(gw_config, gw_seed, gw_out, std::cout, std::cerr);
    if (c->parsed()) {
        try {
            write_corpus(corpus_dir, synthetic_corpus());
        } catch (const std::exception& ex) {
            std::cerr << "error: " << ex.what() << std::endl;
            return cli::usage;
        }
        return cli::ok;
    }
    if (s->parsed()) return cli::cmd_score(score_gt, score_pred, match, std::cout, std::cerr);
    if (m->parsed()) return cli::cmd_miou(miou_gt, miou_pred, std::cout, std::cerr);
    return cli::usage;
}
