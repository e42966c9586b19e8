#pragma once

// Command implementations behind the `pedvit` executable. Each returns a
// process exit code; see ExitCode.

#include <pedvit/corpus.hpp>
#include <pedvit/flops.hpp>
#include <pedvit/pipeline.hpp>
#include <pedvit/sweep.hpp>

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace pedvit::cli {

enum ExitCode : int {
    ok = 0,
    usage = 1,
    bad_weights = 2,
    port_busy = 3,
    gather_failed = 4,
    plan_failed = 5,
    empty_corpus = 6,
};

inline NamedTensor embedding_tensor(const TokenGrid& g) {
    return {"embedding",
            {static_cast<std::uint32_t>(g.height), static_cast<std::uint32_t>(g.width),
             static_cast<std::uint32_t>(g.dim())},
            g.tokens.data()};
}

inline TokenGrid embedding_from_file(const TensorFile& f) {
    const NamedTensor* t = f.find("embedding");
    if (!t || t->dims.size() != 3) throw FormatError("no rank-3 'embedding' tensor");
    return TokenGrid(t->dims[0], t->dims[1], Matrix(std::size_t{t->dims[0]} * t->dims[1], t->dims[2], t->data));
}

// Deterministic test image of the model's input size.
inline Image synthetic_input(const ModelConfig& cfg, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    Image img(cfg.image_side, cfg.image_side, cfg.channels);
    for (float& v : img.data) v = static_cast<float>(rng() >> 56) / 255.0f;
    return img;
}

// Zero-pads right/bottom up to the model input side; larger images are
// rejected rather than resized.
inline Image pad_to_model(const Image& img, const ModelConfig& cfg) {
    if (img.width == cfg.image_side && img.height == cfg.image_side) return img;
    if (img.width > cfg.image_side || img.height > cfg.image_side || img.channels != cfg.channels)
        throw ShapeError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         ", model input is " + std::to_string(cfg.image_side) + "x" + std::to_string(cfg.image_side));
    Image out(cfg.image_side, cfg.image_side, img.channels);
    paste(out, img, 0, 0);
    return out;
}

inline std::shared_ptr<const WeightSet> load_or_seed_weights(const std::optional<std::string>& path,
                                                             const ModelConfig& cfg, std::uint64_t seed) {
    if (path) return std::make_shared<const WeightSet>(load_weights(*path, cfg));
    return std::make_shared<const WeightSet>(random_weights(cfg, seed));
}

// ---------------------------------------------------------------- worker

struct WorkerArgs {
    std::string listen = "0.0.0.0:7461";
    std::string weights;
    std::string config;
};

inline int cmd_worker(const WorkerArgs& a, const std::atomic<bool>& stop, std::ostream& log,
                      std::function<void(std::uint16_t)> on_listening = {}) {
    ModelConfig cfg;
    std::shared_ptr<const WeightSet> weights;
    try {
        cfg = load_model_config(a.config);
    } catch (const std::exception& e) {
        log << "error: " << e.what() << std::endl;
        return usage;
    }
    try {
        weights = std::make_shared<const WeightSet>(load_weights(a.weights, cfg));
    } catch (const std::exception& e) {
        log << "error: bad weights " << a.weights << ": " << e.what() << std::endl;
        return bad_weights;
    }
    WorkerOptions opts;
    opts.log = &log;
    Worker worker(weights, cfg, opts);
    try {
        worker.start(net::parse_endpoint(a.listen));
    } catch (const net::AddressInUse& e) {
        log << "error: " << e.what() << std::endl;
        return port_busy;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << std::endl;
        return usage;
    }
    log << "listening on port " << worker.port() << " weight_hash=" << std::hex << weights->content_hash << std::dec
        << std::endl;
    if (on_listening) on_listening(worker.port());
    while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
    worker.stop();
    log << "shutdown after " << worker.tasks_completed() << " tasks" << std::endl;
    return ok;
}

// ---------------------------------------------------------------- encode

struct EncodeArgs {
    std::string config;
    std::optional<std::string> weights;
    std::uint64_t seed = kDefaultWeightSeed;
    std::string image;
    std::string scheme;
    std::vector<std::string> servers;
    std::string policy = "strict";
    std::string out;
    bool local = false;
    std::optional<long long> deadline_ms;
};

inline int cmd_encode(const EncodeArgs& a, std::ostream& out, std::ostream& err) {
    ModelConfig cfg;
    std::shared_ptr<const WeightSet> weights;
    Image image;
    try {
        cfg = load_model_config(a.config);
        image = pad_to_model(load_ppm(a.image), cfg);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    try {
        weights = load_or_seed_weights(a.weights, cfg, a.seed);
    } catch (const std::exception& e) {
        err << "error: bad weights: " << e.what() << std::endl;
        return bad_weights;
    }
    try {
        TokenGrid embedding;
        if (a.local) {
            embedding = encode_monolithic(image, *weights, cfg);
        } else {
            const PartitionScheme scheme =
                a.scheme.empty() ? PartitionScheme{cfg.windows_per_side(), cfg.windows_per_side()} : parse_scheme(a.scheme);
            AssignmentPlan plan;
            std::vector<net::Endpoint> endpoints;
            try {
                for (const auto& s : a.servers) endpoints.push_back(net::parse_endpoint(s));
                plan = plan_assignment(scheme.count(), a.servers, parse_policy(a.policy));
                check_image(image, cfg);
                (void)partition_image(image, scheme, cfg);
            } catch (const PlanningError& e) {
                err << "plan error: " << e.what() << std::endl;
                return plan_failed;
            } catch (const InputError& e) {
                err << "plan error: " << e.what() << std::endl;
                return plan_failed;
            }
            auto opts = gather_options_for(*weights, cfg);
            if (a.deadline_ms) opts.deadline = std::chrono::milliseconds(*a.deadline_ms);
            try {
                auto run = encode_distributed(image, *weights, cfg, scheme, plan, endpoints, opts);
                const auto exposure = exposure_ratio(plan, scheme);
                for (std::size_t s = 0; s < plan.servers.size(); ++s)
                    out << "server " << plan.servers[s] << " exposure " << exposure[s] << "\n";
                embedding = std::move(run.embedding);
            } catch (const GatherError& e) {
                err << "gather error: " << e.what() << std::endl;
                return gather_failed;
            }
        }
        save_pedw(a.out, {embedding_tensor(embedding)});
        out << "wrote " << a.out << " (" << embedding.height << "x" << embedding.width << "x" << embedding.dim()
            << ")" << std::endl;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    return ok;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
    std::string config;
    std::optional<std::string> weights;
    std::uint64_t seed = kDefaultWeightSeed;
    std::optional<std::string> image;
    std::size_t repeat = 3;
    std::size_t workers = 4; // 0: local only
};

struct BenchRow {
    std::string configuration;
    std::size_t run = 0;
    double stage1_ms = 0, network_ms = 0, stage2_ms = 0, encoder_ms = 0, downstream_ms = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;  // timed runs (warm-up excluded)
    std::vector<BenchRow> means; // one per configuration
};

namespace detail {

inline double ms(std::chrono::nanoseconds d) { return std::chrono::duration<double, std::milli>(d).count(); }

inline BenchRow mean_of(const std::vector<BenchRow>& rows, const std::string& name) {
    BenchRow m;
    m.configuration = name;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (r.configuration != name) continue;
        m.stage1_ms += r.stage1_ms;
        m.network_ms += r.network_ms;
        m.stage2_ms += r.stage2_ms;
        m.encoder_ms += r.encoder_ms;
        m.downstream_ms += r.downstream_ms;
        ++n;
    }
    if (n) {
        const auto k = static_cast<double>(n);
        m.stage1_ms /= k;
        m.network_ms /= k;
        m.stage2_ms /= k;
        m.encoder_ms /= k;
        m.downstream_ms /= k;
    }
    return m;
}

inline double time_downstream(const TokenGrid& emb) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto mask = point_prompt_mask(emb, emb.height / 2, emb.width / 2);
    (void)mask;
    return ms(std::chrono::steady_clock::now() - t0);
}

} // namespace detail

inline BenchReport run_bench(const ModelConfig& cfg, std::shared_ptr<const WeightSet> weights, const Image& image,
                             std::size_t repeat, std::size_t workers) {
    BenchReport rep;
    for (std::size_t run = 0; run <= repeat; ++run) {
        const auto local = encode_local_timed(image, *weights, cfg);
        BenchRow r{"local", run, detail::ms(local.timings.stage1), 0.0, detail::ms(local.timings.stage2),
                   detail::ms(local.timings.total), detail::time_downstream(local.embedding)};
        if (run > 0) rep.rows.push_back(r); // run 0 is warm-up
    }
    if (workers > 0) {
        LocalWorkerPool pool(workers, weights, cfg);
        const std::size_t per_side = cfg.windows_per_side();
        const PartitionScheme scheme{per_side, per_side};
        const std::size_t per_server = (scheme.count() + workers - 1) / workers;
        const auto plan = plan_assignment(scheme.count(), pool.names(),
                                          per_server <= 1 ? AssignmentPolicy::strict()
                                                          : AssignmentPolicy::round_robin(per_server));
        const auto opts = gather_options_for(*weights, cfg);
        const std::string name = "distributed(" + std::to_string(workers) + " workers)";
        for (std::size_t run = 0; run <= repeat; ++run) {
            pool.reset_compute();
            const auto d = encode_distributed(image, *weights, cfg, scheme, plan, pool.endpoints(), opts,
                                              [&] { return pool.compute_critical_path(); });
            BenchRow r{name,
                       run,
                       detail::ms(d.timings.stage1),
                       detail::ms(d.timings.network),
                       detail::ms(d.timings.stage2),
                       detail::ms(d.timings.total),
                       detail::time_downstream(d.embedding)};
            if (run > 0) rep.rows.push_back(r);
        }
        rep.means.push_back(detail::mean_of(rep.rows, "local"));
        rep.means.push_back(detail::mean_of(rep.rows, name));
    } else {
        rep.means.push_back(detail::mean_of(rep.rows, "local"));
    }
    return rep;
}

inline void print_bench(const BenchReport& rep, std::ostream& out) {
    out << std::left << std::setw(26) << "configuration" << std::right << std::setw(6) << "run" << std::setw(12)
        << "stage1_ms" << std::setw(12) << "network_ms" << std::setw(12) << "stage2_ms" << std::setw(12)
        << "encoder_ms" << std::setw(15) << "downstream_ms" << "\n";
    auto line = [&](const BenchRow& r, const std::string& run) {
        out << std::left << std::setw(26) << r.configuration << std::right << std::setw(6) << run << std::fixed
            << std::setprecision(3) << std::setw(12) << r.stage1_ms << std::setw(12) << r.network_ms << std::setw(12)
            << r.stage2_ms << std::setw(12) << r.encoder_ms << std::setw(15) << r.downstream_ms << "\n";
    };
    for (const auto& r : rep.rows) line(r, std::to_string(r.run));
    for (const auto& r : rep.means) line(r, "mean");
    out.flush();
}

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    try {
        const ModelConfig cfg = load_model_config(a.config);
        std::shared_ptr<const WeightSet> weights;
        try {
            weights = load_or_seed_weights(a.weights, cfg, a.seed);
        } catch (const std::exception& e) {
            err << "error: bad weights: " << e.what() << std::endl;
            return bad_weights;
        }
        const Image image = a.image ? pad_to_model(load_ppm(*a.image), cfg) : synthetic_input(cfg);
        print_bench(run_bench(cfg, weights, image, a.repeat, a.workers), out);
    } catch (const GatherError& e) {
        err << "gather error: " << e.what() << std::endl;
        return gather_failed;
    } catch (const PlanningError& e) {
        err << "plan error: " << e.what() << std::endl;
        return plan_failed;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    return ok;
}

// ---------------------------------------------------------------- privacy

struct PrivacyArgs {
    std::string corpus;
    std::string schemes = "2x2,4x3,5x5";
    std::string adversaries = "mean_fill,tile_replicate,diffusion_inpaint";
    std::string out;
};

inline int cmd_privacy(const PrivacyArgs& a, std::ostream& out, std::ostream& err) {
    try {
        const auto corpus = load_corpus(a.corpus);
        if (corpus.empty()) {
            err << "error: no .ppm images in " << a.corpus << std::endl;
            return empty_corpus;
        }
        std::vector<Adversary> advs;
        std::stringstream ss(a.adversaries);
        for (std::string tok; std::getline(ss, tok, ',');)
            if (!tok.empty()) advs.push_back(parse_adversary(tok));
        const auto schemes = parse_scheme_list(a.schemes);
        const auto reports = run_privacy_sweep(corpus, schemes, advs);
        write_file_atomic(a.out, report_to_json(reports, corpus).dump(2) + "\n");
        for (const auto& r : reports)
            out << r.scheme.to_string() << " " << r.adversary << " ssim=" << r.aggregate.ssim
                << " mae=" << r.aggregate.mae << " exposure=" << r.exposure_ratio << "\n";
        out.flush();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    return ok;
}

// ---------------------------------------------------------------- flops

inline int cmd_flops(const std::string& config_path, bool as_json, std::ostream& out, std::ostream& err) {
    ModelConfig cfg;
    try {
        cfg = load_model_config(config_path);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    const auto est = estimate_flops(cfg);
    if (as_json) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : est.layers)
            layers.push_back({{"layer", l.layer}, {"kind", l.window ? "window" : "global"}, {"flops", l.total()}});
        out << nlohmann::json{{"layers", layers},
                              {"window_flops", est.window_total},
                              {"global_flops", est.global_total},
                              {"window_share", est.window_share()}}
                   .dump(2)
            << std::endl;
        return ok;
    }
    out << std::left << std::setw(7) << "layer" << std::setw(8) << "kind" << std::right << std::setw(16) << "GFLOPs"
        << "\n";
    for (const auto& l : est.layers)
        out << std::left << std::setw(7) << l.layer << std::setw(8) << (l.window ? "window" : "global") << std::right
            << std::fixed << std::setprecision(3) << std::setw(16) << l.total() / 1e9 << "\n";
    out << "window_total_gflops " << est.window_total / 1e9 << "\n"
        << "global_total_gflops " << est.global_total / 1e9 << "\n"
        << std::setprecision(6) << "window_share " << est.window_share() << std::endl;
    return ok;
}

// ---------------------------------------------------------------- helpers

inline int cmd_gen_weights(const std::string& config_path, std::uint64_t seed, const std::string& out_path,
                           std::ostream& out, std::ostream& err) {
    try {
        const auto cfg = load_model_config(config_path);
        const auto w = random_weights(cfg, seed);
        save_weights(out_path, w);
        out << "wrote " << out_path << " content_hash=" << std::hex << w.content_hash << std::dec << std::endl;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    return ok;
}

inline int cmd_score(const std::vector<std::string>& gt_files, const std::vector<std::string>& pred_files,
                     const MatchParams& p, std::ostream& out, std::ostream& err) {
    try {
        if (gt_files.size() != pred_files.size()) throw InputError("need one --pred file per --gt file");
        std::vector<DetectionSet> gt, pred;
        auto read_text = [](const std::string& f) {
            const auto bytes = read_file(f);
            return std::string(bytes.begin(), bytes.end());
        };
        for (const auto& f : gt_files) gt.push_back(parse_detections(read_text(f)));
        for (const auto& f : pred_files) pred.push_back(parse_detections(read_text(f)));
        const auto m = score_detections(gt, pred, p);
        out << nlohmann::json{{"precision", m.precision},
                              {"recall", m.recall},
                              {"mean_iou", m.mean_iou},
                              {"avg_matched", m.avg_matched},
                              {"images", m.images},
                              {"conf_min", p.conf_min},
                              {"iou_min", p.iou_min}}
                   .dump(2)
            << std::endl;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    return ok;
}

inline int cmd_miou(const std::vector<std::string>& gt_files, const std::vector<std::string>& pred_files,
                    std::ostream& out, std::ostream& err) {
    try {
        std::vector<BinaryMask> gt, pred;
        for (const auto& f : gt_files) gt.push_back(load_pgm(f));
        for (const auto& f : pred_files) pred.push_back(load_pgm(f));
        out << "miou " << mask_miou(gt, pred) << std::endl;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return usage;
    }
    return ok;
}

} // namespace pedvit::cli
