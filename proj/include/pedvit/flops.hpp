#pragma once

// FLOP model: 2 FLOPs per multiply-accumulate over the six matmuls of a
// block (qkv, scores, attn*V, out proj, two MLP layers). Norms, softmax and
// GELU are not counted. Window layers see the padded grid in r^2-token
// windows; global layers see the unpadded grid_n^2 tokens.

#include <pedvit/model_config.hpp>

#include <cstdint>
#include <vector>

namespace pedvit {

struct LayerFlops {
    std::size_t layer = 0;
    bool window = false;
    double qkv = 0, scores = 0, attn_v = 0, out_proj = 0, mlp = 0;

    double total() const noexcept { return qkv + scores + attn_v + out_proj + mlp; }
};

struct FlopEstimate {
    std::vector<LayerFlops> layers;
    double window_total = 0;
    double global_total = 0;

    double total() const noexcept { return window_total + global_total; }
    double window_share() const noexcept { return total() > 0 ? window_total / total() : 0.0; }
};

inline LayerFlops layer_flops(const ModelConfig& cfg, std::size_t index, bool window) {
    const double d = static_cast<double>(cfg.embed_dim);
    double tokens = 0, seq = 0, groups = 0;
    if (window) {
        const double r = static_cast<double>(cfg.window_r);
        groups = static_cast<double>(cfg.num_windows());
        seq = r * r;
        tokens = groups * seq;
    } else {
        const double n = static_cast<double>(cfg.grid_n());
        groups = 1;
        seq = n * n;
        tokens = seq;
    }
    LayerFlops f;
    f.layer = index;
    f.window = window;
    f.qkv = 2.0 * tokens * d * 3.0 * d;
    f.scores = 2.0 * groups * seq * seq * d;
    f.attn_v = 2.0 * groups * seq * seq * d;
    f.out_proj = 2.0 * tokens * d * d;
    f.mlp = 2.0 * 2.0 * tokens * d * static_cast<double>(cfg.mlp_dim());
    return f;
}

inline FlopEstimate estimate_flops(const ModelConfig& cfg) {
    FlopEstimate e;
    for (std::size_t i = 0; i < cfg.total_layers(); ++i) {
        const bool window = i < cfg.window_layers;
        auto f = layer_flops(cfg, i, window);
        (window ? e.window_total : e.global_total) += f.total();
        e.layers.push_back(f);
    }
    return e;
}

} // namespace pedvit
