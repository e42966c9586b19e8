#pragma once

#include <pedvit/errors.hpp>

#include <json.hpp>

#include <cstddef>
#include <fstream>
#include <string>

namespace pedvit {

// Encoder geometry. The token grid is grid_n x grid_n; window layers run on
// the grid zero-padded up to a multiple of window_r.
struct ModelConfig {
    std::size_t image_side = 64;
    std::size_t patch_size = 4;
    std::size_t channels = 3;
    std::size_t window_r = 4;
    std::size_t embed_dim = 32;
    std::size_t num_heads = 4;
    std::size_t window_layers = 6;
    std::size_t global_layers = 2;
    std::size_t mlp_ratio = 4;
    std::size_t out_dim = 32;

    std::size_t grid_n() const noexcept { return patch_size ? image_side / patch_size : 0; }
    std::size_t windows_per_side() const noexcept {
        return window_r ? (grid_n() + window_r - 1) / window_r : 0;
    }
    std::size_t padded_grid() const noexcept { return windows_per_side() * window_r; }
    std::size_t num_windows() const noexcept { return windows_per_side() * windows_per_side(); }
    std::size_t total_layers() const noexcept { return window_layers + global_layers; }
    std::size_t head_dim() const noexcept { return num_heads ? embed_dim / num_heads : 0; }
    std::size_t mlp_dim() const noexcept { return embed_dim * mlp_ratio; }
    std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }

    // L = 0 / G = 0 are accepted for degenerate tests; the shipped configs
    // all have both stages.
    void validate() const {
        if (patch_size == 0 || image_side == 0 || window_r == 0 || embed_dim == 0 || num_heads == 0)
            throw ShapeError("model config: zero-sized dimension");
        if (image_side % patch_size != 0)
            throw ShapeError("model config: image_side must be a multiple of patch_size");
        if (embed_dim % num_heads != 0)
            throw ShapeError("model config: embed_dim must be divisible by num_heads");
        if (channels != 3) throw ShapeError("model config: only 3-channel images are supported");
        if (out_dim == 0 || mlp_ratio == 0) throw ShapeError("model config: zero-sized dimension");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline ModelConfig toy_config() { return ModelConfig{}; }

inline ModelConfig sam_h_config() {
    ModelConfig c;
    c.image_side = 1024;
    c.patch_size = 16;
    c.window_r = 14;
    c.embed_dim = 1280;
    c.num_heads = 16;
    c.window_layers = 28;
    c.global_layers = 4;
    c.mlp_ratio = 4;
    c.out_dim = 256;
    return c;
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"image_side", c.image_side},       {"patch_size", c.patch_size},
                       {"channels", c.channels},           {"window_r", c.window_r},
                       {"embed_dim", c.embed_dim},         {"num_heads", c.num_heads},
                       {"window_layers", c.window_layers}, {"global_layers", c.global_layers},
                       {"mlp_ratio", c.mlp_ratio},         {"out_dim", c.out_dim}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.image_side = j.value("image_side", d.image_side);
    c.patch_size = j.value("patch_size", d.patch_size);
    c.channels = j.value("channels", d.channels);
    c.window_r = j.value("window_r", d.window_r);
    c.embed_dim = j.value("embed_dim", d.embed_dim);
    c.num_heads = j.value("num_heads", d.num_heads);
    c.window_layers = j.value("window_layers", d.window_layers);
    c.global_layers = j.value("global_layers", d.global_layers);
    c.mlp_ratio = j.value("mlp_ratio", d.mlp_ratio);
    c.out_dim = j.value("out_dim", c.embed_dim);
}

inline ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InputError("config " + path + ": " + e.what());
    }
    ModelConfig c = j.get<ModelConfig>();
    c.validate();
    return c;
}

} // namespace pedvit
