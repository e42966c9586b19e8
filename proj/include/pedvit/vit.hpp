#pragma once

// Two-stage window/global ViT encoder.
//
// Stage 1 (offloadable): L pre-norm blocks with attention restricted to
// r x r token windows. Stage 2 (edge-local): G blocks with global attention
// over the whole grid, then a linear neck projection.
//
// Window mode is implemented by running the exact same block routine on each
// extracted window, so a window processed on its own is bit-identical to the
// same window inside a full-grid window-mode pass.

#include <pedvit/errors.hpp>
#include <pedvit/image.hpp>
#include <pedvit/model_config.hpp>
#include <pedvit/tensor.hpp>
#include <pedvit/weights.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pedvit {

// height x width tokens of `dim` channels; token (y, x) is row y*width + x.
struct TokenGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    Matrix tokens;

    TokenGrid() = default;
    TokenGrid(std::size_t h, std::size_t w, std::size_t dim) : height(h), width(w), tokens(h * w, dim) {}
    TokenGrid(std::size_t h, std::size_t w, Matrix m) : height(h), width(w), tokens(std::move(m)) {
        if (tokens.rows() != h * w) throw ShapeError("token grid: row count != height*width");
    }

    std::size_t dim() const noexcept { return tokens.cols(); }
    std::span<float> token(std::size_t y, std::size_t x) noexcept { return tokens.row(y * width + x); }
    std::span<const float> token(std::size_t y, std::size_t x) const noexcept {
        return tokens.row(y * width + x);
    }

    friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

enum class AttentionMode { window, global };

struct StageOutput {
    std::size_t window_index = 0;
    TokenGrid tokens;
    std::size_t layer_start = 0;
    std::size_t layer_end = 0;
};

inline void check_image(const Image& image, const ModelConfig& cfg) {
    if (image.width != cfg.image_side || image.height != cfg.image_side || image.channels != cfg.channels)
        throw ShapeError("image is " + std::to_string(image.width) + "x" + std::to_string(image.height) + "x" +
                         std::to_string(image.channels) + ", model expects " + std::to_string(cfg.image_side) +
                         "x" + std::to_string(cfg.image_side) + "x" + std::to_string(cfg.channels));
}

inline TokenGrid patch_embed(const Image& image, const WeightSet& w, const ModelConfig& cfg) {
    check_image(image, cfg);
    const std::size_t n = cfg.grid_n();
    const std::size_t p = cfg.patch_size;
    Matrix patches(n * n, cfg.patch_dim());
    for (std::size_t gy = 0; gy < n; ++gy)
        for (std::size_t gx = 0; gx < n; ++gx) {
            auto row = patches.row(gy * n + gx);
            std::size_t k = 0;
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t px = 0; px < p; ++px)
                    for (std::size_t c = 0; c < cfg.channels; ++c)
                        row[k++] = image.at(gx * p + px, gy * p + py, c);
        }
    Matrix emb = linear(patches, w.patch_w, w.patch_b);
    for (std::size_t i = 0; i < emb.size(); ++i) emb.data()[i] += w.pos_embed.data()[i];
    return TokenGrid(n, n, std::move(emb));
}

inline Matrix multi_head_attention(const Matrix& x, const LayerWeights& l, std::size_t num_heads) {
    const std::size_t t = x.rows();
    const std::size_t d = x.cols();
    const std::size_t hd = d / num_heads;
    const Matrix qkv = linear(x, l.qkv_w, l.qkv_b);
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    Matrix heads(t, d);
    std::vector<float> scores(t);
    for (std::size_t h = 0; h < num_heads; ++h) {
        const std::size_t qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
        for (std::size_t i = 0; i < t; ++i) {
            const float* q = &qkv(i, qo);
            for (std::size_t j = 0; j < t; ++j) {
                const float* k = &qkv(j, ko);
                float s = 0.0f;
                for (std::size_t c = 0; c < hd; ++c) s += q[c] * k[c];
                scores[j] = s * scale;
            }
            softmax_inplace(scores);
            float* out = &heads(i, qo);
            for (std::size_t j = 0; j < t; ++j) {
                const float pj = scores[j];
                const float* v = &qkv(j, vo);
                for (std::size_t c = 0; c < hd; ++c) out[c] += pj * v[c];
            }
        }
    }
    return linear(heads, l.proj_w, l.proj_b);
}

// Pre-norm transformer block over one attention group of tokens.
inline void block_forward(Matrix& x, const LayerWeights& l, std::size_t num_heads) {
    const Matrix attn = multi_head_attention(layer_norm_rows(x, l.norm1_gamma, l.norm1_beta), l, num_heads);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += attn.data()[i];
    Matrix hidden = linear(layer_norm_rows(x, l.norm2_gamma, l.norm2_beta), l.fc1_w, l.fc1_b);
    for (float& v : hidden.data()) v = gelu(v);
    const Matrix mlp = linear(hidden, l.fc2_w, l.fc2_b);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] += mlp.data()[i];
}

inline TokenGrid extract_window(const TokenGrid& grid, std::size_t wy, std::size_t wx, std::size_t r) {
    TokenGrid out(r, r, grid.dim());
    for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x = 0; x < r; ++x) {
            auto src = grid.token(wy * r + y, wx * r + x);
            std::copy(src.begin(), src.end(), out.token(y, x).begin());
        }
    return out;
}

inline void place_window(TokenGrid& grid, const TokenGrid& win, std::size_t wy, std::size_t wx) {
    const std::size_t r = win.height;
    for (std::size_t y = 0; y < r; ++y)
        for (std::size_t x = 0; x < win.width; ++x) {
            auto src = win.token(y, x);
            std::copy(src.begin(), src.end(), grid.token(wy * r + y, wx * win.width + x).begin());
        }
}

inline TokenGrid attention_block(const TokenGrid& tokens, const LayerWeights& layer, AttentionMode mode,
                                 const ModelConfig& cfg) {
    if (tokens.dim() != cfg.embed_dim) throw ShapeError("attention_block: embed dim mismatch");
    if (mode == AttentionMode::global) {
        TokenGrid out = tokens;
        block_forward(out.tokens, layer, cfg.num_heads);
        return out;
    }
    const std::size_t r = cfg.window_r;
    if (tokens.height % r != 0 || tokens.width % r != 0)
        throw ShapeError("attention_block: grid " + std::to_string(tokens.height) + "x" +
                         std::to_string(tokens.width) + " not divisible by window " + std::to_string(r));
    TokenGrid out(tokens.height, tokens.width, tokens.dim());
    for (std::size_t wy = 0; wy < tokens.height / r; ++wy)
        for (std::size_t wx = 0; wx < tokens.width / r; ++wx) {
            TokenGrid win = extract_window(tokens, wy, wx, r);
            block_forward(win.tokens, layer, cfg.num_heads);
            place_window(out, win, wy, wx);
        }
    return out;
}

inline TokenGrid pad_grid(const TokenGrid& grid, std::size_t side) {
    if (side < grid.height || side < grid.width) throw ShapeError("pad_grid: target smaller than grid");
    if (side == grid.height && side == grid.width) return grid;
    TokenGrid out(side, side, grid.dim());
    for (std::size_t y = 0; y < grid.height; ++y)
        for (std::size_t x = 0; x < grid.width; ++x) {
            auto src = grid.token(y, x);
            std::copy(src.begin(), src.end(), out.token(y, x).begin());
        }
    return out;
}

inline TokenGrid crop_grid(const TokenGrid& grid, std::size_t side) {
    if (side > grid.height || side > grid.width) throw ShapeError("crop_grid: target larger than grid");
    if (side == grid.height && side == grid.width) return grid;
    TokenGrid out(side, side, grid.dim());
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            auto src = grid.token(y, x);
            std::copy(src.begin(), src.end(), out.token(y, x).begin());
        }
    return out;
}

// Row-major r x r windows of a grid whose sides are multiples of r.
inline std::vector<TokenGrid> split_windows(const TokenGrid& grid, std::size_t r) {
    if (r == 0 || grid.height % r != 0 || grid.width % r != 0)
        throw ShapeError("split_windows: grid not divisible by window size");
    std::vector<TokenGrid> out;
    for (std::size_t wy = 0; wy < grid.height / r; ++wy)
        for (std::size_t wx = 0; wx < grid.width / r; ++wx) out.push_back(extract_window(grid, wy, wx, r));
    return out;
}

// Patch embedding, zero-token padding to a multiple of r, and the split
// into row-major stage-1 windows. Runs on the edge device.
inline std::vector<TokenGrid> embed_windows(const Image& image, const WeightSet& w, const ModelConfig& cfg) {
    return split_windows(pad_grid(patch_embed(image, w, cfg), cfg.padded_grid()), cfg.window_r);
}

inline StageOutput encode_window_stage(const TokenGrid& window_tokens, const WeightSet& w, const ModelConfig& cfg,
                                       std::size_t window_index = 0) {
    const std::size_t r = cfg.window_r;
    if (window_tokens.height != r || window_tokens.width != r)
        throw ShapeError("encode_window_stage: expected " + std::to_string(r) + "x" + std::to_string(r) +
                         " window, got " + std::to_string(window_tokens.height) + "x" +
                         std::to_string(window_tokens.width));
    if (window_tokens.dim() != cfg.embed_dim) throw ShapeError("encode_window_stage: embed dim mismatch");
    if (w.layers.size() < cfg.window_layers) throw ShapeError("encode_window_stage: missing layers");
    StageOutput out{window_index, window_tokens, 0, cfg.window_layers};
    for (std::size_t i = 0; i < cfg.window_layers; ++i) block_forward(out.tokens.tokens, w.layers[i], cfg.num_heads);
    return out;
}

inline TokenGrid merge_windows(const std::vector<StageOutput>& parts, std::size_t windows_per_side) {
    const std::size_t count = windows_per_side * windows_per_side;
    if (parts.size() != count)
        throw AssemblyError("merge_windows: expected " + std::to_string(count) + " parts, got " +
                            std::to_string(parts.size()));
    std::vector<const StageOutput*> slot(count, nullptr);
    for (const auto& p : parts) {
        if (p.window_index >= count) throw AssemblyError("merge_windows: window index out of range");
        if (slot[p.window_index]) throw AssemblyError("merge_windows: duplicate window " + std::to_string(p.window_index));
        slot[p.window_index] = &p;
    }
    const auto& first = slot[0]->tokens;
    const std::size_t r = first.height;
    TokenGrid out(windows_per_side * r, windows_per_side * r, first.dim());
    for (std::size_t i = 0; i < count; ++i) {
        const auto& t = slot[i]->tokens;
        if (t.height != r || t.width != r || t.dim() != first.dim())
            throw AssemblyError("merge_windows: inconsistent window shapes");
        place_window(out, t, i / windows_per_side, i % windows_per_side);
    }
    return out;
}

// Takes the merged (padded) grid; padding tokens are cropped before the
// global layers.
inline TokenGrid encode_global_stage(const TokenGrid& grid, const WeightSet& w, const ModelConfig& cfg) {
    const std::size_t side = cfg.padded_grid();
    if (grid.height != side || grid.width != side)
        throw ShapeError("encode_global_stage: expected " + std::to_string(side) + "x" + std::to_string(side) +
                         " grid, got " + std::to_string(grid.height) + "x" + std::to_string(grid.width));
    if (w.layers.size() < cfg.total_layers()) throw ShapeError("encode_global_stage: missing layers");
    TokenGrid x = crop_grid(grid, cfg.grid_n());
    for (std::size_t i = cfg.window_layers; i < cfg.total_layers(); ++i)
        block_forward(x.tokens, w.layers[i], cfg.num_heads);
    return TokenGrid(x.height, x.width, linear(x.tokens, w.neck_w, w.neck_b));
}

inline TokenGrid encode_monolithic(const Image& image, const WeightSet& w, const ModelConfig& cfg) {
    TokenGrid x = pad_grid(patch_embed(image, w, cfg), cfg.padded_grid());
    for (std::size_t i = 0; i < cfg.window_layers; ++i)
        x = attention_block(x, w.layers[i], AttentionMode::window, cfg);
    return encode_global_stage(x, w, cfg);
}

// Lightweight downstream head: the mask for a point prompt is every token
// whose embedding has positive dot product with the prompted token.
inline BinaryMask point_prompt_mask(const TokenGrid& embedding, std::size_t prompt_y, std::size_t prompt_x) {
    if (prompt_y >= embedding.height || prompt_x >= embedding.width) throw InputError("prompt outside grid");
    const auto q = embedding.token(prompt_y, prompt_x);
    BinaryMask m(embedding.width, embedding.height);
    for (std::size_t y = 0; y < embedding.height; ++y)
        for (std::size_t x = 0; x < embedding.width; ++x) {
            const auto t = embedding.token(y, x);
            float s = 0.0f;
            for (std::size_t c = 0; c < t.size(); ++c) s += q[c] * t[c];
            m.at(x, y) = s > 0.0f ? 1 : 0;
        }
    return m;
}

} // namespace pedvit
