#pragma once

// Named parameter tensors and the PEDW container:
//   "PEDW" | u16 version=1 | u32 count |
//   count x { u16 name_len | name | u8 rank | rank x u32 dim | f32 payload } |
//   u64 FNV-1a over all preceding bytes
// All integers and floats little-endian.

#include <pedvit/bytes.hpp>
#include <pedvit/errors.hpp>
#include <pedvit/fs.hpp>
#include <pedvit/model_config.hpp>
#include <pedvit/tensor.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace pedvit {

struct NamedTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct TensorFile {
    std::vector<NamedTensor> tensors;
    std::uint64_t content_hash = 0;

    const NamedTensor* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }
};

inline constexpr std::uint16_t kPedwVersion = 1;

inline std::vector<std::uint8_t> encode_pedw(const std::vector<NamedTensor>& tensors) {
    ByteWriter w;
    w.bytes("PEDW");
    w.u16(kPedwVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xffff) throw FormatError("tensor name too long");
        if (t.dims.size() > 0xff) throw FormatError("tensor rank too large");
        if (t.data.size() != t.element_count())
            throw ShapeError("tensor " + t.name + ": payload does not match dims");
        w.u16(static_cast<std::uint16_t>(t.name.size()));
        w.bytes(t.name);
        w.u8(static_cast<std::uint8_t>(t.dims.size()));
        for (auto d : t.dims) w.u32(d);
        w.f32s(t.data);
    }
    const std::uint64_t h = fnv1a64(w.buffer());
    w.u64(h);
    return w.take();
}

inline TensorFile decode_pedw(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 + 2 + 4 + 8) throw FormatError("PEDW: file too short");
    const auto body = bytes.first(bytes.size() - 8);
    ByteReader tail(bytes.last(8));
    const std::uint64_t stored = tail.u64();
    const std::uint64_t actual = fnv1a64(body);
    if (stored != actual) throw FormatError("PEDW: content hash mismatch");

    ByteReader r(body);
    if (r.str(4) != "PEDW") throw FormatError("PEDW: bad magic");
    if (const auto v = r.u16(); v != kPedwVersion)
        throw FormatError("PEDW: unsupported version " + std::to_string(v));
    const std::uint32_t count = r.u32();
    TensorFile file;
    file.content_hash = actual;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str(r.u16());
        const std::uint8_t rank = r.u8();
        for (std::uint8_t k = 0; k < rank; ++k) t.dims.push_back(r.u32());
        t.data = r.f32s(t.element_count());
        file.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("PEDW: trailing bytes before hash");
    return file;
}

inline void save_pedw(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    write_file_atomic(path, encode_pedw(tensors));
}

inline TensorFile load_pedw(const std::filesystem::path& path) { return decode_pedw(read_file(path)); }

struct LayerWeights {
    std::vector<float> norm1_gamma, norm1_beta;
    Matrix qkv_w; // d x 3d
    std::vector<float> qkv_b;
    Matrix proj_w; // d x d
    std::vector<float> proj_b;
    std::vector<float> norm2_gamma, norm2_beta;
    Matrix fc1_w; // d x mlp
    std::vector<float> fc1_b;
    Matrix fc2_w; // mlp x d
    std::vector<float> fc2_b;
};

// Immutable after construction; safe to share across worker threads.
struct WeightSet {
    Matrix patch_w; // patch_dim x d
    std::vector<float> patch_b;
    Matrix pos_embed; // grid_n^2 x d
    std::vector<LayerWeights> layers;
    Matrix neck_w; // d x out_dim
    std::vector<float> neck_b;
    std::uint64_t content_hash = 0;
};

namespace detail {

inline NamedTensor mat_tensor(std::string name, const Matrix& m) {
    return {std::move(name),
            {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
            m.data()};
}

inline NamedTensor vec_tensor(std::string name, const std::vector<float>& v) {
    return {std::move(name), {static_cast<std::uint32_t>(v.size())}, v};
}

inline std::string layer_key(std::size_t i, const char* leaf) {
    return "blocks." + std::to_string(i) + "." + leaf;
}

} // namespace detail

inline std::vector<NamedTensor> to_tensors(const WeightSet& w) {
    using detail::layer_key;
    using detail::mat_tensor;
    using detail::vec_tensor;
    std::vector<NamedTensor> out;
    out.push_back(mat_tensor("patch_embed.weight", w.patch_w));
    out.push_back(vec_tensor("patch_embed.bias", w.patch_b));
    out.push_back(mat_tensor("pos_embed", w.pos_embed));
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        const auto& l = w.layers[i];
        out.push_back(vec_tensor(layer_key(i, "norm1.weight"), l.norm1_gamma));
        out.push_back(vec_tensor(layer_key(i, "norm1.bias"), l.norm1_beta));
        out.push_back(mat_tensor(layer_key(i, "attn.qkv.weight"), l.qkv_w));
        out.push_back(vec_tensor(layer_key(i, "attn.qkv.bias"), l.qkv_b));
        out.push_back(mat_tensor(layer_key(i, "attn.proj.weight"), l.proj_w));
        out.push_back(vec_tensor(layer_key(i, "attn.proj.bias"), l.proj_b));
        out.push_back(vec_tensor(layer_key(i, "norm2.weight"), l.norm2_gamma));
        out.push_back(vec_tensor(layer_key(i, "norm2.bias"), l.norm2_beta));
        out.push_back(mat_tensor(layer_key(i, "mlp.fc1.weight"), l.fc1_w));
        out.push_back(vec_tensor(layer_key(i, "mlp.fc1.bias"), l.fc1_b));
        out.push_back(mat_tensor(layer_key(i, "mlp.fc2.weight"), l.fc2_w));
        out.push_back(vec_tensor(layer_key(i, "mlp.fc2.bias"), l.fc2_b));
    }
    out.push_back(mat_tensor("neck.weight", w.neck_w));
    out.push_back(vec_tensor("neck.bias", w.neck_b));
    return out;
}

inline std::uint64_t compute_content_hash(const WeightSet& w) {
    const auto bytes = encode_pedw(to_tensors(w));
    ByteReader tail{std::span(bytes).last(8)};
    return tail.u64();
}

inline WeightSet from_tensors(const TensorFile& file, const ModelConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.embed_dim;
    auto fetch = [&](const std::string& name, std::vector<std::uint32_t> dims) -> const NamedTensor& {
        const NamedTensor* t = file.find(name);
        if (!t) throw ShapeError("weights: missing tensor " + name);
        if (t->dims != dims) throw ShapeError("weights: tensor " + name + " has wrong shape");
        return *t;
    };
    auto mat = [&](const std::string& name, std::size_t rows, std::size_t cols) {
        const auto& t = fetch(name, {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)});
        return Matrix(rows, cols, t.data);
    };
    auto vec = [&](const std::string& name, std::size_t n) {
        return fetch(name, {static_cast<std::uint32_t>(n)}).data;
    };
    using detail::layer_key;

    WeightSet w;
    w.patch_w = mat("patch_embed.weight", cfg.patch_dim(), d);
    w.patch_b = vec("patch_embed.bias", d);
    w.pos_embed = mat("pos_embed", cfg.grid_n() * cfg.grid_n(), d);
    for (std::size_t i = 0; i < cfg.total_layers(); ++i) {
        LayerWeights l;
        l.norm1_gamma = vec(layer_key(i, "norm1.weight"), d);
        l.norm1_beta = vec(layer_key(i, "norm1.bias"), d);
        l.qkv_w = mat(layer_key(i, "attn.qkv.weight"), d, 3 * d);
        l.qkv_b = vec(layer_key(i, "attn.qkv.bias"), 3 * d);
        l.proj_w = mat(layer_key(i, "attn.proj.weight"), d, d);
        l.proj_b = vec(layer_key(i, "attn.proj.bias"), d);
        l.norm2_gamma = vec(layer_key(i, "norm2.weight"), d);
        l.norm2_beta = vec(layer_key(i, "norm2.bias"), d);
        l.fc1_w = mat(layer_key(i, "mlp.fc1.weight"), d, cfg.mlp_dim());
        l.fc1_b = vec(layer_key(i, "mlp.fc1.bias"), cfg.mlp_dim());
        l.fc2_w = mat(layer_key(i, "mlp.fc2.weight"), cfg.mlp_dim(), d);
        l.fc2_b = vec(layer_key(i, "mlp.fc2.bias"), d);
        w.layers.push_back(std::move(l));
    }
    w.neck_w = mat("neck.weight", d, cfg.out_dim);
    w.neck_b = vec("neck.bias", cfg.out_dim);
    w.content_hash = file.content_hash ? file.content_hash : compute_content_hash(w);
    return w;
}

inline constexpr std::uint64_t kDefaultWeightSeed = 0x5eed'0f'ed'91'7a'11ull;

// Deterministic stand-in for a checkpoint: every value uniform in
// [-0.1, 0.1] from mt19937_64(seed); layer-norm gains are 1 + that.
inline WeightSet random_weights(const ModelConfig& cfg, std::uint64_t seed = kDefaultWeightSeed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    auto next = [&] {
        const auto bits = static_cast<float>(rng() >> 40); // 24 bits, exact in float
        return -0.1f + 0.2f * (bits / 16777216.0f);
    };
    auto mat = [&](std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (float& v : m.data()) v = next();
        return m;
    };
    auto vec = [&](std::size_t n, float offset = 0.0f) {
        std::vector<float> v(n);
        for (float& x : v) x = offset + next();
        return v;
    };
    const std::size_t d = cfg.embed_dim;
    WeightSet w;
    w.patch_w = mat(cfg.patch_dim(), d);
    w.patch_b = vec(d);
    w.pos_embed = mat(cfg.grid_n() * cfg.grid_n(), d);
    for (std::size_t i = 0; i < cfg.total_layers(); ++i) {
        LayerWeights l;
        l.norm1_gamma = vec(d, 1.0f);
        l.norm1_beta = vec(d);
        l.qkv_w = mat(d, 3 * d);
        l.qkv_b = vec(3 * d);
        l.proj_w = mat(d, d);
        l.proj_b = vec(d);
        l.norm2_gamma = vec(d, 1.0f);
        l.norm2_beta = vec(d);
        l.fc1_w = mat(d, cfg.mlp_dim());
        l.fc1_b = vec(cfg.mlp_dim());
        l.fc2_w = mat(cfg.mlp_dim(), d);
        l.fc2_b = vec(d);
        w.layers.push_back(std::move(l));
    }
    w.neck_w = mat(d, cfg.out_dim);
    w.neck_b = vec(cfg.out_dim);
    w.content_hash = compute_content_hash(w);
    return w;
}

inline void save_weights(const std::filesystem::path& path, const WeightSet& w) {
    save_pedw(path, to_tensors(w));
}

inline WeightSet load_weights(const std::filesystem::path& path, const ModelConfig& cfg) {
    return from_tensors(load_pedw(path), cfg);
}

} // namespace pedvit
