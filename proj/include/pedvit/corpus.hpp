#pragma once

// The bundled evaluation corpus: 12 deterministic 60x60 synthetic scenes
// (gradients, periodic patterns, composed indoor/outdoor-like layouts).
// 60 is divisible by 2, 3, 4 and 5, so none of the evaluated schemes pad.
// Pixel values sit on the 8-bit grid so PPM round trips are exact.

#include <pedvit/image.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace pedvit {

struct CorpusImage {
    std::string name;
    Image image;
};

namespace detail {

using Rgb = std::array<float, 3>;

inline Rgb mix(const Rgb& a, const Rgb& b, float t) {
    return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

inline Image render(std::size_t side, const std::function<Rgb(float, float)>& f) {
    Image img(side, side, 3);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            const float u = (static_cast<float>(x) + 0.5f) / static_cast<float>(side);
            const float v = (static_cast<float>(y) + 0.5f) / static_cast<float>(side);
            const Rgb c = f(u, v);
            for (std::size_t k = 0; k < 3; ++k)
                img.at(x, y, k) = std::round(std::clamp(c[k], 0.0f, 1.0f) * 255.0f) / 255.0f;
        }
    return img;
}

inline bool in_box(float u, float v, float x0, float y0, float x1, float y1) {
    return u >= x0 && u < x1 && v >= y0 && v < y1;
}

inline bool in_disc(float u, float v, float cx, float cy, float r) {
    return (u - cx) * (u - cx) + (v - cy) * (v - cy) < r * r;
}

} // namespace detail

inline std::vector<CorpusImage> synthetic_corpus(std::size_t side = 60) {
    using detail::in_box;
    using detail::in_disc;
    using detail::mix;
    using detail::Rgb;
    std::vector<CorpusImage> out;
    auto add = [&](std::string name, const std::function<Rgb(float, float)>& f) {
        out.push_back({std::move(name), detail::render(side, f)});
    };

    add("gradient_h", [](float u, float) { return mix({0.05f, 0.1f, 0.6f}, {0.95f, 0.8f, 0.1f}, u); });
    add("gradient_v", [](float, float v) { return mix({0.9f, 0.2f, 0.3f}, {0.1f, 0.7f, 0.5f}, v); });
    add("radial", [](float u, float v) {
        const float d = std::sqrt((u - 0.4f) * (u - 0.4f) + (v - 0.6f) * (v - 0.6f));
        return mix({1.0f, 0.95f, 0.7f}, {0.1f, 0.05f, 0.2f}, std::min(1.0f, d * 1.6f));
    });
    add("checker", [side](float u, float v) {
        const auto cx = static_cast<int>(u * static_cast<float>(side) / 7.0f);
        const auto cy = static_cast<int>(v * static_cast<float>(side) / 7.0f);
        return ((cx + cy) % 2) ? Rgb{0.9f, 0.9f, 0.85f} : Rgb{0.15f, 0.2f, 0.25f};
    });
    add("stripes_diag", [](float u, float v) {
        const float t = 0.5f + 0.5f * std::sin((u + 0.6f * v) * 23.0f);
        return mix({0.2f, 0.5f, 0.2f}, {0.8f, 0.9f, 0.6f}, t);
    });
    add("room", [](float u, float v) {
        Rgb c = v < 0.65f ? mix({0.85f, 0.8f, 0.7f}, {0.7f, 0.65f, 0.55f}, v) : mix({0.45f, 0.3f, 0.2f}, {0.3f, 0.2f, 0.1f}, v);
        if (in_box(u, v, 0.1f, 0.12f, 0.38f, 0.45f)) c = mix({0.6f, 0.8f, 0.95f}, {0.4f, 0.6f, 0.9f}, v * 2);
        if (in_box(u, v, 0.5f, 0.55f, 0.9f, 0.62f)) c = {0.35f, 0.2f, 0.1f};
        if (in_box(u, v, 0.53f, 0.62f, 0.56f, 0.85f) || in_box(u, v, 0.84f, 0.62f, 0.87f, 0.85f)) c = {0.3f, 0.18f, 0.08f};
        if (in_disc(u, v, 0.72f, 0.25f, 0.08f)) c = {1.0f, 0.95f, 0.6f};
        if (in_box(u, v, 0.15f, 0.7f, 0.35f, 0.95f)) c = {0.6f, 0.1f, 0.15f};
        return c;
    });
    add("landscape", [](float u, float v) {
        Rgb c = mix({0.35f, 0.55f, 0.95f}, {0.8f, 0.9f, 1.0f}, v / 0.6f);
        const float hill = 0.6f + 0.08f * std::sin(u * 7.0f);
        if (v > hill) c = mix({0.25f, 0.6f, 0.2f}, {0.15f, 0.4f, 0.1f}, (v - hill) * 2.5f);
        if (in_disc(u, v, 0.8f, 0.18f, 0.09f)) c = {1.0f, 0.85f, 0.3f};
        for (float tx : {0.15f, 0.32f, 0.55f}) {
            const float top = 0.35f, base = 0.68f;
            if (v > top && v < base && std::abs(u - tx) < (v - top) * 0.35f) c = {0.05f, 0.3f, 0.1f};
            if (in_box(u, v, tx - 0.015f, base, tx + 0.015f, base + 0.08f)) c = {0.35f, 0.2f, 0.1f};
        }
        return c;
    });
    add("street", [](float u, float v) {
        Rgb c = mix({0.6f, 0.7f, 0.85f}, {0.75f, 0.8f, 0.85f}, v);
        if (in_box(u, v, 0.02f, 0.15f, 0.3f, 0.6f)) c = {0.55f, 0.35f, 0.3f};
        if (in_box(u, v, 0.35f, 0.05f, 0.6f, 0.6f)) c = {0.4f, 0.42f, 0.48f};
        if (in_box(u, v, 0.65f, 0.25f, 0.98f, 0.6f)) c = {0.7f, 0.65f, 0.5f};
        for (float wx = 0.38f; wx < 0.58f; wx += 0.07f)
            for (float wy = 0.1f; wy < 0.55f; wy += 0.1f)
                if (in_box(u, v, wx, wy, wx + 0.035f, wy + 0.05f)) c = {0.95f, 0.9f, 0.5f};
        if (v >= 0.6f) c = std::abs(u - 0.5f) < 0.01f + (v - 0.6f) * 0.02f && std::fmod(v * 20.0f, 2.0f) < 1.0f
                               ? Rgb{0.95f, 0.95f, 0.9f}
                               : Rgb{0.25f, 0.25f, 0.27f};
        if (in_box(u, v, 0.12f, 0.7f, 0.34f, 0.8f)) c = {0.8f, 0.1f, 0.1f};
        if (in_box(u, v, 0.62f, 0.82f, 0.88f, 0.93f)) c = {0.1f, 0.2f, 0.7f};
        return c;
    });
    add("rings", [](float u, float v) {
        const float d = std::sqrt((u - 0.5f) * (u - 0.5f) + (v - 0.5f) * (v - 0.5f));
        const float t = 0.5f + 0.5f * std::cos(d * 40.0f);
        return mix({0.1f, 0.1f, 0.3f}, {0.9f, 0.6f, 0.2f}, t);
    });
    add("blobs", [](float u, float v) {
        Rgb c{0.1f, 0.1f, 0.1f};
        const std::array<std::array<float, 6>, 4> blobs{{{0.25f, 0.3f, 0.15f, 1.0f, 0.2f, 0.2f},
                                                          {0.7f, 0.35f, 0.12f, 0.2f, 0.9f, 0.3f},
                                                          {0.4f, 0.75f, 0.18f, 0.2f, 0.3f, 1.0f},
                                                          {0.8f, 0.8f, 0.1f, 0.9f, 0.9f, 0.2f}}};
        for (const auto& b : blobs) {
            const float d2 = (u - b[0]) * (u - b[0]) + (v - b[1]) * (v - b[1]);
            const float g = std::exp(-d2 / (2 * b[2] * b[2]));
            for (int k = 0; k < 3; ++k) c[k] += g * b[3 + k];
        }
        return c;
    });
    {
        std::mt19937_64 rng(0xc0ffee);
        std::array<float, 8 * 8> lattice{};
        for (float& x : lattice) x = static_cast<float>(rng() >> 40) / 16777216.0f;
        add("value_noise", [lattice](float u, float v) {
            const float gx = u * 7.0f, gy = v * 7.0f;
            const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
            const float fx = gx - ix, fy = gy - iy;
            auto at = [&](int x, int y) { return lattice[static_cast<std::size_t>(y * 8 + x)]; };
            const float top = at(ix, iy) + (at(ix + 1, iy) - at(ix, iy)) * fx;
            const float bot = at(ix, iy + 1) + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * fx;
            const float t = top + (bot - top) * fy;
            return mix({0.3f, 0.2f, 0.1f}, {0.9f, 0.85f, 0.6f}, t);
        });
    }
    add("portrait", [](float u, float v) {
        Rgb c = mix({0.3f, 0.5f, 0.55f}, {0.2f, 0.3f, 0.35f}, u);
        if ((u - 0.5f) * (u - 0.5f) / (0.3f * 0.3f) + (v - 1.05f) * (v - 1.05f) / (0.35f * 0.35f) < 1.0f)
            c = {0.2f, 0.25f, 0.6f};
        if ((u - 0.5f) * (u - 0.5f) / (0.15f * 0.15f) + (v - 0.42f) * (v - 0.42f) / (0.2f * 0.2f) < 1.0f)
            c = {0.9f, 0.72f, 0.6f};
        if (v < 0.3f && (u - 0.5f) * (u - 0.5f) / (0.17f * 0.17f) + (v - 0.36f) * (v - 0.36f) / (0.17f * 0.17f) < 1.0f)
            c = {0.25f, 0.15f, 0.08f};
        if (in_disc(u, v, 0.44f, 0.4f, 0.02f) || in_disc(u, v, 0.56f, 0.4f, 0.02f)) c = {0.1f, 0.1f, 0.1f};
        if (in_box(u, v, 0.45f, 0.52f, 0.55f, 0.54f)) c = {0.6f, 0.2f, 0.2f};
        return c;
    });
    return out;
}

inline void write_corpus(const std::filesystem::path& dir, const std::vector<CorpusImage>& corpus) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        char prefix[8];
        std::snprintf(prefix, sizeof prefix, "%02zu_", i);
        save_ppm(dir / (prefix + corpus[i].name + ".ppm"), corpus[i].image);
    }
}

// All *.ppm files in the directory, in filename order.
inline std::vector<CorpusImage> load_corpus(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw InputError("corpus directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<CorpusImage> out;
    for (const auto& f : files) out.push_back({f.stem().string(), load_ppm(f)});
    return out;
}

} // namespace pedvit
