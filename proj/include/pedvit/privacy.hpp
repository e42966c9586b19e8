#pragma once

// Pixel-level visual privacy risk: what an honest-but-curious server can
// reconstruct from the one window it saw, scored with SSIM and MAE.

#include <pedvit/errors.hpp>
#include <pedvit/image.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace pedvit {

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;

    double c1() const noexcept { return k1 * k1; }
    double c2() const noexcept { return k2 * k2; }
};

namespace detail {

inline std::vector<double> gaussian_taps(std::size_t n, double sigma) {
    std::vector<double> taps(n);
    const double mid = (static_cast<double>(n) - 1.0) / 2.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - mid;
        taps[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Separable "valid" correlation: output is (w-n+1) x (h-n+1).
inline std::vector<double> filter_valid(const std::vector<double>& src, std::size_t w, std::size_t h,
                                        const std::vector<double>& taps) {
    const std::size_t n = taps.size();
    const std::size_t ow = w - n + 1, oh = h - n + 1;
    std::vector<double> horiz(ow * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += taps[k] * src[y * w + x + k];
            horiz[y * ow + x] = s;
        }
    std::vector<double> out(ow * oh);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) s += taps[k] * horiz[(y + k) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

inline void check_same_dims(const Image& a, const Image& b, const char* what) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw ShapeError(std::string(what) + ": image dimensions differ");
}

} // namespace detail

// Mean SSIM over the valid region of the luma images (no border padding).
inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
    detail::check_same_dims(a, b, "ssim");
    if (a.width < p.window || a.height < p.window)
        throw ShapeError("ssim: image smaller than the " + std::to_string(p.window) + "px window");
    const auto x = luma(a);
    const auto y = luma(b);
    std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto taps = detail::gaussian_taps(p.window, p.sigma);
    const auto mx = detail::filter_valid(x, a.width, a.height, taps);
    const auto my = detail::filter_valid(y, a.width, a.height, taps);
    const auto exx = detail::filter_valid(xx, a.width, a.height, taps);
    const auto eyy = detail::filter_valid(yy, a.width, a.height, taps);
    const auto exy = detail::filter_valid(xy, a.width, a.height, taps);
    const double c1 = p.c1(), c2 = p.c2();
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = exx[i] - mx[i] * mx[i];
        const double vy = eyy[i] - my[i] * my[i];
        const double cov = exy[i] - mx[i] * my[i];
        const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
        const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
        sum += num / den;
    }
    return sum / static_cast<double>(mx.size());
}

inline double mae(const Image& a, const Image& b) {
    detail::check_same_dims(a, b, "mae");
    if (a.data.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        sum += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    return sum / static_cast<double>(a.data.size());
}

struct PixelRisk {
    double ssim = 0.0;
    double mae = 0.0;
};

// Lower SSIM / higher MAE means the original is better protected.
inline PixelRisk vpr_pixel(const Image& original, const Image& reconstruction, const SsimParams& p = {}) {
    return {ssim(original, reconstruction, p), mae(original, reconstruction)};
}

// The window one server saw, placed on the full canvas.
struct ExposedRegion {
    std::size_t canvas_width = 0;
    std::size_t canvas_height = 0;
    Rect rect;
    Image pixels;

    void validate() const {
        if (rect.x + rect.width > canvas_width || rect.y + rect.height > canvas_height)
            throw InputError("exposed region: rect outside canvas");
        if (pixels.width != rect.width || pixels.height != rect.height)
            throw InputError("exposed region: pixel block does not match rect");
    }
};

struct Adversary {
    enum class Kind { mean_fill, tile_replicate, diffusion_inpaint } kind = Kind::mean_fill;
    std::size_t iterations = 500; // diffusion_inpaint only

    static Adversary mean_fill() { return {Kind::mean_fill}; }
    static Adversary tile_replicate() { return {Kind::tile_replicate}; }
    static Adversary diffusion_inpaint(std::size_t n = 500) { return {Kind::diffusion_inpaint, n}; }

    std::string name() const {
        switch (kind) {
        case Kind::mean_fill: return "mean_fill";
        case Kind::tile_replicate: return "tile_replicate";
        case Kind::diffusion_inpaint: return "diffusion_inpaint";
        }
        return "unknown";
    }
};

inline Adversary parse_adversary(std::string_view s) {
    if (s == "mean_fill") return Adversary::mean_fill();
    if (s == "tile_replicate") return Adversary::tile_replicate();
    if (s == "diffusion_inpaint") return Adversary::diffusion_inpaint();
    if (s.starts_with("diffusion_inpaint:")) {
        const std::string n(s.substr(18));
        try {
            std::size_t used = 0;
            const auto v = std::stoul(n, &used);
            if (used == n.size()) return Adversary::diffusion_inpaint(v);
        } catch (const std::exception&) {
        }
    }
    throw InputError("unknown adversary '" + std::string(s) + "'");
}

inline std::vector<Adversary> all_adversaries() {
    return {Adversary::mean_fill(), Adversary::tile_replicate(), Adversary::diffusion_inpaint()};
}

namespace detail {

inline std::vector<float> mean_color(const Image& img) {
    std::vector<double> acc(img.channels, 0.0);
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
        for (std::size_t c = 0; c < img.channels; ++c) acc[c] += img.data[i * img.channels + c];
    std::vector<float> out(img.channels, 0.0f);
    if (img.pixel_count() == 0) return out;
    for (std::size_t c = 0; c < img.channels; ++c)
        out[c] = static_cast<float>(acc[c] / static_cast<double>(img.pixel_count()));
    return out;
}

inline Image fill_canvas(const ExposedRegion& r, std::span<const float> color) {
    Image out(r.canvas_width, r.canvas_height, r.pixels.channels);
    for (std::size_t i = 0; i < out.pixel_count(); ++i)
        std::copy(color.begin(), color.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * out.channels));
    return out;
}

// Jacobi sweeps of the 4-neighbour Laplace equation; pixels inside the rect
// are fixed, canvas edges are reflecting (only in-canvas neighbours count).
inline void jacobi_inpaint(Image& img, const Rect& known, std::size_t iterations) {
    const std::size_t w = img.width, h = img.height, ch = img.channels;
    Image next = img;
    for (std::size_t it = 0; it < iterations; ++it) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                if (known.contains(x, y)) continue;
                for (std::size_t c = 0; c < ch; ++c) {
                    float s = 0.0f;
                    float n = 0.0f;
                    if (x > 0) { s += img.at(x - 1, y, c); n += 1.0f; }
                    if (x + 1 < w) { s += img.at(x + 1, y, c); n += 1.0f; }
                    if (y > 0) { s += img.at(x, y - 1, c); n += 1.0f; }
                    if (y + 1 < h) { s += img.at(x, y + 1, c); n += 1.0f; }
                    next.at(x, y, c) = s / n;
                }
            }
        std::swap(img.data, next.data);
    }
}

} // namespace detail

inline Image reconstruct(const Adversary& adv, const ExposedRegion& region) {
    region.validate();
    const Rect& r = region.rect;
    Image out;
    switch (adv.kind) {
    case Adversary::Kind::mean_fill:
        out = detail::fill_canvas(region, detail::mean_color(region.pixels));
        break;
    case Adversary::Kind::tile_replicate: {
        out = Image(region.canvas_width, region.canvas_height, region.pixels.channels);
        if (r.width == 0 || r.height == 0) break;
        for (std::size_t y = 0; y < out.height; ++y) {
            const std::size_t sy = (y + r.height - r.y % r.height) % r.height;
            for (std::size_t x = 0; x < out.width; ++x) {
                const std::size_t sx = (x + r.width - r.x % r.width) % r.width;
                auto src = region.pixels.pixel(sx, sy);
                std::copy(src.begin(), src.end(), out.pixel(x, y).begin());
            }
        }
        break;
    }
    case Adversary::Kind::diffusion_inpaint:
        out = detail::fill_canvas(region, detail::mean_color(region.pixels));
        paste(out, region.pixels, r.x, r.y);
        if (r.area() > 0) detail::jacobi_inpaint(out, r, adv.iterations);
        break;
    }
    paste(out, region.pixels, r.x, r.y);
    return out;
}

} // namespace pedvit
