#pragma once

// Float images in [0,1], interleaved HWC, plus binary P6/P5 I/O.

#include <pedvit/errors.hpp>
#include <pedvit/fs.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace pedvit {

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<float> data;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::size_t c = 3, float fill = 0.0f)
        : width(w), height(h), channels(c), data(w * h * c, fill) {}

    bool empty() const noexcept { return data.empty(); }
    std::size_t pixel_count() const noexcept { return width * height; }

    float& at(std::size_t x, std::size_t y, std::size_t c) noexcept {
        return data[(y * width + x) * channels + c];
    }
    float at(std::size_t x, std::size_t y, std::size_t c) const noexcept {
        return data[(y * width + x) * channels + c];
    }
    std::span<float> pixel(std::size_t x, std::size_t y) noexcept {
        return {data.data() + (y * width + x) * channels, channels};
    }
    std::span<const float> pixel(std::size_t x, std::size_t y) const noexcept {
        return {data.data() + (y * width + x) * channels, channels};
    }

    friend bool operator==(const Image&, const Image&) = default;
};

struct Rect {
    std::size_t x = 0, y = 0, width = 0, height = 0;

    std::size_t area() const noexcept { return width * height; }
    bool contains(std::size_t px, std::size_t py) const noexcept {
        return px >= x && px < x + width && py >= y && py < y + height;
    }
    friend bool operator==(const Rect&, const Rect&) = default;
};

inline Image crop(const Image& img, const Rect& r) {
    if (r.x + r.width > img.width || r.y + r.height > img.height)
        throw ShapeError("crop: rect outside image");
    Image out(r.width, r.height, img.channels);
    for (std::size_t y = 0; y < r.height; ++y) {
        const auto* src = &img.data[((r.y + y) * img.width + r.x) * img.channels];
        std::copy_n(src, r.width * img.channels, &out.data[y * r.width * img.channels]);
    }
    return out;
}

inline void paste(Image& dst, const Image& src, std::size_t x0, std::size_t y0) {
    if (src.channels != dst.channels || x0 + src.width > dst.width || y0 + src.height > dst.height)
        throw ShapeError("paste: source does not fit");
    for (std::size_t y = 0; y < src.height; ++y)
        std::copy_n(&src.data[y * src.width * src.channels], src.width * src.channels,
                    &dst.data[((y0 + y) * dst.width + x0) * dst.channels]);
}

// Rec.601 luma.
inline std::vector<double> luma(const Image& img) {
    if (img.channels != 3 && img.channels != 1) throw ShapeError("luma: need 1 or 3 channels");
    std::vector<double> out(img.pixel_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float* p = &img.data[i * img.channels];
        out[i] = img.channels == 1 ? p[0] : 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
    return out;
}

struct BinaryMask {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> bits; // 0 or 1

    BinaryMask() = default;
    BinaryMask(std::size_t w, std::size_t h) : width(w), height(h), bits(w * h, 0) {}
    std::uint8_t& at(std::size_t x, std::size_t y) noexcept { return bits[y * width + x]; }
    std::uint8_t at(std::size_t x, std::size_t y) const noexcept { return bits[y * width + x]; }
};

namespace detail {

inline std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

struct NetpbmHeader {
    std::string magic;
    std::size_t width = 0, height = 0, maxval = 0;
    std::size_t data_offset = 0;
};

inline NetpbmHeader parse_netpbm_header(std::span<const std::uint8_t> bytes) {
    NetpbmHeader h;
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto token = [&] {
        skip_space();
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
            t.push_back(static_cast<char>(bytes[pos++]));
        if (t.empty()) throw FormatError("netpbm: truncated header");
        return t;
    };
    auto number = [&] {
        const std::string t = token();
        if (!std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw FormatError("netpbm: bad header field '" + t + "'");
        return static_cast<std::size_t>(std::stoull(t));
    };
    h.magic = token();
    h.width = number();
    h.height = number();
    h.maxval = number();
    if (pos >= bytes.size()) throw FormatError("netpbm: missing pixel data");
    ++pos; // single whitespace byte before raster
    h.data_offset = pos;
    if (h.maxval != 255) throw FormatError("netpbm: only maxval 255 is supported");
    return h;
}

} // namespace detail

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
    if (img.channels != 3) throw ShapeError("PPM needs 3 channels");
    std::ostringstream head;
    head << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    const std::string h = head.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    out.reserve(out.size() + img.data.size());
    for (float v : img.data) out.push_back(detail::to_byte(v));
    return out;
}

inline Image decode_ppm(std::span<const std::uint8_t> bytes) {
    const auto h = detail::parse_netpbm_header(bytes);
    if (h.magic != "P6") throw FormatError("expected binary PPM (P6)");
    const std::size_t n = h.width * h.height * 3;
    if (bytes.size() - h.data_offset < n) throw FormatError("PPM: truncated raster");
    Image img(h.width, h.height, 3);
    for (std::size_t i = 0; i < n; ++i) img.data[i] = bytes[h.data_offset + i] / 255.0f;
    return img;
}

inline std::vector<std::uint8_t> encode_pgm(const BinaryMask& m) {
    std::ostringstream head;
    head << "P5\n" << m.width << ' ' << m.height << "\n255\n";
    const std::string h = head.str();
    std::vector<std::uint8_t> out(h.begin(), h.end());
    for (auto b : m.bits) out.push_back(b ? 255 : 0);
    return out;
}

// Any nonzero sample counts as foreground.
inline BinaryMask decode_pgm(std::span<const std::uint8_t> bytes) {
    const auto h = detail::parse_netpbm_header(bytes);
    if (h.magic != "P5") throw FormatError("expected binary PGM (P5)");
    const std::size_t n = h.width * h.height;
    if (bytes.size() - h.data_offset < n) throw FormatError("PGM: truncated raster");
    BinaryMask m(h.width, h.height);
    for (std::size_t i = 0; i < n; ++i) m.bits[i] = bytes[h.data_offset + i] ? 1 : 0;
    return m;
}

inline Image load_ppm(const std::filesystem::path& p) { return decode_ppm(read_file(p)); }
inline void save_ppm(const std::filesystem::path& p, const Image& img) { write_file_atomic(p, encode_ppm(img)); }
inline BinaryMask load_pgm(const std::filesystem::path& p) { return decode_pgm(read_file(p)); }
inline void save_pgm(const std::filesystem::path& p, const BinaryMask& m) { write_file_atomic(p, encode_pgm(m)); }

} // namespace pedvit
