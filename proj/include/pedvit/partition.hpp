#pragma once

// Image windowing and window -> server assignment under the non-collusion
// model: each server only ever sees the windows the plan gives it.

#include <pedvit/errors.hpp>
#include <pedvit/image.hpp>
#include <pedvit/model_config.hpp>

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pedvit {

struct PartitionScheme {
    std::size_t rows = 1; // m
    std::size_t cols = 1; // n

    std::size_t count() const noexcept { return rows * cols; }
    std::string to_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }
    friend bool operator==(const PartitionScheme&, const PartitionScheme&) = default;
};

inline PartitionScheme parse_scheme(std::string_view text) {
    const auto sep = text.find_first_of("xX");
    auto num = [&](std::string_view s) {
        std::size_t v = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size() || v == 0)
            throw InputError("bad partition scheme '" + std::string(text) + "'");
        return v;
    };
    if (sep == std::string_view::npos) throw InputError("bad partition scheme '" + std::string(text) + "'");
    return {num(text.substr(0, sep)), num(text.substr(sep + 1))};
}

inline std::vector<PartitionScheme> parse_scheme_list(std::string_view text) {
    std::vector<PartitionScheme> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(',', start), text.size());
        if (end > start) out.push_back(parse_scheme(text.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

struct WindowRef {
    std::size_t index = 0;
    Rect rect;         // in padded-canvas coordinates
    bool padded = false; // rect extends past the source image
    std::size_t source_width = 0;
    std::size_t source_height = 0;
};

struct PixelWindow {
    WindowRef ref;
    Image pixels;
};

// Window sides are rounded up to a multiple of `unit` pixels; the scheme may
// not have more rows/cols than the image has `granule`-pixel cells.
struct WindowGeometry {
    std::size_t granule = 1;
    std::size_t unit = 1;
};

inline WindowGeometry model_geometry(const ModelConfig& cfg) {
    return {cfg.patch_size, cfg.patch_size * cfg.window_r};
}

inline std::vector<PixelWindow> partition_image(const Image& image, const PartitionScheme& scheme,
                                                const WindowGeometry& geo = {}) {
    if (image.empty()) throw InputError("partition_image: empty image");
    if (scheme.rows == 0 || scheme.cols == 0) throw InputError("partition_image: empty scheme");
    const std::size_t cells_x = (image.width + geo.granule - 1) / geo.granule;
    const std::size_t cells_y = (image.height + geo.granule - 1) / geo.granule;
    if (scheme.cols > cells_x || scheme.rows > cells_y)
        throw InputError("partition_image: scheme " + scheme.to_string() + " larger than image (" +
                         std::to_string(cells_y) + "x" + std::to_string(cells_x) + " cells)");
    auto side = [&](std::size_t extent, std::size_t parts) {
        const std::size_t step = parts * geo.unit;
        return (extent + step - 1) / step * geo.unit;
    };
    const std::size_t ww = side(image.width, scheme.cols);
    const std::size_t wh = side(image.height, scheme.rows);

    std::vector<PixelWindow> out;
    out.reserve(scheme.count());
    for (std::size_t r = 0; r < scheme.rows; ++r)
        for (std::size_t c = 0; c < scheme.cols; ++c) {
            PixelWindow w;
            w.ref.index = r * scheme.cols + c;
            w.ref.rect = {c * ww, r * wh, ww, wh};
            w.ref.padded = (c + 1) * ww > image.width || (r + 1) * wh > image.height;
            w.ref.source_width = image.width;
            w.ref.source_height = image.height;
            w.pixels = Image(ww, wh, image.channels);
            for (std::size_t y = 0; y < wh; ++y) {
                const std::size_t sy = r * wh + y;
                if (sy >= image.height) break;
                for (std::size_t x = 0; x < ww; ++x) {
                    const std::size_t sx = c * ww + x;
                    if (sx >= image.width) break;
                    std::copy_n(image.pixel(sx, sy).data(), image.channels, w.pixels.pixel(x, y).data());
                }
            }
            out.push_back(std::move(w));
        }
    return out;
}

inline std::vector<PixelWindow> partition_image(const Image& image, const PartitionScheme& scheme,
                                                const ModelConfig& cfg) {
    return partition_image(image, scheme, model_geometry(cfg));
}

// Inverse of partition_image: checks the parts tile the padded canvas with
// no gap or overlap, then strips the padding.
inline Image reassemble(const std::vector<PixelWindow>& parts) {
    if (parts.empty()) throw AssemblyError("reassemble: no parts");
    const auto& first = parts.front().ref;
    std::size_t cw = 0, ch = 0;
    for (const auto& p : parts) {
        if (p.ref.source_width != first.source_width || p.ref.source_height != first.source_height ||
            p.pixels.channels != parts.front().pixels.channels)
            throw AssemblyError("reassemble: parts from different images");
        if (p.pixels.width != p.ref.rect.width || p.pixels.height != p.ref.rect.height)
            throw AssemblyError("reassemble: part pixels do not match its rect");
        cw = std::max(cw, p.ref.rect.x + p.ref.rect.width);
        ch = std::max(ch, p.ref.rect.y + p.ref.rect.height);
    }
    if (cw < first.source_width || ch < first.source_height)
        throw AssemblyError("reassemble: parts do not cover the source image");
    std::vector<std::uint8_t> covered(cw * ch, 0);
    Image canvas(cw, ch, parts.front().pixels.channels);
    for (const auto& p : parts) {
        const auto& r = p.ref.rect;
        for (std::size_t y = r.y; y < r.y + r.height; ++y)
            for (std::size_t x = r.x; x < r.x + r.width; ++x) {
                auto& cell = covered[y * cw + x];
                if (cell) throw AssemblyError("reassemble: overlapping parts");
                cell = 1;
            }
        paste(canvas, p.pixels, r.x, r.y);
    }
    if (std::find(covered.begin(), covered.end(), 0) != covered.end())
        throw AssemblyError("reassemble: gap in tiling");
    return crop(canvas, {0, 0, first.source_width, first.source_height});
}

struct AssignmentPolicy {
    enum class Kind { strict_one_per_server, round_robin } kind = Kind::strict_one_per_server;
    std::size_t max_per_server = 1;

    static AssignmentPolicy strict() { return {}; }
    static AssignmentPolicy round_robin(std::size_t max_per_server) { return {Kind::round_robin, max_per_server}; }

    std::string to_string() const {
        return kind == Kind::strict_one_per_server ? "strict" : "rr:" + std::to_string(max_per_server);
    }
};

inline AssignmentPolicy parse_policy(std::string_view text) {
    if (text == "strict") return AssignmentPolicy::strict();
    if (text.starts_with("rr:")) {
        std::size_t k = 0;
        const auto s = text.substr(3);
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
        if (ec == std::errc{} && p == s.data() + s.size() && k > 0) return AssignmentPolicy::round_robin(k);
    }
    throw InputError("bad assignment policy '" + std::string(text) + "' (expected strict or rr:K)");
}

struct AssignmentPlan {
    std::vector<std::string> servers;
    std::vector<std::size_t> window_to_server; // window ordinal -> index into servers
    AssignmentPolicy policy;

    std::vector<std::size_t> windows_of(std::size_t server) const {
        std::vector<std::size_t> out;
        for (std::size_t w = 0; w < window_to_server.size(); ++w)
            if (window_to_server[w] == server) out.push_back(w);
        return out;
    }
};

inline AssignmentPlan plan_assignment(std::size_t num_windows, const std::vector<std::string>& servers,
                                      const AssignmentPolicy& policy) {
    if (servers.empty()) throw PlanningError("plan_assignment: no servers");
    AssignmentPlan plan{servers, std::vector<std::size_t>(num_windows), policy};
    if (policy.kind == AssignmentPolicy::Kind::strict_one_per_server) {
        if (servers.size() < num_windows)
            throw PlanningError("strict assignment needs " + std::to_string(num_windows) + " servers, have " +
                                std::to_string(servers.size()));
        for (std::size_t i = 0; i < num_windows; ++i) plan.window_to_server[i] = i;
        return plan;
    }
    if (policy.max_per_server == 0) throw PlanningError("round_robin: max_per_server must be positive");
    const std::size_t worst = (num_windows + servers.size() - 1) / servers.size();
    if (worst > policy.max_per_server)
        throw PlanningError("round_robin would put " + std::to_string(worst) + " windows on one server (max " +
                            std::to_string(policy.max_per_server) + ")");
    for (std::size_t i = 0; i < num_windows; ++i) plan.window_to_server[i] = i % servers.size();
    return plan;
}

// All windows of a scheme have equal area, so each is 1/(m*n) of the
// padded canvas.
inline std::vector<double> exposure_ratio(const AssignmentPlan& plan, const PartitionScheme& scheme) {
    if (plan.window_to_server.size() != scheme.count())
        throw PlanningError("exposure_ratio: plan covers " + std::to_string(plan.window_to_server.size()) +
                            " windows, scheme has " + std::to_string(scheme.count()));
    std::vector<std::size_t> counts(plan.servers.size(), 0);
    for (auto s : plan.window_to_server) ++counts.at(s);
    std::vector<double> out(counts.size());
    for (std::size_t s = 0; s < counts.size(); ++s)
        out[s] = static_cast<double>(counts[s]) / static_cast<double>(scheme.count());
    return out;
}

// For each stage-1 attention window (row-major over the padded token grid),
// the partition window whose pixels it was embedded from. Partition window
// sides are multiples of patch*r, so no attention window straddles two.
inline std::vector<std::size_t> attention_window_owners(const PartitionScheme& scheme, const ModelConfig& cfg) {
    const Image probe(cfg.image_side, cfg.image_side, 1);
    const auto windows = partition_image(probe, scheme, cfg);
    const std::size_t ww = windows.front().ref.rect.width;
    const std::size_t wh = windows.front().ref.rect.height;
    const std::size_t span = cfg.patch_size * cfg.window_r;
    const std::size_t per_side = cfg.windows_per_side();
    std::vector<std::size_t> owner(cfg.num_windows());
    for (std::size_t i = 0; i < owner.size(); ++i) {
        const std::size_t px = (i % per_side) * span;
        const std::size_t py = (i / per_side) * span;
        owner[i] = (py / wh) * scheme.cols + px / ww;
    }
    return owner;
}

// Per-attention-window plan inherited from the partition plan.
inline AssignmentPlan derive_task_plan(const AssignmentPlan& partition_plan, const std::vector<std::size_t>& owners) {
    AssignmentPlan out{partition_plan.servers, {}, partition_plan.policy};
    out.window_to_server.reserve(owners.size());
    for (auto o : owners) out.window_to_server.push_back(partition_plan.window_to_server.at(o));
    return out;
}

} // namespace pedvit
