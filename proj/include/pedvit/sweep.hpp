#pragma once

// Privacy sweep over corpus x scheme x window x adversary. Each cell exposes
// a single window (what one non-colluding server holds), reconstructs the
// full image from it and scores the reconstruction.

#include <pedvit/corpus.hpp>
#include <pedvit/detection.hpp>
#include <pedvit/partition.hpp>
#include <pedvit/privacy.hpp>

#include <json.hpp>

#include <future>
#include <optional>
#include <string>
#include <vector>

namespace pedvit {

struct WindowScore {
    std::size_t image = 0;
    std::size_t window = 0;
    double ssim = 0.0;
    double mae = 0.0;
};

struct PrivacyReport {
    PartitionScheme scheme;
    std::string adversary;
    std::vector<WindowScore> windows;
    std::vector<PixelRisk> per_image; // mean over that image's windows
    PixelRisk aggregate;              // mean over per_image
    std::optional<ObjectMetrics> objects;
    double exposure_ratio = 0.0; // max per-server share under a strict plan
};

struct SweepParams {
    SsimParams ssim;
    MatchParams match;
};

namespace detail {

inline std::vector<WindowScore> sweep_image(const Image& img, std::size_t image_index, const PartitionScheme& scheme,
                                            const Adversary& adv, const SsimParams& sp) {
    std::vector<WindowScore> out;
    const auto windows = partition_image(img, scheme);
    const std::size_t cw = windows.front().ref.rect.width * scheme.cols;
    const std::size_t chh = windows.front().ref.rect.height * scheme.rows;
    for (const auto& w : windows) {
        ExposedRegion region{cw, chh, w.ref.rect, w.pixels};
        Image recon = reconstruct(adv, region);
        if (recon.width != img.width || recon.height != img.height) recon = crop(recon, {0, 0, img.width, img.height});
        const auto risk = vpr_pixel(img, recon, sp);
        out.push_back({image_index, w.ref.index, risk.ssim, risk.mae});
    }
    return out;
}

} // namespace detail

inline std::vector<PrivacyReport> run_privacy_sweep(const std::vector<CorpusImage>& corpus,
                                                    const std::vector<PartitionScheme>& schemes,
                                                    const std::vector<Adversary>& adversaries,
                                                    const SweepParams& params = {}) {
    if (corpus.empty()) throw InputError("privacy sweep: empty corpus");
    std::vector<PrivacyReport> reports;
    for (const auto& scheme : schemes) {
        std::vector<std::string> names;
        for (std::size_t s = 0; s < scheme.count(); ++s) names.push_back("server-" + std::to_string(s));
        const auto plan = plan_assignment(scheme.count(), names, AssignmentPolicy::strict());
        const auto exposure = exposure_ratio(plan, scheme);
        for (const auto& adv : adversaries) {
            // One task per image; results collected back in image order.
            std::vector<std::future<std::vector<WindowScore>>> jobs;
            for (std::size_t i = 0; i < corpus.size(); ++i)
                jobs.push_back(std::async(std::launch::async, [&, i] {
                    return detail::sweep_image(corpus[i].image, i, scheme, adv, params.ssim);
                }));
            PrivacyReport rep;
            rep.scheme = scheme;
            rep.adversary = adv.name();
            rep.exposure_ratio = *std::max_element(exposure.begin(), exposure.end());
            for (auto& j : jobs) {
                auto scores = j.get();
                PixelRisk mean;
                for (const auto& s : scores) {
                    mean.ssim += s.ssim;
                    mean.mae += s.mae;
                }
                mean.ssim /= static_cast<double>(scores.size());
                mean.mae /= static_cast<double>(scores.size());
                rep.per_image.push_back(mean);
                rep.windows.insert(rep.windows.end(), scores.begin(), scores.end());
            }
            for (const auto& m : rep.per_image) {
                rep.aggregate.ssim += m.ssim;
                rep.aggregate.mae += m.mae;
            }
            rep.aggregate.ssim /= static_cast<double>(rep.per_image.size());
            rep.aggregate.mae /= static_cast<double>(rep.per_image.size());
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

inline nlohmann::json report_to_json(const std::vector<PrivacyReport>& reports, const std::vector<CorpusImage>& corpus,
                                     const SweepParams& params = {}) {
    using nlohmann::json;
    json doc;
    doc["parameters"] = {{"conf_min", params.match.conf_min},
                         {"iou_min", params.match.iou_min},
                         {"ssim_window", params.ssim.window},
                         {"ssim_sigma", params.ssim.sigma},
                         {"ssim_k1", params.ssim.k1},
                         {"ssim_k2", params.ssim.k2},
                         {"ssim_channel", "luma_rec601"},
                         {"aggregation", "mean over windows per image, then mean over images"}};
    json names = json::array();
    for (const auto& c : corpus) names.push_back(c.name);
    doc["corpus"] = names;
    json list = json::array();
    for (const auto& r : reports) {
        json windows = json::array();
        for (const auto& w : r.windows)
            windows.push_back({{"image", w.image}, {"window", w.window}, {"ssim", w.ssim}, {"mae", w.mae}});
        json per_image = json::array();
        for (const auto& p : r.per_image) per_image.push_back({{"ssim", p.ssim}, {"mae", p.mae}});
        json entry = {{"scheme", r.scheme.to_string()},
                      {"adversary", r.adversary},
                      {"exposure_ratio", r.exposure_ratio},
                      {"aggregate", {{"ssim", r.aggregate.ssim}, {"mae", r.aggregate.mae}}},
                      {"per_image", per_image},
                      {"windows", windows}};
        if (r.objects)
            entry["objects"] = {{"precision", r.objects->precision},
                                {"recall", r.objects->recall},
                                {"mean_iou", r.objects->mean_iou},
                                {"avg_matched", r.objects->avg_matched}};
        list.push_back(entry);
    }
    doc["reports"] = list;
    return doc;
}

} // namespace pedvit
