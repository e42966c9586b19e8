#pragma once

// Object-level privacy risk: score detector output on a reconstruction
// against ground truth on the original.

#include <pedvit/errors.hpp>
#include <pedvit/image.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace pedvit {

struct BBox {
    double x = 0, y = 0, w = 0, h = 0;
    double area() const noexcept { return w * h; }
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Detection {
    int class_id = 0;
    double confidence = 1.0;
    BBox bbox;
    friend bool operator==(const Detection&, const Detection&) = default;
};

using DetectionSet = std::vector<Detection>;

inline double iou(const BBox& a, const BBox& b) {
    const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
    const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

inline void validate_detection(const Detection& d) {
    const auto& b = d.bbox;
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.w) || !std::isfinite(b.h) || b.w < 0 ||
        b.h < 0)
        throw InputError("malformed bbox");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) throw InputError("confidence outside [0,1]");
    if (d.class_id < 0) throw InputError("negative class id");
}

struct MatchParams {
    double conf_min = 0.75;
    double iou_min = 0.5;
};

struct MatchResult {
    std::size_t matches = 0;
    std::size_t kept_predictions = 0;
    std::size_t ground_truth = 0;
    double iou_sum = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs; // (pred index, gt index)

    double precision() const noexcept {
        return kept_predictions ? static_cast<double>(matches) / static_cast<double>(kept_predictions) : 0.0;
    }
    double recall() const noexcept {
        if (ground_truth == 0) return kept_predictions == 0 ? 1.0 : 0.0;
        return static_cast<double>(matches) / static_cast<double>(ground_truth);
    }
    double mean_iou() const noexcept { return matches ? iou_sum / static_cast<double>(matches) : 0.0; }
};

// Greedy matching in descending confidence: each surviving prediction takes
// the unmatched same-class ground-truth box it overlaps most, if that IoU
// reaches iou_min.
inline MatchResult match_detections(const DetectionSet& gt, const DetectionSet& pred, const MatchParams& p = {}) {
    for (const auto& d : gt) validate_detection(d);
    for (const auto& d : pred) validate_detection(d);
    MatchResult r;
    r.ground_truth = gt.size();
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i].confidence >= p.conf_min) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pred[a].confidence > pred[b].confidence; });
    r.kept_predictions = order.size();
    std::vector<bool> taken(gt.size(), false);
    for (std::size_t pi : order) {
        double best = -1.0;
        std::size_t best_gt = gt.size();
        for (std::size_t g = 0; g < gt.size(); ++g) {
            if (taken[g] || gt[g].class_id != pred[pi].class_id) continue;
            const double v = iou(pred[pi].bbox, gt[g].bbox);
            if (v > best) {
                best = v;
                best_gt = g;
            }
        }
        if (best_gt < gt.size() && best >= p.iou_min) {
            taken[best_gt] = true;
            ++r.matches;
            r.iou_sum += best;
            r.pairs.emplace_back(pi, best_gt);
        }
    }
    return r;
}

struct ObjectMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double mean_iou = 0.0;
    double avg_matched = 0.0;
    std::size_t images = 0;
};

// Pools counts over all images; avg_matched is matches per image.
inline ObjectMetrics score_detections(const std::vector<DetectionSet>& gt, const std::vector<DetectionSet>& pred,
                                      const MatchParams& p = {}) {
    if (gt.size() != pred.size()) throw InputError("score_detections: ground truth / prediction count mismatch");
    MatchResult total;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto r = match_detections(gt[i], pred[i], p);
        total.matches += r.matches;
        total.kept_predictions += r.kept_predictions;
        total.ground_truth += r.ground_truth;
        total.iou_sum += r.iou_sum;
    }
    ObjectMetrics m;
    m.images = gt.size();
    m.precision = total.precision();
    m.recall = total.recall();
    m.mean_iou = total.mean_iou();
    m.avg_matched = gt.empty() ? 0.0 : static_cast<double>(total.matches) / static_cast<double>(gt.size());
    return m;
}

inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
    if (a.width != b.width || a.height != b.height) throw ShapeError("mask_iou: mask dimensions differ");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        const bool x = a.bits[i] != 0, y = b.bits[i] != 0;
        inter += (x && y);
        uni += (x || y);
    }
    return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

inline double mask_miou(const std::vector<BinaryMask>& gt, const std::vector<BinaryMask>& pred) {
    if (gt.size() != pred.size()) throw ShapeError("mask_miou: list lengths differ");
    if (gt.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) sum += mask_iou(gt[i], pred[i]);
    return sum / static_cast<double>(gt.size());
}

inline void to_json(nlohmann::json& j, const Detection& d) {
    j = {{"class_id", d.class_id}, {"confidence", d.confidence}, {"bbox", {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}}};
}

inline void from_json(const nlohmann::json& j, Detection& d) {
    try {
        d.class_id = j.at("class_id").get<int>();
        d.confidence = j.value("confidence", 1.0);
        const auto& b = j.at("bbox");
        if (!b.is_array() || b.size() != 4) throw InputError("bbox must be [x,y,w,h]");
        d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("detection: ") + e.what());
    }
    validate_detection(d);
}

inline DetectionSet parse_detections(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("detections: ") + e.what());
    }
    if (!j.is_array()) throw InputError("detections: expected a JSON list");
    return j.get<DetectionSet>();
}

} // namespace pedvit
