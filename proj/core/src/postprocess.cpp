#include "cdk/postprocess.hpp"

#include <algorithm>
#include <numeric>

#include "cdk/error.hpp"

namespace cdk {

std::vector<Prediction> top_n(const std::vector<Prediction>& preds, std::int64_t n) {
    if (n < 0) fail("E_VALUE", "top_n needs n >= 0");
    std::vector<const Prediction*> order;
    order.reserve(preds.size());
    for (const Prediction& p : preds) order.push_back(&p);
    std::sort(order.begin(), order.end(), [](const Prediction* a, const Prediction* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->flat_index < b->flat_index;
    });
    const std::size_t keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(n));
    std::vector<Prediction> out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back(*order[i]);
    return out;
}

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    if (!(iou_threshold > 0.0) || iou_threshold > 1.0)
        fail("E_VALUE", "nms threshold must be in (0, 1]");
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });

    std::vector<bool> suppressed(dets.size(), false);
    std::vector<Detection> kept;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const std::size_t i = order[oi];
        if (suppressed[i]) continue;
        kept.push_back(dets[i]);
        const Box box_i = dets[i].box();
        for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
            const std::size_t j = order[oj];
            if (suppressed[j] || dets[j].class_id != dets[i].class_id) continue;
            if (iou(box_i, dets[j].box()) > iou_threshold) suppressed[j] = true;
        }
    }
    return kept;
}

namespace {

// Count of gt boxes matched by the given predictions (greedy by descending
// score, class-aware, one gt at most once).
std::int64_t match_count(const std::vector<Prediction>& preds, const GroundTruth& gts,
                         double iou_threshold) {
    std::vector<bool> used(gts.size(), false);
    std::int64_t matched = 0;
    for (const Prediction& p : preds) {
        double best = 0.0;
        std::int64_t best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (used[g] || gts[g].class_id != p.class_id) continue;
            const double overlap = iou(p.box, gts[g].box);
            if (overlap >= iou_threshold && overlap > best) {
                best = overlap;
                best_gt = static_cast<std::int64_t>(g);
            }
        }
        if (best_gt >= 0) {
            used[static_cast<std::size_t>(best_gt)] = true;
            ++matched;
        }
    }
    return matched;
}

} // namespace

RecallCurve recall_sweep(const std::vector<std::vector<Prediction>>& per_image_preds,
                         const std::vector<GroundTruth>& per_image_gts,
                         std::span<const std::int64_t> n_values, double iou_threshold) {
    if (per_image_preds.size() != per_image_gts.size())
        fail("E_VALUE", "prediction and ground-truth image counts differ");
    std::int64_t total_gts = 0;
    for (const GroundTruth& gts : per_image_gts) total_gts += static_cast<std::int64_t>(gts.size());
    if (total_gts == 0) fail("E_VALUE", "no ground truth");
    for (std::size_t i = 1; i < n_values.size(); ++i)
        if (n_values[i] < n_values[i - 1]) fail("E_VALUE", "n values must be ascending");

    // Sort each image's predictions once; every n takes a prefix.
    std::vector<std::vector<Prediction>> sorted;
    sorted.reserve(per_image_preds.size());
    for (const auto& preds : per_image_preds)
        sorted.push_back(top_n(preds, static_cast<std::int64_t>(preds.size())));

    RecallCurve curve;
    for (std::int64_t n : n_values) {
        std::int64_t matched = 0;
        for (std::size_t img = 0; img < sorted.size(); ++img) {
            const auto& preds = sorted[img];
            const std::size_t keep =
                std::min<std::size_t>(preds.size(), static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
            std::vector<Prediction> prefix(preds.begin(), preds.begin() + static_cast<std::ptrdiff_t>(keep));
            matched += match_count(prefix, per_image_gts[img], iou_threshold);
        }
        curve.points.push_back(
            RecallPoint{n, static_cast<double>(matched) / static_cast<double>(total_gts)});
    }
    return curve;
}

ApResult average_precision(const std::vector<Detection>& dets,
                           const std::map<std::string, GroundTruth>& gts_by_image,
                           double iou_threshold) {
    std::map<int, std::int64_t> gt_count;
    for (const auto& [image_id, gts] : gts_by_image)
        for (const LabeledBox& gt : gts) ++gt_count[gt.class_id];

    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dets[a].score > dets[b].score;
    });

    // Greedy one-to-one matching in global score order.
    std::map<std::string, std::vector<bool>> used;
    for (const auto& [image_id, gts] : gts_by_image)
        used[image_id].assign(gts.size(), false);

    std::map<int, std::vector<bool>> tp_flags; // per class, in score order
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const Detection& det = dets[order[oi]];
        bool tp = false;
        auto it = gts_by_image.find(det.image_id);
        if (it != gts_by_image.end()) {
            const GroundTruth& gts = it->second;
            std::vector<bool>& flags = used[det.image_id];
            double best = 0.0;
            std::int64_t best_gt = -1;
            const Box dbox = det.box();
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (flags[g] || gts[g].class_id != det.class_id) continue;
                const double overlap = iou(dbox, gts[g].box);
                if (overlap >= iou_threshold && overlap > best) {
                    best = overlap;
                    best_gt = static_cast<std::int64_t>(g);
                }
            }
            if (best_gt >= 0) {
                flags[static_cast<std::size_t>(best_gt)] = true;
                tp = true;
            }
        }
        tp_flags[det.class_id].push_back(tp);
    }

    ApResult result;
    double sum = 0.0;
    std::int64_t classes = 0;
    for (const auto& [class_id, n_gt] : gt_count) {
        if (n_gt == 0) continue;
        double ap = 0.0;
        std::int64_t tp = 0, fp = 0;
        auto it = tp_flags.find(class_id);
        if (it != tp_flags.end()) {
            for (bool is_tp : it->second) {
                if (is_tp) {
                    ++tp;
                    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
                    ap += precision / static_cast<double>(n_gt);
                } else {
                    ++fp;
                }
            }
        }
        result.per_class[class_id] = ap;
        sum += ap;
        ++classes;
    }
    result.mean = classes > 0 ? sum / static_cast<double>(classes) : 0.0;
    return result;
}

} // namespace cdk
