#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cdk/detect.hpp"
#include "cdk/loss.hpp"

namespace cdk {

/// One final detection in left/top/right/bottom pixel coordinates.
struct Detection {
    std::string image_id;
    int class_id = 0;
    std::string class_name;
    double score = 0.0;
    double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;

    Box box() const { return Box::from_ltrb(left, top, right, bottom); }
};

struct RecallPoint {
    std::int64_t n_box = 0;
    double recall = 0.0;
};

struct RecallCurve {
    std::vector<RecallPoint> points;
};

/// n highest-score predictions, descending; score ties keep the lower flat
/// anchor index first.
std::vector<Prediction> top_n(const std::vector<Prediction>& preds, std::int64_t n);

/// Greedy per-class suppression: keep the highest-score remaining detection,
/// drop same-class detections overlapping it with IOU > threshold.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

/// Recall of the top-n predictions per image, for each n in n_values
/// (ascending). Matching is greedy by descending score, class-aware,
/// one-to-one, at IOU >= threshold.
RecallCurve recall_sweep(const std::vector<std::vector<Prediction>>& per_image_preds,
                         const std::vector<GroundTruth>& per_image_gts,
                         std::span<const std::int64_t> n_values, double iou_threshold);

struct ApResult {
    std::map<int, double> per_class; // classes with ground truth only
    double mean = 0.0;               // macro mean over per_class
};

/// Area under the exact precision-recall step curve per class, macro-averaged.
ApResult average_precision(const std::vector<Detection>& dets,
                           const std::map<std::string, GroundTruth>& gts_by_image,
                           double iou_threshold);

} // namespace cdk
