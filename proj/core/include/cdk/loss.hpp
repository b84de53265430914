#pragma once

#include <cstdint>
#include <vector>

#include "cdk/detect.hpp"
#include "cdk/tensor.hpp"

namespace cdk {

struct LabeledBox {
    Box box;
    int class_id = 0;
};

/// Per-image annotation set.
using GroundTruth = std::vector<LabeledBox>;

struct LossWeights {
    double bbox = 5.0;
    double conf_pos = 75.0;
    double conf_neg = 100.0;
};

/// One ground-truth box claimed by one anchor.
struct AnchorTarget {
    std::int64_t flat = 0;
    std::int64_t i = 0, j = 0, k = 0;
    RelativeCoords delta; // regression target, inverse transform of the gt
    int class_id = 0;
    Box gt_box;
};

struct AnchorAssignment {
    std::int64_t total_anchors = 0;
    std::vector<AnchorTarget> positives; // one per ground-truth box, in gt order

    std::int64_t object_count() const { return static_cast<std::int64_t>(positives.size()); }
    bool is_positive(std::int64_t flat) const;
};

struct LossBreakdown {
    double bbox = 0.0;
    double conf_pos = 0.0;
    double conf_neg = 0.0;
    double class_term = 0.0;
    double total = 0.0;
};

struct LossResult {
    Tensor loss; // differentiable scalar on the active tape
    LossBreakdown parts;
};

/// Each ground truth claims its highest-IOU anchor; conflicts resolve greedily
/// in gt order, the loser taking its best unclaimed anchor. IOU ties break
/// toward the smallest flat anchor index.
AnchorAssignment assign_anchors(const GroundTruth& gts, const AnchorGrid& grid);

/// Multi-task detection loss over one image's raw head output:
/// squared-error box regression, squared-error confidence regression toward
/// the realized IOU (a constant w.r.t. the gradient), squared confidence
/// penalty on unassigned anchors, and cross-entropy classification.
LossResult total_loss(const Tensor& raw, const AnchorAssignment& assignment,
                      const AnchorGrid& grid, const DetectorConfig& config,
                      const LossWeights& weights);

/// Floor applied to probabilities before log().
double clamp_prob(double p);

} // namespace cdk
