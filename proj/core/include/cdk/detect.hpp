#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdk/tensor.hpp"

namespace cdk {

/// Axis-aligned box in center format (pixels). Extents must stay positive.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    static Box from_ltrb(double left, double top, double right, double bottom);
    double left() const { return x - 0.5 * w; }
    double top() const { return y - 0.5 * h; }
    double right() const { return x + 0.5 * w; }
    double bottom() const { return y + 0.5 * h; }
    double area() const { return w * h; }
};

/// Dimensionless offsets turning an anchor into a predicted box.
struct RelativeCoords {
    double dx = 0.0;
    double dy = 0.0;
    double dw = 0.0;
    double dh = 0.0;
};

struct DetectorConfig {
    std::int64_t anchors_per_cell = 0; // K
    std::vector<std::string> class_names;
    std::vector<std::pair<double, double>> anchor_shapes; // (w, h) pixels, K entries

    std::int64_t class_count() const { return static_cast<std::int64_t>(class_names.size()); }
    /// K * (4 coords + 1 confidence + C classes)
    std::int64_t head_channels() const { return anchors_per_cell * (5 + class_count()); }
    void validate() const;
};

/// The grid_w x grid_h x K reference boxes: cell-center coordinates plus the
/// K shared shapes. i indexes columns (x), j rows (y), k the shape.
struct AnchorGrid {
    std::int64_t grid_w = 0;
    std::int64_t grid_h = 0;
    double image_w = 0.0;
    double image_h = 0.0;
    std::vector<double> centers_x; // grid_w entries
    std::vector<double> centers_y; // grid_h entries
    std::vector<std::pair<double, double>> shapes; // K entries

    std::int64_t anchors_per_cell() const { return static_cast<std::int64_t>(shapes.size()); }
    std::int64_t anchor_count() const { return grid_w * grid_h * anchors_per_cell(); }
    std::int64_t flat_index(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return (j * grid_w + i) * anchors_per_cell() + k;
    }
    Box anchor_box(std::int64_t i, std::int64_t j, std::int64_t k) const;
    Box anchor_box(std::int64_t flat) const;
};

AnchorGrid make_anchor_grid(const DetectorConfig& config, std::int64_t grid_w, std::int64_t grid_h,
                            double image_w, double image_h);

/// x = x̂ + ŵ·dx;  y = ŷ + ĥ·dy;  w = ŵ·e^dw;  h = ĥ·e^dh
Box transform(const Box& anchor, const RelativeCoords& d);

/// Exact inverse of transform; fails on non-positive ground-truth extents.
RelativeCoords inverse_transform(const Box& gt, const Box& anchor);

/// Intersection-over-union of two boxes, 0 when disjoint.
double iou(const Box& a, const Box& b);

struct Prediction {
    Box box;
    double confidence = 0.0;              // sigmoid of the confidence logit
    std::vector<double> class_probs;      // softmax over class logits
    int class_id = 0;                     // argmax class
    double score = 0.0;                   // max_c p_c * confidence
    std::int64_t i = 0, j = 0, k = 0;     // anchor coordinates
    std::int64_t flat_index = 0;
};

/// Splits the raw head tensor (1 x K*(5+C) x H x W) into per-anchor
/// predictions. Channel layout per anchor block: dx, dy, dw, dh,
/// confidence logit, then C class logits; anchor blocks are outermost.
std::vector<Prediction> decode(const Tensor& raw, const AnchorGrid& grid,
                               const DetectorConfig& config);

} // namespace cdk
