#include "cdk/detect.hpp"

#include <algorithm>
#include <cmath>

#include "cdk/error.hpp"

namespace cdk {

Box Box::from_ltrb(double left, double top, double right, double bottom) {
    if (!(right > left) || !(bottom > top))
        fail("E_VALUE", "degenerate box (left/top/right/bottom = " + std::to_string(left) + "/" +
                            std::to_string(top) + "/" + std::to_string(right) + "/" +
                            std::to_string(bottom) + ")");
    return Box{0.5 * (left + right), 0.5 * (top + bottom), right - left, bottom - top};
}

void DetectorConfig::validate() const {
    if (anchors_per_cell < 1) fail("E_VALUE", "detector needs at least one anchor per cell");
    if (class_names.empty()) fail("E_VALUE", "detector needs at least one class");
    if (static_cast<std::int64_t>(anchor_shapes.size()) != anchors_per_cell)
        fail("E_VALUE", "anchor shape count " + std::to_string(anchor_shapes.size()) +
                            " does not match k=" + std::to_string(anchors_per_cell));
    for (const auto& [w, h] : anchor_shapes)
        if (!(w > 0.0) || !(h > 0.0)) fail("E_VALUE", "anchor shapes must have positive extents");
}

Box AnchorGrid::anchor_box(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return Box{centers_x[static_cast<std::size_t>(i)], centers_y[static_cast<std::size_t>(j)],
               shapes[static_cast<std::size_t>(k)].first,
               shapes[static_cast<std::size_t>(k)].second};
}

Box AnchorGrid::anchor_box(std::int64_t flat) const {
    const std::int64_t k = flat % anchors_per_cell();
    const std::int64_t cell = flat / anchors_per_cell();
    return anchor_box(cell % grid_w, cell / grid_w, k);
}

AnchorGrid make_anchor_grid(const DetectorConfig& config, std::int64_t grid_w, std::int64_t grid_h,
                            double image_w, double image_h) {
    config.validate();
    if (grid_w < 1 || grid_h < 1) fail("E_VALUE", "anchor grid extents must be >= 1");
    if (!(image_w > 0.0) || !(image_h > 0.0)) fail("E_VALUE", "image extents must be positive");

    AnchorGrid grid;
    grid.grid_w = grid_w;
    grid.grid_h = grid_h;
    grid.image_w = image_w;
    grid.image_h = image_h;
    grid.shapes = config.anchor_shapes;
    grid.centers_x.resize(static_cast<std::size_t>(grid_w));
    grid.centers_y.resize(static_cast<std::size_t>(grid_h));
    const double step_x = image_w / static_cast<double>(grid_w);
    const double step_y = image_h / static_cast<double>(grid_h);
    for (std::int64_t i = 0; i < grid_w; ++i)
        grid.centers_x[static_cast<std::size_t>(i)] = (static_cast<double>(i) + 0.5) * step_x;
    for (std::int64_t j = 0; j < grid_h; ++j)
        grid.centers_y[static_cast<std::size_t>(j)] = (static_cast<double>(j) + 0.5) * step_y;
    return grid;
}

Box transform(const Box& anchor, const RelativeCoords& d) {
    return Box{anchor.x + anchor.w * d.dx, anchor.y + anchor.h * d.dy,
               anchor.w * std::exp(d.dw), anchor.h * std::exp(d.dh)};
}

RelativeCoords inverse_transform(const Box& gt, const Box& anchor) {
    if (!(gt.w > 0.0) || !(gt.h > 0.0))
        fail("E_VALUE", "ground-truth box must have positive extents");
    return RelativeCoords{(gt.x - anchor.x) / anchor.w, (gt.y - anchor.y) / anchor.h,
                          std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    if (iw <= 0.0) return 0.0;
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

std::vector<Prediction> decode(const Tensor& raw, const AnchorGrid& grid,
                               const DetectorConfig& config) {
    const std::int64_t K = config.anchors_per_cell;
    const std::int64_t C = config.class_count();
    const std::int64_t block = 5 + C;
    if (raw.rank() != 4 || raw.extent(0) != 1)
        fail("E_SHAPE", "decode expects a single-image head tensor, got " + shape_str(raw.shape()));
    if (raw.extent(1) != config.head_channels())
        fail("E_SHAPE", "head channel extent " + std::to_string(raw.extent(1)) +
                            " does not match K*(5+C) = " + std::to_string(config.head_channels()));
    if (raw.extent(2) != grid.grid_h || raw.extent(3) != grid.grid_w)
        fail("E_SHAPE", "head spatial extents do not match the anchor grid");

    const std::int64_t H = grid.grid_h, W = grid.grid_w;
    const std::int64_t plane = H * W;
    const double* v = raw.values().data();
    auto channel = [&](std::int64_t c, std::int64_t j, std::int64_t i) {
        return v[c * plane + j * W + i];
    };

    std::vector<Prediction> preds;
    preds.reserve(static_cast<std::size_t>(grid.anchor_count()));
    std::vector<double> logits(static_cast<std::size_t>(C));
    for (std::int64_t j = 0; j < H; ++j) {
        for (std::int64_t i = 0; i < W; ++i) {
            for (std::int64_t k = 0; k < K; ++k) {
                const std::int64_t base = k * block;
                Prediction p;
                p.i = i;
                p.j = j;
                p.k = k;
                p.flat_index = grid.flat_index(i, j, k);

                const RelativeCoords d{channel(base + 0, j, i), channel(base + 1, j, i),
                                       channel(base + 2, j, i), channel(base + 3, j, i)};
                p.box = transform(grid.anchor_box(i, j, k), d);

                const double conf_logit = channel(base + 4, j, i);
                p.confidence = conf_logit >= 0.0
                                   ? 1.0 / (1.0 + std::exp(-conf_logit))
                                   : std::exp(conf_logit) / (1.0 + std::exp(conf_logit));

                double mx = channel(base + 5, j, i);
                for (std::int64_t c = 1; c < C; ++c)
                    mx = std::max(mx, channel(base + 5 + c, j, i));
                double denom = 0.0;
                for (std::int64_t c = 0; c < C; ++c) {
                    logits[static_cast<std::size_t>(c)] =
                        std::exp(channel(base + 5 + c, j, i) - mx);
                    denom += logits[static_cast<std::size_t>(c)];
                }
                p.class_probs.resize(static_cast<std::size_t>(C));
                p.class_id = 0;
                for (std::int64_t c = 0; c < C; ++c) {
                    p.class_probs[static_cast<std::size_t>(c)] =
                        logits[static_cast<std::size_t>(c)] / denom;
                    if (p.class_probs[static_cast<std::size_t>(c)] >
                        p.class_probs[static_cast<std::size_t>(p.class_id)])
                        p.class_id = static_cast<int>(c);
                }
                p.score = p.class_probs[static_cast<std::size_t>(p.class_id)] * p.confidence;
                preds.push_back(std::move(p));
            }
        }
    }
    return preds;
}

} // namespace cdk
