#include "cdk/loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "cdk/error.hpp"
#include "cdk/tape.hpp"

namespace cdk {

bool AnchorAssignment::is_positive(std::int64_t flat) const {
    for (const AnchorTarget& t : positives)
        if (t.flat == flat) return true;
    return false;
}

double clamp_prob(double p) { return std::max(p, 1e-12); }

AnchorAssignment assign_anchors(const GroundTruth& gts, const AnchorGrid& grid) {
    const std::int64_t total = grid.anchor_count();
    if (total < 1) fail("E_VALUE", "anchor grid is empty");
    if (static_cast<std::int64_t>(gts.size()) > total)
        fail("E_VALUE", "more ground-truth boxes than anchors");

    AnchorAssignment assignment;
    assignment.total_anchors = total;
    std::vector<bool> claimed(static_cast<std::size_t>(total), false);
    const std::int64_t K = grid.anchors_per_cell();

    for (const LabeledBox& gt : gts) {
        double best_iou = -1.0;
        std::int64_t best_flat = -1;
        for (std::int64_t flat = 0; flat < total; ++flat) {
            if (claimed[static_cast<std::size_t>(flat)]) continue;
            const double overlap = iou(gt.box, grid.anchor_box(flat));
            if (overlap > best_iou) { // ties keep the smallest flat index
                best_iou = overlap;
                best_flat = flat;
            }
        }
        claimed[static_cast<std::size_t>(best_flat)] = true;

        AnchorTarget target;
        target.flat = best_flat;
        target.k = best_flat % K;
        target.i = (best_flat / K) % grid.grid_w;
        target.j = (best_flat / K) / grid.grid_w;
        target.delta = inverse_transform(gt.box, grid.anchor_box(best_flat));
        target.class_id = gt.class_id;
        target.gt_box = gt.box;
        assignment.positives.push_back(std::move(target));
    }
    return assignment;
}

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Everything the backward pass needs, captured by value.
struct LossSaved {
    std::int64_t plane = 0; // H*W
    std::int64_t block = 0; // 5+C
    std::int64_t n_obj = 0;
    std::int64_t n_neg = 0;
    std::vector<double> conf; // sigmoid per anchor, flat order
    struct Positive {
        std::int64_t j, i, k;
        RelativeCoords delta; // predicted
        RelativeCoords target;
        double gamma_target; // realized IOU, constant for the gradient
        int class_id;
        std::vector<double> probs;
    };
    std::vector<Positive> positives;
    std::vector<bool> positive_mask;
};

} // namespace

LossResult total_loss(const Tensor& raw, const AnchorAssignment& assignment,
                      const AnchorGrid& grid, const DetectorConfig& config,
                      const LossWeights& weights) {
    const std::int64_t K = config.anchors_per_cell;
    const std::int64_t C = config.class_count();
    const std::int64_t block = 5 + C;
    if (raw.rank() != 4 || raw.extent(0) != 1)
        fail("E_SHAPE", "loss expects a single-image head tensor, got " + shape_str(raw.shape()));
    if (raw.extent(1) != config.head_channels() || raw.extent(2) != grid.grid_h ||
        raw.extent(3) != grid.grid_w)
        fail("E_SHAPE", "head tensor does not match the detector/grid geometry");
    if (assignment.total_anchors != grid.anchor_count())
        fail("E_SHAPE", "assignment and grid disagree on the anchor count");
    if (weights.bbox < 0.0 || weights.conf_pos < 0.0 || weights.conf_neg < 0.0)
        fail("E_VALUE", "loss weights must be non-negative");

    const std::int64_t H = grid.grid_h, W = grid.grid_w;
    const std::int64_t plane = H * W;
    const double* v = raw.values().data();
    auto channel = [&](std::int64_t c, std::int64_t j, std::int64_t i) {
        return v[c * plane + j * W + i];
    };

    auto saved = std::make_shared<LossSaved>();
    saved->plane = plane;
    saved->block = block;
    saved->n_obj = assignment.object_count();
    saved->n_neg = assignment.total_anchors - saved->n_obj;
    saved->conf.resize(static_cast<std::size_t>(assignment.total_anchors));
    saved->positive_mask.assign(static_cast<std::size_t>(assignment.total_anchors), false);

    for (std::int64_t j = 0; j < H; ++j)
        for (std::int64_t i = 0; i < W; ++i)
            for (std::int64_t k = 0; k < K; ++k)
                saved->conf[static_cast<std::size_t>(grid.flat_index(i, j, k))] =
                    stable_sigmoid(channel(k * block + 4, j, i));

    LossBreakdown parts;
    const std::int64_t n_obj = saved->n_obj;

    for (const AnchorTarget& target : assignment.positives) {
        saved->positive_mask[static_cast<std::size_t>(target.flat)] = true;
        LossSaved::Positive pos;
        pos.j = target.j;
        pos.i = target.i;
        pos.k = target.k;
        pos.target = target.delta;
        pos.class_id = target.class_id;

        const std::int64_t base = target.k * block;
        pos.delta = RelativeCoords{channel(base + 0, target.j, target.i),
                                   channel(base + 1, target.j, target.i),
                                   channel(base + 2, target.j, target.i),
                                   channel(base + 3, target.j, target.i)};

        const Box predicted =
            transform(grid.anchor_box(target.i, target.j, target.k), pos.delta);
        pos.gamma_target = iou(predicted, target.gt_box);

        double mx = channel(base + 5, target.j, target.i);
        for (std::int64_t c = 1; c < C; ++c)
            mx = std::max(mx, channel(base + 5 + c, target.j, target.i));
        double denom = 0.0;
        pos.probs.resize(static_cast<std::size_t>(C));
        for (std::int64_t c = 0; c < C; ++c) {
            pos.probs[static_cast<std::size_t>(c)] =
                std::exp(channel(base + 5 + c, target.j, target.i) - mx);
            denom += pos.probs[static_cast<std::size_t>(c)];
        }
        for (double& p : pos.probs) p /= denom;

        const RelativeCoords& d = pos.delta;
        const RelativeCoords& t = target.delta;
        parts.bbox += (d.dx - t.dx) * (d.dx - t.dx) + (d.dy - t.dy) * (d.dy - t.dy) +
                      (d.dw - t.dw) * (d.dw - t.dw) + (d.dh - t.dh) * (d.dh - t.dh);
        const double gamma = saved->conf[static_cast<std::size_t>(target.flat)];
        parts.conf_pos += (gamma - pos.gamma_target) * (gamma - pos.gamma_target);
        parts.class_term -=
            std::log(clamp_prob(pos.probs[static_cast<std::size_t>(pos.class_id)]));

        saved->positives.push_back(std::move(pos));
    }

    double neg_sq = 0.0;
    for (std::int64_t flat = 0; flat < assignment.total_anchors; ++flat)
        if (!saved->positive_mask[static_cast<std::size_t>(flat)])
            neg_sq += saved->conf[static_cast<std::size_t>(flat)] *
                      saved->conf[static_cast<std::size_t>(flat)];

    if (n_obj > 0) {
        parts.bbox *= weights.bbox / static_cast<double>(n_obj);
        parts.conf_pos *= weights.conf_pos / static_cast<double>(n_obj);
        parts.class_term /= static_cast<double>(n_obj);
    } else {
        parts.bbox = parts.conf_pos = parts.class_term = 0.0;
    }
    parts.conf_neg = saved->n_neg > 0
                         ? weights.conf_neg * neg_sq / static_cast<double>(saved->n_neg)
                         : 0.0;
    parts.total = parts.bbox + parts.conf_pos + parts.conf_neg + parts.class_term;

    Tensor loss = Tensor::from_values({1}, {parts.total});
    const bool differentiable = raw.requires_grad();
    loss.set_requires_grad(differentiable);

    Tape* tape = Tape::active();
    if (tape && differentiable) {
        Tensor raw_in = raw;
        Tensor out = loss;
        const std::int64_t grid_w = W;
        LossWeights lw = weights;
        tape->record("total_loss", out, [raw_in, out, saved, lw, K, C, grid_w]() mutable {
            if (!out.has_grad() || !raw_in.requires_grad()) return;
            const double g = out.grad()[0];
            double* dx = raw_in.mutable_grad().data();
            const std::int64_t plane = saved->plane;
            const std::int64_t block = saved->block;
            auto slot = [&](std::int64_t c, std::int64_t j, std::int64_t i) -> double& {
                return dx[c * plane + j * grid_w + i];
            };

            // Negative-anchor confidence penalty.
            const double neg_scale =
                saved->n_neg > 0 ? 2.0 * lw.conf_neg / static_cast<double>(saved->n_neg) : 0.0;
            std::int64_t flat = 0;
            for (std::int64_t cell = 0; cell < static_cast<std::int64_t>(saved->conf.size()) / K;
                 ++cell) {
                const std::int64_t j = cell / grid_w;
                const std::int64_t i = cell % grid_w;
                for (std::int64_t k = 0; k < K; ++k, ++flat) {
                    if (saved->positive_mask[static_cast<std::size_t>(flat)]) continue;
                    const double gamma = saved->conf[static_cast<std::size_t>(flat)];
                    slot(k * block + 4, j, i) +=
                        g * neg_scale * gamma * gamma * (1.0 - gamma);
                }
            }

            if (saved->n_obj == 0) return;
            const double inv_n = 1.0 / static_cast<double>(saved->n_obj);
            for (const LossSaved::Positive& pos : saved->positives) {
                const std::int64_t base = pos.k * block;
                // Box regression.
                slot(base + 0, pos.j, pos.i) +=
                    g * 2.0 * lw.bbox * inv_n * (pos.delta.dx - pos.target.dx);
                slot(base + 1, pos.j, pos.i) +=
                    g * 2.0 * lw.bbox * inv_n * (pos.delta.dy - pos.target.dy);
                slot(base + 2, pos.j, pos.i) +=
                    g * 2.0 * lw.bbox * inv_n * (pos.delta.dw - pos.target.dw);
                slot(base + 3, pos.j, pos.i) +=
                    g * 2.0 * lw.bbox * inv_n * (pos.delta.dh - pos.target.dh);
                // Confidence regression toward the (frozen) realized IOU.
                const std::int64_t flat_idx = (pos.j * grid_w + pos.i) * K + pos.k;
                const double gamma = saved->conf[static_cast<std::size_t>(flat_idx)];
                slot(base + 4, pos.j, pos.i) += g * 2.0 * lw.conf_pos * inv_n *
                                                (gamma - pos.gamma_target) * gamma *
                                                (1.0 - gamma);
                // Cross-entropy through the softmax; zero when clamped.
                const double p_label =
                    pos.probs[static_cast<std::size_t>(pos.class_id)];
                if (p_label > 1e-12) {
                    for (std::int64_t c = 0; c < C; ++c) {
                        const double onehot = (c == pos.class_id) ? 1.0 : 0.0;
                        slot(base + 5 + c, pos.j, pos.i) +=
                            g * inv_n * (pos.probs[static_cast<std::size_t>(c)] - onehot);
                    }
                }
            }
        });
    }

    return LossResult{std::move(loss), parts};
}

} // namespace cdk
