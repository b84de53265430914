#include "cdk/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "cdk/error.hpp"
#include "cdk/ops.hpp"
#include "cdk/optim.hpp"
#include "cdk/tape.hpp"

namespace cdk {

namespace {

Tensor as_batch(const Tensor& chw) {
    if (chw.rank() == 4) return chw;
    if (chw.rank() != 3) fail("E_SHAPE", "expected a CHW image, got " + shape_str(chw.shape()));
    std::vector<double> copy(chw.values().begin(), chw.values().end());
    return Tensor::from_values({1, chw.extent(0), chw.extent(1), chw.extent(2)}, std::move(copy));
}

// Static head grid extents for a given input resolution.
std::pair<std::int64_t, std::int64_t> head_grid(const ModelSpec& spec, std::int64_t in_h,
                                                std::int64_t in_w) {
    std::int64_t h = in_h, w = in_w;
    for (const LayerSpec& layer : spec.layers) {
        if (layer.kind == LayerKind::fire) continue;
        h = conv_output_extent(h, layer.kernel.h, layer.stride.h, layer.padding.h);
        w = conv_output_extent(w, layer.kernel.w, layer.stride.w, layer.padding.w);
    }
    return {w, h};
}

} // namespace

std::vector<StepLog> train(const ModelSpec& spec, WeightStore& store,
                           const std::vector<DatasetEntry>& dataset, const TrainConfig& config,
                           std::ostream* log_csv) {
    if (config.batch_size < 1 || config.max_steps < 1)
        fail("E_VALUE", "batch size and step count must be positive");
    if (dataset.empty()) fail("E_EMPTY_DATASET", "training needs at least one image");
    if (!spec.has_convdet()) fail("E_STATE", "model has no detection head to train");

    const std::int64_t img_h = dataset.front().image.extent(1);
    const std::int64_t img_w = dataset.front().image.extent(2);
    for (const DatasetEntry& e : dataset)
        if (e.image.extent(1) != img_h || e.image.extent(2) != img_w)
            fail("E_SHAPE", "dataset images must share one resolution");

    const auto [grid_w, grid_h] = head_grid(spec, img_h, img_w);
    const AnchorGrid grid = make_anchor_grid(spec.detector, grid_w, grid_h,
                                             static_cast<double>(img_w),
                                             static_cast<double>(img_h));

    std::vector<Tensor> params = store.parameters();
    SgdState sgd_state;
    Rng rng(config.seed);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size(); // forces an initial shuffle

    if (log_csv) *log_csv << "step,lr,bbox,conf_pos,conf_neg,class,total\n";

    std::vector<StepLog> logs;
    logs.reserve(static_cast<std::size_t>(config.max_steps));
    const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

    for (std::int64_t step = 0; step < config.max_steps; ++step) {
        const double lr =
            lr_schedule(step, config.lr0, config.lr_decay_factor, config.lr_decay_step);
        store.zero_grads();

        LossBreakdown mean;
        for (std::int64_t b = 0; b < config.batch_size; ++b) {
            if (cursor >= order.size()) {
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1],
                              order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
                cursor = 0;
            }
            const DatasetEntry& entry = dataset[order[cursor++]];

            Tensor image = entry.image;
            GroundTruth gts = entry.gts;
            if (config.horizontal_flip && rng.bernoulli(0.5)) {
                image = flip_horizontal(image);
                gts = flip_horizontal(gts, static_cast<double>(img_w));
            }

            const AnchorAssignment assignment = assign_anchors(gts, grid);
            Tape tape;
            Tape::Scope scope(tape);
            ForwardResult fwd = forward(spec, store, as_batch(image));
            LossResult loss = total_loss(fwd.head_raw, assignment, grid, spec.detector, spec.loss);
            if (!std::isfinite(loss.parts.total))
                fail("E_DIVERGED", "non-finite loss at step " + std::to_string(step));
            tape.backward(scale(loss.loss, inv_batch));

            mean.bbox += loss.parts.bbox * inv_batch;
            mean.conf_pos += loss.parts.conf_pos * inv_batch;
            mean.conf_neg += loss.parts.conf_neg * inv_batch;
            mean.class_term += loss.parts.class_term * inv_batch;
            mean.total += loss.parts.total * inv_batch;
        }

        sgd_momentum_step(params, lr, config.momentum, sgd_state);

        StepLog log{step, lr, mean};
        if (log_csv) {
            char row[256];
            std::snprintf(row, sizeof(row), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                          static_cast<long long>(step), lr, mean.bbox, mean.conf_pos,
                          mean.conf_neg, mean.class_term, mean.total);
            *log_csv << row;
        }
        logs.push_back(log);
    }
    return logs;
}

std::vector<Prediction> predict(const ModelSpec& spec, const WeightStore& store,
                                const Tensor& image_chw) {
    if (!spec.has_convdet()) fail("E_STATE", "model has no detection head");
    const Tensor batch = as_batch(image_chw);
    ForwardResult fwd = forward(spec, store, batch);
    const AnchorGrid grid = make_anchor_grid(
        spec.detector, fwd.head_raw.extent(3), fwd.head_raw.extent(2),
        static_cast<double>(batch.extent(3)), static_cast<double>(batch.extent(2)));
    return decode(fwd.head_raw, grid, spec.detector);
}

} // namespace cdk
