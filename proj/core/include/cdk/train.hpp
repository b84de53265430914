#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "cdk/data.hpp"
#include "cdk/loss.hpp"
#include "cdk/model.hpp"
#include "cdk/network.hpp"

namespace cdk {

struct TrainConfig {
    std::int64_t batch_size = 20;
    std::int64_t max_steps = 1000;
    double lr0 = 0.01;
    double lr_decay_factor = 0.5;
    std::int64_t lr_decay_step = 10000;
    // Full-batch overfitting at toy scale oscillates to overflow with
    // momentum above ~0.25 under the default schedule; 0.1 holds a wide margin.
    double momentum = 0.1;
    bool horizontal_flip = false;
    std::uint64_t seed = 0;
};

struct StepLog {
    std::int64_t step = 0;
    double lr = 0.0;
    LossBreakdown parts; // batch mean
};

/// Runs assignment -> forward -> loss -> backward -> momentum step for
/// max_steps, mutating the store in place. Batches walk seeded epoch
/// permutations of the dataset. Writes `step,lr,bbox,conf_pos,conf_neg,
/// class,total` CSV rows to log_csv when given. Fails with E_DIVERGED on a
/// non-finite loss.
std::vector<StepLog> train(const ModelSpec& spec, WeightStore& store,
                           const std::vector<DatasetEntry>& dataset, const TrainConfig& config,
                           std::ostream* log_csv = nullptr);

/// Decodes one image with the model (no suppression or truncation).
std::vector<Prediction> predict(const ModelSpec& spec, const WeightStore& store,
                                const Tensor& image_chw);

} // namespace cdk
