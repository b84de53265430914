#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdk/tensor.hpp"

namespace cdk {

/// Per-parameter velocity buffers, allocated to match shapes on first use.
struct SgdState {
    std::vector<std::vector<double>> velocity;
};

/// v <- momentum * v + grad;  p <- p - lr * v.
/// Parameters with no materialized gradient are treated as zero-grad.
void sgd_momentum_step(std::span<Tensor> params, double lr, double momentum, SgdState& state);

/// lr0 * decay_factor^floor(step / decay_step)
double lr_schedule(std::int64_t step, double lr0, double decay_factor, std::int64_t decay_step);

} // namespace cdk
