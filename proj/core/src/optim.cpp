#include "cdk/optim.hpp"

#include <cmath>

#include "cdk/error.hpp"

namespace cdk {

void sgd_momentum_step(std::span<Tensor> params, double lr, double momentum, SgdState& state) {
    if (state.velocity.empty()) {
        state.velocity.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            state.velocity[i].assign(static_cast<std::size_t>(params[i].numel()), 0.0);
    }
    if (state.velocity.size() != params.size())
        fail("E_SHAPE", "optimizer state does not match parameter count");

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        std::vector<double>& v = state.velocity[i];
        if (v.size() != static_cast<std::size_t>(p.numel()))
            fail("E_SHAPE", "optimizer state shape mismatch for parameter " + std::to_string(i));
        auto values = p.mutable_values();
        auto g = p.grad();
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double grad_j = g.empty() ? 0.0 : g[j];
            v[j] = momentum * v[j] + grad_j;
            values[j] -= lr * v[j];
        }
    }
}

double lr_schedule(std::int64_t step, double lr0, double decay_factor, std::int64_t decay_step) {
    if (step < 0) fail("E_VALUE", "negative step in lr schedule");
    if (decay_step <= 0) fail("E_VALUE", "decay step must be positive");
    return lr0 * std::pow(decay_factor, static_cast<double>(step / decay_step));
}

} // namespace cdk
