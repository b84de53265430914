#pragma once

#include <cstdint>

#include "cdk/tensor.hpp"

namespace cdk {

struct Stride {
    std::int64_t h = 1;
    std::int64_t w = 1;
};

struct Padding {
    std::int64_t h = 0;
    std::int64_t w = 0;
};

struct Window {
    std::int64_t h = 1;
    std::int64_t w = 1;
};

/// floor((in + 2*pad - k) / stride) + 1; fails when the result is < 1.
std::int64_t conv_output_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                std::int64_t pad);

/// Cross-correlation of an NCHW input with [C_out, C_in, K_h, K_w] weights
/// plus per-channel bias. Differentiable w.r.t. input, weights and bias.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, Stride stride,
              Padding padding);

/// Per-window maximum; gradient routes to the first maximal element in
/// row-major window scan order. Padded positions never participate.
Tensor maxpool2d(const Tensor& input, Window window, Stride stride, Padding padding);

Tensor relu(const Tensor& input);

/// Numerically stable logistic; saturates to exactly 0/1 for large |x|.
Tensor sigmoid(const Tensor& input);

/// Fiber-wise softmax along `axis`, computed with max subtraction.
Tensor softmax(const Tensor& input, int axis);

/// Concatenates two NCHW tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Small glue ops used by loss reductions and tests.
Tensor sum(const Tensor& input);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& input, double factor);

} // namespace cdk
