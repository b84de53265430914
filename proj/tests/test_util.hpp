#pragma once

// Shared oracles and helpers. These stay independent of the library code
// paths they check: plain nested loops, no cdk operator calls.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "cdk/rng.hpp"
#include "cdk/tensor.hpp"

namespace testutil {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

// Brute-force cross-correlation over every output position.
inline cdk::Tensor conv2d_oracle(const cdk::Tensor& input, const cdk::Tensor& weights,
                                 const cdk::Tensor& bias, std::int64_t sh, std::int64_t sw,
                                 std::int64_t ph, std::int64_t pw) {
    const std::int64_t N = input.extent(0), Cin = input.extent(1), H = input.extent(2),
                       W = input.extent(3);
    const std::int64_t Cout = weights.extent(0), KH = weights.extent(2), KW = weights.extent(3);
    const std::int64_t OH = (H + 2 * ph - KH) / sh + 1;
    const std::int64_t OW = (W + 2 * pw - KW) / sw + 1;
    cdk::Tensor out = cdk::Tensor::zeros({N, Cout, OH, OW});
    auto ov = out.mutable_values();
    const auto iv = input.values();
    const auto wv = weights.values();
    const auto bv = bias.values();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t co = 0; co < Cout; ++co)
            for (std::int64_t oy = 0; oy < OH; ++oy)
                for (std::int64_t ox = 0; ox < OW; ++ox) {
                    double acc = bv[static_cast<std::size_t>(co)];
                    for (std::int64_t ci = 0; ci < Cin; ++ci)
                        for (std::int64_t ky = 0; ky < KH; ++ky)
                            for (std::int64_t kx = 0; kx < KW; ++kx) {
                                const std::int64_t iy = oy * sh - ph + ky;
                                const std::int64_t ix = ox * sw - pw + kx;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += iv[static_cast<std::size_t>(((n * Cin + ci) * H + iy) * W + ix)] *
                                       wv[static_cast<std::size_t>(((co * Cin + ci) * KH + ky) * KW + kx)];
                            }
                    ov[static_cast<std::size_t>(((n * Cout + co) * OH + oy) * OW + ox)] = acc;
                }
    return out;
}

// Exhaustive per-window maximum.
inline cdk::Tensor maxpool2d_oracle(const cdk::Tensor& input, std::int64_t kh, std::int64_t kw,
                                    std::int64_t sh, std::int64_t sw, std::int64_t ph,
                                    std::int64_t pw) {
    const std::int64_t N = input.extent(0), C = input.extent(1), H = input.extent(2),
                       W = input.extent(3);
    const std::int64_t OH = (H + 2 * ph - kh) / sh + 1;
    const std::int64_t OW = (W + 2 * pw - kw) / sw + 1;
    cdk::Tensor out = cdk::Tensor::zeros({N, C, OH, OW});
    auto ov = out.mutable_values();
    const auto iv = input.values();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t oy = 0; oy < OH; ++oy)
                for (std::int64_t ox = 0; ox < OW; ++ox) {
                    double best = -1e300;
                    for (std::int64_t ky = 0; ky < kh; ++ky)
                        for (std::int64_t kx = 0; kx < kw; ++kx) {
                            const std::int64_t iy = oy * sh - ph + ky;
                            const std::int64_t ix = ox * sw - pw + kx;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            best = std::max(
                                best, iv[static_cast<std::size_t>(((n * C + c) * H + iy) * W + ix)]);
                        }
                    ov[static_cast<std::size_t>(((n * C + c) * OH + oy) * OW + ox)] = best;
                }
    return out;
}

// Central finite differences of a scalar function w.r.t. one tensor's values.
// Restores the tensor afterwards.
inline std::vector<double> finite_diff(cdk::Tensor& x, const std::function<double()>& f,
                                       double eps = 1e-5) {
    std::vector<double> grad(static_cast<std::size_t>(x.numel()));
    auto values = x.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + eps;
        const double plus = f();
        values[i] = saved - eps;
        const double minus = f();
        values[i] = saved;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    return grad;
}

inline cdk::Tensor random_tensor(cdk::Rng& rng, cdk::Shape shape, double lo = -1.0,
                                 double hi = 1.0) {
    cdk::Tensor t = cdk::Tensor::zeros(std::move(shape));
    for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
    return t;
}

} // namespace testutil
