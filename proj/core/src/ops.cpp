#include "cdk/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "cdk/error.hpp"
#include "cdk/tape.hpp"

namespace cdk {

namespace {

// Dense row-major matrix products, all accumulating into C.

// C(MxN) += A(MxK) * B(KxN)
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K, const double* A, const double* B,
             double* C) {
    for (std::int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (std::int64_t k = 0; k < K; ++k) {
            const double av = a[k];
            const double* b = B + k * N;
            for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C(MxN) += A(MxK) * B(NxK)^T
void gemm_nt(std::int64_t M, std::int64_t N, std::int64_t K, const double* A, const double* B,
             double* C) {
    for (std::int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        for (std::int64_t j = 0; j < N; ++j) {
            const double* b = B + j * K;
            double acc = 0.0;
            for (std::int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

// C(MxN) += A(KxM)^T * B(KxN)
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K, const double* A, const double* B,
             double* C) {
    for (std::int64_t k = 0; k < K; ++k) {
        const double* a = A + k * M;
        const double* b = B + k * N;
        for (std::int64_t i = 0; i < M; ++i) {
            const double av = a[i];
            double* c = C + i * N;
            for (std::int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

struct ConvGeom {
    std::int64_t n, c_in, h, w;
    std::int64_t c_out, k_h, k_w;
    std::int64_t s_h, s_w, p_h, p_w;
    std::int64_t o_h, o_w;
    std::int64_t patch() const { return c_in * k_h * k_w; }
    std::int64_t positions() const { return o_h * o_w; }
};

// cols is (c_in*k_h*k_w) x (o_h*o_w) for one batch item.
void im2col(const double* src, const ConvGeom& g, double* cols) {
    const std::int64_t P = g.positions();
    for (std::int64_t c = 0; c < g.c_in; ++c) {
        const double* plane = src + c * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
            for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
                double* row = cols + ((c * g.k_h + ky) * g.k_w + kx) * P;
                for (std::int64_t oy = 0; oy < g.o_h; ++oy) {
                    const std::int64_t iy = oy * g.s_h - g.p_h + ky;
                    double* out = row + oy * g.o_w;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(out, out + g.o_w, 0.0);
                        continue;
                    }
                    const double* in = plane + iy * g.w;
                    for (std::int64_t ox = 0; ox < g.o_w; ++ox) {
                        const std::int64_t ix = ox * g.s_w - g.p_w + kx;
                        out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add of a cols gradient back onto the input plane.
void col2im_add(const double* cols, const ConvGeom& g, double* dst) {
    const std::int64_t P = g.positions();
    for (std::int64_t c = 0; c < g.c_in; ++c) {
        double* plane = dst + c * g.h * g.w;
        for (std::int64_t ky = 0; ky < g.k_h; ++ky) {
            for (std::int64_t kx = 0; kx < g.k_w; ++kx) {
                const double* row = cols + ((c * g.k_h + ky) * g.k_w + kx) * P;
                for (std::int64_t oy = 0; oy < g.o_h; ++oy) {
                    const std::int64_t iy = oy * g.s_h - g.p_h + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    double* in = plane + iy * g.w;
                    const double* src_row = row + oy * g.o_w;
                    for (std::int64_t ox = 0; ox < g.o_w; ++ox) {
                        const std::int64_t ix = ox * g.s_w - g.p_w + kx;
                        if (ix >= 0 && ix < g.w) in[ix] += src_row[ox];
                    }
                }
            }
        }
    }
}

bool any_requires_grad(const Tensor& a) { return a.requires_grad(); }

template <typename... Ts>
bool any_requires_grad(const Tensor& a, const Ts&... rest) {
    return a.requires_grad() || any_requires_grad(rest...);
}

void maybe_record(const char* op, bool differentiable, const Tensor& output,
                  std::function<void()> fn) {
    Tape* tape = Tape::active();
    if (tape && differentiable) tape->record(op, output, std::move(fn));
}

} // namespace

std::int64_t conv_output_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                std::int64_t pad) {
    if (k < 1 || stride < 1 || pad < 0 || in < 0)
        fail("E_SHAPE", "invalid window geometry (k=" + std::to_string(k) +
                            ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad) +
                            ")");
    const std::int64_t span = in + 2 * pad - k;
    if (span < 0)
        fail("E_SHAPE", "non-positive output extent for input " + std::to_string(in) +
                            " with k=" + std::to_string(k) + ", pad=" + std::to_string(pad));
    return span / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, Stride stride,
              Padding padding) {
    if (input.rank() != 4) fail("E_SHAPE", "conv2d input must be NCHW, got " + shape_str(input.shape()));
    if (weights.rank() != 4)
        fail("E_SHAPE", "conv2d weights must be [out,in,kh,kw], got " + shape_str(weights.shape()));
    if (bias.rank() != 1 || bias.extent(0) != weights.extent(0))
        fail("E_SHAPE", "conv2d bias must be [out_channels]");
    if (input.extent(1) != weights.extent(1))
        fail("E_SHAPE", "conv2d channel mismatch: input " + shape_str(input.shape()) +
                            " vs weights " + shape_str(weights.shape()));

    ConvGeom g{};
    g.n = input.extent(0);
    g.c_in = input.extent(1);
    g.h = input.extent(2);
    g.w = input.extent(3);
    g.c_out = weights.extent(0);
    g.k_h = weights.extent(2);
    g.k_w = weights.extent(3);
    g.s_h = stride.h;
    g.s_w = stride.w;
    g.p_h = padding.h;
    g.p_w = padding.w;
    g.o_h = conv_output_extent(g.h, g.k_h, g.s_h, g.p_h);
    g.o_w = conv_output_extent(g.w, g.k_w, g.s_w, g.p_w);

    Tensor out = Tensor::zeros({g.n, g.c_out, g.o_h, g.o_w});
    const std::int64_t P = g.positions();
    const std::int64_t patch = g.patch();
    std::vector<double> cols(static_cast<std::size_t>(patch * P));

    const double* in_data = input.values().data();
    const double* w_data = weights.values().data();
    const double* b_data = bias.values().data();
    double* out_data = out.mutable_values().data();
    for (std::int64_t n = 0; n < g.n; ++n) {
        im2col(in_data + n * g.c_in * g.h * g.w, g, cols.data());
        double* out_n = out_data + n * g.c_out * P;
        gemm_nn(g.c_out, P, patch, w_data, cols.data(), out_n);
        for (std::int64_t co = 0; co < g.c_out; ++co) {
            const double b = b_data[co];
            double* row = out_n + co * P;
            for (std::int64_t p = 0; p < P; ++p) row[p] += b;
        }
    }

    const bool differentiable = any_requires_grad(input, weights, bias);
    out.set_requires_grad(differentiable);
    maybe_record("conv2d", differentiable, out, [input = input, weights = weights, bias = bias, out = out, g]() mutable {
        if (!out.has_grad()) return;
        const bool need_dx = input.requires_grad();
        const bool need_dw = weights.requires_grad();
        const bool need_db = bias.requires_grad();
        if (!need_dx && !need_dw && !need_db) return;

        const std::int64_t P = g.positions();
        const std::int64_t patch = g.patch();
        const double* gout = out.grad().data();
        std::vector<double> cols;
        if (need_dw || need_dx) cols.resize(static_cast<std::size_t>(patch * P));
        std::vector<double> dcols;
        if (need_dx) dcols.resize(static_cast<std::size_t>(patch * P));

        double* dw = need_dw ? weights.mutable_grad().data() : nullptr;
        double* db = need_db ? bias.mutable_grad().data() : nullptr;
        double* dx = need_dx ? input.mutable_grad().data() : nullptr;
        const double* in_data = input.values().data();
        const double* w_data = weights.values().data();

        for (std::int64_t n = 0; n < g.n; ++n) {
            const double* gout_n = gout + n * g.c_out * P;
            if (need_dw || need_dx) im2col(in_data + n * g.c_in * g.h * g.w, g, cols.data());
            if (need_dw) gemm_nt(g.c_out, patch, P, gout_n, cols.data(), dw);
            if (need_db) {
                for (std::int64_t co = 0; co < g.c_out; ++co) {
                    const double* row = gout_n + co * P;
                    double acc = 0.0;
                    for (std::int64_t p = 0; p < P; ++p) acc += row[p];
                    db[co] += acc;
                }
            }
            if (need_dx) {
                std::fill(dcols.begin(), dcols.end(), 0.0);
                gemm_tn(patch, P, g.c_out, w_data, gout_n, dcols.data());
                col2im_add(dcols.data(), g, dx + n * g.c_in * g.h * g.w);
            }
        }
    });
    return out;
}

Tensor maxpool2d(const Tensor& input, Window window, Stride stride, Padding padding) {
    if (input.rank() != 4)
        fail("E_SHAPE", "maxpool2d input must be NCHW, got " + shape_str(input.shape()));
    const std::int64_t N = input.extent(0), C = input.extent(1), H = input.extent(2),
                       W = input.extent(3);
    const std::int64_t OH = conv_output_extent(H, window.h, stride.h, padding.h);
    const std::int64_t OW = conv_output_extent(W, window.w, stride.w, padding.w);

    Tensor out = Tensor::zeros({N, C, OH, OW});
    // Source index of each output element, for gradient routing.
    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(N * C * OH * OW));

    const double* in = input.values().data();
    double* dst = out.mutable_values().data();
    std::int64_t o = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        for (std::int64_t c = 0; c < C; ++c) {
            const double* plane = in + (n * C + c) * H * W;
            const std::int64_t plane_base = (n * C + c) * H * W;
            for (std::int64_t oy = 0; oy < OH; ++oy) {
                for (std::int64_t ox = 0; ox < OW; ++ox, ++o) {
                    double best = 0.0;
                    std::int64_t best_idx = -1;
                    for (std::int64_t ky = 0; ky < window.h; ++ky) {
                        const std::int64_t iy = oy * stride.h - padding.h + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (std::int64_t kx = 0; kx < window.w; ++kx) {
                            const std::int64_t ix = ox * stride.w - padding.w + kx;
                            if (ix < 0 || ix >= W) continue;
                            const double v = plane[iy * W + ix];
                            if (best_idx < 0 || v > best) {
                                best = v;
                                best_idx = plane_base + iy * W + ix;
                            }
                        }
                    }
                    if (best_idx < 0)
                        fail("E_SHAPE", "maxpool2d window contains no input elements");
                    dst[o] = best;
                    (*argmax)[static_cast<std::size_t>(o)] = best_idx;
                }
            }
        }
    }

    const bool differentiable = input.requires_grad();
    out.set_requires_grad(differentiable);
    maybe_record("maxpool2d", differentiable, out, [input = input, out = out, argmax]() mutable {
        if (!out.has_grad() || !input.requires_grad()) return;
        const double* g = out.grad().data();
        double* dx = input.mutable_grad().data();
        const std::int64_t n = out.numel();
        for (std::int64_t i = 0; i < n; ++i) dx[(*argmax)[static_cast<std::size_t>(i)]] += g[i];
    });
    return out;
}

Tensor relu(const Tensor& input) {
    Tensor out = Tensor::zeros(input.shape());
    const double* x = input.values().data();
    double* y = out.mutable_values().data();
    const std::int64_t n = input.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;

    const bool differentiable = input.requires_grad();
    out.set_requires_grad(differentiable);
    maybe_record("relu", differentiable, out, [input = input, out = out]() mutable {
        if (!out.has_grad() || !input.requires_grad()) return;
        const double* g = out.grad().data();
        const double* x = input.values().data();
        double* dx = input.mutable_grad().data();
        const std::int64_t n = input.numel();
        for (std::int64_t i = 0; i < n; ++i)
            if (x[i] > 0.0) dx[i] += g[i];
    });
    return out;
}

Tensor sigmoid(const Tensor& input) {
    Tensor out = Tensor::zeros(input.shape());
    const double* x = input.values().data();
    double* y = out.mutable_values().data();
    const std::int64_t n = input.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        if (x[i] >= 0.0) {
            y[i] = 1.0 / (1.0 + std::exp(-x[i]));
        } else {
            const double e = std::exp(x[i]);
            y[i] = e / (1.0 + e);
        }
    }

    const bool differentiable = input.requires_grad();
    out.set_requires_grad(differentiable);
    maybe_record("sigmoid", differentiable, out, [input = input, out = out]() mutable {
        if (!out.has_grad() || !input.requires_grad()) return;
        const double* g = out.grad().data();
        const double* y = out.values().data();
        double* dx = input.mutable_grad().data();
        const std::int64_t n = input.numel();
        for (std::int64_t i = 0; i < n; ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
    });
    return out;
}

Tensor softmax(const Tensor& input, int axis) {
    if (axis < 0 || axis >= input.rank())
        fail("E_SHAPE", "softmax axis " + std::to_string(axis) + " out of range for " +
                            shape_str(input.shape()));
    const Shape& s = input.shape();
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < input.rank(); ++i) inner *= s[static_cast<std::size_t>(i)];
    const std::int64_t fiber = s[static_cast<std::size_t>(axis)];

    Tensor out = Tensor::zeros(input.shape());
    const double* x = input.values().data();
    double* y = out.mutable_values().data();
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t in = 0; in < inner; ++in) {
            const std::int64_t base = o * fiber * inner + in;
            double mx = x[base];
            for (std::int64_t f = 1; f < fiber; ++f) mx = std::max(mx, x[base + f * inner]);
            double denom = 0.0;
            for (std::int64_t f = 0; f < fiber; ++f) {
                const double e = std::exp(x[base + f * inner] - mx);
                y[base + f * inner] = e;
                denom += e;
            }
            for (std::int64_t f = 0; f < fiber; ++f) y[base + f * inner] /= denom;
        }
    }

    const bool differentiable = input.requires_grad();
    out.set_requires_grad(differentiable);
    maybe_record("softmax", differentiable, out, [input = input, out = out, outer, inner, fiber]() mutable {
        if (!out.has_grad() || !input.requires_grad()) return;
        const double* g = out.grad().data();
        const double* y = out.values().data();
        double* dx = input.mutable_grad().data();
        for (std::int64_t o = 0; o < outer; ++o) {
            for (std::int64_t in = 0; in < inner; ++in) {
                const std::int64_t base = o * fiber * inner + in;
                double dot = 0.0;
                for (std::int64_t f = 0; f < fiber; ++f)
                    dot += g[base + f * inner] * y[base + f * inner];
                for (std::int64_t f = 0; f < fiber; ++f) {
                    const std::int64_t i = base + f * inner;
                    dx[i] += y[i] * (g[i] - dot);
                }
            }
        }
    });
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 4 || b.rank() != 4)
        fail("E_SHAPE", "concat_channels expects NCHW tensors");
    if (a.extent(0) != b.extent(0) || a.extent(2) != b.extent(2) || a.extent(3) != b.extent(3))
        fail("E_SHAPE", "concat_channels batch/spatial mismatch: " + shape_str(a.shape()) +
                            " vs " + shape_str(b.shape()));

    const std::int64_t N = a.extent(0), Ca = a.extent(1), Cb = b.extent(1), H = a.extent(2),
                       W = a.extent(3);
    const std::int64_t plane = H * W;
    Tensor out = Tensor::zeros({N, Ca + Cb, H, W});
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.mutable_values().data();
    for (std::int64_t n = 0; n < N; ++n) {
        std::copy(pa + n * Ca * plane, pa + (n + 1) * Ca * plane, po + n * (Ca + Cb) * plane);
        std::copy(pb + n * Cb * plane, pb + (n + 1) * Cb * plane,
                  po + n * (Ca + Cb) * plane + Ca * plane);
    }

    const bool differentiable = any_requires_grad(a, b);
    out.set_requires_grad(differentiable);
    maybe_record("concat_channels", differentiable, out, [a = a, b = b, out = out, N, Ca, Cb, plane]() mutable {
        if (!out.has_grad()) return;
        const double* g = out.grad().data();
        if (a.requires_grad()) {
            double* da = a.mutable_grad().data();
            for (std::int64_t n = 0; n < N; ++n) {
                const double* src = g + n * (Ca + Cb) * plane;
                double* dst = da + n * Ca * plane;
                for (std::int64_t i = 0; i < Ca * plane; ++i) dst[i] += src[i];
            }
        }
        if (b.requires_grad()) {
            double* dbv = b.mutable_grad().data();
            for (std::int64_t n = 0; n < N; ++n) {
                const double* src = g + n * (Ca + Cb) * plane + Ca * plane;
                double* dst = dbv + n * Cb * plane;
                for (std::int64_t i = 0; i < Cb * plane; ++i) dst[i] += src[i];
            }
        }
    });
    return out;
}

Tensor sum(const Tensor& input) {
    double acc = 0.0;
    for (double v : input.values()) acc += v;
    Tensor out = Tensor::from_values({1}, {acc});

    const bool differentiable = input.requires_grad();
    out.set_requires_grad(differentiable);
    maybe_record("sum", differentiable, out, [input = input, out = out]() mutable {
        if (!out.has_grad() || !input.requires_grad()) return;
        const double g = out.grad()[0];
        for (double& d : input.mutable_grad()) d += g;
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        fail("E_SHAPE", "mul shape mismatch: " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.mutable_values().data();
    const std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];

    const bool differentiable = any_requires_grad(a, b);
    out.set_requires_grad(differentiable);
    maybe_record("mul", differentiable, out, [a = a, b = b, out = out]() mutable {
        if (!out.has_grad()) return;
        const double* g = out.grad().data();
        const std::int64_t n = out.numel();
        if (a.requires_grad()) {
            const double* pb = b.values().data();
            double* da = a.mutable_grad().data();
            for (std::int64_t i = 0; i < n; ++i) da[i] += g[i] * pb[i];
        }
        if (b.requires_grad()) {
            const double* pa = a.values().data();
            double* db = b.mutable_grad().data();
            for (std::int64_t i = 0; i < n; ++i) db[i] += g[i] * pa[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& input, double factor) {
    Tensor out = Tensor::zeros(input.shape());
    const double* x = input.values().data();
    double* y = out.mutable_values().data();
    const std::int64_t n = input.numel();
    for (std::int64_t i = 0; i < n; ++i) y[i] = factor * x[i];

    const bool differentiable = input.requires_grad();
    out.set_requires_grad(differentiable);
    maybe_record("scale", differentiable, out, [input = input, out = out, factor]() mutable {
        if (!out.has_grad() || !input.requires_grad()) return;
        const double* g = out.grad().data();
        double* dx = input.mutable_grad().data();
        const std::int64_t n = input.numel();
        for (std::int64_t i = 0; i < n; ++i) dx[i] += factor * g[i];
    });
    return out;
}

} // namespace cdk
