#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cdk {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit floats with an optional gradient buffer.
/// Copies are shallow handles onto shared storage. Values produced by an
/// operator are treated as immutable; mutable_values() exists for parameter
/// initialization and optimizer updates between training steps.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_values(Shape shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(d_); }
    const Shape& shape() const;
    int rank() const { return static_cast<int>(shape().size()); }
    std::int64_t extent(int axis) const;
    std::int64_t numel() const;

    std::span<const double> values() const;
    std::span<double> mutable_values();

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);

    /// True once a gradient buffer has been materialized.
    bool has_grad() const;
    /// Accumulated gradient; empty span when no buffer exists (all zeros).
    std::span<const double> grad() const;
    /// Gradient buffer, zero-initialized on first access.
    std::span<double> mutable_grad();
    void zero_grad();

    double at(std::initializer_list<std::int64_t> index) const;
    bool all_finite() const;

    /// Storage identity, used to recognize shared tensors on a tape.
    const void* id() const { return d_.get(); }

private:
    struct Data {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad; // empty means zero
        bool requires_grad = false;
    };

    explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}

    Data& data();
    const Data& data() const;

    std::shared_ptr<Data> d_;
};

} // namespace cdk
