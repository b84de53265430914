#include "cdk/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cdk/error.hpp"

namespace cdk {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e < 0) fail("E_SHAPE", "negative extent in shape " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor Tensor::zeros(Shape shape) {
    auto d = std::make_shared<Data>();
    const std::int64_t n = shape_numel(shape);
    d->shape = std::move(shape);
    d->values.assign(static_cast<std::size_t>(n), 0.0);
    return Tensor(std::move(d));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (double& v : t.mutable_values()) v = value;
    return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    const std::int64_t n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(values.size()))
        fail("E_SHAPE", "value count " + std::to_string(values.size()) +
                            " does not match shape " + shape_str(shape));
    auto d = std::make_shared<Data>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    return Tensor(std::move(d));
}

Tensor::Data& Tensor::data() {
    if (!d_) fail("E_STATE", "use of undefined tensor");
    return *d_;
}

const Tensor::Data& Tensor::data() const {
    if (!d_) fail("E_STATE", "use of undefined tensor");
    return *d_;
}

const Shape& Tensor::shape() const { return data().shape; }

std::int64_t Tensor::extent(int axis) const {
    const Shape& s = shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        fail("E_SHAPE", "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(data().values.size()); }

std::span<const double> Tensor::values() const { return data().values; }

std::span<double> Tensor::mutable_values() { return data().values; }

bool Tensor::requires_grad() const { return data().requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    data().requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return !data().grad.empty(); }

std::span<const double> Tensor::grad() const { return data().grad; }

std::span<double> Tensor::mutable_grad() {
    Data& d = data();
    if (d.grad.empty()) d.grad.assign(d.values.size(), 0.0);
    return d.grad;
}

void Tensor::zero_grad() { data().grad.clear(); }

double Tensor::at(std::initializer_list<std::int64_t> index) const {
    const Data& d = data();
    if (index.size() != d.shape.size())
        fail("E_SHAPE", "index rank does not match tensor rank");
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (std::int64_t i : index) {
        if (i < 0 || i >= d.shape[axis])
            fail("E_SHAPE", "index out of bounds on axis " + std::to_string(axis));
        flat = flat * d.shape[axis] + i;
        ++axis;
    }
    return d.values[static_cast<std::size_t>(flat)];
}

bool Tensor::all_finite() const {
    for (double v : data().values)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace cdk
