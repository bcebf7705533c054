#include "ganmex/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ganmex {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << 'x';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

void throw_shape_error(const std::string& op, std::initializer_list<Shape> shapes,
                       const std::string& detail) {
    std::ostringstream out;
    out << op << ": incompatible shapes";
    for (const auto& s : shapes) out << ' ' << to_string(s);
    if (!detail.empty()) out << " (" << detail << ')';
    throw ShapeError(out.str());
}

namespace {

void check_extents(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: shape must have at least one axis");
    for (auto d : shape) {
        if (d == 0) throw_shape_error("tensor", {shape}, "extents must be positive");
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_extents(shape_);
    values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    check_extents(shape_);
    if (values_.size() != shape_numel(shape_)) {
        throw_shape_error("tensor", {shape_},
                          "data length " + std::to_string(values_.size()) + " != product of extents");
    }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::like(const Tensor& other, double fill) { return Tensor(other.shape(), fill); }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw_shape_error("dim", {shape_}, "axis " + std::to_string(axis) + " out of range");
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (values_.size() != 1) throw_shape_error("item", {shape_}, "expected a single element");
    return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != values_.size()) throw_shape_error("reshape", {shape_, shape});
    Tensor out;
    out.shape_ = std::move(shape);
    out.values_ = values_;
    return out;
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

double Tensor::sum() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
}

double Tensor::l2_norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (other.shape_ != shape_) throw_shape_error("add", {shape_, other.shape_});
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
    if (other.shape_ != shape_) throw_shape_error("sub", {shape_, other.shape_});
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

}  // namespace ganmex
