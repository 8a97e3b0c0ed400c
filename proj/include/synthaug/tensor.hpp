// Row-major N-dimensional tensor. Scalar type is a template parameter:
// float is the training precision, double exists for gradient verification.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace synthaug {

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

template <typename Real>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = Real(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
        for (std::size_t d : shape_)
            if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    }

    Tensor(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != data_.size())
            throw ShapeError("shape " + shape_str(shape_) + " does not match data length " +
                             std::to_string(data_.size()));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Real* data() { return data_.data(); }
    const Real* data() const { return data_.data(); }
    std::vector<Real>& vec() { return data_; }
    const std::vector<Real>& vec() const { return data_; }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors (rows x cols)
    Real& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    Real at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // NHWC accessors
    Real& at4(std::size_t n, std::size_t y, std::size_t x, std::size_t c) {
        return data_[((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
    }
    Real at4(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
        return data_[((n * shape_[1] + y) * shape_[2] + x) * shape_[3] + c];
    }

    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
        return Tensor(std::move(s), data_);
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename Other>
    Tensor<Other> cast() const {
        std::vector<Other> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
        return Tensor<Other>(shape_, std::move(out));
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Shape shape_;
    std::vector<Real> data_;
};

template <typename Real>
bool all_finite(const Tensor<Real>& t) {
    for (std::size_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t[i])) return false;
    return true;
}

template <typename Real>
bool bitwise_equal(const Tensor<Real>& a, const Tensor<Real>& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), a.numel() * sizeof(Real)) == 0;
}

}  // namespace synthaug
