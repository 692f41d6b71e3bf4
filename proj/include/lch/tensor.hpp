#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace lch {

/// Error during graph/tensor composition (bad shapes, bad indices, bad config).
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Error from invalid configuration or malformed files.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failure at runtime (divergence, non-finite values).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

/// Dense 64-bit float array in row-major order. The universal value carrier:
/// product(shape) == data.size() always holds.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}
    Tensor(Shape shape, std::vector<double> data);
    Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
    static Tensor vector(std::vector<double> v) {
        const std::size_t n = v.size();  // evaluate before the move
        return Tensor({n}, std::move(v));
    }
    /// (rows, cols) from row-major data.
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    /// Reinterpret with a new shape of equal numel.
    Tensor reshaped(Shape new_shape) const;

    Tensor& operator+=(const Tensor& o);
    Tensor& operator-=(const Tensor& o);
    Tensor& operator*=(double s);

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& a);
double sum(const Tensor& a);
/// cos(a, b); returns exactly 1.0 for bitwise-identical inputs.
double cosine(const Tensor& a, const Tensor& b);

/// C = op(A) * op(B) with optional transposes; accepts 1-D operands as
/// column/row vectors ((2D,1D) -> 1D, (1D,2D) -> 1D).
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

}  // namespace lch
