#include "lch/tensor.hpp"

#include <cmath>
#include <sstream>

namespace lch {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match data length " +
                         std::to_string(data_.size()));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at2(i, i) = 1.0;
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel())
        throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(new_shape));
    return Tensor(std::move(new_shape), data_);
}

Tensor& Tensor::operator+=(const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("add: shape mismatch " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    if (!same_shape(o)) throw ShapeError("sub: shape mismatch " + shape_str(shape_) + " vs " + shape_str(o.shape_));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

double sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

double cosine(const Tensor& a, const Tensor& b) {
    if (a.numel() == b.numel() && a.vec() == b.vec()) return 1.0;
    double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double c = dot(a, b) / (na * nb);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return c;
}

namespace {

// Materialize the transpose of a 2-D tensor.
Tensor transpose2d(const Tensor& a) {
    const std::size_t r = a.dim(0), c = a.dim(1);
    Tensor t({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t.at2(j, i) = a.at2(i, j);
    return t;
}

}  // namespace

Tensor matmul(const Tensor& a_in, const Tensor& b_in, bool trans_a, bool trans_b) {
    if (a_in.ndim() == 0 || a_in.ndim() > 2 || b_in.ndim() == 0 || b_in.ndim() > 2)
        throw ShapeError("matmul: operands must be 1-D or 2-D, got " + shape_str(a_in.shape()) + " x " +
                         shape_str(b_in.shape()));
    if ((a_in.ndim() == 1 && trans_a) || (b_in.ndim() == 1 && trans_b))
        throw ShapeError("matmul: cannot transpose a 1-D operand");

    if (a_in.ndim() == 2 && b_in.ndim() == 1) {
        const Tensor a = trans_a ? transpose2d(a_in) : a_in;
        if (a.dim(1) != b_in.dim(0))
            throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b_in.shape()));
        Tensor y({a.dim(0)});
        for (std::size_t i = 0; i < a.dim(0); ++i) {
            double s = 0.0;
            const double* row = a.data() + i * a.dim(1);
            for (std::size_t k = 0; k < a.dim(1); ++k) s += row[k] * b_in[k];
            y[i] = s;
        }
        return y;
    }
    if (a_in.ndim() == 1 && b_in.ndim() == 2) {
        const Tensor b = trans_b ? transpose2d(b_in) : b_in;
        if (a_in.dim(0) != b.dim(0))
            throw ShapeError("matmul: shape mismatch " + shape_str(a_in.shape()) + " x " + shape_str(b.shape()));
        Tensor y({b.dim(1)});
        // Accumulate in k-order so each y[j] sums over k ascending.
        for (std::size_t k = 0; k < b.dim(0); ++k) {
            const double ak = a_in[k];
            const double* row = b.data() + k * b.dim(1);
            for (std::size_t j = 0; j < b.dim(1); ++j) y[j] += ak * row[j];
        }
        return y;
    }

    const Tensor a = trans_a ? transpose2d(a_in) : a_in;
    const Tensor b = trans_b ? transpose2d(b_in) : b_in;
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), kk = a.dim(1), n = b.dim(1);
    Tensor c({m, n});
    // ikj order: cache-friendly and sums each c[i][j] over k ascending,
    // matching the naive per-element order bit for bit.
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c.data() + i * n;
        const double* arow = a.data() + i * kk;
        for (std::size_t k = 0; k < kk; ++k) {
            const double aik = arow[k];
            const double* brow = b.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

}  // namespace lch
