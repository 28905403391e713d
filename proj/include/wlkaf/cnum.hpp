#pragma once

// Complex tensors and reverse-mode CR-calculus helpers.
//
// Gradient convention used throughout the library: for a real objective J
// and a complex parameter w, the cogradient is
//
//     dJ/dRe(w) + i dJ/dIm(w)  ( = 2 dJ/dw* )
//
// so plain descent w <- w - lr * cograd is correct without conjugation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wlkaf/errors.hpp"

namespace wlkaf::cnum {

using Complex = std::complex<double>;
using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;
using CVector = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;
using RMatrix = Eigen::MatrixXd;
using CRowMajor = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major tensor with shape metadata and bounds-checked access.
template <class Scalar>
class Tensor {
public:
    using value_type = Scalar;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, Scalar fill = Scalar{})
        : shape_(std::move(shape)) {
        for (auto d : shape_)
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        data_.assign(count(shape_), fill);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<Scalar> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        for (auto d : shape_)
            if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        if (data_.size() != count(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
    }

    static Tensor vector(std::initializer_list<Scalar> values) {
        return Tensor({values.size()}, std::vector<Scalar>(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<Scalar> values) {
        return Tensor({rows, cols}, std::vector<Scalar>(values));
    }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    Scalar& at(std::size_t i) {
        if (i >= data_.size()) throw IndexError("flat index " + std::to_string(i) + " out of range");
        return data_[i];
    }
    const Scalar& at(std::size_t i) const { return const_cast<Tensor&>(*this).at(i); }

    Scalar& at(std::size_t r, std::size_t c) {
        if (rank() != 2) throw DimensionError("two-index access on tensor of shape " + shape_string(shape_));
        if (r >= shape_[0] || c >= shape_[1])
            throw IndexError("index (" + std::to_string(r) + "," + std::to_string(c) + ") out of range for " +
                             shape_string(shape_));
        return data_[r * shape_[1] + c];
    }
    const Scalar& at(std::size_t r, std::size_t c) const { return const_cast<Tensor&>(*this).at(r, c); }

    Scalar& operator[](std::size_t i) noexcept { return data_[i]; }
    const Scalar& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<Scalar> data() noexcept { return data_; }
    std::span<const Scalar> data() const noexcept { return data_; }

    /// Row-major matrix view of a rank-2 tensor (rank-1 is viewed as a column).
    auto mat() {
        return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
    }
    auto mat() const {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
    }
    auto vec() { return Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), data_.size()); }
    auto vec() const {
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(data_.data(), data_.size());
    }

    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

    /// The tensor's storage as a flat span of real components. std::complex<double> is
    /// layout-compatible with double[2], so a complex tensor exposes 2*size() reals.
    std::span<double> components() noexcept {
        if constexpr (std::is_same_v<Scalar, Complex>)
            return {reinterpret_cast<double*>(data_.data()), 2 * data_.size()};
        else
            return {data_.data(), data_.size()};
    }
    std::span<const double> components() const noexcept { return const_cast<Tensor&>(*this).components(); }

    bool operator==(const Tensor&) const = default;

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() >= 2 ? data_.size() / shape_[0] : 1; }

    std::vector<std::size_t> shape_;
    std::vector<Scalar> data_;
};

using ComplexTensor = Tensor<Complex>;
using RealTensor = Tensor<double>;

/// Holds dJ/dRe(w) + i dJ/dIm(w) for each entry of the parameter tensor it differentiates.
using CogradientTensor = ComplexTensor;

/// Non-owning view of one trainable parameter block as real components, paired with the
/// storage of its cogradient. Complex blocks contribute (Re, Im) pairs.
struct ParamView {
    std::string name;
    std::string group;  // "W", "b", "alpha", "log_gamma"
    std::span<double> value;
    std::span<double> grad;
    bool is_complex = true;
};

template <class Scalar>
ParamView make_view(std::string name, std::string group, Tensor<Scalar>& value, Tensor<Scalar>& grad) {
    if (value.shape() != grad.shape())
        throw DimensionError("cogradient shape " + shape_string(grad.shape()) + " does not match parameter " +
                             name + " shape " + shape_string(value.shape()));
    return {std::move(name), std::move(group), value.components(), grad.components(),
            std::is_same_v<Scalar, Complex>};
}

inline bool is_finite(Complex z) noexcept { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const auto v = m(i, j);
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Complex>) {
                if (!is_finite(v)) return false;
            } else if (!std::isfinite(v)) {
                return false;
            }
        }
    return true;
}

/// y = W x + b for W [M x K], x [K], b [M].
inline ComplexTensor complex_affine(const ComplexTensor& W, const ComplexTensor& x, const ComplexTensor& b) {
    if (W.rank() != 2 || x.rank() != 1 || b.rank() != 1 || W.dim(1) != x.dim(0) || W.dim(0) != b.dim(0))
        throw DimensionError("complex_affine: W " + shape_string(W.shape()) + ", x " + shape_string(x.shape()) +
                             ", b " + shape_string(b.shape()) + " do not conform");
    ComplexTensor y({W.dim(0)});
    y.vec() = W.mat() * x.vec() + b.vec();
    return y;
}

struct AffineCogradients {
    ComplexTensor W, x, b;
};

/// Backward rule for complex_affine. The map is holomorphic in (W, x, b), so
/// cograd_x = W^H g, cograd_W = g x^H, cograd_b = g.
inline AffineCogradients backward_affine(const ComplexTensor& cograd_y, const ComplexTensor& W,
                                         const ComplexTensor& x) {
    if (W.rank() != 2 || x.rank() != 1 || cograd_y.rank() != 1 || W.dim(1) != x.dim(0) ||
        W.dim(0) != cograd_y.dim(0))
        throw DimensionError("backward_affine: cograd_y " + shape_string(cograd_y.shape()) + " does not match W " +
                             shape_string(W.shape()) + " and x " + shape_string(x.shape()));
    AffineCogradients out{ComplexTensor(W.shape()), ComplexTensor(x.shape()), ComplexTensor(cograd_y.shape())};
    out.W.mat() = cograd_y.vec() * x.vec().adjoint();
    out.x.vec() = W.mat().adjoint() * cograd_y.vec();
    out.b.vec() = cograd_y.vec();
    return out;
}

/// Batched forward: columns of X are samples. Returns W X + b 1^T.
template <class WMat, class XMat>
CMatrix affine_batch(const WMat& W, const XMat& X, const CVector& b) {
    if (W.cols() != X.rows() || W.rows() != b.size())
        throw DimensionError("affine_batch: W is " + std::to_string(W.rows()) + "x" + std::to_string(W.cols()) +
                             ", input has " + std::to_string(X.rows()) + " rows, bias has " +
                             std::to_string(b.size()));
    CMatrix Y = W * X;
    Y.colwise() += b;
    return Y;
}

template <class Scalar>
double hermitian_norm_sq(const Tensor<Scalar>& w) {
    double s = 0.0;
    for (double c : w.components()) s += c * c;
    return s;
}

inline double hermitian_norm_sq(std::span<const double> components) {
    double s = 0.0;
    for (double c : components) s += c * c;
    return s;
}

/// Central differences applied separately to Re and Im of each entry of w.
inline CogradientTensor finite_diff_cogradient(const std::function<double(const ComplexTensor&)>& f,
                                               const ComplexTensor& w, double eps) {
    if (!(eps > 0.0)) throw ParameterError("finite_diff_cogradient: eps must be positive");
    CogradientTensor g(w.shape());
    ComplexTensor probe = w;
    auto eval = [&](const ComplexTensor& t) {
        const double v = f(t);
        if (!std::isfinite(v)) throw NumericError("finite_diff_cogradient: objective is not finite");
        return v;
    };
    for (std::size_t i = 0; i < w.size(); ++i) {
        const Complex orig = w[i];
        double parts[2];
        for (int c = 0; c < 2; ++c) {
            const Complex step = c == 0 ? Complex(eps, 0.0) : Complex(0.0, eps);
            probe[i] = orig + step;
            const double fp = eval(probe);
            probe[i] = orig - step;
            const double fm = eval(probe);
            parts[c] = (fp - fm) / (2.0 * eps);
        }
        probe[i] = orig;
        g[i] = Complex(parts[0], parts[1]);
    }
    return g;
}

/// Same oracle over a flat span of real components (used for whole-model checks).
/// The span is restored to its original contents before returning.
inline std::vector<double> finite_diff_components(const std::function<double()>& f, std::span<double> values,
                                                  double eps) {
    if (!(eps > 0.0)) throw ParameterError("finite_diff_components: eps must be positive");
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + eps;
        const double fp = f();
        values[i] = orig - eps;
        const double fm = f();
        values[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_components: objective is not finite");
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

}  // namespace wlkaf::cnum
