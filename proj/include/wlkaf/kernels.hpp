#pragma once

// Kernels and pseudo-kernels over complex inputs, the 2x2 block (matrix-valued)
// view of a complex kernel expansion, and the widely linear constructions built on it.

#include <cmath>
#include <complex>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"

namespace wlkaf::kernels {

using cnum::Complex;

/// Fixed m x m grid of complex sample points over [lo, hi] on both axes.
/// Point order is row-major with the imaginary axis outer and the real axis inner:
/// index j*m + i holds axis[i] + 1i*axis[j].
class Dictionary {
public:
    Dictionary(std::size_t points_per_axis, double lo, double hi) : m_(points_per_axis), lo_(lo), hi_(hi) {
        if (points_per_axis < 2) throw ParameterError("dictionary needs at least 2 points per axis");
        if (!(lo < hi)) throw ParameterError("dictionary axis range must satisfy lo < hi");
        spacing_ = (hi - lo) / static_cast<double>(m_ - 1);
        axis_.resize(m_);
        for (std::size_t i = 0; i < m_; ++i) axis_[i] = lo + spacing_ * static_cast<double>(i);
        axis_.back() = hi;
        points_.reserve(m_ * m_);
        for (std::size_t j = 0; j < m_; ++j)
            for (std::size_t i = 0; i < m_; ++i) points_.emplace_back(axis_[i], axis_[j]);
    }

    std::size_t size() const noexcept { return points_.size(); }
    std::size_t points_per_axis() const noexcept { return m_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    double spacing() const noexcept { return spacing_; }
    const std::vector<double>& axis() const noexcept { return axis_; }
    const std::vector<Complex>& points() const noexcept { return points_; }
    Complex operator[](std::size_t n) const { return points_.at(n); }

    bool operator==(const Dictionary& o) const { return m_ == o.m_ && lo_ == o.lo_ && hi_ == o.hi_; }

private:
    std::size_t m_;
    double lo_, hi_, spacing_;
    std::vector<double> axis_;
    std::vector<Complex> points_;
};

inline Dictionary build_dictionary(std::size_t points_per_axis, double lo, double hi) {
    return Dictionary(points_per_axis, lo, hi);
}

inline void require_positive_bandwidth(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ParameterError("kernel bandwidth must be a positive finite number, got " + std::to_string(gamma));
}

/// Largest |Re| of the exponent accepted by gaussian_complex before it is declared an overflow.
inline constexpr double kComplexGaussianExponentLimit = 700.0;

/// exp{-gamma (z - conj(d))^2}. Unbounded away from the reflected diagonal.
inline Complex gaussian_complex(Complex z, Complex d, double gamma) {
    require_positive_bandwidth(gamma);
    const Complex w = z - std::conj(d);
    const Complex e = -gamma * w * w;
    if (std::abs(e.real()) > kComplexGaussianExponentLimit)
        throw NumericError("complex Gaussian kernel exponent out of range (Re = " + std::to_string(e.real()) + ")");
    return std::exp(e);
}

/// exp{-gamma |z - d|^2}; always in (0, 1].
inline double gaussian_real_of_complex(Complex z, Complex d, double gamma) {
    require_positive_bandwidth(gamma);
    return std::exp(-gamma * std::norm(z - d));
}

inline double gaussian_real(double a, double b, double gamma) {
    const double t = a - b;
    return std::exp(-gamma * t * t);
}

/// Independent kernel built from four real Gaussian evaluations on component pairs.
inline Complex independent_kernel(Complex z, Complex d, double gamma) {
    require_positive_bandwidth(gamma);
    const double re = gaussian_real(z.real(), d.real(), gamma) + gaussian_real(z.imag(), d.imag(), gamma);
    const double im = gaussian_real(z.real(), d.imag(), gamma) - gaussian_real(z.imag(), d.real(), gamma);
    return {re, im};
}

enum class KernelType { ComplexGaussian, Independent, RealGaussian };

inline std::string to_string(KernelType t) {
    switch (t) {
        case KernelType::ComplexGaussian: return "complex_gaussian";
        case KernelType::Independent: return "independent";
        case KernelType::RealGaussian: return "real_gaussian";
    }
    return "?";
}

inline KernelType kernel_type_from_string(const std::string& s) {
    if (s == "complex_gaussian") return KernelType::ComplexGaussian;
    if (s == "independent") return KernelType::Independent;
    if (s == "real_gaussian") return KernelType::RealGaussian;
    throw ParameterError("unknown kernel type '" + s + "'");
}

/// A complex-valued kernel with a single bandwidth.
struct KernelSpec {
    KernelType type = KernelType::RealGaussian;
    double gamma = 1.0;
};

inline Complex evaluate(const KernelSpec& spec, Complex z, Complex d) {
    switch (spec.type) {
        case KernelType::ComplexGaussian: return gaussian_complex(z, d, spec.gamma);
        case KernelType::Independent: return independent_kernel(z, d, spec.gamma);
        case KernelType::RealGaussian: return gaussian_real_of_complex(z, d, spec.gamma);
    }
    return {};
}

using ComplexKernel = std::function<Complex(Complex, Complex)>;

inline ComplexKernel as_function(const KernelSpec& spec) {
    return [spec](Complex z, Complex d) { return evaluate(spec, z, d); };
}

/// Four real vectors realizing the 2x2 matrix-valued kernel between z and every dictionary atom.
struct KernelBlockSet {
    std::vector<double> k_rr, k_ri, k_ir, k_ii;

    std::size_t size() const noexcept { return k_rr.size(); }

    void validate() const {
        const auto n = k_rr.size();
        if (k_ri.size() != n || k_ir.size() != n || k_ii.size() != n)
            throw DimensionError("kernel block vectors must have equal length");
        for (std::size_t j = 0; j < n; ++j)
            if (!std::isfinite(k_rr[j]) || !std::isfinite(k_ri[j]) || !std::isfinite(k_ir[j]) ||
                !std::isfinite(k_ii[j]))
                throw NumericError("kernel block entry " + std::to_string(j) + " is not finite");
    }
};

/// A kernel vector and its pseudo-kernel companion over the dictionary.
struct KernelPair {
    std::vector<Complex> k, k_tilde;
};

/// Kernel vector k_j = kappa(z, d_j).
inline std::vector<Complex> kernel_vector(const ComplexKernel& kernel, Complex z, const Dictionary& dict) {
    std::vector<Complex> k(dict.size());
    for (std::size_t j = 0; j < dict.size(); ++j) k[j] = kernel(z, dict.points()[j]);
    return k;
}

/// Block form of a plain complex expansion k^T alpha. Substituting into the block model gives
/// k_rr = k_ii = Re k and k_ir = -k_ri = Im k.
inline KernelBlockSet blocks_from_complex_kernel(const ComplexKernel& kernel, Complex z, const Dictionary& dict) {
    const auto k = kernel_vector(kernel, z, dict);
    KernelBlockSet b;
    b.k_rr.resize(k.size());
    b.k_ri.resize(k.size());
    b.k_ir.resize(k.size());
    b.k_ii.resize(k.size());
    for (std::size_t j = 0; j < k.size(); ++j) {
        b.k_rr[j] = k[j].real();
        b.k_ii[j] = k[j].real();
        b.k_ir[j] = k[j].imag();
        b.k_ri[j] = -k[j].imag();
    }
    return b;
}

/// Kernel and pseudo-kernel equivalent to an arbitrary block set.
inline KernelPair wl_from_blocks(const KernelBlockSet& blocks) {
    blocks.validate();
    KernelPair p;
    p.k.resize(blocks.size());
    p.k_tilde.resize(blocks.size());
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        p.k[j] = 0.5 * Complex(blocks.k_rr[j] + blocks.k_ii[j], blocks.k_ir[j] - blocks.k_ri[j]);
        p.k_tilde[j] = 0.5 * Complex(blocks.k_rr[j] - blocks.k_ii[j], blocks.k_ir[j] + blocks.k_ri[j]);
    }
    return p;
}

/// Two-output vector model: [g_r; g_i] = [[k_rr^T, k_ri^T]; [k_ir^T, k_ii^T]] [alpha_r; alpha_i].
inline Complex vector_model_output(const KernelBlockSet& blocks, std::span<const Complex> alpha) {
    if (alpha.size() != blocks.size()) throw DimensionError("alpha length does not match kernel blocks");
    double gr = 0.0, gi = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) {
        gr += blocks.k_rr[j] * alpha[j].real() + blocks.k_ri[j] * alpha[j].imag();
        gi += blocks.k_ir[j] * alpha[j].real() + blocks.k_ii[j] * alpha[j].imag();
    }
    return {gr, gi};
}

/// Widely linear expansion k^T alpha + k_tilde^T conj(alpha). No conjugation on k.
inline Complex widely_linear_output(std::span<const Complex> k, std::span<const Complex> k_tilde,
                                    std::span<const Complex> alpha) {
    if (k.size() != alpha.size() || k_tilde.size() != alpha.size())
        throw DimensionError("kernel, pseudo-kernel and alpha lengths differ");
    Complex g = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) g += k[j] * alpha[j] + k_tilde[j] * std::conj(alpha[j]);
    return g;
}

struct Case2Term {
    double gamma = 1.0;        // bandwidth of kappa^q
    double gamma_tilde = 1.0;  // bandwidth of the pseudo-kernel term
    double omega = 0.3;        // mixing weight, 0 < omega < 1
};

struct StandardBandwidth {
    double gamma = 1.0;
};
struct Case1Bandwidth {
    double gamma_rr = 1.0, gamma_ii = 1.0;
};
struct Case2Bandwidth {
    std::vector<Case2Term> terms;
};

using BandwidthParams = std::variant<StandardBandwidth, Case1Bandwidth, Case2Bandwidth>;

inline void validate_omega(double omega) {
    if (!(omega > 0.0 && omega < 1.0))
        throw ParameterError("Case 2 mixing weight omega must lie in (0, 1), got " + std::to_string(omega));
}

inline void validate(const Case2Bandwidth& p) {
    if (p.terms.empty()) throw ParameterError("Case 2 needs at least one term (Q >= 1)");
    for (const auto& t : p.terms) {
        validate_omega(t.omega);
        require_positive_bandwidth(t.gamma);
        require_positive_bandwidth(t.gamma_tilde);
    }
}

/// Independent real and imaginary parts: k = (k_rr + k_ii)/2, k_tilde = (k_rr - k_ii)/2,
/// each block a real Gaussian on complex inputs with its own bandwidth.
inline KernelPair case1_pair(Complex z, const Dictionary& dict, double gamma_rr, double gamma_ii) {
    require_positive_bandwidth(gamma_rr);
    require_positive_bandwidth(gamma_ii);
    KernelPair p;
    p.k.resize(dict.size());
    p.k_tilde.resize(dict.size());
    for (std::size_t j = 0; j < dict.size(); ++j) {
        const double krr = gaussian_real_of_complex(z, dict.points()[j], gamma_rr);
        const double kii = gaussian_real_of_complex(z, dict.points()[j], gamma_ii);
        p.k[j] = 0.5 * (krr + kii);
        p.k_tilde[j] = 0.5 * (krr - kii);
    }
    return p;
}

/// Separable construction: k = sum_q kappa^q (real), k_tilde = 2i sum_q omega_q kappa_tilde^q.
inline KernelPair case2_pair(Complex z, const Dictionary& dict, const Case2Bandwidth& params) {
    validate(params);
    KernelPair p;
    p.k.assign(dict.size(), Complex{});
    p.k_tilde.assign(dict.size(), Complex{});
    for (std::size_t j = 0; j < dict.size(); ++j) {
        double k = 0.0, kt = 0.0;
        for (const auto& t : params.terms) {
            k += gaussian_real_of_complex(z, dict.points()[j], t.gamma);
            kt += t.omega * gaussian_real_of_complex(z, dict.points()[j], t.gamma_tilde);
        }
        p.k[j] = k;
        p.k_tilde[j] = Complex(0.0, 2.0 * kt);
    }
    return p;
}

/// Kernel values between every batch element and every dictionary atom, [B x D].
inline cnum::CMatrix kernel_matrix(std::span<const Complex> z_batch, const Dictionary& dict, const KernelSpec& spec) {
    cnum::CMatrix K(static_cast<Eigen::Index>(z_batch.size()), static_cast<Eigen::Index>(dict.size()));
    for (std::size_t b = 0; b < z_batch.size(); ++b)
        for (std::size_t j = 0; j < dict.size(); ++j)
            K(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) = evaluate(spec, z_batch[b], dict.points()[j]);
    return K;
}

}  // namespace wlkaf::kernels
