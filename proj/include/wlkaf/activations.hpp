#pragma once

// Element-wise complex activations: split, phase-amplitude, kernel expansions over a fixed
// dictionary (KAF) and their widely linear extension (WL-KAF). Every activation has a forward
// pass and a CR-calculus backward pass returning cogradients for the input and for the
// per-neuron parameters.

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/kernels.hpp"

namespace wlkaf::act {

using cnum::CMatrix;
using cnum::Complex;
using cnum::ComplexTensor;
using cnum::RealTensor;
using kernels::Dictionary;
using kernels::KernelType;

enum class RealFn { Tanh, Sigmoid, Identity };

inline double apply(RealFn f, double x) {
    switch (f) {
        case RealFn::Tanh: return std::tanh(x);
        case RealFn::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case RealFn::Identity: return x;
    }
    return x;
}

inline double derivative(RealFn f, double x) {
    switch (f) {
        case RealFn::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case RealFn::Sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case RealFn::Identity: return 1.0;
    }
    return 1.0;
}

struct SplitSpec {
    RealFn fn = RealFn::Tanh;
};
struct PhaseAmplitudeSpec {};
struct KafSpec {
    KernelType kernel = KernelType::RealGaussian;
};
struct WlKafCase1Spec {};
struct WlKafCase2Spec {
    std::vector<double> omegas{0.3};  // one per term, Q = omegas.size()
};

using ActivationSpec = std::variant<SplitSpec, PhaseAmplitudeSpec, KafSpec, WlKafCase1Spec, WlKafCase2Spec>;

inline std::string describe(const ActivationSpec& spec) {
    struct V {
        std::string operator()(const SplitSpec& s) const {
            return std::string("split_") + (s.fn == RealFn::Tanh ? "tanh" : s.fn == RealFn::Sigmoid ? "sigmoid" : "identity");
        }
        std::string operator()(const PhaseAmplitudeSpec&) const { return "phase_amplitude"; }
        std::string operator()(const KafSpec& s) const { return "kaf_" + kernels::to_string(s.kernel); }
        std::string operator()(const WlKafCase1Spec&) const { return "wlkaf_case1"; }
        std::string operator()(const WlKafCase2Spec&) const { return "wlkaf_case2"; }
    };
    return std::visit(V{}, spec);
}

inline bool has_kernel_expansion(const ActivationSpec& spec) {
    return std::holds_alternative<KafSpec>(spec) || std::holds_alternative<WlKafCase1Spec>(spec) ||
           std::holds_alternative<WlKafCase2Spec>(spec);
}

/// Number of adaptable log-bandwidths per neuron.
inline std::size_t bandwidth_count(const ActivationSpec& spec) {
    if (std::holds_alternative<KafSpec>(spec)) return 1;
    if (std::holds_alternative<WlKafCase1Spec>(spec)) return 2;
    if (const auto* c2 = std::get_if<WlKafCase2Spec>(&spec)) return 2 * c2->omegas.size();
    return 0;
}

inline void validate(const ActivationSpec& spec) {
    if (const auto* c2 = std::get_if<WlKafCase2Spec>(&spec)) {
        if (c2->omegas.empty()) throw ParameterError("Case 2 needs at least one term (Q >= 1)");
        for (double w : c2->omegas) kernels::validate_omega(w);
    }
}

/// Bandwidth heuristic: gamma = 1 / (2 spacing^2), so neighbouring atoms overlap at exp(-1/2).
inline double gamma_rule_of_thumb(const Dictionary& dict) {
    const double delta = dict.spacing();
    if (!(delta > 0.0)) throw ParameterError("dictionary spacing must be positive");
    return 1.0 / (2.0 * delta * delta);
}

// ---------------------------------------------------------------------------------------------
// Fixed-form activations

inline Complex split_activation(Complex z, RealFn fn) { return {apply(fn, z.real()), apply(fn, z.imag())}; }

/// tanh(|z|) exp(i phase(z)); the origin maps to 0.
inline Complex phase_amplitude(Complex z) {
    const double r = std::abs(z);
    if (r == 0.0) return 0.0;
    return (std::tanh(r) / r) * z;
}

namespace detail {

/// tanh(r)/r and (d/dr (tanh(r)/r)) / r, with series near the origin.
inline void phase_amplitude_factors(double r, double& t, double& u) {
    if (r < 1e-3) {
        const double r2 = r * r;
        t = 1.0 - r2 / 3.0 + 2.0 * r2 * r2 / 15.0;
        u = -2.0 / 3.0 + 8.0 * r2 / 15.0;
        return;
    }
    const double th = std::tanh(r);
    const double sech2 = 1.0 - th * th;
    t = th / r;
    u = (r * sech2 - th) / (r * r * r);
}

/// Cogradient w.r.t. z given partials P = d out / d Re z and R = d out / d Im z.
inline Complex chain(Complex g, Complex P, Complex R) {
    return {(std::conj(g) * P).real(), (std::conj(g) * R).real()};
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Kernel expansions

/// Parameters of one neuron: mixing coefficients and log-bandwidths.
struct NeuronParams {
    std::span<const Complex> alpha;
    std::span<const double> log_gamma;
};

/// Per-atom kernel values, pseudo-kernel values and their partial derivatives for one input.
struct Expansion {
    std::vector<Complex> k, kt;              // [D]
    std::vector<Complex> k_a, k_b, kt_a, kt_b;  // d/dRe z, d/dIm z, [D]
    std::vector<Complex> k_s, kt_s;          // d/dlog gamma_p, [P x D] row-major

    void resize(std::size_t D, std::size_t P, bool derivs) {
        k.assign(D, Complex{});
        kt.assign(D, Complex{});
        if (derivs) {
            k_a.assign(D, Complex{});
            k_b.assign(D, Complex{});
            kt_a.assign(D, Complex{});
            kt_b.assign(D, Complex{});
            k_s.assign(P * D, Complex{});
            kt_s.assign(P * D, Complex{});
        }
    }
};

namespace detail {

/// Real Gaussian mixtures: k = sum_p c_p G_p, kt = sum_p ct_p G_p with G_p(z, d) = exp(-gamma_p |z-d|^2).
/// Covers the plain real-Gaussian KAF (P=1), Case 1 (P=2) and Case 2 (P=2Q).
struct GaussianMixture {
    std::vector<Complex> c, ct;
};

inline GaussianMixture mixture_for(const ActivationSpec& spec) {
    if (std::holds_alternative<KafSpec>(spec)) return {{1.0}, {0.0}};
    if (std::holds_alternative<WlKafCase1Spec>(spec)) return {{0.5, 0.5}, {0.5, -0.5}};
    const auto& c2 = std::get<WlKafCase2Spec>(spec);
    GaussianMixture m;
    for (double w : c2.omegas) {
        m.c.push_back(1.0);
        m.ct.push_back(0.0);
        m.c.push_back(0.0);
        m.ct.push_back(Complex(0.0, 2.0 * w));
    }
    return m;
}

inline void expand_mixture(const GaussianMixture& mix, Complex z, const Dictionary& dict,
                           std::span<const double> log_gamma, Expansion& ex, bool derivs) {
    const std::size_t m = dict.points_per_axis();
    const std::size_t D = dict.size();
    const std::size_t P = log_gamma.size();
    const auto& axis = dict.axis();
    ex.resize(D, P, derivs);
    std::vector<double> dx(m), dy(m), gx(m), gy(m);
    for (std::size_t i = 0; i < m; ++i) {
        dx[i] = z.real() - axis[i];
        dy[i] = z.imag() - axis[i];
    }
    for (std::size_t p = 0; p < P; ++p) {
        const double gamma = std::exp(log_gamma[p]);
        const Complex c = mix.c[p], ct = mix.ct[p];
        const bool has_c = c != Complex{}, has_ct = ct != Complex{};
        for (std::size_t i = 0; i < m; ++i) {
            gx[i] = std::exp(-gamma * dx[i] * dx[i]);
            gy[i] = std::exp(-gamma * dy[i] * dy[i]);
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t n = j * m + i;
                const double G = gx[i] * gy[j];
                if (has_c) ex.k[n] += c * G;
                if (has_ct) ex.kt[n] += ct * G;
                if (!derivs) continue;
                const double Ga = -2.0 * gamma * dx[i] * G;
                const double Gb = -2.0 * gamma * dy[j] * G;
                const double Gs = -gamma * (dx[i] * dx[i] + dy[j] * dy[j]) * G;
                if (has_c) {
                    ex.k_a[n] += c * Ga;
                    ex.k_b[n] += c * Gb;
                    ex.k_s[p * D + n] = c * Gs;
                }
                if (has_ct) {
                    ex.kt_a[n] += ct * Ga;
                    ex.kt_b[n] += ct * Gb;
                    ex.kt_s[p * D + n] = ct * Gs;
                }
            }
        }
    }
}

inline void expand_independent(Complex z, const Dictionary& dict, double log_gamma, Expansion& ex, bool derivs) {
    const std::size_t m = dict.points_per_axis();
    const std::size_t D = dict.size();
    const auto& axis = dict.axis();
    const double gamma = std::exp(log_gamma);
    ex.resize(D, 1, derivs);
    const double a = z.real(), b = z.imag();
    // re_re[i] = kR(a, x_i), im_im[j] = kR(b, y_j), re_im[j] = kR(a, y_j), im_re[i] = kR(b, x_i)
    std::vector<double> re_re(m), im_im(m), re_im(m), im_re(m);
    for (std::size_t i = 0; i < m; ++i) {
        re_re[i] = kernels::gaussian_real(a, axis[i], gamma);
        im_im[i] = kernels::gaussian_real(b, axis[i], gamma);
        re_im[i] = re_re[i];
        im_re[i] = im_im[i];
    }
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t n = j * m + i;
            const double A = re_re[i], B = im_im[j], C = re_im[j], E = im_re[i];
            ex.k[n] = Complex(A + B, C - E);
            if (!derivs) continue;
            const double ax = a - axis[i], by = b - axis[j], ay = a - axis[j], bx = b - axis[i];
            ex.k_a[n] = Complex(-2.0 * gamma * ax * A, -2.0 * gamma * ay * C);
            ex.k_b[n] = Complex(-2.0 * gamma * by * B, 2.0 * gamma * bx * E);
            ex.k_s[n] = -gamma * Complex(ax * ax * A + by * by * B, ay * ay * C - bx * bx * E);
        }
    }
}

inline void expand_complex_gaussian(Complex z, const Dictionary& dict, double log_gamma, Expansion& ex,
                                    bool derivs) {
    const std::size_t D = dict.size();
    const double gamma = std::exp(log_gamma);
    ex.resize(D, 1, derivs);
    for (std::size_t n = 0; n < D; ++n) {
        const Complex w = z - std::conj(dict.points()[n]);
        const Complex kv = kernels::gaussian_complex(z, dict.points()[n], gamma);
        ex.k[n] = kv;
        if (!derivs) continue;
        const Complex dz = -2.0 * gamma * w * kv;  // holomorphic in z
        ex.k_a[n] = dz;
        ex.k_b[n] = Complex(0.0, 1.0) * dz;
        ex.k_s[n] = -gamma * w * w * kv;
    }
}

}  // namespace detail

/// Fills the per-atom expansion of a kernel activation at input z.
inline void expand(const ActivationSpec& spec, const Dictionary& dict, Complex z, std::span<const double> log_gamma,
                   Expansion& ex, bool derivs) {
    if (log_gamma.size() != bandwidth_count(spec))
        throw DimensionError("expected " + std::to_string(bandwidth_count(spec)) + " log-bandwidths, got " +
                             std::to_string(log_gamma.size()));
    if (const auto* kaf = std::get_if<KafSpec>(&spec)) {
        switch (kaf->kernel) {
            case KernelType::Independent: detail::expand_independent(z, dict, log_gamma[0], ex, derivs); return;
            case KernelType::ComplexGaussian:
                detail::expand_complex_gaussian(z, dict, log_gamma[0], ex, derivs);
                return;
            case KernelType::RealGaussian: break;
        }
    }
    if (!has_kernel_expansion(spec)) throw ParameterError("activation " + describe(spec) + " has no kernel expansion");
    detail::expand_mixture(detail::mixture_for(spec), z, dict, log_gamma, ex, derivs);
}

/// Cogradients of one activation evaluation.
struct ActivationCogradients {
    Complex z;
    std::vector<Complex> alpha;    // empty for parameter-free activations
    std::vector<double> log_gamma;  // empty for parameter-free activations
};

/// Forward pass for a single scalar input of one neuron. `neuron` is ignored by the
/// parameter-free variants.
inline Complex activate(const ActivationSpec& spec, const Dictionary* dict, Complex z, const NeuronParams& neuron,
                        Expansion& ws) {
    if (const auto* s = std::get_if<SplitSpec>(&spec)) return split_activation(z, s->fn);
    if (std::holds_alternative<PhaseAmplitudeSpec>(spec)) return phase_amplitude(z);
    if (dict == nullptr) throw ParameterError("kernel activation requires a dictionary");
    if (neuron.alpha.size() != dict->size())
        throw DimensionError("alpha length " + std::to_string(neuron.alpha.size()) + " does not match dictionary size " +
                             std::to_string(dict->size()));
    expand(spec, *dict, z, neuron.log_gamma, ws, false);
    Complex out = 0.0;
    for (std::size_t n = 0; n < ws.k.size(); ++n) out += ws.k[n] * neuron.alpha[n] + ws.kt[n] * std::conj(neuron.alpha[n]);
    return out;
}

/// Backward pass for a single scalar input. Parameter cogradients are *added* into
/// `alpha_grad` / `log_gamma_grad` when those spans are non-empty. Returns the input cogradient.
inline Complex activate_backward(const ActivationSpec& spec, const Dictionary* dict, Complex z, Complex g,
                                 const NeuronParams& neuron, Expansion& ws, std::span<Complex> alpha_grad,
                                 std::span<double> log_gamma_grad) {
    if (const auto* s = std::get_if<SplitSpec>(&spec))
        return {g.real() * derivative(s->fn, z.real()), g.imag() * derivative(s->fn, z.imag())};
    if (std::holds_alternative<PhaseAmplitudeSpec>(spec)) {
        double t, u;
        detail::phase_amplitude_factors(std::abs(z), t, u);
        const Complex P = t + z * (u * z.real());
        const Complex R = Complex(0.0, t) + z * (u * z.imag());
        return detail::chain(g, P, R);
    }
    if (dict == nullptr) throw ParameterError("kernel activation requires a dictionary");
    expand(spec, *dict, z, neuron.log_gamma, ws, true);
    const std::size_t D = dict->size();
    const std::size_t P = neuron.log_gamma.size();
    Complex dA = 0.0, dB = 0.0;
    for (std::size_t n = 0; n < D; ++n) {
        const Complex al = neuron.alpha[n], alc = std::conj(al);
        dA += ws.k_a[n] * al + ws.kt_a[n] * alc;
        dB += ws.k_b[n] * al + ws.kt_b[n] * alc;
        if (!alpha_grad.empty()) alpha_grad[n] += std::conj(ws.k[n]) * g + ws.kt[n] * std::conj(g);
    }
    if (!log_gamma_grad.empty()) {
        for (std::size_t p = 0; p < P; ++p) {
            Complex ds = 0.0;
            for (std::size_t n = 0; n < D; ++n)
                ds += ws.k_s[p * D + n] * neuron.alpha[n] + ws.kt_s[p * D + n] * std::conj(neuron.alpha[n]);
            log_gamma_grad[p] += (std::conj(g) * ds).real();
        }
    }
    return detail::chain(g, dA, dB);
}

/// Single-neuron backward returning freshly allocated cogradients.
inline ActivationCogradients activation_backward(const ActivationSpec& spec, const Dictionary* dict, Complex cograd_out,
                                                 Complex z, const NeuronParams& neuron) {
    ActivationCogradients out;
    Expansion ws;
    if (has_kernel_expansion(spec)) {
        out.alpha.assign(neuron.alpha.size(), Complex{});
        out.log_gamma.assign(neuron.log_gamma.size(), 0.0);
    }
    out.z = activate_backward(spec, dict, z, cograd_out, neuron, ws, out.alpha, out.log_gamma);
    return out;
}

inline std::vector<double> log_bandwidths(const kernels::BandwidthParams& bw) {
    struct V {
        std::vector<double> operator()(const kernels::StandardBandwidth& b) const {
            kernels::require_positive_bandwidth(b.gamma);
            return {std::log(b.gamma)};
        }
        std::vector<double> operator()(const kernels::Case1Bandwidth& b) const {
            kernels::require_positive_bandwidth(b.gamma_rr);
            kernels::require_positive_bandwidth(b.gamma_ii);
            return {std::log(b.gamma_rr), std::log(b.gamma_ii)};
        }
        std::vector<double> operator()(const kernels::Case2Bandwidth& b) const {
            kernels::validate(b);
            std::vector<double> v;
            for (const auto& t : b.terms) {
                v.push_back(std::log(t.gamma));
                v.push_back(std::log(t.gamma_tilde));
            }
            return v;
        }
    };
    return std::visit(V{}, bw);
}

/// Standard KAF: k^T alpha with a single complex kernel.
inline Complex kaf_forward(Complex z, std::span<const Complex> alpha, const Dictionary& dict,
                           const kernels::KernelSpec& kernel) {
    Expansion ws;
    kernels::require_positive_bandwidth(kernel.gamma);
    const std::vector<double> lg{std::log(kernel.gamma)};
    return activate(KafSpec{kernel.type}, &dict, z, {alpha, lg}, ws);
}

/// Widely linear KAF: k^T alpha + k_tilde^T conj(alpha) with a Case 1 or Case 2 kernel pair.
inline Complex wlkaf_forward(Complex z, std::span<const Complex> alpha, const Dictionary& dict,
                             const kernels::BandwidthParams& bw) {
    ActivationSpec spec;
    if (std::holds_alternative<kernels::Case1Bandwidth>(bw)) {
        spec = WlKafCase1Spec{};
    } else if (const auto* c2 = std::get_if<kernels::Case2Bandwidth>(&bw)) {
        WlKafCase2Spec s;
        s.omegas.clear();
        for (const auto& t : c2->terms) s.omegas.push_back(t.omega);
        spec = s;
    } else {
        throw ParameterError("wlkaf_forward needs Case 1 or Case 2 bandwidths");
    }
    const auto lg = log_bandwidths(bw);
    Expansion ws;
    return activate(spec, &dict, z, {alpha, lg}, ws);
}

// ---------------------------------------------------------------------------------------------
// Initialization

/// Regularized least-squares fit of the expansion to `target` sampled on the dictionary atoms.
/// The expansion is real-linear in (Re alpha, Im alpha), so the fit is solved over those 2D reals:
/// (A^T A + ridge I) x = A^T y. With ridge = 0 the system must have full rank.
inline std::vector<Complex> init_alpha(const Dictionary& dict, const ActivationSpec& spec,
                                       std::span<const double> log_gamma,
                                       const std::function<Complex(Complex)>& target, double ridge) {
    if (!(ridge >= 0.0)) throw ParameterError("ridge must be nonnegative");
    if (!has_kernel_expansion(spec)) throw ParameterError("init_alpha needs a kernel activation");
    const auto D = static_cast<Eigen::Index>(dict.size());
    Eigen::MatrixXd A(2 * D, 2 * D);
    Eigen::VectorXd y(2 * D);
    Expansion ws;
    for (Eigen::Index r = 0; r < D; ++r) {
        const Complex d = dict.points()[static_cast<std::size_t>(r)];
        expand(spec, dict, d, log_gamma, ws, false);
        for (Eigen::Index n = 0; n < D; ++n) {
            const Complex k = ws.k[static_cast<std::size_t>(n)], kt = ws.kt[static_cast<std::size_t>(n)];
            const Complex unit_re = k + kt;                        // response to alpha_n = 1
            const Complex unit_im = Complex(0.0, 1.0) * (k - kt);  // response to alpha_n = i
            A(2 * r, n) = unit_re.real();
            A(2 * r + 1, n) = unit_re.imag();
            A(2 * r, D + n) = unit_im.real();
            A(2 * r + 1, D + n) = unit_im.imag();
        }
        const Complex t = target(d);
        y(2 * r) = t.real();
        y(2 * r + 1) = t.imag();
    }
    Eigen::VectorXd x;
    if (ridge > 0.0) {
        Eigen::MatrixXd normal = A.transpose() * A;
        normal.diagonal().array() += ridge;
        x = normal.ldlt().solve(A.transpose() * y);
    } else {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        if (qr.rank() < A.cols())
            throw NumericError("init_alpha: kernel system is singular (rank " + std::to_string(qr.rank()) + " < " +
                               std::to_string(A.cols()) + "); use ridge > 0");
        x = qr.solve(y);
    }
    if (!cnum::all_finite(x)) throw NumericError("init_alpha: solution is not finite");
    std::vector<Complex> alpha(dict.size());
    for (Eigen::Index n = 0; n < D; ++n) alpha[static_cast<std::size_t>(n)] = Complex(x(n), x(D + n));
    return alpha;
}

/// ||f_alpha(d) - target(d)|| / ||target(d)|| over the dictionary points.
inline double fit_relative_residual(const Dictionary& dict, const ActivationSpec& spec, std::span<const double> log_gamma,
                                    std::span<const Complex> alpha, const std::function<Complex(Complex)>& target) {
    Expansion ws;
    double num = 0.0, den = 0.0;
    for (const Complex d : dict.points()) {
        const Complex t = target(d);
        num += std::norm(activate(spec, &dict, d, {alpha, log_gamma}, ws) - t);
        den += std::norm(t);
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Fits with a larger relative residual are rejected by ActivationLayer::initialize.
inline constexpr double kMaxIdentityResidual = 0.5;

struct AlphaInit {
    enum class Mode { IdentityFit, Random } mode = Mode::IdentityFit;
    double ridge = 1e-4;
    double random_std = 0.3;
};

// ---------------------------------------------------------------------------------------------
// Layer of neurons sharing one activation family

/// Element-wise activation over a layer of `width` neurons. Kernel variants keep per-neuron
/// parameters in contiguous arrays: alpha [width x D] and log_gamma [width x P].
class ActivationLayer {
public:
    ActivationLayer() = default;

    ActivationLayer(ActivationSpec spec, std::shared_ptr<const Dictionary> dict, std::size_t width)
        : spec_(std::move(spec)), dict_(std::move(dict)), width_(width) {
        validate(spec_);
        if (width_ == 0) throw ParameterError("activation layer width must be positive");
        if (has_kernel_expansion(spec_)) {
            if (!dict_) throw ParameterError("kernel activation requires a dictionary");
            alpha_ = ComplexTensor({width_, dict_->size()});
            alpha_grad_ = ComplexTensor(alpha_.shape());
            log_gamma_ = RealTensor({width_, bandwidth_count(spec_)}, std::log(gamma_rule_of_thumb(*dict_)));
            log_gamma_grad_ = RealTensor(log_gamma_.shape());
        }
    }

    /// Sets every neuron's alpha per `init`. Bandwidths must already be in place.
    void initialize(const AlphaInit& init, std::mt19937_64& rng) {
        if (!has_kernel_expansion(spec_)) return;
        const std::size_t D = dict_->size();
        if (init.mode == AlphaInit::Mode::IdentityFit) {
            // The independent kernel on a square grid only spans h(Re z) - i h(Im z), so the identity
            // fit collapses to alpha ~ 0 (zero outputs, zero gradients). Its representable linear maps
            // are q conj(z); conj(z) is the norm-preserving one, so it is the next target tried.
            const std::function<Complex(Complex)> targets[] = {[](Complex z) { return z; },
                                                               [](Complex z) { return std::conj(z); }};
            for (const auto& target : targets) {
                const auto alpha = init_alpha(*dict_, spec_, neuron(0).log_gamma, target, init.ridge);
                fit_residual_ = fit_relative_residual(*dict_, spec_, neuron(0).log_gamma, alpha, target);
                fit_target_ = &target == &targets[0] ? FitTarget::Identity : FitTarget::Conjugate;
                if (fit_residual_ <= kMaxIdentityResidual) {
                    for (std::size_t n = 0; n < width_; ++n)
                        for (std::size_t j = 0; j < D; ++j) alpha_[n * D + j] = alpha[j];
                    return;
                }
            }
        }
        fit_target_ = FitTarget::Random;
        {
            std::normal_distribution<double> normal(0.0, init.random_std);
            for (std::size_t i = 0; i < alpha_.size(); ++i) alpha_[i] = Complex(normal(rng), normal(rng));
        }
    }

    enum class FitTarget { None, Identity, Conjugate, Random };
    /// Which start initialize() ended up using.
    FitTarget fit_target() const noexcept { return fit_target_; }
    /// Relative residual of the last fit attempt (NaN before initialize()).
    double fit_residual() const noexcept { return fit_residual_; }

    const ActivationSpec& spec() const noexcept { return spec_; }
    std::size_t width() const noexcept { return width_; }
    const Dictionary* dictionary() const noexcept { return dict_.get(); }
    std::shared_ptr<const Dictionary> shared_dictionary() const noexcept { return dict_; }
    bool has_parameters() const noexcept { return has_kernel_expansion(spec_); }

    ComplexTensor& alpha() noexcept { return alpha_; }
    const ComplexTensor& alpha() const noexcept { return alpha_; }
    RealTensor& log_gamma() noexcept { return log_gamma_; }
    const RealTensor& log_gamma() const noexcept { return log_gamma_; }
    const ComplexTensor& alpha_grad() const noexcept { return alpha_grad_; }
    const RealTensor& log_gamma_grad() const noexcept { return log_gamma_grad_; }

    NeuronParams neuron(std::size_t n) const {
        if (!has_parameters()) return {};
        const std::size_t D = dict_->size(), P = log_gamma_.dim(1);
        return {alpha_.data().subspan(n * D, D), log_gamma_.data().subspan(n * P, P)};
    }

    /// Z is [width x batch]; returns g(Z) element-wise.
    CMatrix forward(const CMatrix& Z) const {
        check_rows(Z);
        CMatrix out(Z.rows(), Z.cols());
        if (fast_path() != FastPath::None) {
            fast_pass(Z, nullptr, out, nullptr);
            return out;
        }
        Expansion ws;
        for (Eigen::Index b = 0; b < Z.cols(); ++b)
            for (Eigen::Index n = 0; n < Z.rows(); ++n)
                out(n, b) = activate(spec_, dict_.get(), Z(n, b), neuron(static_cast<std::size_t>(n)), ws);
        return out;
    }

    /// Given the cached pre-activations Z and output cogradients G, returns input cogradients and
    /// accumulates parameter cogradients (call zero_grad() between independent passes).
    CMatrix backward(const CMatrix& Z, const CMatrix& G) {
        check_rows(Z);
        if (G.rows() != Z.rows() || G.cols() != Z.cols())
            throw DimensionError("activation backward: cogradient shape does not match cached input");
        CMatrix gz(Z.rows(), Z.cols());
        if (fast_path() != FastPath::None) {
            fast_pass(Z, &G, gz, this);
            return gz;
        }
        Expansion ws;
        const bool params = has_parameters();
        const std::size_t D = params ? dict_->size() : 0, P = params ? log_gamma_.dim(1) : 0;
        for (Eigen::Index b = 0; b < Z.cols(); ++b)
            for (Eigen::Index n = 0; n < Z.rows(); ++n) {
                const auto nn = static_cast<std::size_t>(n);
                std::span<Complex> ag = params ? alpha_grad_.data().subspan(nn * D, D) : std::span<Complex>{};
                std::span<double> lg = params ? log_gamma_grad_.data().subspan(nn * P, P) : std::span<double>{};
                gz(n, b) = activate_backward(spec_, dict_.get(), Z(n, b), G(n, b), neuron(nn), ws, ag, lg);
            }
        return gz;
    }

    /// Routes layer passes through the generic per-scalar routines (used to cross-check the fast paths).
    void set_reference_mode(bool on) noexcept { reference_mode_ = on; }

    void zero_grad() {
        alpha_grad_.fill(Complex{});
        log_gamma_grad_.fill(0.0);
    }

    void append_parameters(std::vector<cnum::ParamView>& out, const std::string& prefix) {
        if (!has_parameters()) return;
        out.push_back(cnum::make_view(prefix + ".alpha", "alpha", alpha_, alpha_grad_));
        out.push_back(cnum::make_view(prefix + ".log_gamma", "log_gamma", log_gamma_, log_gamma_grad_));
    }

    std::size_t alpha_count() const noexcept { return has_parameters() ? alpha_.size() : 0; }

private:
    enum class FastPath { None, Mixture, Independent };

    FastPath fast_path() const {
        if (reference_mode_ || !has_parameters()) return FastPath::None;
        if (const auto* k = std::get_if<KafSpec>(&spec_)) {
            if (k->kernel == KernelType::Independent) return FastPath::Independent;
            if (k->kernel == KernelType::ComplexGaussian) return FastPath::None;
        }
        return FastPath::Mixture;
    }

    // Batched forward (G == nullptr) or backward pass for the kernels whose atoms factor over the
    // grid axes. Writes outputs or input cogradients to `out`; backward accumulates into `grads`.
    void fast_pass(const CMatrix& Z, const CMatrix* G, CMatrix& out, ActivationLayer* grads) const {
        const std::size_t m = dict_->points_per_axis(), D = dict_->size(), P = log_gamma_.dim(1);
        const auto& axis = dict_->axis();
        const bool back = G != nullptr;
        const Eigen::Index B = Z.cols();
        std::vector<double> dx(m), dy(m), gx(m), gy(m);
        if (fast_path() == FastPath::Independent) {
            // k_n = kR(a,x_i) + kR(b,y_j) + i[kR(a,y_j) - kR(b,x_i)] with x and y on the same axis, so
            // sum_n k_n alpha_n only needs the row and column sums of alpha on the grid.
            std::vector<Complex> col(m), row(m);
            for (std::size_t n = 0; n < width_; ++n) {
                const double gamma = std::exp(log_gamma_[n * P]);
                const Complex* al = alpha_.data().data() + n * D;
                std::fill(col.begin(), col.end(), Complex{});
                std::fill(row.begin(), row.end(), Complex{});
                for (std::size_t j = 0; j < m; ++j)
                    for (std::size_t i = 0; i < m; ++i) {
                        col[i] += al[j * m + i];
                        row[j] += al[j * m + i];
                    }
                for (Eigen::Index b = 0; b < B; ++b) {
                    const Complex z = Z(static_cast<Eigen::Index>(n), b);
                    for (std::size_t i = 0; i < m; ++i) {
                        dx[i] = z.real() - axis[i];
                        dy[i] = z.imag() - axis[i];
                        gx[i] = std::exp(-gamma * dx[i] * dx[i]);  // kR(a, t_i)
                        gy[i] = std::exp(-gamma * dy[i] * dy[i]);  // kR(b, t_i)
                    }
                    if (!back) {
                        Complex v = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            v += Complex(gx[i], -gy[i]) * col[i] + Complex(gy[i], gx[i]) * row[i];
                        out(static_cast<Eigen::Index>(n), b) = v;
                        continue;
                    }
                    const Complex g = (*G)(static_cast<Eigen::Index>(n), b);
                    Complex dA = 0.0, dB = 0.0, ds = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        const double ga = -2.0 * gamma * dx[i] * gx[i], gb = -2.0 * gamma * dy[i] * gy[i];
                        dA += ga * col[i] + Complex(0.0, ga) * row[i];
                        dB += Complex(0.0, -gb) * col[i] + gb * row[i];
                        const double sa = -gamma * dx[i] * dx[i] * gx[i], sb = -gamma * dy[i] * dy[i] * gy[i];
                        ds += Complex(sa, -sb) * col[i] + Complex(sb, sa) * row[i];
                    }
                    out(static_cast<Eigen::Index>(n), b) = detail::chain(g, dA, dB);
                    grads->log_gamma_grad_[n * P] += (std::conj(g) * ds).real();
                    Complex* ag = grads->alpha_grad_.data().data() + n * D;
                    for (std::size_t j = 0; j < m; ++j)
                        for (std::size_t i = 0; i < m; ++i)
                            ag[j * m + i] += std::conj(Complex(gx[i] + gy[j], gx[j] - gy[i])) * g;
                }
            }
            return;
        }
        // Gaussian mixtures: out = sum_p sum_ij gx_p[i] gy_p[j] beta_p[j*m+i] with beta_p = c_p alpha + ct_p conj(alpha).
        const auto mix = detail::mixture_for(spec_);
        std::vector<Complex> beta(P * D);
        for (std::size_t n = 0; n < width_; ++n) {
            const Complex* al = alpha_.data().data() + n * D;
            const double* lg = log_gamma_.data().data() + n * P;
            for (std::size_t p = 0; p < P; ++p)
                for (std::size_t d = 0; d < D; ++d) beta[p * D + d] = mix.c[p] * al[d] + mix.ct[p] * std::conj(al[d]);
            for (Eigen::Index b = 0; b < B; ++b) {
                const Complex z = Z(static_cast<Eigen::Index>(n), b);
                const Complex g = back ? (*G)(static_cast<Eigen::Index>(n), b) : Complex{};
                for (std::size_t i = 0; i < m; ++i) {
                    dx[i] = z.real() - axis[i];
                    dy[i] = z.imag() - axis[i];
                }
                Complex v = 0.0, dA = 0.0, dB = 0.0;
                for (std::size_t p = 0; p < P; ++p) {
                    const double gamma = std::exp(lg[p]);
                    for (std::size_t i = 0; i < m; ++i) {
                        gx[i] = std::exp(-gamma * dx[i] * dx[i]);
                        gy[i] = std::exp(-gamma * dy[i] * dy[i]);
                    }
                    const Complex* bp = beta.data() + p * D;
                    if (!back) {
                        for (std::size_t j = 0; j < m; ++j) {
                            Complex rj = 0.0;
                            for (std::size_t i = 0; i < m; ++i) rj += gx[i] * bp[j * m + i];
                            v += gy[j] * rj;
                        }
                        continue;
                    }
                    Complex pa = 0.0, pb = 0.0, s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < m; ++j) {
                        Complex rj = 0.0, raj = 0.0, rsj = 0.0;
                        for (std::size_t i = 0; i < m; ++i) {
                            const Complex t = gx[i] * bp[j * m + i];
                            rj += t;
                            raj += dx[i] * t;
                            rsj += dx[i] * dx[i] * t;
                        }
                        pa += gy[j] * raj;
                        pb += dy[j] * gy[j] * rj;
                        s1 += gy[j] * rsj;
                        s2 += dy[j] * dy[j] * gy[j] * rj;
                    }
                    dA += -2.0 * gamma * pa;
                    dB += -2.0 * gamma * pb;
                    grads->log_gamma_grad_[n * P + p] += (std::conj(g) * (-gamma * (s1 + s2))).real();
                    const Complex e = std::conj(mix.c[p]) * g + mix.ct[p] * std::conj(g);
                    Complex* ag = grads->alpha_grad_.data().data() + n * D;
                    for (std::size_t j = 0; j < m; ++j) {
                        const Complex ej = e * gy[j];
                        for (std::size_t i = 0; i < m; ++i) ag[j * m + i] += ej * gx[i];
                    }
                }
                out(static_cast<Eigen::Index>(n), b) = back ? detail::chain(g, dA, dB) : v;
            }
        }
    }

    void check_rows(const CMatrix& Z) const {
        if (static_cast<std::size_t>(Z.rows()) != width_)
            throw DimensionError("activation layer of width " + std::to_string(width_) + " received " +
                                 std::to_string(Z.rows()) + " rows");
    }

    ActivationSpec spec_ = SplitSpec{};
    std::shared_ptr<const Dictionary> dict_;
    std::size_t width_ = 0;
    ComplexTensor alpha_, alpha_grad_;
    RealTensor log_gamma_, log_gamma_grad_;
    bool reference_mode_ = false;
    double fit_residual_ = std::numeric_limits<double>::quiet_NaN();
    FitTarget fit_target_ = FitTarget::None;
};

}  // namespace wlkaf::act
