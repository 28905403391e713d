#pragma once

// Feedforward complex-valued network: hidden layers of complex affine maps followed by an
// element-wise activation, and a final complex affine map whose output h is turned into
// class probabilities by p_n proportional to exp(|h_n|^2).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wlkaf/activations.hpp"
#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/kernels.hpp"

namespace wlkaf::net {

using cnum::CMatrix;
using cnum::Complex;
using cnum::ComplexTensor;
using cnum::CVector;
using cnum::RealTensor;

enum class LossType { CrossEntropy, SquaredError };

/// Regularized training objective: mean data loss over the batch plus C * ||w||^2 over every
/// trainable parameter.
struct TrainObjective {
    LossType loss = LossType::CrossEntropy;
    double C = 0.0;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// p_n = exp(|h_n|^2) / sum_t exp(|h_t|^2), computed after subtracting max_t |h_t|^2.
inline std::vector<double> complex_softmax(std::span<const Complex> h) {
    if (h.empty()) throw DimensionError("complex_softmax needs at least one class");
    std::vector<double> p(h.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < h.size(); ++i) {
        p[i] = std::norm(h[i]);
        mx = std::max(mx, p[i]);
    }
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

/// (y - y_hat)^H (y - y_hat).
inline double squared_loss(std::span<const Complex> y, std::span<const Complex> y_hat) {
    if (y.size() != y_hat.size())
        throw DimensionError("squared_loss: lengths " + std::to_string(y.size()) + " and " +
                             std::to_string(y_hat.size()) + " differ");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += std::norm(y[i] - y_hat[i]);
    return s;
}

/// -log p[label], with p clamped below at 1e-12.
inline double cross_entropy(std::span<const double> p, std::size_t label) {
    if (label >= p.size())
        throw IndexError("label " + std::to_string(label) + " out of range for " + std::to_string(p.size()) +
                         " classes");
    return -std::log(std::max(p[label], kProbabilityFloor));
}

/// -log softmax(scores)[label] as logsumexp(scores) - scores[label]. Used for training: it needs
/// no probability floor, so its gradient never vanishes on a saturated wrong prediction.
inline double cross_entropy_from_scores(std::span<const double> scores, std::size_t label) {
    if (label >= scores.size()) throw IndexError("label " + std::to_string(label) + " out of range");
    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double v : scores) sum += std::exp(v - mx);
    return mx + std::log(sum) - scores[label];
}

/// Index of the largest probability; ties go to the lowest index.
template <class Vec>
std::size_t argmax(const Vec& p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < static_cast<std::size_t>(p.size()); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

struct DictionaryConfig {
    std::size_t points_per_axis = 8;
    double lo = -2.0, hi = 2.0;
};

struct NetworkConfig {
    std::size_t input_dim = 100;
    std::vector<std::size_t> hidden{100, 100, 100};
    std::size_t classes = 10;
    act::ActivationSpec activation = act::WlKafCase1Spec{};
    DictionaryConfig dictionary;
    act::AlphaInit alpha_init;
    double init_gain = 1.0;  // W entries ~ init_gain * CN(0, 1/fan_in)
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim == 0) throw ParameterError("input dimension must be positive");
        if (hidden.empty()) throw ParameterError("network needs at least one hidden layer");
        for (auto w : hidden)
            if (w == 0) throw ParameterError("hidden layer widths must be positive");
        if (classes == 0) throw ParameterError("class count must be positive");
        if (!(init_gain > 0.0)) throw ParameterError("init_gain must be positive");
        act::validate(activation);
    }
};

/// One complex affine map with its cogradient storage.
struct AffineLayer {
    ComplexTensor W, b, gW, gb;

    AffineLayer() = default;
    AffineLayer(std::size_t out, std::size_t in) : W({out, in}), b({out}), gW({out, in}), gb({out}) {}

    std::size_t out_dim() const { return W.dim(0); }
    std::size_t in_dim() const { return W.dim(1); }

    CMatrix forward(const CMatrix& X) const { return cnum::affine_batch(W.mat(), X, b.vec()); }

    /// Accumulates gW += G X^H, gb += G 1 and returns W^H G.
    CMatrix backward(const CMatrix& X, const CMatrix& G) {
        gW.mat() += G * X.adjoint();
        gb.vec() += G.rowwise().sum();
        return W.mat().adjoint() * G;
    }

    void zero_grad() {
        gW.fill(Complex{});
        gb.fill(Complex{});
    }
};

/// Intermediate values of a batched forward pass, consumed by backward().
struct ForwardCache {
    std::vector<CMatrix> inputs;  // input to each affine layer (hidden layers and output)
    std::vector<CMatrix> preacts;  // pre-activations of hidden layers
    CMatrix logits;                // [classes x batch]
    std::uint64_t generation = 0;
};

class ComplexNetwork {
public:
    ComplexNetwork() = default;

    explicit ComplexNetwork(NetworkConfig config) : config_(std::move(config)) {
        config_.validate();
        if (act::has_kernel_expansion(config_.activation))
            dict_ = std::make_shared<const kernels::Dictionary>(config_.dictionary.points_per_axis,
                                                                config_.dictionary.lo, config_.dictionary.hi);
        std::size_t in = config_.input_dim;
        for (auto w : config_.hidden) {
            hidden_.emplace_back(w, in);
            acts_.emplace_back(config_.activation, dict_, w);
            in = w;
        }
        output_ = AffineLayer(config_.classes, in);
        initialize();
    }

    const NetworkConfig& config() const noexcept { return config_; }
    std::size_t classes() const noexcept { return config_.classes; }
    std::size_t input_dim() const noexcept { return config_.input_dim; }
    std::size_t hidden_count() const noexcept { return hidden_.size(); }
    const kernels::Dictionary* dictionary() const noexcept { return dict_.get(); }

    AffineLayer& hidden(std::size_t i) { return hidden_.at(i); }
    const AffineLayer& hidden(std::size_t i) const { return hidden_.at(i); }
    act::ActivationLayer& activation(std::size_t i) { return acts_.at(i); }
    const act::ActivationLayer& activation(std::size_t i) const { return acts_.at(i); }
    AffineLayer& output() { return output_; }
    const AffineLayer& output() const { return output_; }

    /// Mutable access to parameter storage; invalidates outstanding forward caches.
    std::vector<cnum::ParamView> parameters() {
        ++generation_;
        return views();
    }

    std::uint64_t generation() const noexcept { return generation_; }

    /// Trainable mixing coefficients across all hidden layers.
    std::size_t alpha_count() const {
        std::size_t n = 0;
        for (const auto& a : acts_) n += a.alpha_count();
        return n;
    }

    /// X is [input_dim x batch]; columns are samples.
    ForwardCache forward(const CMatrix& X) const {
        if (static_cast<std::size_t>(X.rows()) != config_.input_dim)
            throw DimensionError("network expects " + std::to_string(config_.input_dim) + " inputs, got " +
                                 std::to_string(X.rows()));
        ForwardCache c;
        c.generation = generation_;
        CMatrix h = X;
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            CMatrix z = hidden_[i].forward(h);
            CMatrix a = acts_[i].forward(z);
            c.inputs.push_back(std::move(h));
            c.preacts.push_back(std::move(z));
            h = std::move(a);
        }
        c.logits = output_.forward(h);
        c.inputs.push_back(std::move(h));
        return c;
    }

    CMatrix logits(const CMatrix& X) const { return forward(X).logits; }

    /// Class probabilities [classes x batch].
    Eigen::MatrixXd predict_proba(const CMatrix& X) const {
        const CMatrix H = logits(X);
        Eigen::MatrixXd P(H.rows(), H.cols());
        for (Eigen::Index b = 0; b < H.cols(); ++b) {
            const CVector col = H.col(b);
            const auto p = complex_softmax({col.data(), static_cast<std::size_t>(col.size())});
            for (Eigen::Index n = 0; n < H.rows(); ++n) P(n, b) = p[static_cast<std::size_t>(n)];
        }
        return P;
    }

    /// Mean data loss of a cached forward pass.
    double data_loss(const ForwardCache& c, std::span<const int> labels, LossType loss) const {
        check_labels(c, labels);
        double total = 0.0;
        for (Eigen::Index b = 0; b < c.logits.cols(); ++b) {
            const CVector h = c.logits.col(b);
            const std::span<const Complex> hs{h.data(), static_cast<std::size_t>(h.size())};
            const auto label = static_cast<std::size_t>(labels[static_cast<std::size_t>(b)]);
            if (loss == LossType::CrossEntropy) {
                std::vector<double> scores(hs.size());
                for (std::size_t t = 0; t < hs.size(); ++t) scores[t] = std::norm(hs[t]);
                total += cross_entropy_from_scores(scores, label);
            } else {
                std::vector<Complex> y(h.size(), Complex{});
                y.at(label) = 1.0;
                total += squared_loss(y, hs);
            }
        }
        return total / static_cast<double>(c.logits.cols());
    }

    double regularizer() const {
        double s = 0.0;
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            s += cnum::hermitian_norm_sq(hidden_[i].W) + cnum::hermitian_norm_sq(hidden_[i].b);
            if (acts_[i].has_parameters())
                s += cnum::hermitian_norm_sq(acts_[i].alpha()) + cnum::hermitian_norm_sq(acts_[i].log_gamma());
        }
        return s + cnum::hermitian_norm_sq(output_.W) + cnum::hermitian_norm_sq(output_.b);
    }

    /// Regularized objective on a batch.
    double objective(const CMatrix& X, std::span<const int> labels, const TrainObjective& obj) const {
        if (X.cols() == 0) throw DimensionError("objective needs a nonempty batch");
        const auto c = forward(X);
        const double J = data_loss(c, labels, obj.loss) + obj.C * regularizer();
        if (!std::isfinite(J)) throw NumericError(nonfinite_message("objective"));
        return J;
    }

    /// Fills every parameter cogradient for the regularized objective of the cached batch.
    void backward(const ForwardCache& c, std::span<const int> labels, const TrainObjective& obj) {
        if (c.generation != generation_)
            throw StateError("forward cache is stale: parameters changed since the forward pass");
        check_labels(c, labels);
        zero_grad();
        const double inv_batch = 1.0 / static_cast<double>(c.logits.cols());
        CMatrix G(c.logits.rows(), c.logits.cols());
        for (Eigen::Index b = 0; b < c.logits.cols(); ++b) {
            const CVector h = c.logits.col(b);
            const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(b)]);
            if (obj.loss == LossType::CrossEntropy) {
                // d(-log p_l)/d|h_t|^2 = p_t - [t == l]; the cogradient of |h|^2 is 2h.
                const auto p = complex_softmax({h.data(), static_cast<std::size_t>(h.size())});
                for (Eigen::Index t = 0; t < h.size(); ++t) {
                    const double w = p[static_cast<std::size_t>(t)] - (t == label ? 1.0 : 0.0);
                    G(t, b) = 2.0 * w * h(t) * inv_batch;
                }
            } else {
                for (Eigen::Index t = 0; t < h.size(); ++t)
                    G(t, b) = 2.0 * (h(t) - (t == label ? Complex(1.0) : Complex(0.0))) * inv_batch;
            }
        }
        CMatrix g = output_.backward(c.inputs.back(), G);
        for (std::size_t i = hidden_.size(); i-- > 0;) {
            g = acts_[i].backward(c.preacts[i], g);
            g = hidden_[i].backward(c.inputs[i], g);
        }
        if (obj.C != 0.0) add_regularizer_grad(obj.C);
    }

    /// Objective value on a batch with cogradients left in the parameter grad buffers.
    double loss_and_grad(const CMatrix& X, std::span<const int> labels, const TrainObjective& obj) {
        const auto c = forward(X);
        const double J = data_loss(c, labels, obj.loss) + obj.C * regularizer();
        if (!std::isfinite(J)) throw NumericError(nonfinite_message("training objective"));
        backward(c, labels, obj);
        return J;
    }

    void zero_grad() {
        for (auto& l : hidden_) l.zero_grad();
        for (auto& a : acts_) a.zero_grad();
        output_.zero_grad();
    }

    /// Reinitializes parameters from config().seed.
    void initialize() {
        std::mt19937_64 rng(config_.seed);
        auto init_affine = [&](AffineLayer& l) {
            std::normal_distribution<double> normal(0.0, config_.init_gain * std::sqrt(0.5 / static_cast<double>(l.in_dim())));
            for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] = Complex(normal(rng), normal(rng));
            l.b.fill(Complex{});
        };
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            init_affine(hidden_[i]);
            acts_[i].initialize(config_.alpha_init, rng);
        }
        init_affine(output_);
        ++generation_;
    }

private:
    void check_labels(const ForwardCache& c, std::span<const int> labels) const {
        if (labels.size() != static_cast<std::size_t>(c.logits.cols()))
            throw DimensionError("label count does not match batch size");
        for (int l : labels)
            if (l < 0 || static_cast<std::size_t>(l) >= config_.classes)
                throw IndexError("label " + std::to_string(l) + " out of range");
    }

    std::vector<cnum::ParamView> views() {
        std::vector<cnum::ParamView> out;
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            const std::string p = "hidden" + std::to_string(i);
            out.push_back(cnum::make_view(p + ".W", "W", hidden_[i].W, hidden_[i].gW));
            out.push_back(cnum::make_view(p + ".b", "b", hidden_[i].b, hidden_[i].gb));
            acts_[i].append_parameters(out, p + ".act");
        }
        out.push_back(cnum::make_view("output.W", "W", output_.W, output_.gW));
        out.push_back(cnum::make_view("output.b", "b", output_.b, output_.gb));
        return out;
    }

    void add_regularizer_grad(double C) {
        for (auto& v : views())
            for (std::size_t i = 0; i < v.value.size(); ++i) v.grad[i] += 2.0 * C * v.value[i];
    }

    std::string nonfinite_message(const std::string& what) const {
        std::string msg = what + " is not finite;";
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            msg += " |W" + std::to_string(i) + "|^2=" + std::to_string(cnum::hermitian_norm_sq(hidden_[i].W));
            if (acts_[i].has_parameters())
                msg += " |alpha" + std::to_string(i) + "|^2=" + std::to_string(cnum::hermitian_norm_sq(acts_[i].alpha())) +
                       " max log_gamma" + std::to_string(i) + "=" +
                       std::to_string(acts_[i].log_gamma().vec().maxCoeff());
        }
        return msg;
    }

    NetworkConfig config_;
    std::shared_ptr<const kernels::Dictionary> dict_;
    std::vector<AffineLayer> hidden_;
    std::vector<act::ActivationLayer> acts_;
    AffineLayer output_;
    std::uint64_t generation_ = 0;
};

}  // namespace wlkaf::net
