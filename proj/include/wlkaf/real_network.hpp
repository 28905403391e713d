#pragma once

// Real-valued baseline: a ReLU MLP of the same widths that reads the concatenation
// [Re(x); Im(x)] of a complex input and ends in a standard softmax.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/network.hpp"

namespace wlkaf::net {

using cnum::RMatrix;

struct RealLayer {
    RealTensor W, b, gW, gb;

    RealLayer() = default;
    RealLayer(std::size_t out, std::size_t in) : W({out, in}), b({out}), gW({out, in}), gb({out}) {}

    std::size_t in_dim() const { return W.dim(1); }

    RMatrix forward(const RMatrix& X) const {
        RMatrix Y = W.mat() * X;
        Y.colwise() += b.vec();
        return Y;
    }

    RMatrix backward(const RMatrix& X, const RMatrix& G) {
        gW.mat() += G * X.transpose();
        gb.vec() += G.rowwise().sum();
        return W.mat().transpose() * G;
    }

    void zero_grad() {
        gW.fill(0.0);
        gb.fill(0.0);
    }
};

/// Stacks real parts over imaginary parts: [F x B] complex -> [2F x B] real.
inline RMatrix split_real_imag(const CMatrix& X) {
    RMatrix R(2 * X.rows(), X.cols());
    R.topRows(X.rows()) = X.real();
    R.bottomRows(X.rows()) = X.imag();
    return R;
}

inline std::vector<double> softmax(std::span<const double> h) {
    if (h.empty()) throw DimensionError("softmax needs at least one class");
    double mx = h[0];
    for (double v : h) mx = std::max(mx, v);
    std::vector<double> p(h.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) sum += (p[i] = std::exp(h[i] - mx));
    for (double& v : p) v /= sum;
    return p;
}

struct RealForwardCache {
    std::vector<RMatrix> inputs;
    std::vector<RMatrix> preacts;
    RMatrix logits;
    std::uint64_t generation = 0;
};

/// `config.input_dim` is the complex input dimension F; the first layer has 2F inputs.
/// The activation field of the config is ignored (hidden units are ReLU).
class RealNetwork {
public:
    RealNetwork() = default;

    explicit RealNetwork(NetworkConfig config) : config_(std::move(config)) {
        config_.validate();
        std::size_t in = 2 * config_.input_dim;
        for (auto w : config_.hidden) {
            hidden_.emplace_back(w, in);
            in = w;
        }
        output_ = RealLayer(config_.classes, in);
        initialize();
    }

    const NetworkConfig& config() const noexcept { return config_; }
    std::size_t classes() const noexcept { return config_.classes; }
    std::size_t hidden_count() const noexcept { return hidden_.size(); }
    RealLayer& hidden(std::size_t i) { return hidden_.at(i); }
    const RealLayer& hidden(std::size_t i) const { return hidden_.at(i); }
    RealLayer& output() { return output_; }
    const RealLayer& output() const { return output_; }

    std::vector<cnum::ParamView> parameters() {
        ++generation_;
        return views();
    }
    std::uint64_t generation() const noexcept { return generation_; }

    RealForwardCache forward(const CMatrix& X) const {
        if (static_cast<std::size_t>(X.rows()) != config_.input_dim)
            throw DimensionError("network expects " + std::to_string(config_.input_dim) + " complex inputs, got " +
                                 std::to_string(X.rows()));
        RealForwardCache c;
        c.generation = generation_;
        RMatrix h = split_real_imag(X);
        for (const auto& l : hidden_) {
            RMatrix z = l.forward(h);
            RMatrix a = z.cwiseMax(0.0);
            c.inputs.push_back(std::move(h));
            c.preacts.push_back(std::move(z));
            h = std::move(a);
        }
        c.logits = output_.forward(h);
        c.inputs.push_back(std::move(h));
        return c;
    }

    Eigen::MatrixXd predict_proba(const CMatrix& X) const {
        const RMatrix H = forward(X).logits;
        Eigen::MatrixXd P(H.rows(), H.cols());
        for (Eigen::Index b = 0; b < H.cols(); ++b) {
            const Eigen::VectorXd col = H.col(b);
            const auto p = softmax({col.data(), static_cast<std::size_t>(col.size())});
            for (Eigen::Index n = 0; n < H.rows(); ++n) P(n, b) = p[static_cast<std::size_t>(n)];
        }
        return P;
    }

    double regularizer() const {
        double s = 0.0;
        for (const auto& l : hidden_) s += cnum::hermitian_norm_sq(l.W) + cnum::hermitian_norm_sq(l.b);
        return s + cnum::hermitian_norm_sq(output_.W) + cnum::hermitian_norm_sq(output_.b);
    }

    double data_loss(const RealForwardCache& c, std::span<const int> labels) const {
        check_labels(c, labels);
        double total = 0.0;
        for (Eigen::Index b = 0; b < c.logits.cols(); ++b) {
            const Eigen::VectorXd col = c.logits.col(b);
            total += cross_entropy_from_scores({col.data(), static_cast<std::size_t>(col.size())},
                                               static_cast<std::size_t>(labels[static_cast<std::size_t>(b)]));
        }
        return total / static_cast<double>(c.logits.cols());
    }

    /// Only cross-entropy is supported for the baseline.
    double objective(const CMatrix& X, std::span<const int> labels, const TrainObjective& obj) const {
        require_cross_entropy(obj);
        const double J = data_loss(forward(X), labels) + obj.C * regularizer();
        if (!std::isfinite(J)) throw NumericError("real baseline objective is not finite");
        return J;
    }

    void backward(const RealForwardCache& c, std::span<const int> labels, const TrainObjective& obj) {
        require_cross_entropy(obj);
        if (c.generation != generation_)
            throw StateError("forward cache is stale: parameters changed since the forward pass");
        check_labels(c, labels);
        zero_grad();
        const double inv_batch = 1.0 / static_cast<double>(c.logits.cols());
        RMatrix G(c.logits.rows(), c.logits.cols());
        for (Eigen::Index b = 0; b < c.logits.cols(); ++b) {
            const Eigen::VectorXd col = c.logits.col(b);
            const auto p = softmax({col.data(), static_cast<std::size_t>(col.size())});
            const auto label = static_cast<Eigen::Index>(labels[static_cast<std::size_t>(b)]);
            for (Eigen::Index t = 0; t < G.rows(); ++t)
                G(t, b) = (p[static_cast<std::size_t>(t)] - (t == label ? 1.0 : 0.0)) * inv_batch;
        }
        RMatrix g = output_.backward(c.inputs.back(), G);
        for (std::size_t i = hidden_.size(); i-- > 0;) {
            g = (c.preacts[i].array() > 0.0).select(g, 0.0);
            g = hidden_[i].backward(c.inputs[i], g);
        }
        if (obj.C != 0.0)
            for (auto& v : views())
                for (std::size_t i = 0; i < v.value.size(); ++i) v.grad[i] += 2.0 * obj.C * v.value[i];
    }

    double loss_and_grad(const CMatrix& X, std::span<const int> labels, const TrainObjective& obj) {
        require_cross_entropy(obj);
        const auto c = forward(X);
        const double J = data_loss(c, labels) + obj.C * regularizer();
        if (!std::isfinite(J)) throw NumericError("real baseline objective is not finite");
        backward(c, labels, obj);
        return J;
    }

    void zero_grad() {
        for (auto& l : hidden_) l.zero_grad();
        output_.zero_grad();
    }

    /// He initialization for ReLU layers, Glorot-style for the output layer.
    void initialize() {
        std::mt19937_64 rng(config_.seed);
        for (auto& l : hidden_) {
            std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(l.in_dim())));
            for (std::size_t i = 0; i < l.W.size(); ++i) l.W[i] = normal(rng);
            l.b.fill(0.0);
        }
        std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(output_.in_dim())));
        for (std::size_t i = 0; i < output_.W.size(); ++i) output_.W[i] = normal(rng);
        output_.b.fill(0.0);
        ++generation_;
    }

private:
    static void require_cross_entropy(const TrainObjective& obj) {
        if (obj.loss != LossType::CrossEntropy)
            throw ParameterError("the real-valued baseline is trained with cross-entropy only");
    }

    void check_labels(const RealForwardCache& c, std::span<const int> labels) const {
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
        }
        out.push_back(cnum::make_view("output.W", "W", output_.W, output_.gW));
        out.push_back(cnum::make_view("output.b", "b", output_.b, output_.gb));
        return out;
    }

    NetworkConfig config_;
    std::vector<RealLayer> hidden_;
    RealLayer output_;
    std::uint64_t generation_ = 0;
};

}  // namespace wlkaf::net
