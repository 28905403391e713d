#pragma once

// Adagrad over complex parameters, treating every complex entry as two independent reals.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"

namespace wlkaf::optim {

struct AdagradOptions {
    double learning_rate = 0.01;
    double epsilon = 1e-8;
};

/// Per-component accumulators of squared cogradients, one block per parameter view.
class AdagradState {
public:
    AdagradState() = default;
    explicit AdagradState(AdagradOptions opts) : opts_(opts) {
        if (!(opts_.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
        if (!(opts_.epsilon > 0.0)) throw ParameterError("Adagrad epsilon must be positive");
    }

    const AdagradOptions& options() const noexcept { return opts_; }
    const std::vector<std::vector<double>>& accumulators() const noexcept { return acc_; }
    std::size_t steps() const noexcept { return steps_; }

    /// w_c <- w_c - lr * g_c / (sqrt(acc_c) + eps), after acc_c += g_c^2.
    /// The whole step is rejected if any cogradient component is non-finite.
    void step(const std::vector<cnum::ParamView>& params) {
        if (acc_.empty()) {
            for (const auto& p : params) acc_.emplace_back(p.value.size(), 0.0);
        }
        if (acc_.size() != params.size()) throw DimensionError("Adagrad state does not match parameter list");
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (acc_[k].size() != params[k].value.size() || params[k].grad.size() != params[k].value.size())
                throw DimensionError("Adagrad state shape does not match parameter " + params[k].name);
            for (double g : params[k].grad)
                if (!std::isfinite(g)) throw NumericError("non-finite cogradient in " + params[k].name + "; step aborted");
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& acc = acc_[k];
            const auto& p = params[k];
            for (std::size_t c = 0; c < acc.size(); ++c) {
                const double g = p.grad[c];
                acc[c] += g * g;
                p.value[c] -= opts_.learning_rate * g / (std::sqrt(acc[c]) + opts_.epsilon);
            }
        }
        ++steps_;
    }

private:
    AdagradOptions opts_;
    std::vector<std::vector<double>> acc_;
    std::size_t steps_ = 0;
};

inline void adagrad_step(const std::vector<cnum::ParamView>& params, AdagradState& state) { state.step(params); }

}  // namespace wlkaf::optim
