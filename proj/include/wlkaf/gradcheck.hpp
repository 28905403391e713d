#pragma once

// Whole-model finite-difference check of the analytic cogradients, reported per parameter group.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "wlkaf/activations.hpp"
#include "wlkaf/cnum.hpp"
#include "wlkaf/network.hpp"

namespace wlkaf::check {

using cnum::CMatrix;
using cnum::Complex;

struct GradcheckOptions {
    double eps = 1e-6;
    double rel_tol = 1e-5;
    double abs_tol = 1e-8;     // only for entries whose true value is ~0 (below near_zero)
    double near_zero = 1e-4;
    std::size_t max_offenders = 20;
};

struct GroupReport {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst_rel = 0.0;  // over entries at or above near_zero
    double worst_abs = 0.0;
};

struct Offender {
    std::string name;
    std::size_t component;  // index into the real components of the parameter
    double analytic, numeric;
};

struct GradcheckReport {
    std::map<std::string, GroupReport> groups;  // keyed by W, b, alpha, log_gamma
    std::vector<Offender> offenders;
    bool passed = true;
};

/// Rewrites analytic gradients before comparison; lets tests inject a broken backward rule.
using GradientCorruption = std::function<void(std::vector<cnum::ParamView>&)>;

/// Compares model.loss_and_grad against central differences of model.objective on (X, y).
template <class M>
GradcheckReport gradcheck(M& model, const CMatrix& X, std::span<const int> y, const net::TrainObjective& obj,
                          const GradcheckOptions& opt = {}, const GradientCorruption& corrupt = {}) {
    model.loss_and_grad(X, y, obj);
    auto views = model.parameters();
    if (corrupt) corrupt(views);
    std::vector<std::vector<double>> analytic;
    for (const auto& v : views) analytic.emplace_back(v.grad.begin(), v.grad.end());

    GradcheckReport rep;
    for (std::size_t p = 0; p < views.size(); ++p) {
        auto& v = views[p];
        auto& g = rep.groups[v.group];
        for (std::size_t i = 0; i < v.value.size(); ++i) {
            const double w0 = v.value[i];
            v.value[i] = w0 + opt.eps;
            const double fp = model.objective(X, y, obj);
            v.value[i] = w0 - opt.eps;
            const double fm = model.objective(X, y, obj);
            v.value[i] = w0;
            const double num = (fp - fm) / (2.0 * opt.eps);
            const double a = analytic[p][i];
            const double abs_err = std::abs(a - num);
            const double scale = std::max(std::abs(a), std::abs(num));
            const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
            const bool tiny = scale < opt.near_zero;
            ++g.checked;
            g.worst_abs = std::max(g.worst_abs, abs_err);
            if (!tiny) g.worst_rel = std::max(g.worst_rel, rel_err);
            const bool ok = tiny ? (abs_err <= opt.abs_tol || rel_err <= opt.rel_tol) : rel_err <= opt.rel_tol;
            if (!std::isfinite(num) || !std::isfinite(a) || !ok) {
                ++g.failed;
                rep.passed = false;
                if (rep.offenders.size() < opt.max_offenders) rep.offenders.push_back({v.name, i, a, num});
            }
        }
    }
    return rep;
}

/// The activation families covered by the gradient check.
inline std::vector<std::pair<std::string, act::ActivationSpec>> gradcheck_variants() {
    return {{"split_tanh", act::SplitSpec{act::RealFn::Tanh}},
            {"phase_amplitude", act::PhaseAmplitudeSpec{}},
            {"kaf_independent", act::KafSpec{kernels::KernelType::Independent}},
            {"kaf_real_gaussian", act::KafSpec{kernels::KernelType::RealGaussian}},
            {"wlkaf_case1", act::WlKafCase1Spec{}},
            {"wlkaf_case2", act::WlKafCase2Spec{}}};
}

inline act::ActivationSpec gradcheck_variant(const std::string& name) {
    for (auto& [n, spec] : gradcheck_variants())
        if (n == name) return spec;
    throw ParameterError("unknown gradcheck variant '" + name + "'");
}

struct TinyProblem {
    net::ComplexNetwork model;
    CMatrix X;
    std::vector<int> y;
    net::TrainObjective obj;
};

/// Random tiny network (3 inputs, widths [4, 4], 2 classes) with a random batch. Kernel
/// parameters are randomized, not fitted, so every term of the expansion carries gradient.
inline TinyProblem tiny_problem(const act::ActivationSpec& spec, std::uint64_t seed, std::size_t batch = 5) {
    net::NetworkConfig cfg;
    cfg.input_dim = 3;
    cfg.hidden = {4, 4};
    cfg.classes = 2;
    cfg.activation = spec;
    cfg.seed = seed;
    cfg.alpha_init.mode = act::AlphaInit::Mode::Random;
    cfg.alpha_init.random_std = 0.1;
    TinyProblem t{net::ComplexNetwork(cfg), CMatrix(3, static_cast<Eigen::Index>(batch)), {}, {}};
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < t.model.hidden_count(); ++i) {
        auto& a = t.model.activation(i);
        for (std::size_t k = 0; k < a.log_gamma().size(); ++k) a.log_gamma()[k] += 0.2 * normal(rng);
        auto& h = t.model.hidden(i);
        for (std::size_t k = 0; k < h.b.size(); ++k) h.b[k] = Complex(0.1 * normal(rng), 0.1 * normal(rng));
    }
    for (Eigen::Index k = 0; k < t.X.size(); ++k) t.X.data()[k] = Complex(normal(rng), normal(rng));
    for (std::size_t b = 0; b < batch; ++b) t.y.push_back(static_cast<int>(rng() % 2));
    t.obj.C = 1e-3;
    return t;
}

}  // namespace wlkaf::check
