#pragma once

// Mini-batch training with Adagrad and validation-based early stopping, accuracy evaluation,
// and grid search over the regularization weight.

#include <algorithm>
#include <chrono>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/network.hpp"
#include "wlkaf/optim.hpp"

namespace wlkaf::optim {

using cnum::CMatrix;

/// Samples as columns of X with integer class labels.
struct LabeledData {
    CMatrix X;
    std::vector<int> y;

    std::size_t size() const noexcept { return y.size(); }

    LabeledData subset(std::span<const std::size_t> idx) const {
        LabeledData out;
        out.X.resize(X.rows(), static_cast<Eigen::Index>(idx.size()));
        out.y.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            out.X.col(static_cast<Eigen::Index>(k)) = X.col(static_cast<Eigen::Index>(idx[k]));
            out.y[k] = y[idx[k]];
        }
        return out;
    }
};

template <class M>
concept TrainableModel = std::copy_constructible<M> &&
    requires(M m, const M cm, const CMatrix& X, std::span<const int> y, const net::TrainObjective& o) {
        { m.loss_and_grad(X, y, o) } -> std::convertible_to<double>;
        { cm.predict_proba(X) } -> std::convertible_to<Eigen::MatrixXd>;
        { cm.objective(X, y, o) } -> std::convertible_to<double>;
        { cm.regularizer() } -> std::convertible_to<double>;
        { m.parameters() } -> std::same_as<std::vector<cnum::ParamView>>;
    };

struct TrainConfig {
    std::size_t batch_size = 40;
    std::size_t patience = 1000;  // iterations without strict validation improvement
    std::size_t eval_every = 50;
    std::size_t max_iterations = 100000;
    std::vector<double> c_grid{0.0, 1e-5, 1e-4, 1e-3};
    AdagradOptions adagrad;
    std::uint64_t seed = 0;

    void validate(std::size_t train_size) const {
        if (batch_size == 0) throw ParameterError("batch size must be positive");
        if (batch_size > train_size)
            throw ParameterError("batch size " + std::to_string(batch_size) + " exceeds training set size " +
                                 std::to_string(train_size));
        if (eval_every == 0) throw ParameterError("eval_every must be positive");
        if (patience == 0) throw ParameterError("patience must be positive");
        if (max_iterations == 0) throw ParameterError("max_iterations must be positive");
    }
};

struct TraceRecord {
    std::size_t iteration = 0;
    double train_loss = 0.0;  // mean mini-batch data loss (no C term) since the previous record
    double val_accuracy = 0.0;
    double elapsed_seconds = 0.0;
};

struct TrainTrace {
    std::vector<TraceRecord> records;
    std::size_t best_iteration = 0;
    double best_val_accuracy = 0.0;
    std::size_t iterations_run = 0;

    /// CSV with a header row. Timing is optional so the default output is reproducible byte-for-byte.
    std::string to_csv(bool include_timing = false) const {
        std::ostringstream os;
        os << "iteration,train_loss,val_accuracy" << (include_timing ? ",elapsed_seconds" : "") << "\n";
        char buf[128];
        for (const auto& r : records) {
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", r.iteration, r.train_loss, r.val_accuracy);
            os << buf;
            if (include_timing) {
                std::snprintf(buf, sizeof buf, ",%.3f", r.elapsed_seconds);
                os << buf;
            }
            os << "\n";
        }
        return os.str();
    }
};

/// Raised when training hits a numeric failure; carries the trace recorded so far.
class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, TrainTrace trace) : NumericError(what), trace_(std::move(trace)) {}
    const TrainTrace& trace() const noexcept { return trace_; }

private:
    TrainTrace trace_;
};

template <TrainableModel M>
struct TrainResult {
    M model;  // best-validation checkpoint
    TrainTrace trace;
};

inline constexpr Eigen::Index kEvalChunk = 500;

/// Fraction of samples whose most probable class matches the label (ties -> lowest index).
template <TrainableModel M>
double evaluate(const M& model, const LabeledData& data) {
    if (data.size() == 0) throw ParameterError("cannot evaluate on an empty split");
    std::size_t correct = 0;
    const Eigen::Index n = data.X.cols();
    for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
        const Eigen::Index len = std::min(kEvalChunk, n - start);
        const Eigen::MatrixXd P = model.predict_proba(data.X.middleCols(start, len));
        for (Eigen::Index b = 0; b < len; ++b) {
            const Eigen::VectorXd col = P.col(b);
            if (static_cast<int>(net::argmax(col)) == data.y[static_cast<std::size_t>(start + b)]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Draws mini-batches from shuffled passes over the training indices.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch, std::uint64_t seed) : order_(n), batch_(batch), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        reshuffle();
    }

    std::vector<std::size_t> next() {
        if (pos_ + batch_ > order_.size()) reshuffle();
        std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                     order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
        pos_ += batch_;
        return out;
    }

private:
    void reshuffle() {
        // Fisher-Yates with an explicit draw so the order does not depend on the standard library.
        for (std::size_t i = order_.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng_() % i);
            std::swap(order_[i - 1], order_[j]);
        }
        pos_ = 0;
    }

    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::size_t pos_ = 0;
    std::mt19937_64 rng_;
};

template <TrainableModel M>
using ValidationMetric = std::function<double(const M&, std::size_t iteration)>;

/// Trains `model` and returns the checkpoint with the best validation accuracy.
///
/// Validation runs at iteration 0 and every `eval_every` iterations. Training stops at the first
/// evaluation where `patience` or more iterations have passed since the last strict improvement,
/// or at `max_iterations`. `metric` replaces validation accuracy when provided (used in tests).
template <TrainableModel M>
TrainResult<M> train(M model, const LabeledData& train_set, const LabeledData& val_set, const TrainConfig& cfg,
                     const net::TrainObjective& obj, ValidationMetric<M> metric = {}) {
    cfg.validate(train_set.size());
    if (val_set.size() == 0) throw ParameterError("validation split is empty");
    if (!metric) metric = [&val_set](const M& m, std::size_t) { return evaluate(m, val_set); };

    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    BatchSampler sampler(train_set.size(), cfg.batch_size, cfg.seed);
    AdagradState opt(cfg.adagrad);
    TrainTrace trace;
    M best = model;

    auto batch_idx = sampler.next();
    LabeledData batch = train_set.subset(batch_idx);
    double window_loss = 0.0;
    std::size_t window_count = 0;

    auto record = [&](std::size_t it, double loss) {
        const double acc = metric(model, it);
        trace.records.push_back({it, loss, acc, elapsed()});
        if (trace.records.size() == 1 || acc > trace.best_val_accuracy) {
            trace.best_val_accuracy = acc;
            trace.best_iteration = it;
            best = model;
        }
    };

    try {
        // the C term is left out of the recorded loss so runs with different C stay comparable
        record(0, model.objective(batch.X, batch.y, obj) - obj.C * model.regularizer());
        for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
            if (it > 1) batch = train_set.subset(batch_idx = sampler.next());
            const double loss = model.loss_and_grad(batch.X, batch.y, obj) - obj.C * model.regularizer();
            opt.step(model.parameters());
            window_loss += loss;
            ++window_count;
            trace.iterations_run = it;
            if (it % cfg.eval_every == 0 || it == cfg.max_iterations) {
                record(it, window_loss / static_cast<double>(window_count));
                window_loss = 0.0;
                window_count = 0;
                if (it - trace.best_iteration >= cfg.patience) break;
            }
        }
    } catch (const NumericError& e) {
        throw TrainingAborted(std::string("training aborted at iteration ") + std::to_string(trace.iterations_run + 1) +
                                  ": " + e.what(),
                              trace);
    }
    return {std::move(best), std::move(trace)};
}

template <TrainableModel M>
struct GridSearchResult {
    double best_C = 0.0;
    std::vector<double> c_values;
    std::vector<double> val_accuracies;  // one per grid point
    TrainResult<M> best;
};

/// Trains one model per C in cfg.c_grid and keeps the one with the highest validation accuracy;
/// ties go to the smaller C.
template <TrainableModel M>
GridSearchResult<M> grid_search_C(const std::function<M()>& factory, const LabeledData& train_set,
                                  const LabeledData& val_set, const TrainConfig& cfg, net::TrainObjective obj) {
    if (cfg.c_grid.empty()) throw ParameterError("C grid is empty");
    std::vector<double> grid = cfg.c_grid;
    std::sort(grid.begin(), grid.end());
    std::optional<GridSearchResult<M>> out;
    for (double C : grid) {
        if (!(C >= 0.0)) throw ParameterError("regularization weights must be nonnegative");
        obj.C = C;
        auto res = train(factory(), train_set, val_set, cfg, obj);
        const double acc = res.trace.best_val_accuracy;
        if (!out) {
            out.emplace(GridSearchResult<M>{C, {}, {}, std::move(res)});
        } else if (acc > out->best.trace.best_val_accuracy) {
            out->best_C = C;
            out->best = std::move(res);
        }
        out->c_values.push_back(C);
        out->val_accuracies.push_back(acc);
    }
    return std::move(*out);
}

}  // namespace wlkaf::optim
