#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "wlkaf/network.hpp"
#include "wlkaf/optim.hpp"
#include "wlkaf/real_network.hpp"
#include "wlkaf/train.hpp"

using namespace wlkaf;
using cnum::CMatrix;
using cnum::Complex;
using namespace wlkaf::optim;

namespace {

struct Single {
    cnum::ComplexTensor w, g;
    Single(Complex value, Complex grad) : w(cnum::ComplexTensor::vector({value})), g(cnum::ComplexTensor::vector({grad})) {}
    std::vector<cnum::ParamView> views() { return {cnum::make_view("w", "W", w, g)}; }
};

// Two well separated clusters in C^2.
LabeledData toy(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.3);
    LabeledData d;
    d.X.resize(2, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double s = label == 0 ? 1.0 : -1.0;
        d.X(0, static_cast<Eigen::Index>(i)) = Complex(s + noise(rng), s + noise(rng));
        d.X(1, static_cast<Eigen::Index>(i)) = Complex(-s + noise(rng), noise(rng));
        d.y.push_back(label);
    }
    return d;
}

net::NetworkConfig toy_net(act::ActivationSpec spec, std::uint64_t seed = 1) {
    net::NetworkConfig c;
    c.input_dim = 2;
    c.hidden = {6};
    c.classes = 2;
    c.activation = std::move(spec);
    c.seed = seed;
    return c;
}

TrainConfig quick() {
    TrainConfig t;
    t.batch_size = 10;
    t.eval_every = 10;
    t.patience = 100;
    t.max_iterations = 400;
    t.seed = 3;
    return t;
}

}  // namespace

TEST(Adagrad, ZeroGradient) {
    Single p(Complex(0.5, -0.25), 0.0);
    AdagradState s;
    s.step(p.views());
    EXPECT_EQ(p.w[0], Complex(0.5, -0.25));
    for (double a : s.accumulators()[0]) EXPECT_EQ(a, 0.0);
}

TEST(Adagrad, FirstStep) {
    Single p(Complex(1.0, 1.0), Complex(3.0, -3.0));
    AdagradState s;
    s.step(p.views());
    EXPECT_NEAR(p.w[0].real(), 1.0 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.w[0].imag(), 1.0 + 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_NEAR(p.w[0].real(), 0.99, 1e-9);
}

TEST(Adagrad, SecondEqualStepIsSmaller) {
    Single p(0.0, Complex(2.0, 0.5));
    AdagradState s;
    s.step(p.views());
    const Complex first = p.w[0];
    s.step(p.views());
    const Complex second = p.w[0] - first;
    EXPECT_LT(std::abs(second.real()), std::abs(first.real()));
    EXPECT_LT(std::abs(second.imag()), std::abs(first.imag()));
    EXPECT_NEAR(second.real(), -0.01 / std::sqrt(2.0), 1e-9);
}

TEST(Adagrad, AccumulatorsMonotoneAndStepBounded) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 5.0);
    Single p(0.0, 0.0);
    AdagradState s;
    double prev[2] = {0.0, 0.0};
    for (int k = 0; k < 50; ++k) {
        p.g[0] = Complex(n(rng), n(rng));
        const Complex before = p.w[0];
        s.step(p.views());
        for (int c = 0; c < 2; ++c) {
            EXPECT_GE(s.accumulators()[0][static_cast<std::size_t>(c)], prev[c]);
            prev[c] = s.accumulators()[0][static_cast<std::size_t>(c)];
        }
        EXPECT_LE(std::abs((p.w[0] - before).real()), 0.01 + 1e-12);
        EXPECT_LE(std::abs((p.w[0] - before).imag()), 0.01 + 1e-12);
    }
}

TEST(Adagrad, NonFiniteAborts) {
    Single p(Complex(1.0, 2.0), Complex(std::nan(""), 0.0));
    AdagradState s;
    EXPECT_THROW(s.step(p.views()), NumericError);
    EXPECT_EQ(p.w[0], Complex(1.0, 2.0));
    EXPECT_THROW(AdagradState({0.0, 1e-8}), ParameterError);
}

TEST(Evaluate, Examples) {
    const auto data = toy(40, 1);
    auto res = train(net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), data, data, quick(), {});
    EXPECT_DOUBLE_EQ(evaluate(res.model, data), 1.0);

    const std::vector<std::size_t> one{3};
    const double single = evaluate(res.model, data.subset(one));
    EXPECT_TRUE(single == 0.0 || single == 1.0);
    EXPECT_THROW(evaluate(res.model, LabeledData{}), ParameterError);
}

TEST(Evaluate, ChanceLevelOnRandomLabels) {
    // an all-zero network is exactly uniform, so argmax picks class 0 everywhere
    net::NetworkConfig c = toy_net(act::WlKafCase1Spec{});
    c.classes = 10;
    net::ComplexNetwork m(c);
    for (auto& v : m.parameters()) std::fill(v.value.begin(), v.value.end(), 0.0);
    std::mt19937_64 rng(2);
    LabeledData d = toy(5000, 2);
    for (auto& y : d.y) y = static_cast<int>(rng() % 10);
    EXPECT_NEAR(evaluate(m, d), 0.1, 0.02);
}

TEST(Train, SeparableToyReachesFullAccuracy) {
    const auto tr = toy(200, 4), va = toy(60, 5);
    for (const auto& spec : std::vector<act::ActivationSpec>{act::WlKafCase1Spec{}, act::WlKafCase2Spec{},
                                                             act::KafSpec{kernels::KernelType::Independent}}) {
        const auto res = train(net::ComplexNetwork(toy_net(spec)), tr, va, quick(), {});
        EXPECT_DOUBLE_EQ(res.trace.best_val_accuracy, 1.0) << act::describe(spec);
    }
    const auto res = train(net::RealNetwork(toy_net(act::WlKafCase1Spec{})), tr, va, quick(), {});
    EXPECT_DOUBLE_EQ(res.trace.best_val_accuracy, 1.0);
}

TEST(Train, Deterministic) {
    const auto tr = toy(100, 6), va = toy(30, 7);
    const auto a = train(net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, va, quick(), {});
    const auto b = train(net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, va, quick(), {});
    EXPECT_EQ(a.trace.to_csv(), b.trace.to_csv());
    auto& ma = const_cast<net::ComplexNetwork&>(a.model);
    auto& mb = const_cast<net::ComplexNetwork&>(b.model);
    const auto va_ = ma.parameters(), vb_ = mb.parameters();
    for (std::size_t p = 0; p < va_.size(); ++p)
        EXPECT_TRUE(std::equal(va_[p].value.begin(), va_[p].value.end(), vb_[p].value.begin()));
}

TEST(Train, TraceLossLeavesOutTheCTerm) {
    const auto tr = toy(40, 6), va = toy(20, 7);
    auto cfg = quick();
    cfg.batch_size = 40;  // one batch = the whole set, so record 0 is the full-set loss
    cfg.max_iterations = 10;
    const net::TrainObjective obj{net::LossType::CrossEntropy, 10.0};
    const net::ComplexNetwork init(toy_net(act::WlKafCase1Spec{}));
    const auto res = train(init, tr, va, cfg, obj);
    const double data = init.objective(tr.X, tr.y, {net::LossType::CrossEntropy, 0.0});
    EXPECT_NEAR(res.trace.records[0].train_loss, data, 1e-9);
    EXPECT_GT(init.objective(tr.X, tr.y, obj), data + 1.0);
}

TEST(Train, TinyPatienceStopsAtFirstWindow) {
    const auto tr = toy(100, 8), va = toy(30, 9);
    auto cfg = quick();
    cfg.patience = 5;
    // a metric that never improves after iteration 0
    const auto res = train<net::ComplexNetwork>(net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, va, cfg, {},
                                                [](const net::ComplexNetwork&, std::size_t) { return 0.5; });
    EXPECT_EQ(res.trace.iterations_run, cfg.eval_every);
    EXPECT_EQ(res.trace.records.size(), 2u);
}

TEST(Train, StopsWithinPatienceWindow) {
    const auto tr = toy(100, 10), va = toy(30, 11);
    auto cfg = quick();
    cfg.patience = 30;
    cfg.max_iterations = 10000;
    const auto res = train<net::ComplexNetwork>(
        net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, va, cfg, {},
        [](const net::ComplexNetwork&, std::size_t it) { return it <= 70 ? static_cast<double>(it) : 0.0; });
    EXPECT_EQ(res.trace.best_iteration, 70u);
    EXPECT_LE(res.trace.iterations_run, res.trace.best_iteration + cfg.patience + cfg.eval_every);
    EXPECT_EQ(res.trace.iterations_run, 100u);
}

TEST(Train, ReturnsBestCheckpointNotLastIterate) {
    const auto tr = toy(100, 12), va = toy(30, 13);
    auto cfg = quick();
    cfg.max_iterations = 200;
    cfg.patience = 1000;
    // snapshot the logits at the checkpoint the metric favours
    const CMatrix probe = va.X.leftCols(5);
    CMatrix at_best;
    const auto res = train<net::ComplexNetwork>(
        net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, va, cfg, {},
        [&](const net::ComplexNetwork& m, std::size_t it) {
            if (it == 60) at_best = m.logits(probe);
            return it == 60 ? 1.0 : 0.1;
        });
    EXPECT_EQ(res.trace.best_iteration, 60u);
    EXPECT_EQ(res.trace.iterations_run, 200u);
    EXPECT_EQ(res.model.logits(probe), at_best);
}

TEST(Train, TraceCsv) {
    TrainTrace t;
    t.records = {{0, 0.5, 0.25, 1.5}, {50, 0.125, 0.75, 2.0}};
    EXPECT_EQ(t.to_csv(), "iteration,train_loss,val_accuracy\n0,0.5,0.25\n50,0.125,0.75\n");
    EXPECT_EQ(t.to_csv(true), "iteration,train_loss,val_accuracy,elapsed_seconds\n0,0.5,0.25,1.500\n50,0.125,0.75,2.000\n");
}

TEST(Train, ConfigErrors) {
    const auto tr = toy(20, 14);
    auto cfg = quick();
    cfg.batch_size = 21;
    EXPECT_THROW(train(net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, tr, cfg, {}), ParameterError);
    EXPECT_THROW(train(net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})), tr, LabeledData{}, quick(), {}),
                 ParameterError);
}

TEST(Train, NumericFailureKeepsTrace) {
    const auto tr = toy(40, 15);
    auto cfg = quick();
    cfg.adagrad.learning_rate = 1e300;
    net::ComplexNetwork m(toy_net(act::SplitSpec{act::RealFn::Identity}));
    try {
        train(m, tr, tr, cfg, {});
        FAIL() << "expected an abort";
    } catch (const TrainingAborted& e) {
        EXPECT_FALSE(e.trace().records.empty());
    }
}

TEST(BatchSampler, CoversEveryIndexPerPass) {
    BatchSampler s(12, 4, 1);
    std::vector<int> seen(12, 0);
    for (int k = 0; k < 3; ++k)
        for (auto i : s.next()) ++seen[i];
    for (int v : seen) EXPECT_EQ(v, 1);
}

TEST(GridSearch, Bookkeeping) {
    const auto tr = toy(100, 16), va = toy(30, 17);
    auto cfg = quick();
    cfg.c_grid = {1e-3};
    const std::function<net::ComplexNetwork()> f = [] { return net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})); };
    auto gs = grid_search_C<net::ComplexNetwork>(f, tr, va, cfg, {});
    EXPECT_EQ(gs.best_C, 1e-3);
    EXPECT_EQ(gs.val_accuracies.size(), 1u);

    cfg.c_grid = {1e6, 0.0};
    gs = grid_search_C<net::ComplexNetwork>(f, tr, va, cfg, {});
    EXPECT_EQ(gs.best_C, 0.0);
    ASSERT_EQ(gs.c_values.size(), 2u);
    EXPECT_EQ(gs.c_values[1], 1e6);
    EXPECT_LT(gs.val_accuracies[1], gs.val_accuracies[0]);
    EXPECT_NEAR(gs.val_accuracies[1], 0.5, 0.2);

    cfg.c_grid = {};
    EXPECT_THROW(grid_search_C<net::ComplexNetwork>(f, tr, va, cfg, {}), ParameterError);
}

TEST(GridSearch, TiesGoToSmallerC) {
    const auto tr = toy(100, 18), va = toy(30, 19);
    auto cfg = quick();
    cfg.c_grid = {1e-4, 1e-5};
    const std::function<net::ComplexNetwork()> f = [] { return net::ComplexNetwork(toy_net(act::WlKafCase1Spec{})); };
    const auto gs = grid_search_C<net::ComplexNetwork>(f, tr, va, cfg, {});
    // both reach 100% on the separable toy
    EXPECT_EQ(gs.val_accuracies[0], gs.val_accuracies[1]);
    EXPECT_EQ(gs.best_C, 1e-5);
}
