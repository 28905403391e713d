// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as arguments to run a
// subset. The MNIST benchmark (7, 8) reads $WLKAF_DATA_DIR, falling back to the configured
// default, and writes its runs under $WLKAF_ACCEPTANCE_OUT (default: the build tree).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <set>
#include <unistd.h>

#include "wlkaf/experiment.hpp"

using namespace wlkaf;
using cnum::CMatrix;
using cnum::Complex;
namespace fs = std::filesystem;

#ifndef WLKAF_DEFAULT_DATA_DIR
#define WLKAF_DEFAULT_DATA_DIR "data"
#endif
#ifndef WLKAF_ACCEPTANCE_DIR
#define WLKAF_ACCEPTANCE_DIR "acceptance_runs"
#endif

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Complex rand_c(std::mt19937_64& rng, double s = 1.0) {
    std::normal_distribution<double> n(0.0, s);
    return {n(rng), n(rng)};
}

Outcome kernel_identities() {
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<std::size_t> len(1, 64);
    std::normal_distribution<double> n(0.0, 1.0);
    double worst = 0.0;
    const auto t0 = Clock::now();
    for (int t = 0; t < 1000; ++t) {
        const std::size_t D = len(rng);
        kernels::KernelBlockSet b;
        std::vector<Complex> alpha(D);
        for (std::size_t j = 0; j < D; ++j) {
            b.k_rr.push_back(n(rng));
            b.k_ri.push_back(n(rng));
            b.k_ir.push_back(n(rng));
            b.k_ii.push_back(n(rng));
            alpha[j] = rand_c(rng);
        }
        const auto direct = kernels::vector_model_output(b, alpha);
        const auto p = kernels::wl_from_blocks(b);
        const auto wl = kernels::widely_linear_output(p.k, p.k_tilde, alpha);
        worst = std::max(worst, std::abs(direct - wl));
    }
    const double secs = since(t0);
    return {worst <= 1e-12 && secs < 1.0, fmt("max |error| %.3e over 1000 triples in %.3f s", worst, secs)};
}

Outcome standard_constraint() {
    const kernels::Dictionary dict(8, -2.0, 2.0);
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> u(-3.0, 3.0), g(0.2, 3.0);
    std::size_t violations = 0;
    for (auto type : {kernels::KernelType::ComplexGaussian, kernels::KernelType::Independent,
                      kernels::KernelType::RealGaussian}) {
        for (int t = 0; t < 1000; ++t) {
            const kernels::KernelSpec spec{type, g(rng)};
            const auto b = kernels::blocks_from_complex_kernel(kernels::as_function(spec), {u(rng), u(rng)}, dict);
            for (std::size_t j = 0; j < b.size(); ++j)
                if (b.k_rr[j] != b.k_ii[j] || b.k_ri[j] != -b.k_ir[j]) ++violations;
        }
    }
    return {violations == 0, fmt("%zu exact-equality violations over 3 kernels x 1000 points x 64 atoms", violations)};
}

Outcome degeneracy() {
    const kernels::Dictionary dict(8, -2.0, 2.0);
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> u(-3.0, 3.0), g(0.2, 3.0);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const double gamma = g(rng);
        std::vector<Complex> alpha(dict.size());
        for (auto& a : alpha) a = rand_c(rng);
        const Complex z(u(rng), u(rng));
        const auto kaf = act::kaf_forward(z, alpha, dict, {kernels::KernelType::RealGaussian, gamma});
        const auto wl = act::wlkaf_forward(z, alpha, dict, kernels::Case1Bandwidth{gamma, gamma});
        worst = std::max(worst, std::abs(kaf - wl));
    }
    return {worst <= 1e-14, fmt("max |Case 1 - KAF| %.3e over 1000 inputs", worst)};
}

Outcome gradients() {
    const auto t0 = Clock::now();
    std::string detail;
    bool ok = true;
    for (const auto& [name, spec] : check::gradcheck_variants()) {
        const auto s = exp::run_gradcheck(name, 0, 20);
        double worst = 0.0;
        for (const auto& [g, r] : s.groups) worst = std::max(worst, r.worst_rel);
        ok = ok && s.passed;
        detail += fmt("%s%s %s (worst rel %.1e)", detail.empty() ? "" : "; ", name.c_str(), s.passed ? "ok" : "FAIL", worst);
    }
    const double secs = since(t0);
    return {ok && secs < 30.0, fmt("%.1f s; ", secs) + detail};
}

Outcome softmax() {
    std::mt19937_64 rng(105);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_int_distribution<int> classes(2, 20), small(-20, 20);
    double norm_err = 0.0, phase_err = 0.0;
    std::size_t shift_mismatch = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto n = static_cast<std::size_t>(classes(rng));
        std::vector<Complex> h(n), rot(n);
        for (std::size_t i = 0; i < n; ++i) {
            h[i] = rand_c(rng, 3.0);
            rot[i] = h[i] * std::polar(1.0, phase(rng));
        }
        const auto p = net::complex_softmax(h), q = net::complex_softmax(rot);
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum += p[i];
            phase_err = std::max(phase_err, std::abs(p[i] - q[i]));
        }
        norm_err = std::max(norm_err, std::abs(sum - 1.0));

        // integer logits: a common shift of every |h|^2 is exact, so the output must be too
        std::vector<Complex> a(n), shifted(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = Complex(small(rng), 0.0);
            shifted[i] = Complex(a[i].real(), 40.0);  // |h|^2 + 1600, far past exp overflow
        }
        if (net::complex_softmax(a) != net::complex_softmax(shifted)) ++shift_mismatch;
    }
    return {norm_err <= 1e-12 && phase_err <= 1e-12 && shift_mismatch == 0,
            fmt("normalization %.2e, phase %.2e, shifted outputs differing %zu/1000", norm_err, phase_err,
                shift_mismatch)};
}

Outcome fft() {
    std::mt19937_64 rng(106);
    std::uniform_real_distribution<double> u(0.0, 255.0);
    double worst = 0.0, parseval = 0.0;
    for (int t = 0; t < 100; ++t)
        for (std::size_t N : {4u, 8u}) {
            std::vector<double> img(N * N);
            for (auto& v : img) v = u(rng);
            const auto F = data::fft2(img, N, N);
            double e_space = 0.0, e_freq = 0.0;
            for (std::size_t k = 0; k < N; ++k)
                for (std::size_t l = 0; l < N; ++l) {
                    Complex s{};
                    for (std::size_t m = 0; m < N; ++m)
                        for (std::size_t n = 0; n < N; ++n)
                            s += img[m * N + n] *
                                 std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * m + l * n) /
                                                     static_cast<double>(N));
                    worst = std::max(worst, std::abs(s - F.at(k, l)));
                    e_freq += std::norm(F.at(k, l));
                }
            for (double v : img) e_space += v * v;
            parseval = std::max(parseval, std::abs(e_freq / static_cast<double>(N * N) - e_space) / e_space);
        }
    return {worst <= 1e-9 && parseval <= 1e-6,
            fmt("max |fft2 - DFT| %.2e on 4x4 and 8x8, Parseval rel %.2e", worst, parseval)};
}

// ---------------------------------------------------------------------------------------------
// MNIST subset benchmark

exp::ExperimentConfig benchmark_config() {
    exp::ExperimentConfig c;
    c.split = {10000, 2000, 2000};
    c.seeds = {1, 2, 3};
    const char* env = std::getenv("WLKAF_DATA_DIR");
    c.data_dir = env && *env ? env : WLKAF_DEFAULT_DATA_DIR;
    const char* out = std::getenv("WLKAF_ACCEPTANCE_OUT");
    c.out = out && *out ? out : WLKAF_ACCEPTANCE_DIR;
    return c;
}

struct Benchmark {
    std::optional<exp::ComparisonReport> report;
    std::string error;
    double max_seconds = 0.0;
};

Benchmark& benchmark() {
    static Benchmark b = [] {
        Benchmark r;
        try {
            const auto cfg = benchmark_config();
            const auto ds = exp::prepare_dataset(cfg);
            r.report = exp::compare(cfg, ds, [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); });
            for (const auto& row : r.report->rows)
                for (const auto& s : row.runs) r.max_seconds = std::max(r.max_seconds, s.seconds);
            std::fputs(r.report->table().c_str(), stderr);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        return r;
    }();
    return b;
}

Outcome benchmark_accuracy() {
    const auto& b = benchmark();
    if (!b.report) return {false, "benchmark did not run: " + b.error};
    const auto& rep = *b.report;
    const auto* real = rep.row(exp::Variant::RealNN);
    const auto* c1 = rep.row(exp::Variant::WlKafCase1);
    const auto* c2 = rep.row(exp::Variant::WlKafCase2);
    const auto* kaf = rep.row(exp::Variant::KafIndependent);
    for (const auto* r : {real, c1, c2, kaf})
        if (r->runs.size() != 3) return {false, exp::to_string(r->model) + " has failed runs"};
    double c1_min = 1.0;
    for (const auto& s : c1->runs) c1_min = std::min(c1_min, s.test_accuracy);
    const bool ok = c1->mean() >= 0.93 && c1->mean() >= real->mean() && c2->mean() >= real->mean() && b.max_seconds < 1200.0;
    return {ok, fmt("test mean: real %.2f, KAF %.2f, Case 1 %.2f (min %.2f), Case 2 %.2f; slowest run %.0f s",
                    100 * real->mean(), 100 * kaf->mean(), 100 * c1->mean(), 100 * c1_min, 100 * c2->mean(),
                    b.max_seconds)};
}

Outcome convergence() {
    const auto& b = benchmark();
    if (!b.report) return {false, "benchmark did not run: " + b.error};
    const auto cfg = benchmark_config();
    std::vector<std::pair<std::string, exp::TraceSeries>> traces;
    for (auto v : {exp::Variant::WlKafCase1, exp::Variant::KafIndependent})
        for (auto seed : cfg.seeds) {
            const auto p = exp::run_dir(cfg, v, seed) / "trace.csv";
            traces.emplace_back(exp::to_string(v), exp::parse_trace_csv(exp::read_text(p), p.string()));
        }
    const auto curves = exp::merge_curves(traces);
    // only iterations that every run of both models reached, so early stopping does not bias either mean
    const std::size_t n = cfg.seeds.size();
    double s1 = 0.0, s2 = 0.0;
    std::size_t count = 0, first = 0, last = 0;
    for (std::size_t i = 0; i < curves.iterations.size(); ++i) {
        const auto it = curves.iterations[i];
        if (it < 500 || it > 4000 || curves.count[0][i] != n || curves.count[1][i] != n) continue;
        if (count == 0) first = it;
        last = it;
        s1 += curves.mean[0][i];
        s2 += curves.mean[1][i];
        ++count;
    }
    if (count == 0) return {false, "no iteration in [500, 4000] reached by every run"};
    s1 /= static_cast<double>(count);
    s2 /= static_cast<double>(count);
    return {s1 <= s2, fmt("mean training loss over iterations %zu..%zu: Case 1 %.4f, KAF %.4f", first, last, s1, s2)};
}

// ---------------------------------------------------------------------------------------------
// Determinism: a small synthetic problem trained twice per variant.

data::ComplexDataset synthetic(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    data::ComplexDataset ds;
    ds.rows = 1;
    ds.cols = 4;
    ds.classes = 3;
    ds.selected = {0, 1, 2, 3};
    ds.mean.assign(4, Complex{});
    ds.scale.assign(4, 1.0);
    ds.n_train = 300;
    ds.n_val = ds.n_test = 60;
    ds.features.resize(4, 420);
    for (Eigen::Index i = 0; i < 420; ++i) {
        const int label = static_cast<int>(i % 3);
        for (Eigen::Index f = 0; f < 4; ++f)
            ds.features(f, i) = rand_c(rng, 0.7) + std::polar(1.0, 2.0 * std::numbers::pi * (label + f) / 3.0);
        ds.labels.push_back(label);
        ds.source_index.push_back(static_cast<std::size_t>(i));
    }
    return ds;
}

Outcome determinism() {
    const auto ds = synthetic(7);
    exp::ExperimentConfig cfg;
    cfg.hidden = {8, 8};
    cfg.dict_points = 5;
    cfg.c_grid = {0.0, 1e-3};
    cfg.max_iterations = 300;
    cfg.patience = 200;
    cfg.batch_size = 20;
    const fs::path base = fs::temp_directory_path() / ("wlkaf_accept_det_" + std::to_string(::getpid()));
    std::size_t same = 0, total = 0;
    for (auto v : exp::all_variants()) {
        const auto a = base / (exp::to_string(v) + "_a"), b = base / (exp::to_string(v) + "_b");
        exp::run_single(cfg, v, 5, ds, a);
        exp::run_single(cfg, v, 5, ds, b);
        for (const char* f : {"model.bin", "trace.csv", "grid.csv", "summary.json"}) {
            ++total;
            if (exp::read_text(a / f) == exp::read_text(b / f)) ++same;
        }
    }
    fs::remove_all(base);
    return {same == total, fmt("%zu/%zu artifact pairs byte-identical across 4 models", same, total)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"kernel identities", kernel_identities},
        {"standard KAF constraint", standard_constraint},
        {"Case 1 degeneracy", degeneracy},
        {"gradient correctness", gradients},
        {"softmax properties", softmax},
        {"FFT oracle", fft},
        {"MNIST subset accuracy", benchmark_accuracy},
        {"convergence ordering", convergence},
        {"determinism", determinism},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::strtoul(argv[i], nullptr, 10));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.contains(i + 1)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
