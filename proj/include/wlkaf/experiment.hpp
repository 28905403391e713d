#pragma once

// Experiment plumbing behind the command-line tool: configuration (key = value files plus
// overrides), dataset caching, single runs with grid search, multi-seed comparison tables and
// convergence-curve merging. Every run writes its own directory:
//
//   config.txt    resolved configuration
//   model.bin     best-validation checkpoint
//   trace.csv     iteration, train_loss, val_accuracy (deterministic)
//   timing.csv    iteration, elapsed_seconds (wall clock, not deterministic)
//   grid.csv      C, best validation accuracy per grid point
//   summary.json  accuracies, chosen C, iteration counts

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "wlkaf/data/dataset.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/gradcheck.hpp"
#include "wlkaf/network.hpp"
#include "wlkaf/real_network.hpp"
#include "wlkaf/serialize.hpp"
#include "wlkaf/train.hpp"

namespace wlkaf::exp {

namespace fs = std::filesystem;
using nlohmann::json;

/// Traces being merged do not share an evaluation grid.
class AlignmentError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

enum class Variant { RealNN, KafIndependent, WlKafCase1, WlKafCase2 };

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::RealNN, Variant::KafIndependent, Variant::WlKafCase1,
                                        Variant::WlKafCase2};
    return v;
}

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::RealNN: return "real_nn";
        case Variant::KafIndependent: return "kaf_independent";
        case Variant::WlKafCase1: return "wlkaf_case1";
        case Variant::WlKafCase2: return "wlkaf_case2";
    }
    return "?";
}

/// Row labels in the comparison table.
inline std::string display_name(Variant v) {
    switch (v) {
        case Variant::RealNN: return "Real-valued NN";
        case Variant::KafIndependent: return "KAF";
        case Variant::WlKafCase1: return "WL-KAF (Case 1)";
        case Variant::WlKafCase2: return "WL-KAF (Case 2)";
    }
    return "?";
}

inline Variant variant_from_string(const std::string& s) {
    for (auto v : all_variants())
        if (to_string(v) == s) return v;
    throw ParameterError("unknown model '" + s + "' (expected real_nn, kaf_independent, wlkaf_case1 or wlkaf_case2)");
}

inline act::ActivationSpec activation_for(Variant v, double omega) {
    switch (v) {
        case Variant::KafIndependent: return act::KafSpec{kernels::KernelType::Independent};
        case Variant::WlKafCase2: return act::WlKafCase2Spec{{omega}};
        default: return act::WlKafCase1Spec{};  // real_nn ignores the activation
    }
}

// ---------------------------------------------------------------------------------------------
// Configuration

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!trim(item).empty()) out.push_back(trim(item));
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ParameterError("'" + key + "' expects a number, got '" + v + "'");
    }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        const auto n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ParameterError("'" + key + "' expects a nonnegative integer, got '" + v + "'");
    }
}

inline std::string format_double(double d) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

/// Everything a run depends on. Defaults follow the experimental protocol: 3 x 100 hidden
/// units, 8 x 8 dictionary on [-2, 2], 100 FFT coefficients, batches of 40, patience 1000.
struct ExperimentConfig {
    std::string dataset = "mnist";
    Variant model = Variant::WlKafCase1;
    std::vector<Variant> models = all_variants();  // compare only
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};  // compare only
    std::vector<double> c_grid{0.0, 1e-5, 1e-4, 1e-3};
    double lr = 0.01;
    std::size_t batch_size = 40;
    std::size_t patience = 1000;
    std::size_t eval_every = 50;
    std::size_t max_iterations = 100000;
    std::size_t dict_points = 8;
    double dict_lo = -2.0, dict_hi = 2.0;
    std::size_t k_coeffs = 100;
    std::vector<std::size_t> hidden{100, 100, 100};
    double omega = 0.3;
    double init_gain = 0.7;  // complex weight init scale, picked on validation accuracy
    data::SplitSpec split{0.8, 0.1, 0.1};
    std::uint64_t data_seed = 0;  // shuffles the pool into splits; fixed across model seeds
    std::string out = "runs";
    std::string data_dir;  // empty: $WLKAF_DATA_DIR, then ./data
    std::string cache;     // empty: derived from the data settings under <out>/cache

    /// Applies one key = value setting. Keys use underscores; dashes are accepted too.
    void set(std::string key, const std::string& raw) {
        std::replace(key.begin(), key.end(), '-', '_');
        const std::string v = trim(raw);
        if (key == "dataset") dataset = v;
        else if (key == "model") model = variant_from_string(v);
        else if (key == "models") {
            models.clear();
            for (const auto& m : split_list(v)) models.push_back(variant_from_string(m));
            if (models.empty()) throw ParameterError("'models' is empty");
        } else if (key == "seed") seed = parse_uint(key, v);
        else if (key == "seeds") {
            seeds.clear();
            for (const auto& s : split_list(v)) seeds.push_back(parse_uint(key, s));
            if (seeds.empty()) throw ParameterError("'seeds' is empty");
        } else if (key == "c_grid") {
            c_grid.clear();
            for (const auto& s : split_list(v)) c_grid.push_back(parse_double(key, s));
            if (c_grid.empty()) throw ParameterError("'c_grid' is empty");
        } else if (key == "lr") lr = parse_double(key, v);
        else if (key == "batch_size") batch_size = parse_uint(key, v);
        else if (key == "patience") patience = parse_uint(key, v);
        else if (key == "eval_every") eval_every = parse_uint(key, v);
        else if (key == "max_iterations") max_iterations = parse_uint(key, v);
        else if (key == "dict_points") dict_points = parse_uint(key, v);
        else if (key == "dict_range") {
            const auto sep = v.find("..", 1);
            if (sep == std::string::npos) throw ParameterError("'dict_range' expects lo..hi, got '" + v + "'");
            dict_lo = parse_double(key, v.substr(0, sep));
            dict_hi = parse_double(key, v.substr(sep + 2));
        } else if (key == "k_coeffs") k_coeffs = parse_uint(key, v);
        else if (key == "hidden") {
            hidden.clear();
            for (const auto& s : split_list(v)) hidden.push_back(parse_uint(key, s));
        } else if (key == "omega") omega = parse_double(key, v);
        else if (key == "init_gain") init_gain = parse_double(key, v);
        else if (key == "split") {
            const auto parts = split_list(v);
            if (parts.size() != 3) throw ParameterError("'split' expects train,val,test");
            split = {parse_double(key, parts[0]), parse_double(key, parts[1]), parse_double(key, parts[2])};
        } else if (key == "data_seed") data_seed = parse_uint(key, v);
        else if (key == "out") out = v;
        else if (key == "data_dir") data_dir = v;
        else if (key == "cache") cache = v;
        else throw ParameterError("unknown configuration key '" + key + "'");
    }

    /// Reads a flat key = value file; '#' starts a comment.
    void load_file(const fs::path& path) {
        std::ifstream in(path);
        if (!in) throw ParameterError("cannot read config file " + path.string());
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
            if (trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ParameterError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        }
    }

    std::string to_text() const {
        auto join = [](const auto& xs, auto f) {
            std::string s;
            for (const auto& x : xs) s += (s.empty() ? "" : ",") + f(x);
            return s;
        };
        auto num = [](auto x) { return std::to_string(x); };
        std::ostringstream os;
        os << "dataset = " << dataset << "\n"
           << "model = " << to_string(model) << "\n"
           << "models = " << join(models, [](Variant v) { return to_string(v); }) << "\n"
           << "seed = " << seed << "\n"
           << "seeds = " << join(seeds, num) << "\n"
           << "c_grid = " << join(c_grid, format_double) << "\n"
           << "lr = " << format_double(lr) << "\n"
           << "batch_size = " << batch_size << "\n"
           << "patience = " << patience << "\n"
           << "eval_every = " << eval_every << "\n"
           << "max_iterations = " << max_iterations << "\n"
           << "dict_points = " << dict_points << "\n"
           << "dict_range = " << format_double(dict_lo) << ".." << format_double(dict_hi) << "\n"
           << "k_coeffs = " << k_coeffs << "\n"
           << "hidden = " << join(hidden, num) << "\n"
           << "omega = " << format_double(omega) << "\n"
           << "init_gain = " << format_double(init_gain) << "\n"
           << "split = " << format_double(split.train) << "," << format_double(split.val) << ","
           << format_double(split.test) << "\n"
           << "data_seed = " << data_seed << "\n";
        return os.str();
    }

    void validate() const {
        if (!(lr > 0.0)) throw ParameterError("lr must be positive");
        if (!(init_gain > 0.0)) throw ParameterError("init_gain must be positive");
        if (k_coeffs == 0) throw ParameterError("k_coeffs must be positive");
        if (dict_points < 2) throw ParameterError("dict_points must be at least 2");
        if (!(dict_lo < dict_hi)) throw ParameterError("dict_range must satisfy lo < hi");
        for (double c : c_grid)
            if (!(c >= 0.0)) throw ParameterError("C values must be nonnegative");
        if (hidden.empty()) throw ParameterError("hidden must list at least one width");
        kernels::validate_omega(omega);
    }

    fs::path resolved_data_dir() const {
        if (!data_dir.empty()) return data_dir;
        if (const char* env = std::getenv("WLKAF_DATA_DIR"); env && *env) return env;
        return "data";
    }

    fs::path resolved_cache() const {
        if (!cache.empty()) return cache;
        std::ostringstream name;
        name << dataset << "_k" << k_coeffs << "_split" << format_double(split.train) << "-" << format_double(split.val)
             << "-" << format_double(split.test) << "_seed" << data_seed << ".bin";
        return fs::path(out) / "cache" / name.str();
    }

    optim::TrainConfig train_config(std::uint64_t run_seed) const {
        optim::TrainConfig t;
        t.batch_size = batch_size;
        t.patience = patience;
        t.eval_every = eval_every;
        t.max_iterations = max_iterations;
        t.c_grid = c_grid;
        t.adagrad.learning_rate = lr;
        t.seed = run_seed;
        return t;
    }

    net::NetworkConfig network_config(Variant v, std::size_t input_dim, std::size_t classes,
                                      std::uint64_t run_seed) const {
        net::NetworkConfig c;
        c.input_dim = input_dim;
        c.hidden = hidden;
        c.classes = classes;
        c.activation = activation_for(v, omega);
        c.dictionary = {dict_points, dict_lo, dict_hi};
        c.init_gain = init_gain;
        c.seed = run_seed;
        return c;
    }
};

// ---------------------------------------------------------------------------------------------
// Files

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// Loads the cached dataset for `cfg`, building and caching it on a miss. A cache whose
/// build parameters disagree with `cfg` is rebuilt.
inline data::ComplexDataset prepare_dataset(const ExperimentConfig& cfg, bool* built = nullptr) {
    const fs::path path = cfg.resolved_cache();
    if (fs::exists(path)) {
        try {
            auto ds = data::load_cached(path);
            const auto counts = cfg.split.resolve(ds.n_train + ds.n_val + ds.n_test);
            (void)counts;
            if (ds.feature_dim() == cfg.k_coeffs && ds.seed == cfg.data_seed) {
                if (built) *built = false;
                return ds;
            }
        } catch (const CacheError&) {
            // stale or corrupt: rebuild below
        } catch (const ParameterError&) {
        }
    }
    const auto pool = data::load_dataset_pool(cfg.resolved_data_dir(), cfg.dataset);
    auto ds = data::build_complex_dataset(pool, cfg.k_coeffs, cfg.split, cfg.data_seed);
    data::cache_dataset(ds, path);
    if (built) *built = true;
    return ds;
}

// ---------------------------------------------------------------------------------------------
// Single runs

struct RunSummary {
    Variant model = Variant::WlKafCase1;
    std::uint64_t seed = 0;
    double best_C = 0.0;
    std::vector<double> c_values, val_accuracies;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    std::size_t iterations = 0, best_iteration = 0;
    double seconds = 0.0;  // not written to summary.json

    json to_json() const {
        return {{"model", to_string(model)},
                {"seed", seed},
                {"best_C", best_C},
                {"c_grid", c_values},
                {"val_accuracy_per_C", val_accuracies},
                {"val_accuracy", val_accuracy},
                {"test_accuracy", test_accuracy},
                {"iterations", iterations},
                {"best_iteration", best_iteration}};
    }
};

namespace detail {

inline std::string timing_csv(const optim::TrainTrace& t) {
    std::ostringstream os;
    os << "iteration,elapsed_seconds\n";
    char buf[64];
    for (const auto& r : t.records) {
        std::snprintf(buf, sizeof buf, "%zu,%.3f\n", r.iteration, r.elapsed_seconds);
        os << buf;
    }
    return os.str();
}

template <class M>
RunSummary run_model(const ExperimentConfig& cfg, Variant v, std::uint64_t seed, const data::ComplexDataset& ds,
                     const fs::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto train_set = ds.split(data::Split::Train);
    const auto val_set = ds.split(data::Split::Val);
    const auto test_set = ds.split(data::Split::Test);
    const auto tc = cfg.train_config(seed);
    const auto nc = cfg.network_config(v, ds.feature_dim(), ds.classes, seed);
    const std::function<M()> factory = [&] { return M(nc); };
    const auto gs = optim::grid_search_C<M>(factory, train_set, val_set, tc, net::TrainObjective{});

    RunSummary s;
    s.model = v;
    s.seed = seed;
    s.best_C = gs.best_C;
    s.c_values = gs.c_values;
    s.val_accuracies = gs.val_accuracies;
    s.val_accuracy = gs.best.trace.best_val_accuracy;
    s.test_accuracy = optim::evaluate(gs.best.model, test_set);
    s.iterations = gs.best.trace.iterations_run;
    s.best_iteration = gs.best.trace.best_iteration;
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(dir);
    ExperimentConfig snap = cfg;
    snap.model = v;
    snap.seed = seed;
    write_text(dir / "config.txt", snap.to_text());
    io::save_model(gs.best.model, dir / "model.bin", {{"model", to_string(v)}, {"C", gs.best_C}});
    write_text(dir / "trace.csv", gs.best.trace.to_csv(false));
    write_text(dir / "timing.csv", timing_csv(gs.best.trace));
    std::string grid = "C,val_accuracy\n";
    for (std::size_t i = 0; i < gs.c_values.size(); ++i)
        grid += format_double(gs.c_values[i]) + "," + format_double(gs.val_accuracies[i]) + "\n";
    write_text(dir / "grid.csv", grid);
    write_text(dir / "summary.json", s.to_json().dump(2) + "\n");
    return s;
}

}  // namespace detail

inline fs::path run_dir(const ExperimentConfig& cfg, Variant v, std::uint64_t seed) {
    return fs::path(cfg.out) / (cfg.dataset + "_" + to_string(v) + "_seed" + std::to_string(seed));
}

/// Grid search over cfg.c_grid for one variant and seed; writes the run directory.
inline RunSummary run_single(const ExperimentConfig& cfg, Variant v, std::uint64_t seed, const data::ComplexDataset& ds,
                             std::optional<fs::path> dir = std::nullopt) {
    cfg.validate();
    const fs::path d = dir ? *dir : run_dir(cfg, v, seed);
    if (v == Variant::RealNN) return detail::run_model<net::RealNetwork>(cfg, v, seed, ds, d);
    return detail::run_model<net::ComplexNetwork>(cfg, v, seed, ds, d);
}

// ---------------------------------------------------------------------------------------------
// Comparison

struct ModelRow {
    Variant model;
    std::vector<RunSummary> runs;
    std::vector<std::string> failures;  // "seed N: message"

    std::size_t count() const { return runs.size(); }
    double mean() const {
        double s = 0.0;
        for (const auto& r : runs) s += r.test_accuracy;
        return runs.empty() ? std::nan("") : s / static_cast<double>(runs.size());
    }
    /// Sample standard deviation; only defined for two or more runs.
    std::optional<double> stddev() const {
        if (runs.size() < 2) return std::nullopt;
        const double m = mean();
        double s = 0.0;
        for (const auto& r : runs) s += (r.test_accuracy - m) * (r.test_accuracy - m);
        return std::sqrt(s / static_cast<double>(runs.size() - 1));
    }
};

struct ComparisonReport {
    std::string dataset;
    std::vector<ModelRow> rows;

    std::optional<std::size_t> best_row() const {
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (!rows[i].runs.empty() && (!best || rows[i].mean() > rows[*best].mean())) best = i;
        return best;
    }

    const ModelRow* row(Variant v) const {
        for (const auto& r : rows)
            if (r.model == v) return &r;
        return nullptr;
    }

    /// One row per model, one column for the dataset, cells "mean ± std" in percent; the best
    /// mean is marked with '*'.
    std::string table() const {
        const auto best = best_row();
        std::ostringstream os;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-22s | %-22s\n", "Model", dataset.c_str());
        os << buf << std::string(22, '-') << "-+-" << std::string(22, '-') << "\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            std::string cell;
            if (r.runs.empty()) {
                cell = "FAILED";
            } else {
                std::snprintf(buf, sizeof buf, "%.2f", 100.0 * r.mean());
                cell = buf;
                if (const auto sd = r.stddev()) {
                    std::snprintf(buf, sizeof buf, " ± %.2f", 100.0 * *sd);
                    cell += buf;
                }
                if (best && *best == i) cell += " *";
                if (!r.failures.empty()) cell += " (" + std::to_string(r.failures.size()) + " failed)";
            }
            std::snprintf(buf, sizeof buf, "%-22s | %s\n", display_name(r.model).c_str(), cell.c_str());
            os << buf;
        }
        os << "\nTest accuracy (%) over " << (rows.empty() ? 0 : rows.front().runs.size() + rows.front().failures.size())
           << " seed(s); * marks the best mean.\n";
        return os.str();
    }

    json to_json() const {
        json rs = json::array();
        const auto best = best_row();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& r = rows[i];
            json runs = json::array();
            for (const auto& s : r.runs) runs.push_back(s.to_json());
            json row = {{"model", to_string(r.model)},
                        {"seed_count", r.runs.size()},
                        {"runs", runs},
                        {"failures", r.failures},
                        {"best", best && *best == i}};
            row["mean_accuracy"] = r.runs.empty() ? json(nullptr) : json(r.mean());
            if (const auto sd = r.stddev()) row["std"] = *sd;
            std::vector<double> cs;
            for (const auto& s : r.runs) cs.push_back(s.best_C);
            row["best_C"] = cs;
            rs.push_back(row);
        }
        return {{"dataset", dataset}, {"rows", rs}};
    }
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains every requested variant for every seed. Failed runs are recorded, not dropped.
inline ComparisonReport compare(const ExperimentConfig& cfg, const data::ComplexDataset& ds,
                                const ProgressFn& progress = {}) {
    cfg.validate();
    ComparisonReport rep;
    rep.dataset = cfg.dataset;
    for (auto v : cfg.models) {
        ModelRow row{v, {}, {}};
        for (auto seed : cfg.seeds) {
            try {
                row.runs.push_back(run_single(cfg, v, seed, ds));
                if (progress) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf, "%s seed %llu: test %.4f (C=%g, %zu iterations, %.0f s)",
                                  to_string(v).c_str(), static_cast<unsigned long long>(seed),
                                  row.runs.back().test_accuracy, row.runs.back().best_C, row.runs.back().iterations,
                                  row.runs.back().seconds);
                    progress(buf);
                }
            } catch (const Error& e) {
                row.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
                if (progress) progress(to_string(v) + " seed " + std::to_string(seed) + " FAILED: " + e.what());
            }
        }
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

// ---------------------------------------------------------------------------------------------
// Convergence curves

struct TraceSeries {
    std::vector<std::size_t> iterations;
    std::vector<double> loss;
};

inline TraceSeries parse_trace_csv(const std::string& text, const std::string& what = "trace") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line).rfind("iteration,train_loss", 0) != 0)
        throw DataError(what + " is not a trace CSV (missing header)");
    TraceSeries t;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cols = split_list(line);
        if (cols.size() < 3) throw DataError(what + ":" + std::to_string(lineno) + ": expected at least 3 columns");
        t.iterations.push_back(parse_uint("iteration", cols[0]));
        t.loss.push_back(parse_double("train_loss", cols[1]));
        if (t.iterations.size() > 1 && t.iterations.back() <= t.iterations[t.iterations.size() - 2])
            throw DataError(what + ":" + std::to_string(lineno) + ": iterations must increase");
    }
    if (t.iterations.empty()) throw DataError(what + " has no records");
    return t;
}

/// Evaluation interval of a trace: the step between consecutive records, ignoring the final
/// record (which may be cut short by max_iterations). Zero for a single-record trace.
inline std::size_t eval_interval(const TraceSeries& t) {
    if (t.iterations.size() < 2) return 0;
    const std::size_t step = t.iterations[1] - t.iterations[0];
    const std::size_t n = t.iterations.size();
    for (std::size_t i = 1; i + 1 < n; ++i)
        if (t.iterations[i] - t.iterations[i - 1] != step)
            throw AlignmentError("trace has irregular evaluation steps");
    if (n >= 3 && t.iterations[n - 1] - t.iterations[n - 2] > step)
        throw AlignmentError("trace has irregular evaluation steps");
    return step;
}

struct CurveSet {
    std::vector<std::string> labels;  // one per model, in first-seen order
    std::vector<std::size_t> iterations;
    // [label][iteration index]; NaN where no trace of that label reaches the iteration
    std::vector<std::vector<double>> mean, stddev;
    std::vector<std::vector<std::size_t>> count;

    std::string to_csv() const {
        std::ostringstream os;
        os << "iteration";
        for (const auto& l : labels) os << "," << l << "_mean," << l << "_std," << l << "_n";
        os << "\n";
        for (std::size_t i = 0; i < iterations.size(); ++i) {
            os << iterations[i];
            for (std::size_t k = 0; k < labels.size(); ++k) {
                if (count[k][i] == 0) {
                    os << ",,,0";
                    continue;
                }
                os << "," << format_double(mean[k][i]) << "," << format_double(stddev[k][i]) << "," << count[k][i];
            }
            os << "\n";
        }
        return os.str();
    }

    /// Mean of a label's mean-loss curve over records with lo < iteration <= hi.
    double window_mean(const std::string& label, std::size_t lo, std::size_t hi) const {
        const auto it = std::find(labels.begin(), labels.end(), label);
        if (it == labels.end()) throw ParameterError("no curve labelled '" + label + "'");
        const auto k = static_cast<std::size_t>(it - labels.begin());
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < iterations.size(); ++i)
            if (iterations[i] > lo && iterations[i] <= hi && count[k][i] > 0) {
                s += mean[k][i];
                ++n;
            }
        if (n == 0) throw ParameterError("curve '" + label + "' has no records in the window");
        return s / static_cast<double>(n);
    }
};

/// Merges labelled traces on the iteration index: per label and iteration, the mean and the
/// standard deviation (sample, zero for a single trace) of the recorded training loss.
inline CurveSet merge_curves(const std::vector<std::pair<std::string, TraceSeries>>& traces) {
    if (traces.empty()) throw ParameterError("curves needs at least one trace");
    std::size_t step = 0;
    for (const auto& [label, t] : traces) {
        const auto s = eval_interval(t);
        if (s == 0) continue;
        if (step != 0 && s != step)
            throw AlignmentError("traces use different evaluation intervals (" + std::to_string(step) + " and " +
                                 std::to_string(s) + "); '" + label + "' cannot be aligned");
        step = s;
    }
    CurveSet c;
    std::map<std::size_t, std::size_t> index;
    for (const auto& [label, t] : traces) {
        if (std::find(c.labels.begin(), c.labels.end(), label) == c.labels.end()) c.labels.push_back(label);
        for (auto it : t.iterations) index.emplace(it, 0);
    }
    for (auto& [it, i] : index) {
        i = c.iterations.size();
        c.iterations.push_back(it);
    }
    const std::size_t L = c.labels.size(), N = c.iterations.size();
    std::vector<std::vector<std::vector<double>>> values(L, std::vector<std::vector<double>>(N));
    for (const auto& [label, t] : traces) {
        const auto k = static_cast<std::size_t>(std::find(c.labels.begin(), c.labels.end(), label) - c.labels.begin());
        for (std::size_t r = 0; r < t.iterations.size(); ++r) values[k][index[t.iterations[r]]].push_back(t.loss[r]);
    }
    c.mean.assign(L, std::vector<double>(N, std::nan("")));
    c.stddev.assign(L, std::vector<double>(N, std::nan("")));
    c.count.assign(L, std::vector<std::size_t>(N, 0));
    for (std::size_t k = 0; k < L; ++k)
        for (std::size_t i = 0; i < N; ++i) {
            const auto& v = values[k][i];
            c.count[k][i] = v.size();
            if (v.empty()) continue;
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            c.mean[k][i] = m;
            c.stddev[k][i] = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
        }
    return c;
}

// ---------------------------------------------------------------------------------------------
// Gradient check over the activation families

struct GradcheckSummary {
    std::string variant;
    std::size_t seeds = 0;
    bool passed = true;
    std::map<std::string, check::GroupReport> groups;  // worst over seeds
    std::vector<std::string> offenders;
};

inline GradcheckSummary run_gradcheck(const std::string& variant, std::uint64_t first_seed, std::size_t seeds,
                                      const check::GradcheckOptions& opt = {},
                                      const check::GradientCorruption& corrupt = {}) {
    const auto spec = check::gradcheck_variant(variant);
    GradcheckSummary s;
    s.variant = variant;
    s.seeds = seeds;
    for (std::size_t k = 0; k < seeds; ++k) {
        const auto seed = first_seed + k;
        auto t = check::tiny_problem(spec, seed);
        const auto rep = check::gradcheck(t.model, t.X, t.y, t.obj, opt, corrupt);
        s.passed = s.passed && rep.passed;
        for (const auto& [g, r] : rep.groups) {
            auto& w = s.groups[g];
            w.checked += r.checked;
            w.failed += r.failed;
            w.worst_rel = std::max(w.worst_rel, r.worst_rel);
            w.worst_abs = std::max(w.worst_abs, r.worst_abs);
        }
        for (const auto& o : rep.offenders) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "seed %llu %s[%zu]: analytic %.10g, numeric %.10g",
                          static_cast<unsigned long long>(seed), o.name.c_str(), o.component, o.analytic, o.numeric);
            if (s.offenders.size() < 20) s.offenders.push_back(buf);
        }
    }
    return s;
}

}  // namespace wlkaf::exp
