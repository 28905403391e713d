// Command-line harness: preprocess, train, evaluate, compare, gradcheck, curves.
//
// Exit codes: 0 success, 1 unexpected error, 2 bad parameters or usage, 3 data/cache/format
// errors, 4 numeric failure, 5 gradient check failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "wlkaf/experiment.hpp"

namespace fs = std::filesystem;
using namespace wlkaf;

namespace {

enum Exit { kOk = 0, kUnexpected = 1, kParameter = 2, kData = 3, kNumeric = 4, kGradcheck = 5 };

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericError*>(&e)) return kNumeric;
    if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const CacheError*>(&e) ||
        dynamic_cast<const FormatError*>(&e))
        return kData;
    if (dynamic_cast<const Error*>(&e)) return kParameter;
    return kUnexpected;
}

/// Shared options. Values given on the command line override the --config file.
struct Common {
    std::string config_file;
    std::map<std::string, std::string> flags;

    void add(CLI::App* app, const std::string& name, const std::string& help) {
        app->add_option_function<std::string>(
            "--" + name, [this, name](const std::string& v) { flags[name] = v; }, help)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }

    exp::ExperimentConfig resolve() const {
        exp::ExperimentConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& [k, v] : flags) cfg.set(k, v);
        cfg.validate();
        return cfg;
    }
};

void add_data_options(CLI::App* app, Common& c) {
    app->add_option("--config", c.config_file, "key = value file; flags given here win");
    c.add(app, "dataset", "mnist, fashion-mnist, emnist-digits or latin-ocr (default mnist)");
    c.add(app, "data-dir", "directory holding the IDX files (default $WLKAF_DATA_DIR, then ./data)");
    c.add(app, "k-coeffs", "FFT coefficients kept per image (default 100)");
    c.add(app, "split", "train,val,test as fractions or counts (default 0.8,0.1,0.1)");
    c.add(app, "data-seed", "seed of the split shuffle (default 0)");
    c.add(app, "cache", "dataset cache path (default <out>/cache/...)");
    c.add(app, "out", "output directory (default runs)");
}

void add_train_options(CLI::App* app, Common& c) {
    c.add(app, "model", "real_nn, kaf_independent, wlkaf_case1 or wlkaf_case2");
    c.add(app, "seed", "model and batch seed (default 1)");
    c.add(app, "c-grid", "comma-separated regularization weights (default 0,1e-5,1e-4,1e-3)");
    c.add(app, "lr", "Adagrad learning rate (default 0.01)");
    c.add(app, "batch-size", "mini-batch size (default 40)");
    c.add(app, "patience", "early-stopping patience in iterations (default 1000)");
    c.add(app, "eval-every", "validation interval in iterations (default 50)");
    c.add(app, "max-iterations", "iteration cap (default 100000)");
    c.add(app, "dict-points", "dictionary points per axis (default 8)");
    c.add(app, "dict-range", "dictionary range lo..hi (default -2..2)");
    c.add(app, "hidden", "comma-separated hidden widths (default 100,100,100)");
    c.add(app, "omega", "Case 2 mixing weight (default 0.3)");
    c.add(app, "init-gain", "scale of the complex weight init (default 0.7)");
}

int cmd_preprocess(const Common& c) {
    const auto cfg = c.resolve();
    bool built = false;
    const auto ds = exp::prepare_dataset(cfg, &built);
    std::printf("%s cache %s (%s)\n", cfg.dataset.c_str(), cfg.resolved_cache().string().c_str(),
                built ? "built" : "reused");
    std::printf("images %zux%zu, classes %zu, K = %zu, train/val/test = %zu/%zu/%zu\n", ds.rows, ds.cols, ds.classes,
                ds.feature_dim(), ds.n_train, ds.n_val, ds.n_test);
    std::printf("selected (row,col) first 10:");
    for (std::size_t k = 0; k < std::min<std::size_t>(10, ds.selected.size()); ++k)
        std::printf(" (%zu,%zu)", ds.selected[k] / ds.cols, ds.selected[k] % ds.cols);
    std::printf("\ncontent hash %016llx\n", static_cast<unsigned long long>(data::content_hash(ds)));
    return kOk;
}

int cmd_train(const Common& c) {
    const auto cfg = c.resolve();
    const auto ds = exp::prepare_dataset(cfg);
    const auto dir = exp::run_dir(cfg, cfg.model, cfg.seed);
    try {
        const auto s = exp::run_single(cfg, cfg.model, cfg.seed, ds, dir);
        std::printf("%s seed %llu: best C %g, validation %.4f, test %.4f, %zu iterations (best at %zu)\n",
                    exp::to_string(s.model).c_str(), static_cast<unsigned long long>(s.seed), s.best_C, s.val_accuracy,
                    s.test_accuracy, s.iterations, s.best_iteration);
        std::printf("wrote %s\n", dir.string().c_str());
    } catch (const optim::TrainingAborted& e) {
        fs::create_directories(dir);
        exp::write_text(dir / "trace.csv", e.trace().to_csv(false));
        std::fprintf(stderr, "error: %s\npartial trace kept in %s\n", e.what(), (dir / "trace.csv").string().c_str());
        return kNumeric;
    }
    return kOk;
}

int cmd_evaluate(const Common& c, const std::string& model_file, const std::string& which) {
    const auto cfg = c.resolve();
    const auto ds = exp::prepare_dataset(cfg);
    const auto split = which == "train" ? data::Split::Train : which == "val" ? data::Split::Val : data::Split::Test;
    if (which != "train" && which != "val" && which != "test")
        throw ParameterError("--split-name must be train, val or test");
    const auto bytes = data::detail::read_file(model_file);
    const auto header = io::peek_model_header(bytes, model_file);
    const auto part = ds.split(split);
    double acc;
    if (header.kind == "real") acc = optim::evaluate(io::deserialize_model<net::RealNetwork>(bytes, model_file), part);
    else acc = optim::evaluate(io::deserialize_model<net::ComplexNetwork>(bytes, model_file), part);
    std::printf("%s accuracy on %s (%zu samples): %.4f\n", model_file.c_str(), which.c_str(), part.size(), acc);
    return kOk;
}

int cmd_compare(const Common& c) {
    const auto cfg = c.resolve();
    const auto ds = exp::prepare_dataset(cfg);
    const auto rep = exp::compare(cfg, ds, [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); });
    const auto table = rep.table();
    std::fputs(table.c_str(), stdout);
    const fs::path out(cfg.out);
    exp::write_text(out / ("compare_" + cfg.dataset + ".txt"), table);
    exp::write_text(out / ("compare_" + cfg.dataset + ".json"), rep.to_json().dump(2) + "\n");
    for (const auto& r : rep.rows)
        if (!r.failures.empty()) return kNumeric;
    return kOk;
}

int cmd_gradcheck(const std::string& variant, std::uint64_t seed, std::size_t seeds) {
    std::vector<std::string> variants;
    if (variant == "all")
        for (const auto& [n, s] : check::gradcheck_variants()) variants.push_back(n);
    else
        variants.push_back(variant);
    bool ok = true;
    for (const auto& v : variants) {
        const auto s = exp::run_gradcheck(v, seed, seeds);
        std::printf("%-18s %s over %zu seed(s)\n", v.c_str(), s.passed ? "PASS" : "FAIL", s.seeds);
        for (const auto& [g, r] : s.groups)
            std::printf("  %-10s checked %6zu  failed %4zu  worst rel %.3e  worst abs %.3e\n", g.c_str(), r.checked,
                        r.failed, r.worst_rel, r.worst_abs);
        for (const auto& o : s.offenders) std::printf("  offending %s\n", o.c_str());
        ok = ok && s.passed;
    }
    return ok ? kOk : kGradcheck;
}

int cmd_curves(const std::vector<std::string>& inputs, const std::string& out_path,
               const std::optional<std::pair<std::size_t, std::size_t>>& window) {
    std::vector<std::pair<std::string, exp::TraceSeries>> traces;
    for (const auto& in : inputs) {
        std::string label, path = in;
        if (const auto eq = in.find('='); eq != std::string::npos) {
            label = in.substr(0, eq);
            path = in.substr(eq + 1);
        }
        fs::path p(path);
        if (fs::is_directory(p)) p /= "trace.csv";
        if (label.empty()) {
            // Run directories carry their model name in summary.json.
            const auto summary = p.parent_path() / "summary.json";
            label = fs::exists(summary) ? nlohmann::json::parse(exp::read_text(summary)).at("model").get<std::string>()
                                        : p.stem().string();
        }
        traces.emplace_back(label, exp::parse_trace_csv(exp::read_text(p), p.string()));
    }
    const auto curves = exp::merge_curves(traces);
    const auto csv = curves.to_csv();
    if (out_path.empty() || out_path == "-") std::fputs(csv.c_str(), stdout);
    else exp::write_text(out_path, csv);
    if (window)
        for (const auto& l : curves.labels)
            std::fprintf(stderr, "%s mean loss over (%zu, %zu]: %.6g\n", l.c_str(), window->first, window->second,
                         curves.window_mean(l, window->first, window->second));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Complex-valued networks with kernel activation functions"};
    app.require_subcommand(1);

    Common pre, tr, ev, cmp;
    auto* preprocess = app.add_subcommand("preprocess", "build and cache the FFT feature dataset");
    add_data_options(preprocess, pre);

    auto* train = app.add_subcommand("train", "grid-search C and train one model for one seed");
    add_data_options(train, tr);
    add_train_options(train, tr);

    std::string model_file, split_name = "test";
    auto* evaluate = app.add_subcommand("evaluate", "accuracy of a saved model on a dataset split");
    add_data_options(evaluate, ev);
    evaluate->add_option("--model-file", model_file, "model.bin written by train")->required();
    evaluate->add_option("--split-name", split_name, "train, val or test (default test)");

    auto* compare = app.add_subcommand("compare", "train every model over several seeds and tabulate");
    add_data_options(compare, cmp);
    add_train_options(compare, cmp);
    cmp.add(compare, "seeds", "comma-separated seeds (default 1,2,3,4,5)");
    cmp.add(compare, "models", "comma-separated models (default all four)");

    std::string gc_variant = "all";
    std::uint64_t gc_seed = 0;
    std::size_t gc_seeds = 20;
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every cogradient on tiny networks");
    gradcheck->add_option("--model", gc_variant,
                          "split_tanh, phase_amplitude, kaf_independent, kaf_real_gaussian, wlkaf_case1, "
                          "wlkaf_case2 or all (default)");
    gradcheck->add_option("--seed", gc_seed, "first seed (default 0)");
    gradcheck->add_option("--seeds", gc_seeds, "number of seeds (default 20)");

    std::vector<std::string> curve_inputs;
    std::string curve_out;
    std::vector<std::size_t> curve_window;
    auto* curves = app.add_subcommand("curves", "merge training traces into mean/std convergence curves");
    curves->add_option("traces", curve_inputs, "trace.csv files or run directories, optionally LABEL=PATH")->required();
    curves->add_option("--out", curve_out, "output CSV (default stdout)");
    curves->add_option("--window", curve_window, "LO HI: also report each curve's mean loss over (LO, HI]")
        ->expected(2);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kParameter;
    }

    try {
        if (*preprocess) return cmd_preprocess(pre);
        if (*train) return cmd_train(tr);
        if (*evaluate) return cmd_evaluate(ev, model_file, split_name);
        if (*compare) return cmd_compare(cmp);
        if (*gradcheck) return cmd_gradcheck(gc_variant, gc_seed, gc_seeds);
        if (*curves) {
            std::optional<std::pair<std::size_t, std::size_t>> window;
            if (curve_window.size() == 2) window = std::make_pair(curve_window[0], curve_window[1]);
            return cmd_curves(curve_inputs, curve_out, window);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    }
    return kOk;
}
