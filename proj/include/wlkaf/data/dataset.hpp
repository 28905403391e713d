#pragma once

// Complex-valued features from grayscale images: 2-D FFT of every image, ranking of the
// coefficients by their mean magnitude over the training split, top-K selection and
// per-coefficient standardization. Also the versioned binary cache for the result.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <span>
#include <vector>

#include "wlkaf/cnum.hpp"
#include "wlkaf/data/fft.hpp"
#include "wlkaf/data/idx.hpp"
#include "wlkaf/errors.hpp"
#include "wlkaf/train.hpp"

namespace wlkaf::data {

using cnum::CMatrix;
using cnum::Complex;

/// Split sizes, either as fractions of the pool (all values <= 1) or as absolute counts.
struct SplitSpec {
    double train = 0.8, val = 0.1, test = 0.1;

    struct Counts {
        std::size_t train, val, test;
    };

    Counts resolve(std::size_t n) const {
        if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ParameterError("split sizes must be positive");
        const bool fractions = train <= 1.0 && val <= 1.0 && test <= 1.0;
        Counts c{};
        if (fractions) {
            if (train + val + test > 1.0 + 1e-12) throw ParameterError("split fractions sum to more than 1");
            c = {static_cast<std::size_t>(std::llround(train * static_cast<double>(n))),
                 static_cast<std::size_t>(std::llround(val * static_cast<double>(n))),
                 static_cast<std::size_t>(std::llround(test * static_cast<double>(n)))};
            c.test = std::min(c.test, n - std::min(n, c.train + c.val));
        } else {
            c = {static_cast<std::size_t>(train), static_cast<std::size_t>(val), static_cast<std::size_t>(test)};
            if (c.train + c.val + c.test > n)
                throw ParameterError("requested split counts exceed the " + std::to_string(n) + " available images");
        }
        if (c.train == 0 || c.val == 0 || c.test == 0) throw ParameterError("a split would be empty");
        return c;
    }
};

enum class Split { Train, Val, Test };

/// Complex features of the selected FFT coefficients. Columns of `features` are samples, ordered
/// train | val | test, so the K x N column-major storage is the N x K row-major feature table.
struct ComplexDataset {
    std::size_t rows = 0, cols = 0;  // source image size
    std::size_t classes = 0;
    std::vector<std::size_t> selected;  // flat FFT indices, most significant first
    std::vector<Complex> mean;          // per selected coefficient, training split
    std::vector<double> scale;          // per selected coefficient, training split
    CMatrix features;                   // [K x N]
    std::vector<int> labels;            // [N]
    std::vector<std::size_t> source_index;  // position of each sample in the raw image set
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    std::uint64_t seed = 0;

    std::size_t feature_dim() const noexcept { return selected.size(); }
    std::size_t size() const noexcept { return labels.size(); }

    std::vector<std::size_t> indices(Split s) const {
        std::size_t begin = 0, len = n_train;
        if (s == Split::Val) begin = n_train, len = n_val;
        if (s == Split::Test) begin = n_train + n_val, len = n_test;
        std::vector<std::size_t> idx(len);
        std::iota(idx.begin(), idx.end(), begin);
        return idx;
    }

    optim::LabeledData split(Split s) const {
        const auto idx = indices(s);
        optim::LabeledData d;
        d.X = features.middleCols(static_cast<Eigen::Index>(idx.empty() ? 0 : idx.front()),
                                  static_cast<Eigen::Index>(idx.size()));
        d.y.assign(labels.begin() + static_cast<std::ptrdiff_t>(idx.empty() ? 0 : idx.front()),
                   labels.begin() + static_cast<std::ptrdiff_t>(idx.empty() ? 0 : idx.front() + idx.size()));
        return d;
    }

    bool operator==(const ComplexDataset& o) const {
        return rows == o.rows && cols == o.cols && classes == o.classes && selected == o.selected &&
               mean == o.mean && scale == o.scale && features == o.features && labels == o.labels &&
               source_index == o.source_index && n_train == o.n_train && n_val == o.n_val &&
               n_test == o.n_test && seed == o.seed;
    }
};

inline std::vector<double> image_as_double(const RawImageSet& raw, std::size_t n) {
    const auto* p = raw.image(n);
    return std::vector<double>(p, p + raw.image_size());
}

/// Mean |FFT coefficient| per flat index over the given images.
inline std::vector<double> mean_fft_magnitude(const RawImageSet& raw, std::span<const std::size_t> images) {
    if (images.empty()) throw ParameterError("cannot rank coefficients over an empty image set");
    std::vector<double> acc(raw.image_size(), 0.0);
    Fft2 fft;
    for (std::size_t n : images) {
        const auto px = image_as_double(raw, n);
        const auto F = fft(px, raw.rows, raw.cols);
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += std::abs(F[k]);
    }
    for (double& v : acc) v /= static_cast<double>(images.size());
    return acc;
}

/// Top-K flat indices by decreasing mean magnitude; ties broken by ascending index.
inline std::vector<std::size_t> top_k_indices(std::span<const double> significance, std::size_t K) {
    if (K == 0) throw ParameterError("K must be positive");
    if (K > significance.size())
        throw ParameterError("K = " + std::to_string(K) + " exceeds the " + std::to_string(significance.size()) +
                             " available coefficients");
    std::vector<std::size_t> idx(significance.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return significance[a] > significance[b]; });
    idx.resize(K);
    return idx;
}

/// Ranks FFT coefficients over the training images only and keeps the K most significant.
inline std::vector<std::size_t> rank_and_select(const RawImageSet& raw, std::span<const std::size_t> train_images,
                                                std::size_t K) {
    if (K == 0 || K > raw.image_size())
        throw ParameterError("K must lie in [1, " + std::to_string(raw.image_size()) + "], got " + std::to_string(K));
    return top_k_indices(mean_fft_magnitude(raw, train_images), K);
}

/// Seeded Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[static_cast<std::size_t>(rng() % i)]);
    return p;
}

/// Builds the standardized complex dataset from a pool of raw images.
inline ComplexDataset build_complex_dataset(const RawImageSet& raw, std::size_t K, const SplitSpec& splits,
                                            std::uint64_t seed) {
    if (raw.count == 0) throw ParameterError("raw image set is empty");
    const auto counts = splits.resolve(raw.count);
    const auto perm = seeded_permutation(raw.count, seed);
    const std::size_t used = counts.train + counts.val + counts.test;

    ComplexDataset ds;
    ds.rows = raw.rows;
    ds.cols = raw.cols;
    ds.classes = raw.classes;
    ds.seed = seed;
    ds.n_train = counts.train;
    ds.n_val = counts.val;
    ds.n_test = counts.test;
    ds.source_index.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(used));
    ds.selected = rank_and_select(raw, std::span(ds.source_index).first(counts.train), K);

    ds.features.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(used));
    ds.labels.resize(used);
    Fft2 fft;
    for (std::size_t n = 0; n < used; ++n) {
        const auto px = image_as_double(raw, ds.source_index[n]);
        const auto F = fft(px, raw.rows, raw.cols);
        for (std::size_t k = 0; k < K; ++k)
            ds.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)) = F[ds.selected[k]];
        ds.labels[n] = raw.labels[ds.source_index[n]];
    }

    // Standardize each coefficient with training statistics: subtract the complex mean and divide
    // by sqrt(mean |x - mean|^2). Constant coefficients keep scale 1.
    ds.mean.assign(K, Complex{});
    ds.scale.assign(K, 1.0);
    const auto ntr = static_cast<Eigen::Index>(counts.train);
    for (std::size_t k = 0; k < K; ++k) {
        const auto row = ds.features.row(static_cast<Eigen::Index>(k));
        const Complex mu = row.head(ntr).mean();
        double var = 0.0;
        for (Eigen::Index n = 0; n < ntr; ++n) var += std::norm(row(n) - mu);
        var /= static_cast<double>(ntr);
        const double sd = std::sqrt(var);
        ds.mean[k] = mu;
        ds.scale[k] = sd > 1e-12 ? sd : 1.0;
    }
    for (Eigen::Index n = 0; n < ds.features.cols(); ++n)
        for (std::size_t k = 0; k < K; ++k) {
            auto& v = ds.features(static_cast<Eigen::Index>(k), n);
            v = (v - ds.mean[k]) / ds.scale[k];
        }
    return ds;
}

// ---------------------------------------------------------------------------------------------
// Binary cache. Layout (little-endian):
//   "WLKAFDS1"  u32 version
//   u64 rows, cols, classes, K, N, n_train, n_val, n_test, seed
//   u64 selected[K]  f64 mean[2K]  f64 scale[K]  i32 labels[N]  u64 source_index[N]  f64 features[2KN]
//   u64 FNV-1a hash of every preceding byte

inline constexpr char kCacheMagic[8] = {'W', 'L', 'K', 'A', 'F', 'D', 'S', '1'};
inline constexpr std::uint32_t kCacheVersion = 1;

inline std::uint64_t fnv1a(const std::uint8_t* p, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

namespace detail {

class Writer {
public:
    template <class T>
    void put(const T& v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    template <class T>
    void put_array(const T* data, std::size_t n) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n * sizeof(T));
    }
    std::vector<std::uint8_t>& bytes() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& b, std::string what) : b_(b), what_(std::move(what)) {}
    template <class T>
    T get() {
        T v;
        get_array(&v, 1);
        return v;
    }
    template <class T>
    void get_array(T* out, std::size_t n) {
        const std::size_t bytes = n * sizeof(T);
        if (n != 0 && (bytes / n != sizeof(T) || pos_ + bytes > b_.size() || pos_ + bytes < pos_))
            throw CacheError(what_ + " is truncated at byte " + std::to_string(pos_));
        std::memcpy(out, b_.data() + pos_, bytes);
        pos_ += bytes;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::vector<std::uint8_t>& b_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CacheError("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CacheError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CacheError("failed writing " + path.string());
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_dataset(const ComplexDataset& ds) {
    detail::Writer w;
    w.put_array(kCacheMagic, 8);
    w.put(kCacheVersion);
    const std::uint64_t K = ds.feature_dim(), N = ds.size();
    for (std::uint64_t v : {std::uint64_t(ds.rows), std::uint64_t(ds.cols), std::uint64_t(ds.classes), K, N,
                            std::uint64_t(ds.n_train), std::uint64_t(ds.n_val), std::uint64_t(ds.n_test), ds.seed})
        w.put(v);
    for (auto s : ds.selected) w.put(std::uint64_t(s));
    w.put_array(ds.mean.data(), ds.mean.size());
    w.put_array(ds.scale.data(), ds.scale.size());
    for (int l : ds.labels) w.put(std::int32_t(l));
    for (auto s : ds.source_index) w.put(std::uint64_t(s));
    w.put_array(ds.features.data(), static_cast<std::size_t>(ds.features.size()));
    const auto h = fnv1a(w.bytes().data(), w.bytes().size());
    w.put(h);
    return std::move(w.bytes());
}

inline ComplexDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes, const std::string& what = "cache") {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kCacheMagic, 8) != 0)
        throw CacheError(what + " is not a dataset cache (bad magic); rebuild it with `wlkaf preprocess`");
    detail::Reader r(bytes, what);
    char magic[8];
    r.get_array(magic, 8);
    if (const auto v = r.get<std::uint32_t>(); v != kCacheVersion)
        throw CacheError(what + " has version " + std::to_string(v) + ", expected " + std::to_string(kCacheVersion) +
                         "; rebuild it with `wlkaf preprocess`");
    if (bytes.size() < 8 || fnv1a(bytes.data(), bytes.size() - 8) != [&] {
            std::uint64_t h;
            std::memcpy(&h, bytes.data() + bytes.size() - 8, 8);
            return h;
        }())
        throw CacheError(what + " failed its checksum; rebuild it with `wlkaf preprocess`");
    ComplexDataset ds;
    ds.rows = r.get<std::uint64_t>();
    ds.cols = r.get<std::uint64_t>();
    ds.classes = r.get<std::uint64_t>();
    const auto K = r.get<std::uint64_t>();
    const auto N = r.get<std::uint64_t>();
    ds.n_train = r.get<std::uint64_t>();
    ds.n_val = r.get<std::uint64_t>();
    ds.n_test = r.get<std::uint64_t>();
    ds.seed = r.get<std::uint64_t>();
    if (ds.n_train + ds.n_val + ds.n_test != N || K == 0 || K > ds.rows * ds.cols)
        throw CacheError(what + " has an inconsistent header");
    const std::size_t expected = 12 + 9 * 8 + K * 8 + K * 16 + K * 8 + N * 4 + N * 8 + K * N * 16 + 8;
    if (bytes.size() != expected) throw CacheError(what + " has unexpected length " + std::to_string(bytes.size()));
    ds.selected.resize(K);
    for (auto& s : ds.selected) s = r.get<std::uint64_t>();
    ds.mean.resize(K);
    r.get_array(ds.mean.data(), K);
    ds.scale.resize(K);
    r.get_array(ds.scale.data(), K);
    ds.labels.resize(N);
    for (auto& l : ds.labels) l = r.get<std::int32_t>();
    ds.source_index.resize(N);
    for (auto& s : ds.source_index) s = r.get<std::uint64_t>();
    ds.features.resize(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(N));
    r.get_array(ds.features.data(), K * N);
    return ds;
}

inline void cache_dataset(const ComplexDataset& ds, const std::filesystem::path& path) {
    detail::write_file(path, serialize_dataset(ds));
}

inline ComplexDataset load_cached(const std::filesystem::path& path) {
    return deserialize_dataset(detail::read_file(path), path.string());
}

/// Hash of the serialized dataset; equal hashes mean identical features, labels and splits.
inline std::uint64_t content_hash(const ComplexDataset& ds) {
    const auto b = serialize_dataset(ds);
    return fnv1a(b.data(), b.size());
}

// ---------------------------------------------------------------------------------------------
// Dataset discovery

struct IdxFiles {
    std::filesystem::path images, labels;
};

/// Locates `<data_dir>/<name>/` (or `<data_dir>/`) IDX files, gzipped or not. Returns the train
/// part and, when present, the test part.
inline std::vector<IdxFiles> locate_dataset(const std::filesystem::path& data_dir, const std::string& name) {
    const std::vector<std::string> prefixes{"", name + "-", "emnist-digits-"};
    const std::vector<std::filesystem::path> dirs{data_dir / name, data_dir};
    auto find = [&](const std::vector<std::string>& stems) -> std::optional<std::filesystem::path> {
        for (const auto& d : dirs)
            for (const auto& p : prefixes)
                for (const auto& s : stems)
                    for (const char* ext : {"", ".gz"}) {
                        auto f = d / (p + s + ext);
                        if (std::filesystem::exists(f)) return f;
                    }
        return std::nullopt;
    };
    const auto tr_img = find({"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
    const auto tr_lab = find({"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
    if (!tr_img || !tr_lab)
        throw DataError("dataset '" + name + "' not found: expected " + (data_dir / name).string() +
                        "/train-images-idx3-ubyte[.gz] and train-labels-idx1-ubyte[.gz] "
                        "(optionally t10k-images-idx3-ubyte[.gz] and t10k-labels-idx1-ubyte[.gz]); "
                        "set --data-dir or WLKAF_DATA_DIR");
    std::vector<IdxFiles> parts{{*tr_img, *tr_lab}};
    const auto te_img = find({"t10k-images-idx3-ubyte", "test-images-idx3-ubyte", "t10k-images.idx3-ubyte"});
    const auto te_lab = find({"t10k-labels-idx1-ubyte", "test-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"});
    if (te_img && te_lab) parts.push_back({*te_img, *te_lab});
    return parts;
}

/// Loads every part of a named dataset into one pool.
inline RawImageSet load_dataset_pool(const std::filesystem::path& data_dir, const std::string& name) {
    RawImageSet pool;
    for (const auto& part : locate_dataset(data_dir, name)) pool = concatenate(std::move(pool), load_idx(part.images, part.labels));
    return pool;
}

}  // namespace wlkaf::data
