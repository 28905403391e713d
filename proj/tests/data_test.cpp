#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <unistd.h>

#include <gtest/gtest.h>
#include <zlib.h>

#include "wlkaf/data/dataset.hpp"
#include "wlkaf/data/fft.hpp"
#include "wlkaf/data/idx.hpp"

using namespace wlkaf;
using namespace wlkaf::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("wlkaf_data_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d / name;
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(const std::vector<std::vector<std::uint8_t>>& imgs, std::uint32_t rows,
                                     std::uint32_t cols) {
    std::vector<std::uint8_t> b;
    put_be32(b, 2051);
    put_be32(b, static_cast<std::uint32_t>(imgs.size()));
    put_be32(b, rows);
    put_be32(b, cols);
    for (const auto& im : imgs) b.insert(b.end(), im.begin(), im.end());
    return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> b;
    put_be32(b, 2049);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void write_gz(const fs::path& p, const std::vector<std::uint8_t>& b) {
    gzFile f = gzopen(p.string().c_str(), "wb");
    gzwrite(f, b.data(), static_cast<unsigned>(b.size()));
    gzclose(f);
}

// Minimal reference reader: header fields as big-endian words, then raw bytes.
std::vector<std::uint32_t> reference_header(const fs::path& p, int words) {
    std::ifstream in(p, std::ios::binary);
    std::vector<std::uint32_t> out;
    for (int w = 0; w < words; ++w) {
        unsigned char c[4];
        in.read(reinterpret_cast<char*>(c), 4);
        out.push_back((c[0] << 24u) | (c[1] << 16u) | (c[2] << 8u) | c[3]);
    }
    return out;
}

std::vector<std::complex<double>> naive_dft(const std::vector<double>& img, std::size_t H, std::size_t W) {
    std::vector<std::complex<double>> out(H * W);
    for (std::size_t u = 0; u < H; ++u)
        for (std::size_t v = 0; v < W; ++v) {
            std::complex<double> s = 0.0;
            for (std::size_t r = 0; r < H; ++r)
                for (std::size_t c = 0; c < W; ++c) {
                    const double ang = -2.0 * std::numbers::pi *
                                       (static_cast<double>(u * r) / static_cast<double>(H) +
                                        static_cast<double>(v * c) / static_cast<double>(W));
                    s += img[r * W + c] * std::polar(1.0, ang);
                }
            out[u * W + v] = s;
        }
    return out;
}

RawImageSet synthetic(std::size_t n, std::size_t rows, std::size_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    RawImageSet s;
    s.count = n;
    s.rows = rows;
    s.cols = cols;
    s.classes = 3;
    for (std::size_t i = 0; i < n * rows * cols; ++i) s.pixels.push_back(static_cast<std::uint8_t>(rng() % 256));
    for (std::size_t i = 0; i < n; ++i) s.labels.push_back(static_cast<int>(i % 3));
    return s;
}

}  // namespace

TEST(Idx, RoundTripAgainstReferenceReader) {
    const std::vector<std::vector<std::uint8_t>> imgs{{0, 1, 2, 3, 4, 5}, {250, 251, 252, 253, 254, 255}};
    write_bytes(scratch("img"), idx_images(imgs, 2, 3));
    write_bytes(scratch("lab"), idx_labels({7, 2}));
    const auto s = load_idx(scratch("img"), scratch("lab"));

    const auto h = reference_header(scratch("img"), 4);
    EXPECT_EQ(h[0], 2051u);
    EXPECT_EQ(s.count, h[1]);
    EXPECT_EQ(s.rows, h[2]);
    EXPECT_EQ(s.cols, h[3]);
    std::ifstream in(scratch("img"), std::ios::binary);
    in.seekg(16);
    std::vector<std::uint8_t> raw(12);
    in.read(reinterpret_cast<char*>(raw.data()), 12);
    EXPECT_EQ(s.pixels, raw);
    EXPECT_EQ(s.labels, (std::vector<int>{7, 2}));
    EXPECT_EQ(s.classes, 8u);
    EXPECT_EQ(s.image(1)[0], 250);
}

TEST(Idx, Gzip) {
    const std::vector<std::vector<std::uint8_t>> imgs{{9, 8, 7, 6}};
    write_gz(scratch("img.gz"), idx_images(imgs, 2, 2));
    write_gz(scratch("lab.gz"), idx_labels({1}));
    const auto s = load_idx(scratch("img.gz"), scratch("lab.gz"));
    EXPECT_EQ(s.pixels, (std::vector<std::uint8_t>{9, 8, 7, 6}));
}

TEST(Idx, FailsClosed) {
    auto img = idx_images({{1, 2, 3, 4}, {5, 6, 7, 8}}, 2, 2);
    write_bytes(scratch("lab2"), idx_labels({0, 1}));

    auto cut = img;
    cut.resize(cut.size() - 3);
    write_bytes(scratch("trunc"), cut);
    try {
        load_idx(scratch("trunc"), scratch("lab2"));
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    }

    auto bad = img;
    bad[3] = 0x01;
    write_bytes(scratch("magic"), bad);
    EXPECT_THROW(load_idx(scratch("magic"), scratch("lab2")), FormatError);

    write_bytes(scratch("short"), {0, 0, 8});
    EXPECT_THROW(load_idx(scratch("short"), scratch("lab2")), FormatError);

    write_bytes(scratch("ok"), img);
    write_bytes(scratch("lab1"), idx_labels({0}));
    EXPECT_THROW(load_idx(scratch("ok"), scratch("lab1")), FormatError);
    EXPECT_THROW(load_idx(scratch("missing"), scratch("lab1")), DataError);
}

TEST(Fft, ConstantAndImpulse) {
    const std::vector<double> c(12, 2.5);
    const auto F = fft2(c, 3, 4);
    EXPECT_NEAR(std::abs(F[0] - 2.5 * 12.0), 0.0, 1e-9);
    for (std::size_t k = 1; k < 12; ++k) EXPECT_LT(std::abs(F[k]), 1e-9);

    std::vector<double> d(16, 0.0);
    d[0] = 1.0;
    const auto G = fft2(d, 4, 4);
    for (auto v : G.data()) EXPECT_NEAR(std::abs(v - 1.0), 0.0, 1e-12);
}

TEST(Fft, MatchesNaiveDftAndParseval) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 255.0);
    for (auto [H, W] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 4}, {8, 8}, {3, 5}, {28, 28}}) {
        std::vector<double> img(H * W);
        for (auto& v : img) v = u(rng);
        const auto F = fft2(img, H, W);
        const auto N = naive_dft(img, H, W);
        double scale = 0.0, e2 = 0.0, f2 = 0.0;
        for (double v : img) e2 += v * v;
        for (std::size_t k = 0; k < H * W; ++k) {
            scale = std::max(scale, std::abs(N[k]));
            f2 += std::norm(F[k]);
        }
        // absolute 1e-9 on the small grids; the larger ones only get a relative bound
        const double tol = H * W <= 64 ? 1e-9 : 1e-12 * scale;
        for (std::size_t k = 0; k < H * W; ++k) EXPECT_LE(std::abs(F[k] - N[k]), tol) << H << "x" << W << " k=" << k;
        EXPECT_NEAR(f2 / static_cast<double>(H * W), e2, 1e-6 * e2);
    }
    EXPECT_THROW(fft2(std::vector<double>(3), 2, 2), DimensionError);
}

TEST(Ranking, HandComputedTwoByTwo) {
    // For a 2x2 image [a b; c d]: F00 = a+b+c+d, F01 = a-b+c-d, F10 = a+b-c-d, F11 = a-b-c+d
    RawImageSet s;
    s.count = 3;
    s.rows = s.cols = 2;
    s.pixels = {4, 0, 0, 0, /**/ 1, 3, 1, 3, /**/ 2, 2, 0, 0};
    s.labels = {0, 1, 0};
    s.classes = 2;
    // F01: 4, -4, 0 -> mean |.| 8/3; F10: 4, 0, 4 -> 8/3; F11: 4, 0, 0 -> 4/3; F00: 4, 8, 4 -> 16/3
    const std::vector<std::size_t> all{0, 1, 2};
    const auto m = mean_fft_magnitude(s, all);
    EXPECT_NEAR(m[0], 16.0 / 3.0, 1e-12);
    EXPECT_NEAR(m[1], 8.0 / 3.0, 1e-12);
    EXPECT_NEAR(m[2], 8.0 / 3.0, 1e-12);
    EXPECT_NEAR(m[3], 4.0 / 3.0, 1e-12);
    EXPECT_EQ(rank_and_select(s, all, 4), (std::vector<std::size_t>{0, 1, 2, 3}));
    EXPECT_EQ(rank_and_select(s, all, 2), (std::vector<std::size_t>{0, 1}));
    EXPECT_THROW(rank_and_select(s, all, 0), ParameterError);
    EXPECT_THROW(rank_and_select(s, all, 5), ParameterError);
}

TEST(Ranking, DcFirstAndFullSelection) {
    const auto s = synthetic(10, 5, 6, 2);
    std::vector<std::size_t> all(10);
    std::iota(all.begin(), all.end(), 0);
    EXPECT_EQ(rank_and_select(s, all, 1)[0], 0u);
    auto full = rank_and_select(s, all, 30);
    std::sort(full.begin(), full.end());
    for (std::size_t k = 0; k < 30; ++k) EXPECT_EQ(full[k], k);
}

TEST(Dataset, SplitSizes) {
    const auto c = SplitSpec{0.8, 0.1, 0.1}.resolve(100);
    EXPECT_EQ(c.train, 80u);
    EXPECT_EQ(c.val, 10u);
    EXPECT_EQ(c.test, 10u);
    const auto a = SplitSpec{60, 20, 20}.resolve(150);
    EXPECT_EQ(a.train, 60u);
    EXPECT_THROW((SplitSpec{90, 20, 20}.resolve(100)), ParameterError);
    EXPECT_THROW((SplitSpec{0.9, 0.1, 0.001}.resolve(100)), ParameterError);
    EXPECT_THROW((SplitSpec{0.7, 0.3, 0.3}.resolve(100)), ParameterError);

    const auto ds = build_complex_dataset(synthetic(100, 4, 4, 3), 5, {0.8, 0.1, 0.1}, 7);
    EXPECT_EQ(ds.n_train, 80u);
    EXPECT_EQ(ds.n_val, 10u);
    EXPECT_EQ(ds.n_test, 10u);
    auto idx = ds.source_index;
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::unique(idx.begin(), idx.end()), idx.end());
    EXPECT_EQ(ds.split(Split::Val).size(), 10u);
    EXPECT_EQ(ds.feature_dim(), 5u);
}

TEST(Dataset, FeaturesAndStandardization) {
    const auto raw = synthetic(60, 4, 4, 4);
    const auto ds = build_complex_dataset(raw, 6, {40, 10, 10}, 5);
    // features are the standardized FFT coefficients of the source image
    for (std::size_t n : {0, 45, 59}) {
        const auto F = fft2(image_as_double(raw, ds.source_index[n]), 4, 4);
        for (std::size_t k = 0; k < 6; ++k)
            EXPECT_NEAR(std::abs(ds.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)) -
                                 (F[ds.selected[k]] - ds.mean[k]) / ds.scale[k]),
                        0.0, 1e-12);
        EXPECT_EQ(ds.labels[n], raw.labels[ds.source_index[n]]);
    }
    const auto tr = ds.split(Split::Train);
    for (Eigen::Index k = 0; k < tr.X.rows(); ++k) {
        EXPECT_LE(std::abs(tr.X.row(k).mean()), 1e-9);
        EXPECT_NEAR(tr.X.row(k).cwiseAbs2().mean(), 1.0, 1e-9);
    }
}

TEST(Dataset, ZeroImagesAreGuarded) {
    RawImageSet s = synthetic(20, 3, 3, 5);
    std::fill(s.pixels.begin(), s.pixels.end(), 0);
    const auto ds = build_complex_dataset(s, 4, {10, 5, 5}, 1);
    for (double sc : ds.scale) EXPECT_EQ(sc, 1.0);
    EXPECT_EQ(ds.features.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dataset, DeterministicAndSeedDependent) {
    const auto raw = synthetic(50, 4, 4, 6);
    EXPECT_TRUE(build_complex_dataset(raw, 5, {30, 10, 10}, 2) == build_complex_dataset(raw, 5, {30, 10, 10}, 2));
    EXPECT_FALSE(build_complex_dataset(raw, 5, {30, 10, 10}, 2) == build_complex_dataset(raw, 5, {30, 10, 10}, 3));
}

TEST(Dataset, SelectionIgnoresHeldOutImages) {
    auto raw = synthetic(50, 4, 4, 7);
    const auto a = build_complex_dataset(raw, 8, {30, 10, 10}, 9);
    // scramble every held-out image
    std::mt19937_64 rng(1);
    for (std::size_t n = 30; n < 50; ++n) {
        auto* p = raw.pixels.data() + a.source_index[n] * raw.image_size();
        std::shuffle(p, p + raw.image_size(), rng);
        for (std::size_t i = 0; i < raw.image_size(); ++i) p[i] = static_cast<std::uint8_t>(255 - p[i]);
    }
    const auto b = build_complex_dataset(raw, 8, {30, 10, 10}, 9);
    EXPECT_EQ(a.selected, b.selected);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.scale, b.scale);
}

TEST(Cache, RoundTripAndCorruption) {
    const auto ds = build_complex_dataset(synthetic(40, 4, 4, 8), 5, {20, 10, 10}, 4);
    const auto p = scratch("ds.bin");
    cache_dataset(ds, p);
    const auto back = load_cached(p);
    EXPECT_TRUE(back == ds);
    EXPECT_EQ(content_hash(back), content_hash(ds));

    auto bytes = serialize_dataset(ds);
    auto flipped = bytes;
    flipped[3] ^= 0xff;
    EXPECT_THROW(deserialize_dataset(flipped), CacheError);
    flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x01;
    EXPECT_THROW(deserialize_dataset(flipped), CacheError);
    flipped = bytes;
    flipped[8] = 2;  // version
    EXPECT_THROW(deserialize_dataset(flipped), CacheError);
    bytes.resize(bytes.size() - 20);
    EXPECT_THROW(deserialize_dataset(bytes), CacheError);
    EXPECT_THROW(deserialize_dataset({}), CacheError);
}

TEST(Discovery, MissingFilesNameWhatIsExpected) {
    const auto dir = scratch("empty_dir");
    fs::create_directories(dir);
    try {
        load_dataset_pool(dir, "mnist");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("train-images-idx3-ubyte"), std::string::npos);
    }
}

TEST(Discovery, FindsTrainAndTestFiles) {
    const auto dir = scratch("mnist_like") / "mnist";
    fs::create_directories(dir);
    write_bytes(dir / "train-images-idx3-ubyte", idx_images({{1, 2, 3, 4}, {5, 6, 7, 8}}, 2, 2));
    write_bytes(dir / "train-labels-idx1-ubyte", idx_labels({0, 1}));
    write_gz(dir / "t10k-images-idx3-ubyte.gz", idx_images({{9, 9, 9, 9}}, 2, 2));
    write_gz(dir / "t10k-labels-idx1-ubyte.gz", idx_labels({2}));
    const auto pool = load_dataset_pool(dir.parent_path(), "mnist");
    EXPECT_EQ(pool.count, 3u);
    EXPECT_EQ(pool.labels, (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(pool.classes, 3u);
}
