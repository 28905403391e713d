#pragma once

// IDX (MNIST-family) image and label files, optionally gzip-compressed.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <zlib.h>

#include "wlkaf/errors.hpp"

namespace wlkaf::data {

inline constexpr std::uint32_t kIdxImagesMagic = 2051;
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;

/// N grayscale images of H x W pixels with integer labels.
struct RawImageSet {
    std::size_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;  // N * rows * cols, row-major per image
    std::vector<int> labels;
    std::size_t classes = 0;

    std::size_t image_size() const noexcept { return rows * cols; }
    const std::uint8_t* image(std::size_t n) const { return pixels.data() + n * image_size(); }
};

/// Whole file contents; gzip streams are inflated, plain files are returned as is.
inline std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    int err = 0;
    const char* msg = gzerror(f, &err);
    const std::string what = msg ? msg : "";
    gzclose(f);
    if (n < 0 || (err != Z_OK && err != Z_STREAM_END))
        throw FormatError("corrupt compressed stream in " + path.string() + ": " + what, out.size());
    return out;
}

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& file) {
    if (off + 4 > b.size()) throw FormatError(file + ": truncated header", b.size());
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

}  // namespace detail

/// Decodes an image file and its label file. Either file may be gzip-compressed.
inline RawImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto img = read_maybe_gzip(images_path);
    const auto lab = read_maybe_gzip(labels_path);
    const std::string in = images_path.string(), ln = labels_path.string();

    if (const auto m = detail::read_be32(img, 0, in); m != kIdxImagesMagic)
        throw FormatError(in + ": bad magic " + std::to_string(m) + ", expected 2051", 0);
    if (const auto m = detail::read_be32(lab, 0, ln); m != kIdxLabelsMagic)
        throw FormatError(ln + ": bad magic " + std::to_string(m) + ", expected 2049", 0);

    RawImageSet s;
    s.count = detail::read_be32(img, 4, in);
    s.rows = detail::read_be32(img, 8, in);
    s.cols = detail::read_be32(img, 12, in);
    const std::size_t nlabels = detail::read_be32(lab, 4, ln);
    if (s.rows == 0 || s.cols == 0) throw FormatError(in + ": zero image dimension", 8);
    if (nlabels != s.count)
        throw FormatError(ln + ": label count " + std::to_string(nlabels) + " does not match image count " +
                              std::to_string(s.count),
                          4);
    const std::size_t need_img = 16 + s.count * s.image_size();
    if (img.size() < need_img)
        throw FormatError(in + ": truncated payload, expected " + std::to_string(need_img) + " bytes", img.size());
    if (lab.size() < 8 + s.count)
        throw FormatError(ln + ": truncated payload, expected " + std::to_string(8 + s.count) + " bytes", lab.size());

    s.pixels.assign(img.begin() + 16, img.begin() + static_cast<std::ptrdiff_t>(need_img));
    s.labels.resize(s.count);
    int mx = -1;
    for (std::size_t i = 0; i < s.count; ++i) {
        s.labels[i] = lab[8 + i];
        mx = std::max(mx, s.labels[i]);
    }
    s.classes = static_cast<std::size_t>(mx + 1);
    return s;
}

/// Appends b to a; image dimensions must agree.
inline RawImageSet concatenate(RawImageSet a, const RawImageSet& b) {
    if (a.count == 0) return b;
    if (b.count == 0) return a;
    if (a.rows != b.rows || a.cols != b.cols) throw DimensionError("cannot concatenate image sets of different sizes");
    a.pixels.insert(a.pixels.end(), b.pixels.begin(), b.pixels.end());
    a.labels.insert(a.labels.end(), b.labels.begin(), b.labels.end());
    a.count += b.count;
    a.classes = std::max(a.classes, b.classes);
    return a;
}

}  // namespace wlkaf::data
