#pragma once

#include <complex>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "wlkaf/cnum.hpp"
#include "wlkaf/errors.hpp"

namespace wlkaf::data {

/// Unnormalized forward 2-D DFT of a real H x W image (row-major). The DC term equals the pixel sum.
class Fft2 {
public:
    cnum::ComplexTensor operator()(std::span<const double> image, std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0) throw DimensionError("fft2 needs a nonempty image");
        if (image.size() != rows * cols) throw DimensionError("fft2: image size does not match dimensions");
        cnum::ComplexTensor out({rows, cols});
        row_in_.resize(cols);
        col_in_.resize(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) row_in_[c] = image[r * cols + c];
            fft_.fwd(tmp_, row_in_);
            for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = tmp_[c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
            for (std::size_t r = 0; r < rows; ++r) col_in_[r] = out[r * cols + c];
            fft_.fwd(tmp_, col_in_);
            for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = tmp_[r];
        }
        return out;
    }

private:
    Eigen::FFT<double> fft_;
    std::vector<std::complex<double>> row_in_, col_in_, tmp_;
};

inline cnum::ComplexTensor fft2(std::span<const double> image, std::size_t rows, std::size_t cols) {
    Fft2 f;
    return f(image, rows, cols);
}

}  // namespace wlkaf::data
