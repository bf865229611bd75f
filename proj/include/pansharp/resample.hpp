#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "pansharp/types.hpp"

namespace pansharp {

// Separable resampling on the align-corners-false grid: the source
// coordinate of output sample i is (i + 0.5) * in / out - 0.5. Bicubic uses
// the Keys kernel with a = -0.5; samples outside the image are clamped to
// the border. Tap weights sum to 1, so constants are preserved exactly.

namespace detail {

template <typename T>
inline T keys_cubic(T t) {
    t = std::abs(t);
    constexpr T a = T(-0.5);
    if (t < T(1)) return ((a + T(2)) * t - (a + T(3))) * t * t + T(1);
    if (t < T(2)) return (((t - T(5)) * t + T(8)) * t - T(4)) * a;
    return T(0);
}

}  // namespace detail

// Per-output-index source taps along one axis.
template <typename T>
struct AxisTaps {
    int ntaps = 0;  // 2 = bilinear, 4 = bicubic
    std::vector<int> idx;  // n_out * ntaps clamped source indices
    std::vector<T> w;      // matching weights
};

template <typename T>
AxisTaps<T> bicubic_axis_taps(int n_in, int n_out) {
    AxisTaps<T> taps;
    taps.ntaps = 4;
    taps.idx.resize(static_cast<std::size_t>(n_out) * 4);
    taps.w.resize(static_cast<std::size_t>(n_out) * 4);
    const double scale = static_cast<double>(n_in) / n_out;
    for (int i = 0; i < n_out; ++i) {
        const double src = (i + 0.5) * scale - 0.5;
        const int base = static_cast<int>(std::floor(src));
        const double frac = src - base;
        for (int k = 0; k < 4; ++k) {
            int j = base - 1 + k;
            taps.idx[i * 4 + k] = j < 0 ? 0 : (j >= n_in ? n_in - 1 : j);
            taps.w[i * 4 + k] = detail::keys_cubic<T>(static_cast<T>(frac + 1 - k));
        }
    }
    return taps;
}

template <typename T>
AxisTaps<T> bilinear_axis_taps(int n_in, int n_out) {
    AxisTaps<T> taps;
    taps.ntaps = 2;
    taps.idx.resize(static_cast<std::size_t>(n_out) * 2);
    taps.w.resize(static_cast<std::size_t>(n_out) * 2);
    const double scale = static_cast<double>(n_in) / n_out;
    for (int i = 0; i < n_out; ++i) {
        double src = (i + 0.5) * scale - 0.5;
        int base = static_cast<int>(std::floor(src));
        const double frac = src - base;
        int j0 = base < 0 ? 0 : (base >= n_in ? n_in - 1 : base);
        int j1 = base + 1 < 0 ? 0 : (base + 1 >= n_in ? n_in - 1 : base + 1);
        taps.idx[i * 2] = j0;
        taps.idx[i * 2 + 1] = j1;
        taps.w[i * 2] = static_cast<T>(1 - frac);
        taps.w[i * 2 + 1] = static_cast<T>(frac);
    }
    return taps;
}

// dst (oh x ow) from src (h x w); `row_tmp` must hold oh*w elements.
template <typename T>
void resample_plane(const T* src, int h, int w, T* dst, int oh, int ow,
                    const AxisTaps<T>& ytaps, const AxisTaps<T>& xtaps, T* row_tmp) {
    const int nt_y = ytaps.ntaps, nt_x = xtaps.ntaps;
    // Vertical pass: h x w -> oh x w.
    for (int oy = 0; oy < oh; ++oy) {
        T* out_row = row_tmp + static_cast<std::size_t>(oy) * w;
        const int* yi = &ytaps.idx[static_cast<std::size_t>(oy) * nt_y];
        const T* yw = &ytaps.w[static_cast<std::size_t>(oy) * nt_y];
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int k = 0; k < nt_y; ++k)
                acc += static_cast<double>(yw[k]) * src[static_cast<std::size_t>(yi[k]) * w + x];
            out_row[x] = static_cast<T>(acc);
        }
    }
    // Horizontal pass: oh x w -> oh x ow.
    for (int oy = 0; oy < oh; ++oy) {
        const T* in_row = row_tmp + static_cast<std::size_t>(oy) * w;
        T* out_row = dst + static_cast<std::size_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
            const int* xi = &xtaps.idx[static_cast<std::size_t>(ox) * nt_x];
            const T* xw = &xtaps.w[static_cast<std::size_t>(ox) * nt_x];
            double acc = 0;
            for (int k = 0; k < nt_x; ++k) acc += static_cast<double>(xw[k]) * in_row[xi[k]];
            out_row[ox] = static_cast<T>(acc);
        }
    }
}

// Adjoint of resample_plane: scatters grad_dst (oh x ow) into grad_src
// (h x w, accumulated) with the same taps.
template <typename T>
void resample_plane_adjoint(const T* grad_dst, int oh, int ow, T* grad_src, int h, int w,
                            const AxisTaps<T>& ytaps, const AxisTaps<T>& xtaps, T* row_tmp) {
    const int nt_y = ytaps.ntaps, nt_x = xtaps.ntaps;
    // Horizontal adjoint: oh x ow -> oh x w.
    for (std::size_t i = 0; i < static_cast<std::size_t>(oh) * w; ++i) row_tmp[i] = T(0);
    for (int oy = 0; oy < oh; ++oy) {
        const T* in_row = grad_dst + static_cast<std::size_t>(oy) * ow;
        T* out_row = row_tmp + static_cast<std::size_t>(oy) * w;
        for (int ox = 0; ox < ow; ++ox) {
            const int* xi = &xtaps.idx[static_cast<std::size_t>(ox) * nt_x];
            const T* xw = &xtaps.w[static_cast<std::size_t>(ox) * nt_x];
            for (int k = 0; k < nt_x; ++k) out_row[xi[k]] += xw[k] * in_row[ox];
        }
    }
    // Vertical adjoint: oh x w -> h x w.
    for (int oy = 0; oy < oh; ++oy) {
        const T* in_row = row_tmp + static_cast<std::size_t>(oy) * w;
        const int* yi = &ytaps.idx[static_cast<std::size_t>(oy) * nt_y];
        const T* yw = &ytaps.w[static_cast<std::size_t>(oy) * nt_y];
        for (int k = 0; k < nt_y; ++k) {
            T* out_row = grad_src + static_cast<std::size_t>(yi[k]) * w;
            const T wk = yw[k];
            for (int x = 0; x < w; ++x) out_row[x] += wk * in_row[x];
        }
    }
}

inline ImageTensor bicubic_resize(const ImageTensor& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("bicubic_resize: output dims must be >= 1");
    const auto ytaps = bicubic_axis_taps<float>(img.height, out_h);
    const auto xtaps = bicubic_axis_taps<float>(img.width, out_w);
    ImageTensor out(img.channels, out_h, out_w);
    std::vector<float> tmp(static_cast<std::size_t>(out_h) * img.width);
    for (int c = 0; c < img.channels; ++c)
        resample_plane(img.plane(c), img.height, img.width, out.plane(c), out_h, out_w, ytaps,
                       xtaps, tmp.data());
    return out;
}

inline ImageTensor bilinear_resize(const ImageTensor& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output dims must be >= 1");
    const auto ytaps = bilinear_axis_taps<float>(img.height, out_h);
    const auto xtaps = bilinear_axis_taps<float>(img.width, out_w);
    ImageTensor out(img.channels, out_h, out_w);
    std::vector<float> tmp(static_cast<std::size_t>(out_h) * img.width);
    for (int c = 0; c < img.channels; ++c)
        resample_plane(img.plane(c), img.height, img.width, out.plane(c), out_h, out_w, ytaps,
                       xtaps, tmp.data());
    return out;
}

}  // namespace pansharp
