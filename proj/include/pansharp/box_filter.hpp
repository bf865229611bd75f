#pragma once

#include <algorithm>
#include <vector>

#include "pansharp/types.hpp"

namespace pansharp {

// Box filtering with shrinking-window normalization: each output pixel is
// the mean of the (2r+1)^2 window intersected with the image, so no padding
// value ever enters the statistics. Running sums make the cost O(H*W)
// independent of r; partial sums are carried in double.

namespace detail {

// Window size along one axis at position i (window clipped to [0, n-1]).
inline int axis_count(int i, int n, int r) {
    const int lo = std::max(0, i - r);
    const int hi = std::min(n - 1, i + r);
    return hi - lo + 1;
}

}  // namespace detail

// dst = window sums of src; `col_acc` must hold w doubles.
template <typename T>
void box_sum_plane(const T* src, int h, int w, int r, T* dst, double* col_acc) {
    // Vertical running sums per column.
    for (int x = 0; x < w; ++x) col_acc[x] = 0;
    const int init_rows = std::min(r, h - 1);
    for (int y = 0; y <= init_rows; ++y) {
        const T* row = src + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) col_acc[x] += row[x];
    }
    for (int y = 0; y < h; ++y) {
        if (y > 0) {
            const int add = y + r, del = y - r - 1;
            if (add < h) {
                const T* row = src + static_cast<std::size_t>(add) * w;
                for (int x = 0; x < w; ++x) col_acc[x] += row[x];
            }
            if (del >= 0) {
                const T* row = src + static_cast<std::size_t>(del) * w;
                for (int x = 0; x < w; ++x) col_acc[x] -= row[x];
            }
        }
        // Horizontal running sum over the column sums.
        double acc = 0;
        const int init_cols = std::min(r, w - 1);
        for (int x = 0; x <= init_cols; ++x) acc += col_acc[x];
        T* out = dst + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            if (x > 0) {
                const int add = x + r, del = x - r - 1;
                if (add < w) acc += col_acc[add];
                if (del >= 0) acc -= col_acc[del];
            }
            out[x] = static_cast<T>(acc);
        }
    }
}

// dst = window means of src.
template <typename T>
void box_mean_plane(const T* src, int h, int w, int r, T* dst, double* col_acc) {
    box_sum_plane(src, h, w, r, dst, col_acc);
    for (int y = 0; y < h; ++y) {
        const double cy = detail::axis_count(y, h, r);
        T* out = dst + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x)
            out[x] = static_cast<T>(out[x] / (cy * detail::axis_count(x, w, r)));
    }
}

inline ImageTensor box_filter(const ImageTensor& img, int r) {
    if (r < 0) throw ShapeError("box_filter: radius must be >= 0");
    ImageTensor out(img.channels, img.height, img.width);
    std::vector<double> col(static_cast<std::size_t>(img.width));
    for (int c = 0; c < img.channels; ++c)
        box_mean_plane(img.plane(c), img.height, img.width, r, out.plane(c), col.data());
    return out;
}

}  // namespace pansharp
