#pragma once

#include <string>
#include <vector>

#include "pansharp/box_filter.hpp"
#include "pansharp/resample.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Guided filtering: output is a local linear function of the guide,
// q = a*I + b, with (a, b) fit per window under regularizer eps. The fast
// variant computes the coefficients at low resolution, box-smooths them,
// bilinearly upsamples, and applies them to the full-resolution guide.

struct FilterParams {
    int r = 2;          // window radius, in low-resolution pixels
    double eps = 1e-4;  // regularizer, squared-intensity units
    int s = 1;          // subsample ratio between guide_hi and the low-res pair

    void validate() const {
        if (r < 0) throw ShapeError("FilterParams: r must be >= 0");
        if (eps < 0) throw ShapeError("FilterParams: eps must be >= 0");
        if (s < 1) throw ShapeError("FilterParams: s must be >= 1");
    }
};

namespace detail {

// Smoothed coefficient maps box(a), box(b) for one (guide, input) plane pair.
inline void gf_coeff_planes(const float* guide, const float* input, int h, int w, int r,
                            double eps, float* mean_a, float* mean_b) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<float> mean_i(n), mean_p(n), corr_ip(n), corr_ii(n), prod(n);
    std::vector<double> col(static_cast<std::size_t>(w));
    box_mean_plane(guide, h, w, r, mean_i.data(), col.data());
    box_mean_plane(input, h, w, r, mean_p.data(), col.data());
    for (std::size_t i = 0; i < n; ++i) prod[i] = guide[i] * input[i];
    box_mean_plane(prod.data(), h, w, r, corr_ip.data(), col.data());
    for (std::size_t i = 0; i < n; ++i) prod[i] = guide[i] * guide[i];
    box_mean_plane(prod.data(), h, w, r, corr_ii.data(), col.data());
    std::vector<float> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double var = static_cast<double>(corr_ii[i]) - static_cast<double>(mean_i[i]) * mean_i[i];
        const double cov = static_cast<double>(corr_ip[i]) - static_cast<double>(mean_i[i]) * mean_p[i];
        const double denom = var + eps;
        const double av = denom != 0.0 ? cov / denom : 0.0;
        a[i] = static_cast<float>(av);
        b[i] = static_cast<float>(mean_p[i] - av * mean_i[i]);
    }
    box_mean_plane(a.data(), h, w, r, mean_a, col.data());
    box_mean_plane(b.data(), h, w, r, mean_b, col.data());
}

inline int gf_guide_plane_index(int ch, int guide_channels, int input_channels) {
    if (guide_channels == 1) return 0;  // one guide broadcast to every input channel
    if (guide_channels == input_channels) return ch;
    throw ShapeError("guided filter: guide must have 1 channel or match input channels (" +
                     std::to_string(guide_channels) + " vs " + std::to_string(input_channels) + ")");
}

}  // namespace detail

inline ImageTensor fast_guided_filter(const ImageTensor& guide_lo, const ImageTensor& input_lo,
                                      const ImageTensor& guide_hi, const FilterParams& params) {
    params.validate();
    if (guide_lo.height != input_lo.height || guide_lo.width != input_lo.width)
        throw ShapeError("fast_guided_filter: low-res guide/input dims differ (" +
                         guide_lo.shape_str() + " vs " + input_lo.shape_str() + ")");
    if (guide_hi.height != guide_lo.height * params.s || guide_hi.width != guide_lo.width * params.s)
        throw ShapeError("fast_guided_filter: guide_hi is " + guide_hi.shape_str() +
                         ", expected s=" + std::to_string(params.s) + " times " +
                         guide_lo.shape_str());
    if (guide_hi.channels != guide_lo.channels)
        throw ShapeError("fast_guided_filter: guide_lo/guide_hi channel mismatch");
    detail::gf_guide_plane_index(0, guide_lo.channels, input_lo.channels);

    const int h = guide_lo.height, w = guide_lo.width;
    const int oh = guide_hi.height, ow = guide_hi.width;
    const auto ytaps = bilinear_axis_taps<float>(h, oh);
    const auto xtaps = bilinear_axis_taps<float>(w, ow);
    ImageTensor out(input_lo.channels, oh, ow);
    std::vector<float> mean_a(static_cast<std::size_t>(h) * w), mean_b(mean_a.size());
    std::vector<float> a_up(static_cast<std::size_t>(oh) * ow), b_up(a_up.size());
    std::vector<float> tmp(static_cast<std::size_t>(oh) * w);
    for (int c = 0; c < input_lo.channels; ++c) {
        const int gc = detail::gf_guide_plane_index(c, guide_lo.channels, input_lo.channels);
        detail::gf_coeff_planes(guide_lo.plane(gc), input_lo.plane(c), h, w, params.r, params.eps,
                                mean_a.data(), mean_b.data());
        resample_plane(mean_a.data(), h, w, a_up.data(), oh, ow, ytaps, xtaps, tmp.data());
        resample_plane(mean_b.data(), h, w, b_up.data(), oh, ow, ytaps, xtaps, tmp.data());
        const float* ghi = guide_hi.plane(gc);
        float* q = out.plane(c);
        for (std::size_t i = 0; i < a_up.size(); ++i) q[i] = a_up[i] * ghi[i] + b_up[i];
    }
    return out;
}

inline ImageTensor guided_filter(const ImageTensor& guide, const ImageTensor& input, int r,
                                 double eps) {
    if (guide.height != input.height || guide.width != input.width)
        throw ShapeError("guided_filter: guide/input dims differ (" + guide.shape_str() + " vs " +
                         input.shape_str() + ")");
    return fast_guided_filter(guide, input, guide, FilterParams{r, eps, 1});
}

}  // namespace pansharp
