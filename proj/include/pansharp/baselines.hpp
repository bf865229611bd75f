#pragma once

#include <cmath>
#include <vector>

#include "pansharp/box_filter.hpp"
#include "pansharp/resample.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Classical pansharpening baselines. All four histogram-match the PAN image
// to the synthetic intensity (gain/offset to equal mean and std) before
// injecting detail, and guard divisions at 1e-6.

struct BaselineParams {
    int hpf_radius = 0;  // 0 = default 2*sus
    std::vector<float> intensity_weights;  // empty = uniform 1/C

    std::vector<float> weights_for(int channels) const {
        if (intensity_weights.empty())
            return std::vector<float>(static_cast<std::size_t>(channels),
                                      1.0f / static_cast<float>(channels));
        if (static_cast<int>(intensity_weights.size()) != channels)
            throw ShapeError("intensity_weights size does not match band count");
        float sum = 0;
        for (float w : intensity_weights) {
            if (w < 0) throw ShapeError("intensity_weights must be non-negative");
            sum += w;
        }
        if (std::abs(sum - 1.0f) > 1e-4f)
            throw ShapeError("intensity_weights must sum to 1");
        return intensity_weights;
    }
};

namespace detail {

struct BaselineInputs {
    ImageTensor ms_up;      // C x H x W
    ImageTensor intensity;  // 1 x H x W
    ImageTensor pan_m;      // PAN matched to intensity, 1 x H x W
};

inline BaselineInputs baseline_inputs(const ImageTensor& pan, const ImageTensor& lrms, int sus,
                                      const BaselineParams& params) {
    if (pan.channels != 1) throw ShapeError("baseline: pan must be single-channel");
    if (pan.height != lrms.height * sus || pan.width != lrms.width * sus)
        throw ShapeError("baseline: pan " + pan.shape_str() + " does not match lrms " +
                         lrms.shape_str() + " times sus=" + std::to_string(sus));
    BaselineInputs in;
    in.ms_up = bicubic_resize(lrms, pan.height, pan.width);
    const auto w = params.weights_for(lrms.channels);
    in.intensity = ImageTensor(1, pan.height, pan.width);
    for (int c = 0; c < lrms.channels; ++c) {
        const float* p = in.ms_up.plane(c);
        for (std::size_t i = 0; i < in.intensity.data.size(); ++i)
            in.intensity.data[i] += w[c] * p[i];
    }
    // Gain/offset match of PAN to the intensity image.
    const std::size_t n = pan.data.size();
    double sp = 0, si = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sp += pan.data[i];
        si += in.intensity.data[i];
    }
    const double mp = sp / n, mi = si / n;
    double vp = 0, vi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        vp += (pan.data[i] - mp) * (pan.data[i] - mp);
        vi += (in.intensity.data[i] - mi) * (in.intensity.data[i] - mi);
    }
    // Offset-only fallback when either side is flat; a zero gain would
    // erase the detail the injection exists to carry.
    const double gain = (vp > 1e-12 && vi > 1e-12) ? std::sqrt(vi / vp) : 1.0;
    in.pan_m = ImageTensor(1, pan.height, pan.width);
    for (std::size_t i = 0; i < n; ++i)
        in.pan_m.data[i] = static_cast<float>((pan.data[i] - mp) * gain + mi);
    return in;
}

}  // namespace detail

// Component substitution: MS_up + (PAN - I) in every band.
inline ImageTensor ihs(const ImageTensor& pan, const ImageTensor& lrms, int sus,
                       const BaselineParams& params = {}) {
    auto in = detail::baseline_inputs(pan, lrms, sus, params);
    ImageTensor out = in.ms_up;
    for (int c = 0; c < out.channels; ++c) {
        float* o = out.plane(c);
        for (std::size_t i = 0; i < in.pan_m.data.size(); ++i)
            o[i] += in.pan_m.data[i] - in.intensity.data[i];
    }
    return out;
}

// Ratio transform: MS_up * PAN / I.
inline ImageTensor brovey(const ImageTensor& pan, const ImageTensor& lrms, int sus,
                          const BaselineParams& params = {}) {
    auto in = detail::baseline_inputs(pan, lrms, sus, params);
    ImageTensor out = in.ms_up;
    for (int c = 0; c < out.channels; ++c) {
        float* o = out.plane(c);
        for (std::size_t i = 0; i < in.pan_m.data.size(); ++i)
            o[i] *= in.pan_m.data[i] / std::max(in.intensity.data[i], 1e-6f);
    }
    return out;
}

// High-pass injection: MS_up + (PAN - box(PAN, r)).
inline ImageTensor hpf(const ImageTensor& pan, const ImageTensor& lrms, int sus,
                       const BaselineParams& params = {}) {
    auto in = detail::baseline_inputs(pan, lrms, sus, params);
    const int r = params.hpf_radius > 0 ? params.hpf_radius : 2 * sus;
    const ImageTensor pan_lp = box_filter(in.pan_m, r);
    ImageTensor out = in.ms_up;
    for (int c = 0; c < out.channels; ++c) {
        float* o = out.plane(c);
        for (std::size_t i = 0; i < in.pan_m.data.size(); ++i)
            o[i] += in.pan_m.data[i] - pan_lp.data[i];
    }
    return out;
}

// Smoothing-filter modulation: MS_up * PAN / box(PAN, r).
inline ImageTensor sfim(const ImageTensor& pan, const ImageTensor& lrms, int sus,
                        const BaselineParams& params = {}) {
    auto in = detail::baseline_inputs(pan, lrms, sus, params);
    const int r = params.hpf_radius > 0 ? params.hpf_radius : 2 * sus;
    const ImageTensor pan_lp = box_filter(in.pan_m, r);
    ImageTensor out = in.ms_up;
    for (int c = 0; c < out.channels; ++c) {
        float* o = out.plane(c);
        for (std::size_t i = 0; i < in.pan_m.data.size(); ++i)
            o[i] *= in.pan_m.data[i] / std::max(pan_lp.data[i], 1e-6f);
    }
    return out;
}

}  // namespace pansharp
