#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pansharp/resample.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Synthetic desk-scale scenes standing in for satellite imagery. A latent
// multi-band scene is rendered at PAN resolution (sus x the MS grid) as a
// smooth random field plus shared piecewise-constant structures (rectangles
// and ellipses) with band-correlated amplitudes. The MS bands are bicubic
// decimations of the latent bands; PAN is a weighted band average of the
// latent scene at full resolution, so it keeps high-frequency detail the MS
// image loses.

namespace detail {

inline double u01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double urange(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * u01(rng);
}

struct Wave {
    double fx, fy, phase, amp;
};

inline float eval_waves(const std::vector<Wave>& waves, double u, double v) {
    double acc = 0;
    for (const auto& wv : waves)
        acc += wv.amp * std::cos(2.0 * M_PI * (wv.fx * u + wv.fy * v) + wv.phase);
    return static_cast<float>(acc);
}

}  // namespace detail

struct ScenePair {
    ImageTensor ms;   // bands x height x width
    ImageTensor pan;  // 1 x (height*sus) x (width*sus)
};

inline ScenePair synth_scene(std::uint64_t seed, int bands, int height, int width, int sus) {
    if (bands < 1 || height < 1 || width < 1 || sus < 1)
        throw ShapeError("synth_scene: bad dims");
    if (height % sus != 0 || width % sus != 0)
        throw ShapeError("synth_scene: height/width must be divisible by sus");
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

    const int hh = height * sus, ww = width * sus;
    const std::size_t hn = static_cast<std::size_t>(hh) * ww;

    // Shared and per-band low-frequency fields, plus a shared fine texture
    // living above the MS Nyquist so the PAN image carries real detail.
    std::vector<detail::Wave> shared(5);
    for (auto& wv : shared)
        wv = {detail::urange(rng, 0.3, 2.5), detail::urange(rng, 0.3, 2.5),
              detail::urange(rng, 0.0, 2.0 * M_PI), detail::urange(rng, 0.04, 0.11)};
    // Texture between the MS Nyquist (0.125 cy/px at PAN scale for sus=2)
    // and the reference Nyquist, so it survives the Wald reference but not
    // the LRMS input.
    std::vector<detail::Wave> texture(10);
    for (auto& wv : texture) {
        const double f = detail::urange(rng, 0.13, 0.24) * std::min(hh, ww);
        const double ang = detail::urange(rng, 0.0, 2.0 * M_PI);
        wv = {f * std::cos(ang), f * std::sin(ang), detail::urange(rng, 0.0, 2.0 * M_PI),
              detail::urange(rng, 0.02, 0.05)};
    }
    std::vector<std::vector<detail::Wave>> own(bands, std::vector<detail::Wave>(3));
    std::vector<double> shared_gain(bands), tex_gain(bands), dc(bands);
    for (int c = 0; c < bands; ++c) {
        for (auto& wv : own[c])
            wv = {detail::urange(rng, 0.3, 2.5), detail::urange(rng, 0.3, 2.5),
                  detail::urange(rng, 0.0, 2.0 * M_PI), detail::urange(rng, 0.015, 0.05)};
        shared_gain[c] = detail::urange(rng, 0.6, 1.0);
        tex_gain[c] = detail::urange(rng, 0.75, 1.0);
        dc[c] = detail::urange(rng, -0.06, 0.06);
    }

    // Sharp structures shared across bands.
    struct Structure {
        bool ellipse;
        double cy, cx, ry, rx, angle;
        std::vector<double> delta;  // per-band amplitude
    };
    const int n_structs = 4 + static_cast<int>(rng() % 5);
    std::vector<Structure> structs(static_cast<std::size_t>(n_structs));
    for (auto& st : structs) {
        st.ellipse = detail::u01(rng) < 0.5;
        st.cy = detail::urange(rng, 0.1, 0.9);
        st.cx = detail::urange(rng, 0.1, 0.9);
        st.ry = detail::urange(rng, 0.04, 0.2);
        st.rx = detail::urange(rng, 0.04, 0.2);
        st.angle = detail::urange(rng, 0.0, M_PI);
        const double base = (detail::u01(rng) < 0.5 ? -1.0 : 1.0) * detail::urange(rng, 0.06, 0.16);
        st.delta.resize(static_cast<std::size_t>(bands));
        for (int c = 0; c < bands; ++c) st.delta[c] = base * detail::urange(rng, 0.6, 1.0);
    }

    std::vector<std::vector<float>> latent(static_cast<std::size_t>(bands),
                                           std::vector<float>(hn));
    for (int c = 0; c < bands; ++c) {
        float* lat = latent[c].data();
        for (int y = 0; y < hh; ++y) {
            const double v = (y + 0.5) / hh;
            for (int x = 0; x < ww; ++x) {
                const double u = (x + 0.5) / ww;
                lat[static_cast<std::size_t>(y) * ww + x] = static_cast<float>(
                    0.45 + dc[c] + shared_gain[c] * detail::eval_waves(shared, u, v) +
                    tex_gain[c] * detail::eval_waves(texture, u, v) +
                    detail::eval_waves(own[c], u, v));
            }
        }
    }
    for (const auto& st : structs) {
        const double ca = std::cos(st.angle), sa = std::sin(st.angle);
        for (int y = 0; y < hh; ++y) {
            const double v = (y + 0.5) / hh - st.cy;
            for (int x = 0; x < ww; ++x) {
                const double u = (x + 0.5) / ww - st.cx;
                const double ru = (ca * u + sa * v) / st.rx;
                const double rv = (-sa * u + ca * v) / st.ry;
                const bool inside = st.ellipse ? (ru * ru + rv * rv <= 1.0)
                                               : (std::abs(ru) <= 1.0 && std::abs(rv) <= 1.0);
                if (!inside) continue;
                const std::size_t i = static_cast<std::size_t>(y) * ww + x;
                for (int c = 0; c < bands; ++c)
                    latent[c][i] += static_cast<float>(st.delta[c]);
            }
        }
    }
    // Reflectance stays away from zero; ratio-based fusion methods divide
    // by the intensity, which must not vanish.
    for (int c = 0; c < bands; ++c)
        for (float& v : latent[c]) v = v < 0.08f ? 0.08f : (v > 0.97f ? 0.97f : v);

    ScenePair scene;
    scene.pan = ImageTensor(1, hh, ww);
    const float wgt = 1.0f / static_cast<float>(bands);
    for (std::size_t i = 0; i < hn; ++i) {
        float acc = 0;
        for (int c = 0; c < bands; ++c) acc += latent[c][i];
        scene.pan.data[i] = acc * wgt;
    }
    clip01(scene.pan);

    scene.ms = ImageTensor(bands, height, width);
    ImageTensor plane(1, hh, ww);
    for (int c = 0; c < bands; ++c) {
        plane.data.assign(latent[c].begin(), latent[c].end());
        ImageTensor small = bicubic_resize(plane, height, width);
        std::copy(small.data.begin(), small.data.end(), scene.ms.plane(c));
    }
    clip01(scene.ms);
    return scene;
}

}  // namespace pansharp
