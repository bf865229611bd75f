#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pansharp/log.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Reference-based quality metrics. Values are assumed normalized to [0, 1],
// so the PSNR peak is 1; PSNR is computed from a single MSE over all bands
// and pixels and capped at 100 dB. SAM is reported in radians.

inline double psnr(const ImageTensor& pred, const ImageTensor& ref) {
    if (!pred.same_shape(ref)) throw ShapeError("psnr: shape mismatch");
    double se = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - ref.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(pred.data.size());
    if (mse <= 0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

// Per-band Pearson correlation averaged over bands. A zero-variance band
// contributes 1 if the bands are identical, else 0.
inline double cc(const ImageTensor& pred, const ImageTensor& ref) {
    if (!pred.same_shape(ref)) throw ShapeError("cc: shape mismatch");
    const std::size_t n = pred.plane_size();
    double total = 0;
    for (int c = 0; c < pred.channels; ++c) {
        const float* p = pred.plane(c);
        const float* r = ref.plane(c);
        double sp = 0, sr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sp += p[i];
            sr += r[i];
        }
        const double mp = sp / n, mr = sr / n;
        double spp = 0, srr = 0, spr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dp = p[i] - mp, dr = r[i] - mr;
            spp += dp * dp;
            srr += dr * dr;
            spr += dp * dr;
        }
        if (spp <= 0 || srr <= 0) {
            const bool identical = std::equal(p, p + n, r);
            log_warn("cc: zero-variance band " + std::to_string(c) +
                     (identical ? " (identical, counted as 1)" : " (counted as 0)"));
            total += identical ? 1.0 : 0.0;
        } else {
            total += spr / std::sqrt(spp * srr);
        }
    }
    return total / pred.channels;
}

// Mean spectral angle (radians) between matching pixel spectra. Pixels where
// either spectrum has near-zero norm are skipped. Computed from the chord
// between the normalized spectra, which is exact at zero angle where the
// arccosine form loses ~1e-8.
inline double sam_metric(const ImageTensor& pred, const ImageTensor& ref) {
    if (!pred.same_shape(ref)) throw ShapeError("sam_metric: shape mismatch");
    const std::size_t n = pred.plane_size();
    const std::size_t plane = n;
    double total = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double np = 0, nr = 0;
        for (int c = 0; c < pred.channels; ++c) {
            const double pv = pred.data[c * plane + i];
            const double rv = ref.data[c * plane + i];
            np += pv * pv;
            nr += rv * rv;
        }
        np = std::sqrt(np);
        nr = std::sqrt(nr);
        if (np < 1e-8 || nr < 1e-8) continue;
        double chord2 = 0;
        for (int c = 0; c < pred.channels; ++c) {
            const double d = pred.data[c * plane + i] / np - ref.data[c * plane + i] / nr;
            chord2 += d * d;
        }
        const double half = std::clamp(std::sqrt(chord2) / 2.0, 0.0, 1.0);
        total += 2.0 * std::asin(half);
        ++used;
    }
    if (used == 0) {
        log_warn("sam_metric: every pixel skipped (near-zero spectra)");
        return 0.0;
    }
    return total / static_cast<double>(used);
}

// (100 / sus) * sqrt(mean_c (RMSE_c / mean_c)^2); near-zero-mean reference
// bands are skipped.
inline double ergas(const ImageTensor& pred, const ImageTensor& ref, int sus) {
    if (!pred.same_shape(ref)) throw ShapeError("ergas: shape mismatch");
    if (sus < 1) throw ShapeError("ergas: sus must be >= 1");
    const std::size_t n = pred.plane_size();
    double acc = 0;
    int used = 0;
    for (int c = 0; c < pred.channels; ++c) {
        const float* p = pred.plane(c);
        const float* r = ref.plane(c);
        double se = 0, sr = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = static_cast<double>(p[i]) - r[i];
            se += d * d;
            sr += r[i];
        }
        const double mean_c = sr / n;
        if (std::abs(mean_c) < 1e-8) {
            log_warn("ergas: band " + std::to_string(c) + " has near-zero mean, skipped");
            continue;
        }
        const double rmse = std::sqrt(se / n);
        acc += (rmse / mean_c) * (rmse / mean_c);
        ++used;
    }
    if (used == 0) return 0.0;
    return 100.0 / sus * std::sqrt(acc / used);
}

struct MetricsEntry {
    std::string name;
    double psnr = 0, cc = 0, sam = 0, ergas = 0;
};

struct MetricsReport {
    std::vector<MetricsEntry> per_image;
    MetricsEntry mean;

    void add(const std::string& name, const ImageTensor& pred, const ImageTensor& ref, int sus) {
        per_image.push_back({name, pansharp::psnr(pred, ref), pansharp::cc(pred, ref),
                             pansharp::sam_metric(pred, ref), pansharp::ergas(pred, ref, sus)});
    }

    void finalize() {
        mean = MetricsEntry{"mean", 0, 0, 0, 0};
        if (per_image.empty()) return;
        for (const auto& e : per_image) {
            mean.psnr += e.psnr;
            mean.cc += e.cc;
            mean.sam += e.sam;
            mean.ergas += e.ergas;
        }
        const double n = static_cast<double>(per_image.size());
        mean.psnr /= n;
        mean.cc /= n;
        mean.sam /= n;
        mean.ergas /= n;
    }

    static std::string line(const MetricsEntry& e) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s psnr %.6g cc %.6g sam %.6g ergas %.6g", e.name.c_str(),
                      e.psnr, e.cc, e.sam, e.ergas);
        return buf;
    }

    std::string text() const {
        std::string out;
        for (const auto& e : per_image) out += line(e) + "\n";
        out += line(mean) + "\n";
        return out;
    }

    // Flat key-value form: "<name>.<metric> = <value>" per line.
    std::string key_value_text() const {
        std::string out;
        auto emit = [&out](const MetricsEntry& e) {
            char buf[256];
            std::snprintf(buf, sizeof(buf),
                          "%s.psnr = %.6g\n%s.cc = %.6g\n%s.sam = %.6g\n%s.ergas = %.6g\n",
                          e.name.c_str(), e.psnr, e.name.c_str(), e.cc, e.name.c_str(), e.sam,
                          e.name.c_str(), e.ergas);
            out += buf;
        };
        for (const auto& e : per_image) emit(e);
        emit(mean);
        return out;
    }
};

}  // namespace pansharp
