#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pansharp {

// Inputs that violate a documented shape contract.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed file contents (bad magic, inconsistent header).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File shorter than its header promises.
struct TruncationError : FormatError {
    using FormatError::FormatError;
};

// Numeric contract violations (non-finite values, empty results).
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Planar multi-channel raster: channels x height x width, row-major within
// each plane. Values are normalized reflectance, nominally in [0, 1].
struct ImageTensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    ImageTensor() = default;
    ImageTensor(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w) {
        if (c < 1 || h < 1 || w < 1)
            throw ShapeError("ImageTensor dims must be positive");
        data.assign(static_cast<std::size_t>(c) * h * w, fill);
    }

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return static_cast<std::size_t>(channels) * plane_size(); }

    float* plane(int c) { return data.data() + static_cast<std::size_t>(c) * plane_size(); }
    const float* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * plane_size();
    }

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const ImageTensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    std::string shape_str() const {
        return std::to_string(channels) + "x" + std::to_string(height) + "x" +
               std::to_string(width);
    }
};

inline bool all_finite(const ImageTensor& img) {
    for (float v : img.data)
        if (!std::isfinite(v)) return false;
    return true;
}

inline void clip01(ImageTensor& img) {
    for (float& v : img.data) v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
}

}  // namespace pansharp
