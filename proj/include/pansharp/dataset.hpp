#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "pansharp/image_io.hpp"
#include "pansharp/resample.hpp"
#include "pansharp/types.hpp"

namespace pansharp {

// Reduced-resolution (Wald protocol) data preparation: both inputs are
// degraded by the spatial up-scaling ratio so the original multispectral
// image serves as ground truth. Patches are cut on a non-overlapping grid.

struct DatasetSpec {
    int sus = 2;
    int bands = 4;
    int train = 0, val = 0, test = 0;
    int patch = 32;  // LRMS patch side; PAN/reference side is patch * sus
    std::uint64_t seed = 0;

    void validate() const {
        if (sus < 1) throw ShapeError("DatasetSpec: sus must be >= 1");
        if (patch < 1) throw ShapeError("DatasetSpec: patch must be >= 1");
        if (train < 0 || val < 0 || test < 0) throw ShapeError("DatasetSpec: negative split");
    }
};

// One training unit: degraded PAN, degraded MS, and the original MS.
struct SampleTriple {
    std::string name;
    ImageTensor pan;   // 1 x (h*sus) x (w*sus)
    ImageTensor lrms;  // C x h x w
    ImageTensor ref;   // C x (h*sus) x (w*sus)
};

struct WaldTriple {
    ImageTensor lrms;
    ImageTensor pan_lo;
    ImageTensor reference;
};

inline WaldTriple wald_degrade(const ImageTensor& ms, const ImageTensor& pan, int sus) {
    if (sus < 1) throw ShapeError("wald_degrade: sus must be >= 1");
    if (pan.channels != 1)
        throw ShapeError("wald_degrade: pan must be single-channel, got " + pan.shape_str());
    if (pan.height != ms.height * sus || pan.width != ms.width * sus)
        throw ShapeError("wald_degrade: pan " + pan.shape_str() + " does not match ms " +
                         ms.shape_str() + " times sus=" + std::to_string(sus));
    if (ms.height % sus != 0 || ms.width % sus != 0)
        throw ShapeError("wald_degrade: ms dims must be divisible by sus");
    WaldTriple t;
    t.reference = ms;
    t.pan_lo = bicubic_resize(pan, ms.height, ms.width);
    t.lrms = bicubic_resize(ms, ms.height / sus, ms.width / sus);
    return t;
}

struct PatchCoord {
    int y0, x0;  // in LRMS pixels
};

inline std::vector<PatchCoord> patch_grid(int lr_h, int lr_w, int patch) {
    std::vector<PatchCoord> coords;
    for (int y = 0; y + patch <= lr_h; y += patch)
        for (int x = 0; x + patch <= lr_w; x += patch) coords.push_back({y, x});
    return coords;
}

inline ImageTensor crop(const ImageTensor& img, int y0, int x0, int h, int w) {
    ImageTensor out(img.channels, h, w);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            std::copy_n(img.plane(c) + static_cast<std::size_t>(y0 + y) * img.width + x0, w,
                        out.plane(c) + static_cast<std::size_t>(y) * w);
    return out;
}

// Cuts aligned patches: LRMS patches are patch x patch; the PAN and
// reference patches cover the same ground at patch*sus. The grid is a
// deterministic function of (dims, spec).
inline std::vector<SampleTriple> crop_patches(const WaldTriple& triple, const DatasetSpec& spec) {
    spec.validate();
    const ImageTensor& lrms = triple.lrms;
    if (lrms.height < spec.patch || lrms.width < spec.patch)
        throw ValueError("crop_patches: LRMS " + lrms.shape_str() + " smaller than patch " +
                         std::to_string(spec.patch));
    const int sus = triple.pan_lo.height / lrms.height;
    const int hp = spec.patch * sus;
    std::vector<SampleTriple> out;
    for (const auto& pc : patch_grid(lrms.height, lrms.width, spec.patch)) {
        SampleTriple s;
        s.name = "y" + std::to_string(pc.y0) + "_x" + std::to_string(pc.x0);
        s.lrms = crop(lrms, pc.y0, pc.x0, spec.patch, spec.patch);
        s.pan = crop(triple.pan_lo, pc.y0 * sus, pc.x0 * sus, hp, hp);
        s.ref = crop(triple.reference, pc.y0 * sus, pc.x0 * sus, hp, hp);
        out.push_back(std::move(s));
    }
    return out;
}

struct Dataset {
    std::vector<SampleTriple> train, val, test;
};

namespace detail {

inline std::vector<std::string> list_images(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> names;
    if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string n = e.path().filename().string();
        if (has_suffix(n, ".fimg") || has_suffix(n, ".pgm") || has_suffix(n, ".ppm"))
            names.push_back(n);
    }
    std::sort(names.begin(), names.end());
    return names;
}

inline std::string stem_of(const std::string& name) {
    const auto dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

}  // namespace detail

// Builds a dataset on disk from matching ms/pan directories and writes a
// manifest recording provenance. Returns the manifest text.
inline std::string prepare_dataset(const std::string& ms_dir, const std::string& pan_dir,
                                   const std::string& out_dir, const DatasetSpec& spec) {
    namespace fs = std::filesystem;
    spec.validate();
    const auto ms_names = detail::list_images(ms_dir);
    const auto pan_names = detail::list_images(pan_dir);

    std::vector<std::string> ms_stems, pan_stems;
    for (const auto& n : ms_names) ms_stems.push_back(detail::stem_of(n));
    for (const auto& n : pan_names) pan_stems.push_back(detail::stem_of(n));
    std::vector<std::string> unmatched;
    for (std::size_t i = 0; i < ms_stems.size(); ++i)
        if (std::find(pan_stems.begin(), pan_stems.end(), ms_stems[i]) == pan_stems.end())
            unmatched.push_back("ms-only: " + ms_names[i]);
    for (std::size_t i = 0; i < pan_stems.size(); ++i)
        if (std::find(ms_stems.begin(), ms_stems.end(), pan_stems[i]) == ms_stems.end())
            unmatched.push_back("pan-only: " + pan_names[i]);
    if (!unmatched.empty()) {
        std::string msg = "unmatched ms/pan pairs:";
        for (const auto& u : unmatched) msg += "\n  " + u;
        throw FormatError(msg);
    }
    if (ms_names.empty()) throw FormatError("no input images in " + ms_dir);

    struct Item {
        std::string source;
        SampleTriple triple;
    };
    std::vector<Item> pool;
    for (std::size_t i = 0; i < ms_names.size(); ++i) {
        const ImageTensor ms = load_image(ms_dir + "/" + ms_names[i]);
        const std::string pan_name =
            pan_names[std::find(pan_stems.begin(), pan_stems.end(), ms_stems[i]) -
                      pan_stems.begin()];
        const ImageTensor pan = load_image(pan_dir + "/" + pan_name);
        const WaldTriple wt = wald_degrade(ms, pan, spec.sus);
        for (auto& t : crop_patches(wt, spec))
            pool.push_back({ms_stems[i], std::move(t)});
    }

    const int want = spec.train + spec.val + spec.test;
    if (want > static_cast<int>(pool.size()))
        throw ValueError("split needs " + std::to_string(want) + " patches but only " +
                         std::to_string(pool.size()) + " available (short by " +
                         std::to_string(want - static_cast<int>(pool.size())) + ")");

    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(spec.seed);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng() % i]);

    std::string manifest = "pansharp dataset manifest\n";
    manifest += "sus = " + std::to_string(spec.sus) + "\n";
    manifest += "patch = " + std::to_string(spec.patch) + "\n";
    manifest += "seed = " + std::to_string(spec.seed) + "\n";
    manifest += "source_pairs = " + std::to_string(ms_names.size()) + "\n";
    manifest += "patches_available = " + std::to_string(pool.size()) + "\n";
    manifest += "train = " + std::to_string(spec.train) + "\n";
    manifest += "val = " + std::to_string(spec.val) + "\n";
    manifest += "test = " + std::to_string(spec.test) + "\n";

    const std::string splits[3] = {"train", "val", "test"};
    const int counts[3] = {spec.train, spec.val, spec.test};
    std::size_t cursor = 0;
    for (int s = 0; s < 3; ++s) {
        fs::create_directories(out_dir + "/" + splits[s]);
        for (int i = 0; i < counts[s]; ++i, ++cursor) {
            const Item& item = pool[order[cursor]];
            char idx[16];
            std::snprintf(idx, sizeof(idx), "%06d", i);
            const std::string base = out_dir + "/" + splits[s] + "/" + idx;
            save_fimg(item.triple.pan, base + "_pan.fimg");
            save_fimg(item.triple.lrms, base + "_lrms.fimg");
            save_fimg(item.triple.ref, base + "_ref.fimg");
            manifest += splits[s] + " " + idx + " " + item.source + " " + item.triple.name + "\n";
        }
    }
    std::ofstream mf(out_dir + "/manifest.txt", std::ios::trunc);
    mf << manifest;
    return manifest;
}

inline std::vector<SampleTriple> load_split(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<SampleTriple> out;
    if (!fs::is_directory(dir)) return out;
    std::vector<std::string> stems;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (has_suffix(n, "_pan.fimg")) stems.push_back(n.substr(0, n.size() - 9));
    }
    std::sort(stems.begin(), stems.end());
    for (const auto& s : stems) {
        SampleTriple t;
        t.name = s;
        t.pan = load_fimg(dir + "/" + s + "_pan.fimg");
        t.lrms = load_fimg(dir + "/" + s + "_lrms.fimg");
        t.ref = load_fimg(dir + "/" + s + "_ref.fimg");
        out.push_back(std::move(t));
    }
    return out;
}

inline Dataset load_dataset(const std::string& dir) {
    Dataset d;
    d.train = load_split(dir + "/train");
    d.val = load_split(dir + "/val");
    d.test = load_split(dir + "/test");
    return d;
}

}  // namespace pansharp
