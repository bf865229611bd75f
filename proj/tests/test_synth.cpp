#include <gtest/gtest.h>

#include "pansharp/metrics.hpp"
#include "pansharp/resample.hpp"
#include "pansharp/synth.hpp"

using namespace pansharp;

TEST(SynthScene, Deterministic) {
    const ScenePair a = synth_scene(42, 4, 32, 32, 2);
    const ScenePair b = synth_scene(42, 4, 32, 32, 2);
    ASSERT_TRUE(a.ms.same_shape(b.ms));
    ASSERT_TRUE(a.pan.same_shape(b.pan));
    EXPECT_EQ(a.ms.data, b.ms.data);
    EXPECT_EQ(a.pan.data, b.pan.data);
}

TEST(SynthScene, ShapesAndRange) {
    const ScenePair s = synth_scene(3, 5, 24, 16, 2);
    EXPECT_EQ(s.ms.channels, 5);
    EXPECT_EQ(s.ms.height, 24);
    EXPECT_EQ(s.ms.width, 16);
    EXPECT_EQ(s.pan.channels, 1);
    EXPECT_EQ(s.pan.height, 48);
    EXPECT_EQ(s.pan.width, 32);
    for (float v : s.ms.data) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
    for (float v : s.pan.data) {
        ASSERT_TRUE(std::isfinite(v));
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
    }
}

TEST(SynthScene, RejectsIndivisibleDims) {
    EXPECT_THROW(synth_scene(0, 3, 33, 32, 2), ShapeError);
}

// PAN must track the band average of the upsampled MS image; checked with
// the metrics module's correlation as the oracle.
TEST(SynthScene, PanCorrelatesWithBandMean) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const ScenePair s = synth_scene(seed, 3, 24, 24, 2);
        const ImageTensor up = bicubic_resize(s.ms, 48, 48);
        ImageTensor band_mean(1, 48, 48);
        for (int c = 0; c < up.channels; ++c)
            for (std::size_t i = 0; i < band_mean.data.size(); ++i)
                band_mean.data[i] += up.plane(c)[i] / up.channels;
        const double corr = cc(s.pan, band_mean);
        ASSERT_GT(corr, 0.5) << "seed " << seed;
    }
}
