#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "pansharp/image_io.hpp"

using namespace pansharp;

namespace {

std::string temp_dir() {
    static std::string dir = [] {
        auto d = std::filesystem::temp_directory_path() / "pansharp_test_image";
        std::filesystem::create_directories(d);
        return d.string();
    }();
    return dir;
}

}  // namespace

TEST(Fimg, RoundTripIsBitwise) {
    std::mt19937_64 rng(7);
    ImageTensor img = oracle::random_image(rng, 3, 8, 8, -2.0, 2.0);
    const std::string path = temp_dir() + "/rt.fimg";
    save_fimg(img, path);
    const ImageTensor back = load_fimg(path);
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        EXPECT_EQ(img.data[i], back.data[i]);
    }
}

TEST(Fimg, TruncatedPayloadThrows) {
    // Header claims 2x4x4 but only 31 floats follow.
    std::string bytes = "FIMG";
    auto put = [&bytes](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    put(1);
    put(2);
    put(4);
    put(4);
    for (int i = 0; i < 31; ++i) put(0x3f800000);
    const std::string path = temp_dir() + "/trunc.fimg";
    std::ofstream(path, std::ios::binary) << bytes;
    EXPECT_THROW(load_fimg(path), TruncationError);
}

TEST(Fimg, BadMagicThrows) {
    const std::string path = temp_dir() + "/bad.fimg";
    std::ofstream(path, std::ios::binary) << "GIMF????????????????????";
    EXPECT_THROW(load_image(path), FormatError);
}

TEST(Fimg, BadDimsThrow) {
    std::string bytes = "FIMG";
    auto put = [&bytes](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    };
    put(1);
    put(0);  // zero channels
    put(4);
    put(4);
    const std::string path = temp_dir() + "/dims.fimg";
    std::ofstream(path, std::ios::binary) << bytes;
    EXPECT_THROW(load_fimg(path), FormatError);
}

TEST(Pnm, PgmFullScaleLoadsAsOne) {
    const std::string path = temp_dir() + "/gray.pgm";
    std::ofstream f(path, std::ios::binary);
    f << "P5\n2 2\n255\n";
    const unsigned char px[4] = {255, 0, 128, 64};
    f.write(reinterpret_cast<const char*>(px), 4);
    f.close();
    const ImageTensor img = load_image(path);
    EXPECT_EQ(img.channels, 1);
    EXPECT_FLOAT_EQ(img.at(0, 0, 0), 1.0f);
    EXPECT_FLOAT_EQ(img.at(0, 0, 1), 0.0f);
    EXPECT_FLOAT_EQ(img.at(0, 1, 0), 128.0f / 255.0f);
}

TEST(Pnm, PpmRoundTripWithinQuantization) {
    std::mt19937_64 rng(11);
    ImageTensor img = oracle::random_image(rng, 3, 5, 7);
    const std::string path = temp_dir() + "/color.ppm";
    save_pnm(img, path);
    const ImageTensor back = load_pnm(path);
    ASSERT_TRUE(back.same_shape(img));
    for (std::size_t i = 0; i < img.data.size(); ++i)
        EXPECT_NEAR(back.data[i], img.data[i], 0.5f / 255.0f + 1e-6f);
}

TEST(Pnm, TruncatedThrows) {
    const std::string path = temp_dir() + "/short.pgm";
    std::ofstream f(path, std::ios::binary);
    f << "P5\n4 4\n255\n";
    f << "ab";  // 2 of 16 bytes
    f.close();
    EXPECT_THROW(load_pnm(path), TruncationError);
}

TEST(SaveImage, DispatchesOnExtension) {
    ImageTensor img(1, 2, 2, 0.25f);
    const std::string pgm = temp_dir() + "/auto.pgm";
    const std::string fimg = temp_dir() + "/auto.fimg";
    save_image(img, pgm);
    save_image(img, fimg);
    EXPECT_EQ(load_image(pgm).channels, 1);
    EXPECT_EQ(load_image(fimg).data[0], 0.25f);
}
