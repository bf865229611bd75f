#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pansharp/types.hpp"

namespace pansharp {

// FIMG: "FIMG" magic, little-endian u32 version=1, u32 C, u32 H, u32 W,
// then C*H*W little-endian IEEE-754 f32, planar, row-major per plane.
// PGM (P5) and PPM (P6) with 8-bit samples are accepted for 1- and
// 3-channel I/O; sample values are divided by 255 on load.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<unsigned char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    auto n = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    std::vector<unsigned char> buf(n);
    if (n) f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
    if (!f) throw FormatError("cannot read file: " + path);
    return buf;
}

inline void write_all(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open file for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write failed: " + path);
}

// Reads one PNM header token, skipping whitespace and '#' comments.
inline std::string pnm_token(const std::vector<unsigned char>& buf, std::size_t& pos) {
    while (pos < buf.size()) {
        unsigned char ch = buf[pos];
        if (ch == '#') {
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
        } else if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < buf.size() && !std::isspace(buf[pos])) tok.push_back(static_cast<char>(buf[pos++]));
    if (tok.empty()) throw FormatError("unexpected end of PNM header");
    return tok;
}

inline int pnm_int(const std::vector<unsigned char>& buf, std::size_t& pos) {
    const std::string tok = pnm_token(buf, pos);
    for (char ch : tok)
        if (!std::isdigit(static_cast<unsigned char>(ch)))
            throw FormatError("bad PNM header field: " + tok);
    return std::stoi(tok);
}

}  // namespace detail

inline ImageTensor load_fimg(const std::string& path) {
    const auto buf = detail::read_all(path);
    if (buf.size() < 20 || std::memcmp(buf.data(), "FIMG", 4) != 0)
        throw FormatError("not a FIMG file: " + path);
    const std::uint32_t version = detail::get_u32(buf.data() + 4);
    if (version != 1) throw FormatError("unsupported FIMG version " + std::to_string(version));
    const std::uint32_t c = detail::get_u32(buf.data() + 8);
    const std::uint32_t h = detail::get_u32(buf.data() + 12);
    const std::uint32_t w = detail::get_u32(buf.data() + 16);
    if (c < 1 || h < 1 || w < 1 || static_cast<std::uint64_t>(c) * h * w > (1u << 30))
        throw FormatError("bad FIMG dims " + std::to_string(c) + "x" + std::to_string(h) + "x" +
                          std::to_string(w));
    const std::size_t count = static_cast<std::size_t>(c) * h * w;
    if (buf.size() < 20 + count * 4)
        throw TruncationError("FIMG payload truncated: " + path + " (" +
                              std::to_string((buf.size() - 20) / 4) + " of " +
                              std::to_string(count) + " values)");
    ImageTensor img(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = detail::get_u32(buf.data() + 20 + i * 4);
        float v;
        std::memcpy(&v, &bits, 4);
        img.data[i] = v;
    }
    return img;
}

inline void save_fimg(const ImageTensor& img, const std::string& path) {
    std::string out;
    out.reserve(20 + img.size() * 4);
    out += "FIMG";
    detail::put_u32(out, 1);
    detail::put_u32(out, static_cast<std::uint32_t>(img.channels));
    detail::put_u32(out, static_cast<std::uint32_t>(img.height));
    detail::put_u32(out, static_cast<std::uint32_t>(img.width));
    for (float v : img.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        detail::put_u32(out, bits);
    }
    detail::write_all(path, out);
}

// P5 (1 channel) or P6 (3 channels), 8-bit.
inline ImageTensor load_pnm(const std::string& path) {
    const auto buf = detail::read_all(path);
    std::size_t pos = 0;
    const std::string magic = detail::pnm_token(buf, pos);
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw FormatError("unsupported PNM magic: " + magic);
    const int w = detail::pnm_int(buf, pos);
    const int h = detail::pnm_int(buf, pos);
    const int maxval = detail::pnm_int(buf, pos);
    if (w < 1 || h < 1) throw FormatError("bad PNM dims");
    if (maxval < 1 || maxval > 255) throw FormatError("only 8-bit PNM supported");
    ++pos;  // single whitespace after maxval
    const std::size_t count = static_cast<std::size_t>(channels) * h * w;
    if (buf.size() < pos + count)
        throw TruncationError("PNM payload truncated: " + path);
    ImageTensor img(channels, h, w);
    // PNM is interleaved; convert to planar and normalize by the 8-bit max.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) =
                    static_cast<float>(buf[pos + (static_cast<std::size_t>(y) * w + x) * channels + c]) /
                    255.0f;
    return img;
}

inline void save_pnm(const ImageTensor& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw ShapeError("PNM supports 1 or 3 channels, got " + std::to_string(img.channels));
    std::string out = (img.channels == 1 ? "P5\n" : "P6\n");
    out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float v = img.at(c, y, x);
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0f))));
            }
    detail::write_all(path, out);
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline ImageTensor load_image(const std::string& path) {
    const auto buf = detail::read_all(path);
    if (buf.size() >= 4 && std::memcmp(buf.data(), "FIMG", 4) == 0) return load_fimg(path);
    if (buf.size() >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6')) return load_pnm(path);
    throw FormatError("unrecognized image format: " + path);
}

inline void save_image(const ImageTensor& img, const std::string& path) {
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm"))
        save_pnm(img, path);
    else
        save_fimg(img, path);
}

}  // namespace pansharp
