#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "pcmsar/errors.hpp"
#include "pcmsar/image.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// File I/O. Inputs: binary PGM (P5, maxval 255) and 8-bit PNG (grayscale or
// RGB, non-interlaced). Output is PGM P5 only.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

// PGM header tokenizer: skips whitespace and '#' comment lines.
struct PgmScanner {
    const std::vector<std::uint8_t>& b;
    std::size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < b.size()) {
            if (std::isspace(b[pos])) {
                ++pos;
            } else if (b[pos] == '#') {
                while (pos < b.size() && b[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    int next_int(const char* field) {
        skip_space_and_comments();
        if (pos >= b.size() || !std::isdigit(b[pos]))
            throw FormatError(std::string("PGM header: missing ") + field);
        long v = 0;
        while (pos < b.size() && std::isdigit(b[pos])) {
            v = v * 10 + (b[pos] - '0');
            if (v > 1 << 30)
                throw FormatError(std::string("PGM header: ") + field +
                                  " out of range");
            ++pos;
        }
        return static_cast<int>(v);
    }
};

inline GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw FormatError("PGM magic: expected binary P5");
    PgmScanner sc{bytes, 2};
    int w = sc.next_int("width");
    int h = sc.next_int("height");
    int maxval = sc.next_int("maxval");
    if (w < 1 || h < 1) throw FormatError("PGM header: non-positive size");
    if (maxval != 255)
        throw FormatError("PGM maxval: only 255 (8-bit) supported, got " +
                          std::to_string(maxval));
    // exactly one whitespace byte separates header and payload
    if (sc.pos >= bytes.size() || !std::isspace(bytes[sc.pos]))
        throw FormatError("PGM header: missing separator before payload");
    ++sc.pos;
    std::size_t need = static_cast<std::size_t>(w) * h;
    if (bytes.size() - sc.pos < need)
        throw FormatError("PGM payload: expected " + std::to_string(need) +
                          " bytes, have " +
                          std::to_string(bytes.size() - sc.pos));
    GrayImage img(w, h);
    for (std::size_t i = 0; i < need; ++i)
        img.data[i] = bytes[sc.pos + i] / 255.0;
    return img;
}

inline std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline std::uint8_t paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

inline GrayImage decode_png(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw FormatError("PNG signature: mismatch");

    std::size_t pos = 8;
    bool have_ihdr = false;
    std::uint32_t w = 0, h = 0;
    int bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> idat;

    while (pos + 8 <= bytes.size()) {
        std::uint32_t len = be32(&bytes[pos]);
        if (pos + 12 + len > bytes.size())
            throw FormatError("PNG chunk: truncated");
        const std::uint8_t* type = &bytes[pos + 4];
        const std::uint8_t* data = &bytes[pos + 8];
        std::uint32_t crc_stored = be32(&bytes[pos + 8 + len]);
        std::uint32_t crc = static_cast<std::uint32_t>(
            crc32(crc32(0L, type, 4), data, len));
        if (crc != crc_stored) throw FormatError("PNG chunk: bad CRC");

        std::string name(reinterpret_cast<const char*>(type), 4);
        if (name == "IHDR") {
            if (len != 13) throw FormatError("PNG IHDR: bad length");
            w = be32(data);
            h = be32(data + 4);
            bit_depth = data[8];
            color_type = data[9];
            if (data[10] != 0) throw FormatError("PNG compression: unsupported");
            if (data[11] != 0) throw FormatError("PNG filter method: unsupported");
            if (data[12] != 0) throw FormatError("PNG interlace: unsupported");
            if (bit_depth != 8)
                throw FormatError("PNG bit depth: only 8 supported, got " +
                                  std::to_string(bit_depth));
            if (color_type != 0 && color_type != 2)
                throw FormatError(
                    "PNG color type: only grayscale (0) and RGB (2) "
                    "supported, got " +
                    std::to_string(color_type));
            if (w < 1 || h < 1) throw FormatError("PNG IHDR: zero size");
            have_ihdr = true;
        } else if (name == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (name == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (!have_ihdr) throw FormatError("PNG IHDR: missing");
    if (idat.empty()) throw FormatError("PNG IDAT: missing");

    const int channels = (color_type == 2) ? 3 : 1;
    const std::size_t row_bytes = static_cast<std::size_t>(w) * channels;
    const std::size_t raw_size = static_cast<std::size_t>(h) * (1 + row_bytes);

    std::vector<std::uint8_t> raw(raw_size);
    uLongf dest_len = static_cast<uLongf>(raw_size);
    int zrc = uncompress(raw.data(), &dest_len, idat.data(),
                         static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || dest_len != raw_size)
        throw FormatError("PNG IDAT: inflate failed or wrong size");

    // undo per-row filters in place
    std::vector<std::uint8_t> pix(static_cast<std::size_t>(h) * row_bytes);
    const int bpp = channels;  // bytes per pixel at depth 8
    for (std::uint32_t y = 0; y < h; ++y) {
        const std::uint8_t* src = &raw[y * (1 + row_bytes)];
        std::uint8_t filter = src[0];
        const std::uint8_t* in = src + 1;
        std::uint8_t* out = &pix[y * row_bytes];
        const std::uint8_t* up = (y > 0) ? &pix[(y - 1) * row_bytes] : nullptr;
        for (std::size_t i = 0; i < row_bytes; ++i) {
            int a = (i >= static_cast<std::size_t>(bpp)) ? out[i - bpp] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= static_cast<std::size_t>(bpp)) ? up[i - bpp] : 0;
            int v;
            switch (filter) {
                case 0: v = in[i]; break;
                case 1: v = in[i] + a; break;
                case 2: v = in[i] + b; break;
                case 3: v = in[i] + (a + b) / 2; break;
                case 4: v = in[i] + paeth(a, b, c); break;
                default:
                    throw FormatError("PNG row filter: unknown type " +
                                      std::to_string(filter));
            }
            out[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    if (channels == 1) {
        for (std::size_t i = 0; i < img.pixel_count(); ++i)
            img.data[i] = pix[i] / 255.0;
    } else {
        // ITU-R BT.601 luminance
        for (std::size_t i = 0; i < img.pixel_count(); ++i) {
            double r = pix[3 * i], g = pix[3 * i + 1], b = pix[3 * i + 2];
            img.data[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
        }
    }
    return img;
}

}  // namespace detail

inline GrayImage load_image(const std::string& path) {
    auto bytes = detail::read_file(path);
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5')
        return detail::decode_pgm(bytes);
    if (bytes.size() >= 8 && bytes[0] == 137 && bytes[1] == 'P')
        return detail::decode_png(bytes);
    throw FormatError("unrecognized image magic in " + path);
}

inline std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
    std::string header = "P5\n" + std::to_string(img.width) + " " +
                         std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + img.pixel_count());
    for (double v : img.data) {
        long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        out.push_back(static_cast<std::uint8_t>(b));
    }
    return out;
}

inline void save_pgm(const GrayImage& img, const std::string& path) {
    auto bytes = encode_pgm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write: " + path);
}

}  // namespace pcmsar
