#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pcmsar/errors.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Core raster types. Intensities live in [0, 1] double precision; 8-bit
// values exist only at the file boundary.
// ---------------------------------------------------------------------------

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // row-major, each value in [0, 1]

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
        if (w < 1 || h < 1) throw ParamError("image dimensions must be >= 1");
    }

    double at(int x, int y) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }
    double& at(int x, int y) {
        return data[static_cast<std::size_t>(y) * width + x];
    }
    std::size_t pixel_count() const { return data.size(); }
};

struct QuantizedImage {
    int width = 0;
    int height = 0;
    int levels = 0;                // gray-level count G, 2..256
    std::vector<std::uint8_t> data;  // row-major level indices in [0, G-1]

    std::uint8_t at(int x, int y) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }
};

// Inclusive pixel rectangle: covers x0..x1 by y0..y1.
struct Rect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    long long area() const {
        return static_cast<long long>(width()) * height();
    }
    bool contains(const Rect& inner) const {
        return inner.x0 >= x0 && inner.x1 <= x1 && inner.y0 >= y0 &&
               inner.y1 <= y1;
    }
    bool operator==(const Rect&) const = default;
};

inline void check_rect_in(const Rect& r, int width, int height,
                          const char* what) {
    if (r.x0 < 0 || r.y0 < 0 || r.x0 > r.x1 || r.y0 > r.y1 || r.x1 >= width ||
        r.y1 >= height) {
        throw BoundsError(std::string(what) + ": rect (" +
                          std::to_string(r.x0) + "," + std::to_string(r.y0) +
                          "," + std::to_string(r.x1) + "," +
                          std::to_string(r.y1) + ") outside " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
}

// ---------------------------------------------------------------------------
// Quantization: uniform-width bins over [0, 1] with the top edge clamped into
// the last bin. index = min(floor(intensity * G), G - 1).
// ---------------------------------------------------------------------------

inline QuantizedImage quantize(const GrayImage& img, int levels) {
    if (levels < 2 || levels > 256)
        throw ParamError("quantize: levels must be in [2, 256], got " +
                         std::to_string(levels));
    QuantizedImage q;
    q.width = img.width;
    q.height = img.height;
    q.levels = levels;
    q.data.resize(img.data.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        int idx = static_cast<int>(std::floor(img.data[i] * levels));
        q.data[i] = static_cast<std::uint8_t>(std::clamp(idx, 0, levels - 1));
    }
    return q;
}

// Maps each level index to its bin center, so quantize(dequantize(q)) == q.
inline GrayImage dequantize(const QuantizedImage& q) {
    GrayImage img(q.width, q.height);
    for (std::size_t i = 0; i < q.data.size(); ++i)
        img.data[i] = (q.data[i] + 0.5) / q.levels;
    return img;
}

// ---------------------------------------------------------------------------
// Cropping
// ---------------------------------------------------------------------------

inline GrayImage crop(const GrayImage& img, const Rect& r) {
    check_rect_in(r, img.width, img.height, "crop");
    GrayImage out(r.width(), r.height());
    for (int v = 0; v < out.height; ++v)
        for (int u = 0; u < out.width; ++u)
            out.at(u, v) = img.at(r.x0 + u, r.y0 + v);
    return out;
}

inline QuantizedImage crop(const QuantizedImage& img, const Rect& r) {
    check_rect_in(r, img.width, img.height, "crop");
    QuantizedImage out;
    out.width = r.width();
    out.height = r.height();
    out.levels = img.levels;
    out.data.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int v = 0; v < out.height; ++v)
        for (int u = 0; u < out.width; ++u)
            out.data[static_cast<std::size_t>(v) * out.width + u] =
                img.at(r.x0 + u, r.y0 + v);
    return out;
}

// Nested-rect composition: crop(crop(img, outer), inner) ==
// crop(img, compose(outer, inner)).
inline Rect compose(const Rect& outer, const Rect& inner) {
    return Rect{outer.x0 + inner.x0, outer.y0 + inner.y0, outer.x0 + inner.x1,
                outer.y0 + inner.y1};
}

// ---------------------------------------------------------------------------
// Separable Gaussian blur, kernel radius ceil(3*sigma), weights renormalized
// to sum 1, borders handled by edge clamping. sigma == 0 is the identity.
// ---------------------------------------------------------------------------

inline std::vector<double> gaussian_kernel(double sigma) {
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double w = std::exp(-(static_cast<double>(i) * i) /
                            (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    if (sigma < 0.0) throw ParamError("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return img;

    const std::vector<double> k = gaussian_kernel(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;

    GrayImage tmp(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int xx = std::clamp(x + i, 0, img.width - 1);
                acc += k[static_cast<std::size_t>(i + radius)] * img.at(xx, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int yy = std::clamp(y + i, 0, img.height - 1);
                acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(x, yy);
            }
            // convex combination of [0,1] values; clamp shaves fp dust
            out.at(x, y) = std::clamp(acc, 0.0, 1.0);
        }
    }
    return out;
}

}  // namespace pcmsar
