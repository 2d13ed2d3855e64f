#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pcmsar/errors.hpp"
#include "pcmsar/image.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Gray-level co-occurrence matrix and the three texture features driving the
// noise adjustment: contrast, entropy (nats), homogeneity (inverse
// difference moment).
// ---------------------------------------------------------------------------

struct GlcmOffset {
    int dx = 1;
    int dy = 0;
    bool symmetric = true;  // count both (i,j) and (j,i)
};

struct GlcmMatrix {
    int levels = 0;
    std::vector<double> p;  // levels x levels, row-major, sums to 1

    double at(int i, int j) const {
        return p[static_cast<std::size_t>(i) * levels + j];
    }
    double& at(int i, int j) {
        return p[static_cast<std::size_t>(i) * levels + j];
    }
};

struct GlcmFeatures {
    double contrast = 0.0;     // sum (i-j)^2 p(i,j), >= 0
    double entropy = 0.0;      // -sum p ln p, nats
    double homogeneity = 0.0;  // sum p / (1 + (i-j)^2), in (0, 1]
};

// Counts all in-bounds pixel pairs ((x,y),(x+dx,y+dy)); in symmetric mode the
// transposed pair is counted as well. Counts are normalized by their total.
inline GlcmMatrix compute_glcm(const QuantizedImage& qimg,
                               const GlcmOffset& offset) {
    if (offset.dx == 0 && offset.dy == 0)
        throw ParamError("compute_glcm: offset (0,0) is not a displacement");

    GlcmMatrix m;
    m.levels = qimg.levels;
    m.p.assign(static_cast<std::size_t>(m.levels) * m.levels, 0.0);

    long long total = 0;
    for (int y = 0; y < qimg.height; ++y) {
        int y2 = y + offset.dy;
        if (y2 < 0 || y2 >= qimg.height) continue;
        for (int x = 0; x < qimg.width; ++x) {
            int x2 = x + offset.dx;
            if (x2 < 0 || x2 >= qimg.width) continue;
            int a = qimg.at(x, y);
            int b = qimg.at(x2, y2);
            m.at(a, b) += 1.0;
            if (offset.symmetric) m.at(b, a) += 1.0;
            total += offset.symmetric ? 2 : 1;
        }
    }
    if (total == 0)
        throw DegenerateInput(
            "compute_glcm: no pixel pairs exist under offset (" +
            std::to_string(offset.dx) + "," + std::to_string(offset.dy) + ")");
    for (double& v : m.p) v /= static_cast<double>(total);
    return m;
}

inline GlcmFeatures glcm_features(const GlcmMatrix& m) {
    GlcmFeatures f;
    for (int i = 0; i < m.levels; ++i) {
        for (int j = 0; j < m.levels; ++j) {
            double p = m.at(i, j);
            double d2 = static_cast<double>(i - j) * (i - j);
            f.contrast += d2 * p;
            if (p > 0.0) f.entropy -= p * std::log(p);  // 0 ln 0 := 0
            f.homogeneity += p / (1.0 + d2);
        }
    }
    return f;
}

// Feature averaging over several displacement directions. Off by default;
// the single-offset path is the deterministic baseline.
inline GlcmFeatures glcm_features_averaged(const QuantizedImage& qimg,
                                           std::span<const GlcmOffset> offsets) {
    if (offsets.empty())
        throw ParamError("glcm_features_averaged: need at least one offset");
    GlcmFeatures acc;
    for (const GlcmOffset& o : offsets) {
        GlcmFeatures f = glcm_features(compute_glcm(qimg, o));
        acc.contrast += f.contrast;
        acc.entropy += f.entropy;
        acc.homogeneity += f.homogeneity;
    }
    double n = static_cast<double>(offsets.size());
    return {acc.contrast / n, acc.entropy / n, acc.homogeneity / n};
}

inline constexpr GlcmOffset kFourDirections[4] = {
    {1, 0, true}, {0, 1, true}, {1, 1, true}, {1, -1, true}};

}  // namespace pcmsar
