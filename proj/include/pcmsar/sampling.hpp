#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pcmsar/errors.hpp"
#include "pcmsar/image.hpp"
#include "pcmsar/rng.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Semantic-aware local sampling: brightness heat map -> threshold mask ->
// detection box -> Poisson-disk points -> fixed-size patches.
// ---------------------------------------------------------------------------

struct HeatMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // row-major in [0,1]; max == 1 unless flat

    double at(int x, int y) const {
        return values[static_cast<std::size_t>(y) * width + x];
    }
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    bool at(int x, int y) const {
        return bits[static_cast<std::size_t>(y) * width + x] != 0;
    }
};

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct SamplePoints {
    std::vector<Point> points;
    double min_dist = 0.0;  // every pair is strictly farther apart than this
};

struct BoundingBoxResult {
    Rect box;
    bool degenerate = false;  // true when the mask had no set bits
};

struct Patch {
    Point center;
    Rect rect;
    GrayImage crop;
};

struct PatchSet {
    std::vector<Patch> patches;
    int patch_w = 0;
    int patch_h = 0;
    Rect box;                     // detection box the points were drawn in
    bool degenerate_mask = false;

    nlohmann::ordered_json metadata_json() const {
        nlohmann::ordered_json j;
        j["box"] = {{"x0", box.x0}, {"y0", box.y0}, {"x1", box.x1},
                    {"y1", box.y1}};
        j["degenerate_mask"] = degenerate_mask;
        j["points"] = nlohmann::ordered_json::array();
        for (const Patch& p : patches)
            j["points"].push_back({{"x", p.center.x}, {"y", p.center.y}});
        j["patch_size"] = {{"w", patch_w}, {"h", patch_h}};
        return j;
    }
};

// Blur, then rescale linearly so min -> 0 and max -> 1. A constant image maps
// to an all-zero heat map.
inline HeatMap heat_map(const GrayImage& img, double blur_sigma) {
    GrayImage blurred = gaussian_blur(img, blur_sigma);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : blurred.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    HeatMap h;
    h.width = img.width;
    h.height = img.height;
    h.values.resize(blurred.data.size());
    if (hi > lo) {
        for (std::size_t i = 0; i < blurred.data.size(); ++i)
            h.values[i] = (blurred.data[i] - lo) / (hi - lo);
    }
    return h;
}

inline BinaryMask binary_mask(const HeatMap& heat, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw ParamError("binary_mask: threshold must be in [0,1]");
    BinaryMask m;
    m.width = heat.width;
    m.height = heat.height;
    m.bits.resize(heat.values.size());
    for (std::size_t i = 0; i < heat.values.size(); ++i)
        m.bits[i] = heat.values[i] >= threshold ? 1 : 0;
    return m;
}

// Smallest rect containing every set bit. An empty mask falls back to the
// full-image rect with the degenerate flag raised, so featureless inputs
// sample over the whole frame instead of aborting.
inline BoundingBoxResult bounding_box(const BinaryMask& mask) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.at(x, y)) continue;
            x0 = std::min(x0, x);
            y0 = std::min(y0, y);
            x1 = std::max(x1, x);
            y1 = std::max(y1, y);
        }
    }
    if (x1 < 0)
        return {Rect{0, 0, mask.width - 1, mask.height - 1}, true};
    return {Rect{x0, y0, x1, y1}, false};
}

// ---------------------------------------------------------------------------
// Bridson dart throwing. Points are continuous coordinates inside the
// (inclusive) box; every accepted pair is strictly farther apart than r.
// Candidates are drawn area-uniformly from the annulus [r, 2r] around a
// random active point; a point retires after k failed candidates.
// ---------------------------------------------------------------------------

inline SamplePoints poisson_disk(const Rect& box, double r, int k, Rng rng) {
    if (box.x1 < box.x0 || box.y1 < box.y0)
        throw DegenerateInput("poisson_disk: empty box");
    if (r <= 0.0) throw ParamError("poisson_disk: r must be > 0");
    if (k < 1) throw ParamError("poisson_disk: k must be >= 1");

    const double w = static_cast<double>(box.x1 - box.x0);
    const double h = static_cast<double>(box.y1 - box.y0);
    const double cell = r / std::sqrt(2.0);
    const int gx = std::max(1, static_cast<int>(std::ceil(w / cell)) + 1);
    const int gy = std::max(1, static_cast<int>(std::ceil(h / cell)) + 1);
    std::vector<int> grid(static_cast<std::size_t>(gx) * gy, -1);

    std::vector<Point> pts;
    std::vector<int> active;

    auto cell_of = [&](const Point& p) {
        int cx = std::min(gx - 1, static_cast<int>((p.x - box.x0) / cell));
        int cy = std::min(gy - 1, static_cast<int>((p.y - box.y0) / cell));
        return std::pair<int, int>{cx, cy};
    };
    auto far_enough = [&](const Point& p) {
        auto [cx, cy] = cell_of(p);
        for (int j = std::max(0, cy - 2); j <= std::min(gy - 1, cy + 2); ++j) {
            for (int i = std::max(0, cx - 2); i <= std::min(gx - 1, cx + 2);
                 ++i) {
                int id = grid[static_cast<std::size_t>(j) * gx + i];
                if (id < 0) continue;
                double dx = p.x - pts[static_cast<std::size_t>(id)].x;
                double dy = p.y - pts[static_cast<std::size_t>(id)].y;
                if (dx * dx + dy * dy <= r * r) return false;  // need > r
            }
        }
        return true;
    };
    auto accept = [&](const Point& p) {
        int id = static_cast<int>(pts.size());
        pts.push_back(p);
        active.push_back(id);
        auto [cx, cy] = cell_of(p);
        grid[static_cast<std::size_t>(cy) * gx + cx] = id;
    };

    accept(Point{box.x0 + w * rng.uniform(), box.y0 + h * rng.uniform()});

    while (!active.empty()) {
        std::size_t slot = rng.uniform_index(active.size());
        Point base = pts[static_cast<std::size_t>(active[slot])];
        bool found = false;
        for (int c = 0; c < k; ++c) {
            double rad = r * std::sqrt(1.0 + 3.0 * rng.uniform());
            double ang = 2.0 * 3.14159265358979323846 * rng.uniform();
            Point cand{base.x + rad * std::cos(ang),
                       base.y + rad * std::sin(ang)};
            if (cand.x < box.x0 || cand.x > box.x1 || cand.y < box.y0 ||
                cand.y > box.y1)
                continue;
            if (far_enough(cand)) {
                accept(cand);
                found = true;
                break;
            }
        }
        if (!found) {
            active[slot] = active.back();
            active.pop_back();
        }
    }
    return SamplePoints{std::move(pts), r};
}

// ---------------------------------------------------------------------------
// Patch extraction: a w x h box centered on each point, translated (never
// shrunk) back inside the image when it overflows the border.
// ---------------------------------------------------------------------------

inline PatchSet extract_patches(const GrayImage& img, const SamplePoints& pts,
                                int patch_w, int patch_h) {
    if (patch_w < 1 || patch_h < 1)
        throw ParamError("extract_patches: patch size must be >= 1");
    if (patch_w > img.width || patch_h > img.height)
        throw ParamError("extract_patches: patch " + std::to_string(patch_w) +
                         "x" + std::to_string(patch_h) +
                         " larger than image " + std::to_string(img.width) +
                         "x" + std::to_string(img.height));
    PatchSet set;
    set.patch_w = patch_w;
    set.patch_h = patch_h;
    set.patches.reserve(pts.points.size());
    for (const Point& p : pts.points) {
        int cx = static_cast<int>(std::lround(p.x));
        int cy = static_cast<int>(std::lround(p.y));
        int x0 = std::clamp(cx - patch_w / 2, 0, img.width - patch_w);
        int y0 = std::clamp(cy - patch_h / 2, 0, img.height - patch_h);
        Rect r{x0, y0, x0 + patch_w - 1, y0 + patch_h - 1};
        set.patches.push_back({p, r, crop(img, r)});
    }
    return set;
}

struct SsgConfig {
    double blur_sigma = 2.0;
    double threshold = 0.6;
    double min_dist = 0.0;  // <= 0 means max(patch_w, patch_h) / 2
    int candidates = 30;    // Bridson k
    int patch_w = 32;
    int patch_h = 32;

    double effective_min_dist() const {
        return min_dist > 0.0 ? min_dist
                              : std::max(patch_w, patch_h) / 2.0;
    }
};

// The composed local-sampling pipeline.
inline PatchSet ssg_views(const GrayImage& img, const SsgConfig& cfg, Rng rng) {
    HeatMap heat = heat_map(img, cfg.blur_sigma);
    BinaryMask mask = binary_mask(heat, cfg.threshold);
    BoundingBoxResult bb = bounding_box(mask);
    SamplePoints pts =
        poisson_disk(bb.box, cfg.effective_min_dist(), cfg.candidates, rng);
    PatchSet set = extract_patches(img, pts, cfg.patch_w, cfg.patch_h);
    set.box = bb.box;
    set.degenerate_mask = bb.degenerate;
    return set;
}

}  // namespace pcmsar
