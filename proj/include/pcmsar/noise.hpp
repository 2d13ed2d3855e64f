#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcmsar/errors.hpp"
#include "pcmsar/glcm.hpp"
#include "pcmsar/image.hpp"
#include "pcmsar/rng.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Terrain-adaptive multiplicative speckle. Texture features of each image
// block scale the base amplitude std sigma0 through the adjustment factor F,
// and every pixel is multiplied by v_a' * exp(v_p) with
// v_a' ~ N(1, sigma'^2), v_p ~ N(0, phase_sigma^2).
// ---------------------------------------------------------------------------

struct NoiseParams {
    double alpha = 1.0;   // weight of the log-contrast term
    double gamma = 1.0;   // weight of the sqrt-entropy term
    double delta = 1.0;   // weight of the exp-homogeneity term
    double beta1 = 1.0;
    double beta2 = 1.0;
    double beta3 = 1.0;
    double sigma0 = 0.15;      // base amplitude std
    double phase_sigma = 0.0;  // std of the phase noise, default off
    int block = 32;            // block side length, >= 8

    void validate() const {
        const double fields[] = {alpha, gamma,  delta,  beta1,
                                 beta2, beta3, sigma0, phase_sigma};
        for (double v : fields)
            if (!std::isfinite(v) || v < 0.0)
                throw ParamError("NoiseParams: fields must be finite and >= 0");
        if (block < 8)
            throw ParamError("NoiseParams: block must be >= 8, got " +
                             std::to_string(block));
    }
};

// F = alpha*ln(1 + beta1*C) + gamma*sqrt(beta2*E) + delta*exp(beta3*H).
// Strictly increasing in each feature when all weights are positive.
inline double adjustment_factor(const GlcmFeatures& f, const NoiseParams& p) {
    return p.alpha * std::log(1.0 + p.beta1 * f.contrast) +
           p.gamma * std::sqrt(p.beta2 * f.entropy) +
           p.delta * std::exp(p.beta3 * f.homogeneity);
}

inline double adjusted_sigma(double sigma0, double f) {
    return sigma0 * f;
}

// ---------------------------------------------------------------------------
// Block tiling: block x block cells; a trailing remainder narrower than 8 px
// is merged into the previous cell so every cell stays GLCM-viable.
// ---------------------------------------------------------------------------

struct BlockGrid {
    // Cell boundaries: cell i spans [x_edges[i], x_edges[i+1]) etc.
    std::vector<int> x_edges;
    std::vector<int> y_edges;

    int cells_x() const { return static_cast<int>(x_edges.size()) - 1; }
    int cells_y() const { return static_cast<int>(y_edges.size()) - 1; }
    int cell_count() const { return cells_x() * cells_y(); }

    Rect cell_rect(int bx, int by) const {
        return Rect{x_edges[bx], y_edges[by], x_edges[bx + 1] - 1,
                    y_edges[by + 1] - 1};
    }
};

inline std::vector<int> split_axis(int extent, int block) {
    std::vector<int> edges{0};
    int pos = block;
    while (pos < extent) {
        edges.push_back(pos);
        pos += block;
    }
    edges.push_back(extent);
    // merge a short trailing cell (< 8 px) into its neighbor
    if (edges.size() > 2) {
        int last = edges[edges.size() - 1] - edges[edges.size() - 2];
        if (last < 8) edges.erase(edges.end() - 2);
    }
    return edges;
}

inline BlockGrid make_block_grid(int width, int height, int block) {
    if (width < 8 || height < 8)
        throw DegenerateInput("block tiling needs an image of at least 8x8");
    return BlockGrid{split_axis(width, block), split_axis(height, block)};
}

// ---------------------------------------------------------------------------
// Per-block diagnostics emitted alongside the noisy view.
// ---------------------------------------------------------------------------

struct BlockRecord {
    int bx = 0, by = 0;
    GlcmFeatures feat;
    double f_value = 0.0;
    double sigma_prime = 0.0;
};

struct NoiseFieldReport {
    BlockGrid grid;
    std::vector<BlockRecord> blocks;  // row-major over (by, bx)
    double f_min = 0.0, f_max = 0.0, f_mean = 0.0;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["blocks"] = nlohmann::ordered_json::array();
        for (const BlockRecord& b : blocks) {
            j["blocks"].push_back({{"bx", b.bx},
                                   {"by", b.by},
                                   {"C", b.feat.contrast},
                                   {"E", b.feat.entropy},
                                   {"H", b.feat.homogeneity},
                                   {"F", b.f_value},
                                   {"sigma_prime", b.sigma_prime}});
        }
        j["summary"] = {{"min", f_min}, {"max", f_max}, {"mean", f_mean}};
        return j;
    }
};

// ---------------------------------------------------------------------------
// Speckle injection
// ---------------------------------------------------------------------------

// One multiplicative draw; exposed so the sampling statistics can be
// measured on pre-clamp ratios.
inline double speckle_ratio(Rng& rng, double sigma_prime, double phase_sigma) {
    double va = rng.normal(1.0, sigma_prime);
    double vp = phase_sigma > 0.0 ? rng.normal(0.0, phase_sigma) : 0.0;
    return va * std::exp(vp);
}

// Applies per-block multiplicative noise. Each block uses its own generator
// forked from (seed, block index), so results are independent of block
// processing order. sigma_prime holds one value per grid cell, row-major.
inline GrayImage inject_speckle(const GrayImage& img, const BlockGrid& grid,
                                const std::vector<double>& sigma_prime,
                                double phase_sigma, const Rng& rng) {
    if (grid.x_edges.back() != img.width || grid.y_edges.back() != img.height)
        throw ParamError("inject_speckle: grid does not tile the image");
    if (sigma_prime.size() != static_cast<std::size_t>(grid.cell_count()))
        throw ParamError("inject_speckle: sigma field size " +
                         std::to_string(sigma_prime.size()) +
                         " != cell count " +
                         std::to_string(grid.cell_count()));

    GrayImage out(img.width, img.height);
    for (int by = 0; by < grid.cells_y(); ++by) {
        for (int bx = 0; bx < grid.cells_x(); ++bx) {
            int cell = by * grid.cells_x() + bx;
            Rng sub = rng.fork(static_cast<std::uint64_t>(cell));
            double sp = sigma_prime[static_cast<std::size_t>(cell)];
            Rect r = grid.cell_rect(bx, by);
            for (int y = r.y0; y <= r.y1; ++y) {
                for (int x = r.x0; x <= r.x1; ++x) {
                    double ratio = speckle_ratio(sub, sp, phase_sigma);
                    out.at(x, y) = std::clamp(img.at(x, y) * ratio, 0.0, 1.0);
                }
            }
        }
    }
    return out;
}

struct GlcmConfig {
    int levels = 16;
    GlcmOffset offset{1, 0, true};
};

// Full noise-sample generation: tile, extract block texture features, turn
// them into a sigma' field, inject speckle. Returns the noisy view plus the
// per-block report.
inline std::pair<GrayImage, NoiseFieldReport> generate_noise_view(
    const GrayImage& img, const NoiseParams& params, const GlcmConfig& glcm_cfg,
    const Rng& rng) {
    params.validate();
    if (img.width < 8 || img.height < 8)
        throw DegenerateInput("generate_noise_view: image smaller than 8x8");

    NoiseFieldReport report;
    report.grid = make_block_grid(img.width, img.height, params.block);

    QuantizedImage q = quantize(img, glcm_cfg.levels);

    std::vector<double> sigma_field;
    sigma_field.reserve(static_cast<std::size_t>(report.grid.cell_count()));
    double fsum = 0.0;
    report.f_min = std::numeric_limits<double>::infinity();
    report.f_max = -std::numeric_limits<double>::infinity();

    for (int by = 0; by < report.grid.cells_y(); ++by) {
        for (int bx = 0; bx < report.grid.cells_x(); ++bx) {
            Rect r = report.grid.cell_rect(bx, by);
            GlcmFeatures feat =
                glcm_features(compute_glcm(crop(q, r), glcm_cfg.offset));
            double f = adjustment_factor(feat, params);
            double sp = adjusted_sigma(params.sigma0, f);
            sigma_field.push_back(sp);
            report.blocks.push_back({bx, by, feat, f, sp});
            fsum += f;
            report.f_min = std::min(report.f_min, f);
            report.f_max = std::max(report.f_max, f);
        }
    }
    report.f_mean = fsum / static_cast<double>(report.blocks.size());

    GrayImage noisy = inject_speckle(img, report.grid, sigma_field,
                                     params.phase_sigma, rng);
    return {std::move(noisy), std::move(report)};
}

}  // namespace pcmsar
