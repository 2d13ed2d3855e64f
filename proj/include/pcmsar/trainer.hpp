#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pcmsar/errors.hpp"
#include "pcmsar/fusion.hpp"
#include "pcmsar/image.hpp"
#include "pcmsar/losses.hpp"
#include "pcmsar/mlp.hpp"
#include "pcmsar/noise.hpp"
#include "pcmsar/rng.hpp"
#include "pcmsar/sampling.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Desk-scale embodiment of the dual-model training loop: two encoders with
// momentum twins, speckle views and local-patch views per scene, fused
// local/global targets, symmetric cross-entropy losses, EMA updates.
// ---------------------------------------------------------------------------

// ----- synthetic scenes -----------------------------------------------------

// 64x64 scenes: class 0 carries one bright blob, class 1 three, over a
// sinusoidal background with per-pixel noise and a per-scene base level.
// The base level varies enough that raw mean brightness is a poor class cue.
inline constexpr int kSceneSize = 64;

inline GrayImage gen_synthetic_scene(int class_id, Rng rng) {
    if (class_id != 0 && class_id != 1)
        throw ParamError("gen_synthetic_scene: class_id must be 0 or 1");

    const int n = kSceneSize;
    GrayImage img(n, n);

    double base = rng.uniform(0.10, 0.30);
    double amp = rng.uniform(0.02, 0.06);
    double fx = rng.uniform(0.03, 0.12);
    double fy = rng.uniform(0.03, 0.12);
    double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            img.at(x, y) = std::clamp(
                base +
                    amp * std::sin(2.0 * 3.14159265358979323846 *
                                       (fx * x + fy * y) +
                                   phase) +
                    rng.uniform(0.0, 0.05),
                0.0, 1.0);

    const int blob_count = (class_id == 0) ? 1 : 3;
    const int margin = 8;
    const double min_sep = 20.0;
    std::vector<Point> centers;
    while (static_cast<int>(centers.size()) < blob_count) {
        Point c{rng.uniform(margin, n - 1.0 - margin),
                rng.uniform(margin, n - 1.0 - margin)};
        bool ok = true;
        for (const Point& o : centers) {
            double dx = c.x - o.x, dy = c.y - o.y;
            if (dx * dx + dy * dy < min_sep * min_sep) ok = false;
        }
        if (ok) centers.push_back(c);
    }
    for (const Point& c : centers) {
        double sigma_b = rng.uniform(2.0, 3.0);
        double peak = rng.uniform(0.7, 1.0);
        int r = static_cast<int>(std::ceil(4.0 * sigma_b));
        int cx = static_cast<int>(std::lround(c.x));
        int cy = static_cast<int>(std::lround(c.y));
        for (int y = std::max(0, cy - r); y <= std::min(n - 1, cy + r); ++y) {
            for (int x = std::max(0, cx - r); x <= std::min(n - 1, cx + r);
                 ++x) {
                double dx = x - c.x, dy = y - c.y;
                double v = peak * std::exp(-(dx * dx + dy * dy) /
                                           (2.0 * sigma_b * sigma_b));
                img.at(x, y) = std::clamp(std::max(img.at(x, y), v), 0.0, 1.0);
            }
        }
    }
    return img;
}

struct SceneDataset {
    std::vector<GrayImage> images;
    std::vector<int> labels;
};

inline SceneDataset gen_dataset(int count, Rng rng) {
    SceneDataset ds;
    ds.images.reserve(static_cast<std::size_t>(count));
    ds.labels.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        int cls = i % 2;
        ds.images.push_back(
            gen_synthetic_scene(cls, rng.fork(static_cast<std::uint64_t>(i))));
        ds.labels.push_back(cls);
    }
    return ds;
}

// ----- encoder input adaptation ---------------------------------------------

// Center-crop (when larger) or zero-pad (when smaller) to w x h, flattened
// row-major. All encoder inputs pass through this.
inline Vec adapt_to_input(const GrayImage& img, int w, int h) {
    Vec out(static_cast<std::size_t>(w) * h, 0.0);
    int src_x0 = std::max(0, (img.width - w) / 2);
    int src_y0 = std::max(0, (img.height - h) / 2);
    int dst_x0 = std::max(0, (w - img.width) / 2);
    int dst_y0 = std::max(0, (h - img.height) / 2);
    int cw = std::min(w, img.width);
    int ch = std::min(h, img.height);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            out[static_cast<std::size_t>(dst_y0 + y) * w + (dst_x0 + x)] =
                img.at(src_x0 + x, src_y0 + y);
    return out;
}

// ----- configuration ---------------------------------------------------------

struct TrainerConfig {
    int train_scenes = 200;
    int test_scenes = 100;

    std::vector<int> enc_dims = {kSceneSize * kSceneSize, 32, 16};
    int input_w = kSceneSize;
    int input_h = kSceneSize;
    int d_k = 8;
    int d_v = 16;  // must equal enc_dims.back(): fused and plain embeddings
                   // share the simplex dimension
    double enc_init_scale = 1.0;
    double fusion_init_scale = 0.2;

    int steps = 500;
    int batch = 16;
    double lr = 0.5;
    double temperature = 0.5;
    double ema_m = 0.99;
    LossWeights loss_weights;

    NoiseParams noise;
    GlcmConfig glcm;
    SsgConfig ssg{/*blur_sigma=*/2.0, /*threshold=*/0.6, /*min_dist=*/0.0,
                  /*candidates=*/30, /*patch_w=*/24, /*patch_h=*/24};
    int max_patches = 3;

    int knn_k = 5;
    int probe_epochs = 200;
    double probe_lr = 0.5;

    std::uint64_t seed = 42;

    void validate() const {
        if (enc_dims.size() < 2) throw ParamError("trainer: enc_dims too short");
        if (enc_dims.front() != input_w * input_h)
            throw ParamError("trainer: enc input dim != input raster size");
        if (d_v != enc_dims.back())
            throw ParamError("trainer: d_v must equal encoder output dim");
        if (batch < 1) throw ParamError("trainer: batch must be >= 1");
        if (max_patches < 1) throw ParamError("trainer: max_patches must be >= 1");
        loss_weights.validate();
        noise.validate();
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["train_scenes"] = train_scenes;
        j["test_scenes"] = test_scenes;
        j["enc_dims"] = enc_dims;
        j["d_k"] = d_k;
        j["d_v"] = d_v;
        j["steps"] = steps;
        j["batch"] = batch;
        j["lr"] = lr;
        j["temperature"] = temperature;
        j["ema_m"] = ema_m;
        j["lambda1"] = loss_weights.lambda1;
        j["lambda2"] = loss_weights.lambda2;
        j["sigma0"] = noise.sigma0;
        j["block"] = noise.block;
        j["patch_w"] = ssg.patch_w;
        j["patch_h"] = ssg.patch_h;
        j["max_patches"] = max_patches;
        j["seed"] = seed;
        return j;
    }
};

// ----- models and views ------------------------------------------------------

struct Model {
    MlpEncoder online;
    MlpEncoder momentum;  // EMA twin, never receives gradient
    FusionWeights fusion;

    static Model init(const TrainerConfig& cfg, Rng rng) {
        Model m;
        Rng enc_rng = rng.fork(0);
        m.online = MlpEncoder::random(cfg.enc_dims, enc_rng,
                                      cfg.enc_init_scale);
        m.momentum = m.online;
        Rng fus_rng = rng.fork(1);
        m.fusion = FusionWeights::random(cfg.enc_dims.back(), cfg.d_k, cfg.d_v,
                                         fus_rng, cfg.fusion_init_scale);
        return m;
    }
};

// One scene's two views, already adapted to encoder input rasters.
// View 1 is the speckled image, view 2 the clean local patches; each view
// also carries the tokens its fused target is built from.
struct SceneViews {
    Vec noisy_global;               // view 1, whole speckled image
    Vec clean_global;               // clean whole image (view-2 global token)
    std::vector<Vec> patches_clean;  // view 2, local patches from clean image
    std::vector<Vec> patches_noisy;  // same rects cut from the speckled image
};

inline SceneViews make_views(const GrayImage& scene, const TrainerConfig& cfg,
                             Rng rng) {
    SceneViews v;
    auto [noisy, report] =
        generate_noise_view(scene, cfg.noise, cfg.glcm, rng.fork(0));
    (void)report;
    v.noisy_global = adapt_to_input(noisy, cfg.input_w, cfg.input_h);
    v.clean_global = adapt_to_input(scene, cfg.input_w, cfg.input_h);

    PatchSet patches = ssg_views(scene, cfg.ssg, rng.fork(1));
    std::size_t take = std::min<std::size_t>(patches.patches.size(),
                                             static_cast<std::size_t>(
                                                 cfg.max_patches));
    for (std::size_t i = 0; i < take; ++i) {
        const Patch& p = patches.patches[i];
        v.patches_clean.push_back(
            adapt_to_input(p.crop, cfg.input_w, cfg.input_h));
        v.patches_noisy.push_back(
            adapt_to_input(crop(noisy, p.rect), cfg.input_w, cfg.input_h));
    }
    return v;
}

// ----- loss graph -------------------------------------------------------------

struct StepLosses {
    double l1 = 0.0, l2 = 0.0;
    double lcl1 = 0.0, lcl2 = 0.0;
    double lml1 = 0.0, lml2 = 0.0;
};

struct ModelGrads {
    MlpGrads enc;
    FusionGrads fus;

    explicit ModelGrads(const Model& m) : enc(m.online), fus(m.fusion) {}
};

namespace detail {

// Everything one model computes on one scene.
struct ModelForward {
    // online branch
    MlpCache cache_g;                 // global (noisy) forward
    std::vector<MlpCache> cache_p;    // per-patch forwards
    Vec emb_g;                        // post-activation embeddings
    Vec emb_p_mean;
    ProbVector z1, z2;
    // momentum branch (targets, no caches needed for encoders)
    FusionCache fus1, fus2;
    ProbVector zf1, zf2;              // fused targets for views 1 and 2
};

inline Mat stack_rows(const std::vector<Vec>& rows) {
    Mat m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), m.row(static_cast<int>(i)));
    return m;
}

inline ModelForward model_forward(const Model& m, const SceneViews& v,
                                  const TrainerConfig& cfg) {
    ModelForward f;
    const double t = cfg.temperature;

    // view embeddings from the online encoder
    f.emb_g = mlp_forward(m.online, v.noisy_global, &f.cache_g);
    f.z1 = temperature_softmax(f.emb_g, t);

    f.cache_p.resize(v.patches_clean.size());
    f.emb_p_mean.assign(static_cast<std::size_t>(m.online.output_dim()), 0.0);
    for (std::size_t i = 0; i < v.patches_clean.size(); ++i) {
        Vec e = mlp_forward(m.online, v.patches_clean[i], &f.cache_p[i]);
        for (std::size_t j = 0; j < e.size(); ++j) f.emb_p_mean[j] += e[j];
    }
    for (double& x : f.emb_p_mean) x /= static_cast<double>(
        v.patches_clean.size());
    f.z2 = temperature_softmax(f.emb_p_mean, t);

    // fused targets from the momentum encoder
    std::vector<Vec> loc1, loc2;
    for (const Vec& p : v.patches_noisy)
        loc1.push_back(mlp_forward(m.momentum, p));
    for (const Vec& p : v.patches_clean)
        loc2.push_back(mlp_forward(m.momentum, p));
    Mat g1(1, m.momentum.output_dim());
    Mat g2(1, m.momentum.output_dim());
    {
        Vec e1 = mlp_forward(m.momentum, v.noisy_global);
        Vec e2 = mlp_forward(m.momentum, v.clean_global);
        std::copy(e1.begin(), e1.end(), g1.row(0));
        std::copy(e2.begin(), e2.end(), g2.row(0));
    }
    f.zf1 = temperature_softmax(
        fuse_attention(stack_rows(loc1), g1, m.fusion, &f.fus1), t);
    f.zf2 = temperature_softmax(
        fuse_attention(stack_rows(loc2), g2, m.fusion, &f.fus2), t);
    return f;
}

// Backpropagates a gradient on one online prob vector (z1 or z2) into the
// encoder weights.
inline void backprop_view(const Model& m, const ModelForward& f,
                          const TrainerConfig& cfg, bool view1,
                          const Vec& dLdz, ModelGrads& g) {
    const ProbVector& z = view1 ? f.z1 : f.z2;
    Vec demb = temperature_softmax_backward(z, dLdz, cfg.temperature);
    if (view1) {
        mlp_backward(m.online, f.cache_g, demb, g.enc);
    } else {
        double inv = 1.0 / static_cast<double>(f.cache_p.size());
        Vec share(demb.size());
        for (std::size_t i = 0; i < demb.size(); ++i) share[i] = demb[i] * inv;
        for (const MlpCache& c : f.cache_p)
            mlp_backward(m.online, c, share, g.enc);
    }
}

// Backpropagates a gradient on a fused target into the fusion weights (its
// encoder tokens are momentum-encoded and take no gradient).
inline void backprop_fused(const Model& m, const ModelForward& f,
                           const TrainerConfig& cfg, bool view1,
                           const Vec& dLdz, ModelGrads& g) {
    const ProbVector& z = view1 ? f.zf1 : f.zf2;
    Vec dfused = temperature_softmax_backward(z, dLdz, cfg.temperature);
    fuse_attention_backward(view1 ? f.fus1 : f.fus2, dfused, m.fusion, g.fus);
}

}  // namespace detail

// Evaluates the batch loss at the current parameters; when grad containers
// are supplied, accumulates d(L1 + L2)/dtheta for the online parameters of
// both models (batch-mean scaling included).
//
// Loss structure per scene, with z = online view embeddings and zf = fused
// momentum targets:
//   L_cl1 = SCE(z_a1, z_a2)                 L_cl2 = SCE(z_b1, z_b2)
//   L_ml1 = (SCE(z_a1, zf_b2) + SCE(z_a2, zf_b1)) / 2
//   L_ml2 = (SCE(z_b1, zf_a2) + SCE(z_b2, zf_a1)) / 2
//   L1 = l1*L_cl1 + l2*L_ml1                L2 = l1*L_cl2 + l2*L_ml2
inline StepLosses evaluate_batch(const Model& a, const Model& b,
                                 const std::vector<SceneViews>& views,
                                 const TrainerConfig& cfg,
                                 ModelGrads* ga = nullptr,
                                 ModelGrads* gb = nullptr) {
    if (views.empty()) throw ParamError("evaluate_batch: empty batch");
    const double l1w = cfg.loss_weights.lambda1;
    const double l2w = cfg.loss_weights.lambda2;
    const double inv_batch = 1.0 / static_cast<double>(views.size());

    // forward passes may run concurrently; gradients are reduced in scene
    // order below so results are independent of thread count
    std::vector<detail::ModelForward> fa(views.size()), fb(views.size());
    {
        unsigned hw = std::thread::hardware_concurrency();
        std::size_t workers =
            std::min<std::size_t>(views.size(), hw ? hw : 1);
        if (workers <= 1) {
            for (std::size_t s = 0; s < views.size(); ++s) {
                fa[s] = detail::model_forward(a, views[s], cfg);
                fb[s] = detail::model_forward(b, views[s], cfg);
            }
        } else {
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w]() {
                    for (std::size_t s = w; s < views.size(); s += workers) {
                        fa[s] = detail::model_forward(a, views[s], cfg);
                        fb[s] = detail::model_forward(b, views[s], cfg);
                    }
                });
            }
            for (std::thread& th : pool) th.join();
        }
    }

    StepLosses out;
    const std::size_t k = fa[0].z1.p.size();
    for (std::size_t s = 0; s < views.size(); ++s) {
        const detail::ModelForward& A = fa[s];
        const detail::ModelForward& B = fb[s];

        double lcl1 = symmetric_ce(A.z1, A.z2);
        double lcl2 = symmetric_ce(B.z1, B.z2);
        double lml1 =
            0.5 * (symmetric_ce(A.z1, B.zf2) + symmetric_ce(A.z2, B.zf1));
        double lml2 =
            0.5 * (symmetric_ce(B.z1, A.zf2) + symmetric_ce(B.z2, A.zf1));
        out.lcl1 += lcl1 * inv_batch;
        out.lcl2 += lcl2 * inv_batch;
        out.lml1 += lml1 * inv_batch;
        out.lml2 += lml2 * inv_batch;

        if (!ga) continue;

        // accumulate dJ/dz for the eight prob vectors of this scene
        Vec d_az1(k, 0.0), d_az2(k, 0.0), d_bz1(k, 0.0), d_bz2(k, 0.0);
        Vec d_azf1(k, 0.0), d_azf2(k, 0.0), d_bzf1(k, 0.0), d_bzf2(k, 0.0);

        double cl_s = l1w * inv_batch;
        double ml_s = 0.5 * l2w * inv_batch;
        symmetric_ce_backward(A.z1, A.z2, cl_s, d_az1, d_az2);
        symmetric_ce_backward(B.z1, B.z2, cl_s, d_bz1, d_bz2);
        symmetric_ce_backward(A.z1, B.zf2, ml_s, d_az1, d_bzf2);
        symmetric_ce_backward(A.z2, B.zf1, ml_s, d_az2, d_bzf1);
        symmetric_ce_backward(B.z1, A.zf2, ml_s, d_bz1, d_azf2);
        symmetric_ce_backward(B.z2, A.zf1, ml_s, d_bz2, d_azf1);

        detail::backprop_view(a, A, cfg, true, d_az1, *ga);
        detail::backprop_view(a, A, cfg, false, d_az2, *ga);
        detail::backprop_view(b, B, cfg, true, d_bz1, *gb);
        detail::backprop_view(b, B, cfg, false, d_bz2, *gb);
        detail::backprop_fused(a, A, cfg, true, d_azf1, *ga);
        detail::backprop_fused(a, A, cfg, false, d_azf2, *ga);
        detail::backprop_fused(b, B, cfg, true, d_bzf1, *gb);
        detail::backprop_fused(b, B, cfg, false, d_bzf2, *gb);
    }
    out.l1 = total_loss(out.lcl1, out.lml1, cfg.loss_weights);
    out.l2 = total_loss(out.lcl2, out.lml2, cfg.loss_weights);
    return out;
}

inline void check_finite(const StepLosses& l, int step) {
    const std::pair<const char*, double> terms[] = {
        {"L_cl1", l.lcl1}, {"L_cl2", l.lcl2}, {"L_ml1", l.lml1},
        {"L_ml2", l.lml2}, {"L1", l.l1},      {"L2", l.l2}};
    for (auto& [name, v] : terms)
        if (!std::isfinite(v))
            throw NumericalError(std::string(name) + " is non-finite at step " +
                                 std::to_string(step));
}

namespace detail {

inline void sgd_apply(Model& m, const ModelGrads& g, double lr) {
    for (std::size_t l = 0; l < m.online.w.size(); ++l) {
        add_scaled(m.online.w[l], g.enc.dw[l], -lr);
        for (std::size_t i = 0; i < m.online.b[l].size(); ++i)
            m.online.b[l][i] -= lr * g.enc.db[l][i];
    }
    add_scaled(m.fusion.wq, g.fus.dwq, -lr);
    add_scaled(m.fusion.wk, g.fus.dwk, -lr);
    add_scaled(m.fusion.wv, g.fus.dwv, -lr);
}

inline void ema_encoder(MlpEncoder& momentum, const MlpEncoder& online,
                        double m) {
    std::vector<double> mom(param_count(momentum)), onl(param_count(online));
    get_params(momentum, mom);
    get_params(online, onl);
    ema_update(mom, onl, m);
    set_params(momentum, mom);
}

}  // namespace detail

// One optimization step: build fresh views for the batch, accumulate
// gradients of L1 + L2 over the online parameters of both models, apply a
// plain gradient-descent update, then EMA both momentum twins.
inline StepLosses train_step(Model& a, Model& b,
                             std::span<const GrayImage> batch,
                             const TrainerConfig& cfg, Rng rng,
                             int step_index = 0) {
    if (batch.empty()) throw ParamError("train_step: empty batch");
    std::vector<SceneViews> views;
    views.reserve(batch.size());
    for (std::size_t s = 0; s < batch.size(); ++s)
        views.push_back(
            make_views(batch[s], cfg, rng.fork(static_cast<std::uint64_t>(s))));

    ModelGrads ga(a), gb(b);
    StepLosses losses = evaluate_batch(a, b, views, cfg, &ga, &gb);
    check_finite(losses, step_index);

    detail::sgd_apply(a, ga, cfg.lr);
    detail::sgd_apply(b, gb, cfg.lr);
    detail::ema_encoder(a.momentum, a.online, cfg.ema_m);
    detail::ema_encoder(b.momentum, b.online, cfg.ema_m);
    return losses;
}

// ----- probes -----------------------------------------------------------------

inline double knn_probe(const Mat& train_emb, const std::vector<int>& train_labels,
                        const Mat& test_emb, const std::vector<int>& test_labels,
                        int k = 5) {
    if (train_emb.rows < 1 || test_emb.rows < 1)
        throw ParamError("knn_probe: empty embedding set");
    if (k > train_emb.rows)
        throw ParamError("knn_probe: k exceeds training set size");
    if (train_emb.cols != test_emb.cols)
        throw ParamError("knn_probe: embedding dim mismatch");

    int correct = 0;
    std::vector<std::pair<double, int>> dist(
        static_cast<std::size_t>(train_emb.rows));
    for (int t = 0; t < test_emb.rows; ++t) {
        for (int i = 0; i < train_emb.rows; ++i) {
            double d2 = 0.0;
            const double* u = test_emb.row(t);
            const double* v = train_emb.row(i);
            for (int c = 0; c < train_emb.cols; ++c) {
                double diff = u[c] - v[c];
                d2 += diff * diff;
            }
            dist[static_cast<std::size_t>(i)] = {d2, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        // vote; ties broken by smaller summed distance, then lower label
        int max_label = 0;
        for (int i = 0; i < k; ++i)
            max_label = std::max(
                max_label, train_labels[static_cast<std::size_t>(
                               dist[static_cast<std::size_t>(i)].second)]);
        std::vector<int> votes(static_cast<std::size_t>(max_label + 1), 0);
        std::vector<double> sums(static_cast<std::size_t>(max_label + 1), 0.0);
        for (int i = 0; i < k; ++i) {
            int lbl = train_labels[static_cast<std::size_t>(
                dist[static_cast<std::size_t>(i)].second)];
            votes[static_cast<std::size_t>(lbl)] += 1;
            sums[static_cast<std::size_t>(lbl)] +=
                std::sqrt(dist[static_cast<std::size_t>(i)].first);
        }
        int best = -1;
        for (int lbl = 0; lbl <= max_label; ++lbl) {
            if (votes[static_cast<std::size_t>(lbl)] == 0) continue;
            if (best < 0) {
                best = lbl;
                continue;
            }
            int vb = votes[static_cast<std::size_t>(best)];
            int vl = votes[static_cast<std::size_t>(lbl)];
            if (vl > vb ||
                (vl == vb && sums[static_cast<std::size_t>(lbl)] <
                                 sums[static_cast<std::size_t>(best)]))
                best = lbl;
        }
        if (best == test_labels[static_cast<std::size_t>(t)]) ++correct;
    }
    return static_cast<double>(correct) / test_emb.rows;
}

// Single linear layer + softmax, full-batch gradient descent on
// cross-entropy. Zero initialization keeps it deterministic.
inline double linear_probe(const Mat& train_emb,
                           const std::vector<int>& train_labels,
                           const Mat& test_emb,
                           const std::vector<int>& test_labels, int epochs,
                           double lr) {
    if (train_emb.rows < 1 || test_emb.rows < 1)
        throw ParamError("linear_probe: empty embedding set");
    if (train_emb.cols != test_emb.cols)
        throw ParamError("linear_probe: embedding dim mismatch");
    int classes = 1 + *std::max_element(train_labels.begin(),
                                        train_labels.end());
    const int d = train_emb.cols;
    Mat w(classes, d);
    Vec bias(static_cast<std::size_t>(classes), 0.0);

    Vec logits(static_cast<std::size_t>(classes));
    for (int ep = 0; ep < epochs; ++ep) {
        Mat dw(classes, d);
        Vec db(static_cast<std::size_t>(classes), 0.0);
        for (int i = 0; i < train_emb.rows; ++i) {
            const double* x = train_emb.row(i);
            for (int c = 0; c < classes; ++c) {
                double s = bias[static_cast<std::size_t>(c)];
                const double* wr = w.row(c);
                for (int j = 0; j < d; ++j) s += wr[j] * x[j];
                logits[static_cast<std::size_t>(c)] = s;
            }
            ProbVector p = temperature_softmax(logits, 1.0);
            int y = train_labels[static_cast<std::size_t>(i)];
            for (int c = 0; c < classes; ++c) {
                double g = p.p[static_cast<std::size_t>(c)] -
                           (c == y ? 1.0 : 0.0);
                db[static_cast<std::size_t>(c)] += g;
                double* dwr = dw.row(c);
                for (int j = 0; j < d; ++j) dwr[j] += g * x[j];
            }
        }
        double scale = lr / train_emb.rows;
        add_scaled(w, dw, -scale);
        for (int c = 0; c < classes; ++c)
            bias[static_cast<std::size_t>(c)] -=
                scale * db[static_cast<std::size_t>(c)];
    }

    int correct = 0;
    for (int i = 0; i < test_emb.rows; ++i) {
        const double* x = test_emb.row(i);
        int best = 0;
        double best_s = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < classes; ++c) {
            double s = bias[static_cast<std::size_t>(c)];
            const double* wr = w.row(c);
            for (int j = 0; j < d; ++j) s += wr[j] * x[j];
            if (s > best_s) {
                best_s = s;
                best = c;
            }
        }
        if (best == test_labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / test_emb.rows;
}

// ----- full run ----------------------------------------------------------------

struct StepRecord {
    int step = 0;
    StepLosses losses;
};

struct TrainReport {
    std::vector<StepRecord> steps;
    double knn_acc = 0.0;
    double linear_acc = 0.0;
    double knn_random = 0.0;     // probes on the frozen initial encoder
    double linear_random = 0.0;
    std::uint64_t seed = 0;
    nlohmann::ordered_json config_echo;
};

inline Mat embed_dataset(const MlpEncoder& enc, const SceneDataset& ds,
                         const TrainerConfig& cfg) {
    Mat emb(static_cast<int>(ds.images.size()), enc.output_dim());
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        Vec e = mlp_forward(
            enc, adapt_to_input(ds.images[i], cfg.input_w, cfg.input_h));
        std::copy(e.begin(), e.end(), emb.row(static_cast<int>(i)));
    }
    return emb;
}

inline TrainReport run_training(const TrainerConfig& cfg) {
    cfg.validate();
    Rng master(cfg.seed);

    SceneDataset train = gen_dataset(cfg.train_scenes, master.fork(1));
    SceneDataset test = gen_dataset(cfg.test_scenes, master.fork(2));

    Model a = Model::init(cfg, master.fork(3));
    Model b = Model::init(cfg, master.fork(4));
    MlpEncoder initial_encoder = a.online;  // random baseline for the probes

    TrainReport report;
    report.seed = cfg.seed;
    report.config_echo = cfg.to_json();

    for (int step = 0; step < cfg.steps; ++step) {
        Rng step_rng = master.fork(1000 + static_cast<std::uint64_t>(step));
        Rng pick = step_rng.fork(0);
        std::vector<GrayImage> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch));
        for (int s = 0; s < cfg.batch; ++s)
            batch.push_back(
                train.images[pick.uniform_index(train.images.size())]);
        StepLosses losses =
            train_step(a, b, batch, cfg, step_rng.fork(1), step);
        report.steps.push_back({step, losses});
    }

    Mat train_emb = embed_dataset(a.online, train, cfg);
    Mat test_emb = embed_dataset(a.online, test, cfg);
    Mat train_emb0 = embed_dataset(initial_encoder, train, cfg);
    Mat test_emb0 = embed_dataset(initial_encoder, test, cfg);

    report.knn_acc = knn_probe(train_emb, train.labels, test_emb, test.labels,
                               cfg.knn_k);
    report.knn_random = knn_probe(train_emb0, train.labels, test_emb0,
                                  test.labels, cfg.knn_k);
    report.linear_acc = linear_probe(train_emb, train.labels, test_emb,
                                     test.labels, cfg.probe_epochs,
                                     cfg.probe_lr);
    report.linear_random = linear_probe(train_emb0, train.labels, test_emb0,
                                        test.labels, cfg.probe_epochs,
                                        cfg.probe_lr);
    return report;
}

}  // namespace pcmsar
