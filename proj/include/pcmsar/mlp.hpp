#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pcmsar/errors.hpp"
#include "pcmsar/matrix.hpp"
#include "pcmsar/rng.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Plain fully-connected encoder with a leaky rectifier after every layer.
// Forward/backward are hand-rolled; the finite-difference tests in the suite
// check every weight.
// ---------------------------------------------------------------------------

inline constexpr double kLeakySlope = 0.01;

inline double leaky_relu(double x) { return x >= 0.0 ? x : kLeakySlope * x; }
inline double leaky_relu_grad(double x) { return x >= 0.0 ? 1.0 : kLeakySlope; }

struct MlpEncoder {
    std::vector<int> dims;  // input, hidden..., output
    std::vector<Mat> w;     // layer l: dims[l+1] x dims[l]
    std::vector<Vec> b;

    static MlpEncoder random(std::vector<int> dims, Rng& rng, double scale) {
        if (dims.size() < 2)
            throw ParamError("MlpEncoder: need at least input and output dims");
        MlpEncoder e;
        e.dims = std::move(dims);
        for (std::size_t l = 0; l + 1 < e.dims.size(); ++l) {
            Mat m(e.dims[l + 1], e.dims[l]);
            // scaled by fan-in so activations stay O(1) at any width
            double s = scale / std::sqrt(static_cast<double>(e.dims[l]));
            for (double& x : m.a) x = rng.normal(0.0, s);
            e.w.push_back(std::move(m));
            e.b.emplace_back(static_cast<std::size_t>(e.dims[l + 1]), 0.0);
        }
        return e;
    }

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    std::size_t layer_count() const { return w.size(); }
};

struct MlpCache {
    Vec input;
    std::vector<Vec> pre;  // pre-activation per layer
};

inline Vec mlp_forward(const MlpEncoder& e, const Vec& x,
                       MlpCache* cache = nullptr) {
    if (static_cast<int>(x.size()) != e.input_dim())
        throw ParamError("mlp_forward: input dim " + std::to_string(x.size()) +
                         " != " + std::to_string(e.input_dim()));
    if (cache) {
        cache->input = x;
        cache->pre.clear();
    }
    Vec act = x;
    for (std::size_t l = 0; l < e.w.size(); ++l) {
        const Mat& W = e.w[l];
        Vec pre(static_cast<std::size_t>(W.rows));
        for (int i = 0; i < W.rows; ++i) {
            double s = e.b[l][static_cast<std::size_t>(i)];
            const double* wr = W.row(i);
            for (int j = 0; j < W.cols; ++j)
                s += wr[j] * act[static_cast<std::size_t>(j)];
            pre[static_cast<std::size_t>(i)] = s;
        }
        if (cache) cache->pre.push_back(pre);
        for (double& v : pre) v = leaky_relu(v);
        act = std::move(pre);
    }
    return act;
}

struct MlpGrads {
    std::vector<Mat> dw;
    std::vector<Vec> db;

    explicit MlpGrads(const MlpEncoder& e) {
        for (std::size_t l = 0; l < e.w.size(); ++l) {
            dw.emplace_back(e.w[l].rows, e.w[l].cols);
            db.emplace_back(e.b[l].size(), 0.0);
        }
    }
};

// Accumulates parameter gradients given dL/dy at the (post-activation)
// output; returns dL/dx.
inline Vec mlp_backward(const MlpEncoder& e, const MlpCache& cache,
                        const Vec& dLdy, MlpGrads& g) {
    check_dims(dLdy.size() == static_cast<std::size_t>(e.output_dim()),
               "mlp_backward");
    Vec delta = dLdy;
    for (std::size_t li = e.w.size(); li-- > 0;) {
        const Mat& W = e.w[li];
        const Vec& pre = cache.pre[li];
        // through the activation
        for (int i = 0; i < W.rows; ++i)
            delta[static_cast<std::size_t>(i)] *=
                leaky_relu_grad(pre[static_cast<std::size_t>(i)]);
        Vec below_act;
        const Vec* below_ptr;
        if (li == 0) {
            below_ptr = &cache.input;
        } else {
            below_act = cache.pre[li - 1];
            for (double& v : below_act) v = leaky_relu(v);
            below_ptr = &below_act;
        }
        Mat& dW = g.dw[li];
        for (int i = 0; i < W.rows; ++i) {
            double di = delta[static_cast<std::size_t>(i)];
            g.db[li][static_cast<std::size_t>(i)] += di;
            double* dwr = dW.row(i);
            const double* bp = below_ptr->data();
            for (int j = 0; j < W.cols; ++j) dwr[j] += di * bp[j];
        }
        Vec next(static_cast<std::size_t>(W.cols), 0.0);
        for (int i = 0; i < W.rows; ++i) {
            double di = delta[static_cast<std::size_t>(i)];
            const double* wr = W.row(i);
            for (int j = 0; j < W.cols; ++j)
                next[static_cast<std::size_t>(j)] += di * wr[j];
        }
        delta = std::move(next);
    }
    return delta;
}

// ---------------------------------------------------------------------------
// Flat parameter views: layer order, weights row-major then bias. Used by
// the EMA update, the optimizer step, and the finite-difference checks.
// ---------------------------------------------------------------------------

inline std::size_t param_count(const MlpEncoder& e) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < e.w.size(); ++l)
        n += e.w[l].a.size() + e.b[l].size();
    return n;
}

inline void get_params(const MlpEncoder& e, std::span<double> out) {
    check_dims(out.size() == param_count(e), "get_params");
    std::size_t i = 0;
    for (std::size_t l = 0; l < e.w.size(); ++l) {
        for (double v : e.w[l].a) out[i++] = v;
        for (double v : e.b[l]) out[i++] = v;
    }
}

inline void set_params(MlpEncoder& e, std::span<const double> in) {
    check_dims(in.size() == param_count(e), "set_params");
    std::size_t i = 0;
    for (std::size_t l = 0; l < e.w.size(); ++l) {
        for (double& v : e.w[l].a) v = in[i++];
        for (double& v : e.b[l]) v = in[i++];
    }
}

}  // namespace pcmsar
