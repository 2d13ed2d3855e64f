#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "pcmsar/errors.hpp"
#include "pcmsar/matrix.hpp"
#include "pcmsar/rng.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// Projection-head fusion of local and global token sets:
//
//   f1'   = column mean of f1                       (d)
//   f_cat = [f1' broadcast | f4 row]                (n4 x 2d)
//   Q     = f1 Wq^T,  K = f4 Wk^T                   (n1 x dk, n4 x dk)
//   A     = row_softmax(Q K^T / sqrt(dk))           (n1 x n4)
//   V     = f_cat Wv^T                              (n4 x dv)
//   out   = column mean of A V                      (dv)
// ---------------------------------------------------------------------------

struct FusionWeights {
    int d = 0;    // token channel dim
    int d_k = 0;  // key dim
    int d_v = 0;  // value dim
    Mat wq;       // d_k x d
    Mat wk;       // d_k x d
    Mat wv;       // d_v x 2d

    static FusionWeights random(int d, int d_k, int d_v, Rng& rng,
                                double scale) {
        FusionWeights w;
        w.d = d;
        w.d_k = d_k;
        w.d_v = d_v;
        w.wq = Mat(d_k, d);
        w.wk = Mat(d_k, d);
        w.wv = Mat(d_v, 2 * d);
        for (double& x : w.wq.a) x = rng.normal(0.0, scale);
        for (double& x : w.wk.a) x = rng.normal(0.0, scale);
        for (double& x : w.wv.a) x = rng.normal(0.0, scale);
        return w;
    }
};

inline Vec global_average_pool(const Mat& tokens) {
    if (tokens.rows < 1)
        throw ParamError("global_average_pool: need at least one token");
    return col_mean(tokens);
}

// Intermediates saved by the forward pass for the weight-gradient pass.
struct FusionCache {
    Mat f1, f4, f_cat;
    Mat q, k, attn, v;
    int n1 = 0;
};

inline Vec fuse_attention(const Mat& f1, const Mat& f4,
                          const FusionWeights& w,
                          FusionCache* cache = nullptr) {
    if (f1.rows < 1 || f4.rows < 1)
        throw ParamError("fuse_attention: empty token set");
    if (f1.cols != w.d || f4.cols != w.d)
        throw ParamError("fuse_attention: token dim " +
                         std::to_string(f1.cols) + "/" +
                         std::to_string(f4.cols) + " != weight dim " +
                         std::to_string(w.d));

    Vec pooled = global_average_pool(f1);
    Mat f_cat(f4.rows, 2 * w.d);
    for (int j = 0; j < f4.rows; ++j) {
        for (int c = 0; c < w.d; ++c) {
            f_cat(j, c) = pooled[static_cast<std::size_t>(c)];
            f_cat(j, w.d + c) = f4(j, c);
        }
    }

    Mat q = matmul_abt(f1, w.wq);  // n1 x dk
    Mat k = matmul_abt(f4, w.wk);  // n4 x dk
    Mat attn = matmul_abt(q, k);   // n1 x n4
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(w.d_k));
    for (double& x : attn.a) x *= inv_sqrt_dk;
    for (int i = 0; i < attn.rows; ++i) {
        double* row = attn.row(i);
        double hi = row[0];
        for (int j = 1; j < attn.cols; ++j) hi = std::max(hi, row[j]);
        double sum = 0.0;
        for (int j = 0; j < attn.cols; ++j) {
            row[j] = std::exp(row[j] - hi);
            sum += row[j];
        }
        for (int j = 0; j < attn.cols; ++j) row[j] /= sum;
    }

    Mat v = matmul_abt(f_cat, w.wv);  // n4 x dv
    Mat tokens_out = matmul(attn, v);  // n1 x dv
    Vec out = col_mean(tokens_out);

    if (cache) {
        cache->f1 = f1;
        cache->f4 = f4;
        cache->f_cat = std::move(f_cat);
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->attn = std::move(attn);
        cache->v = std::move(v);
        cache->n1 = f1.rows;
    }
    return out;
}

struct FusionGrads {
    Mat dwq, dwk, dwv;

    explicit FusionGrads(const FusionWeights& w)
        : dwq(w.d_k, w.d), dwk(w.d_k, w.d), dwv(w.d_v, 2 * w.d) {}
};

// Accumulates weight gradients for out = fuse_attention(f1, f4, w) given
// dL/dout. Token gradients are not propagated; in the trainer the token
// inputs come from momentum encoders, which take no gradient.
inline void fuse_attention_backward(const FusionCache& c, const Vec& dLdout,
                                    const FusionWeights& w, FusionGrads& g) {
    const int n1 = c.n1;
    const int n4 = c.f4.rows;
    check_dims(static_cast<int>(dLdout.size()) == w.d_v,
               "fuse_attention_backward");

    // out = col_mean(A V): every token row receives dLdout / n1
    Mat d_tokens(n1, w.d_v);
    for (int i = 0; i < n1; ++i)
        for (int j = 0; j < w.d_v; ++j)
            d_tokens(i, j) = dLdout[static_cast<std::size_t>(j)] / n1;

    Mat d_attn = matmul_abt(d_tokens, c.v);   // n1 x n4
    Mat d_v = matmul_atb(c.attn, d_tokens);   // n4 x dv

    // row-softmax backward: dS_i = A_i o (dA_i - <dA_i, A_i>)
    Mat d_scores(n1, n4);
    for (int i = 0; i < n1; ++i) {
        double dot = 0.0;
        for (int j = 0; j < n4; ++j) dot += d_attn(i, j) * c.attn(i, j);
        for (int j = 0; j < n4; ++j)
            d_scores(i, j) = c.attn(i, j) * (d_attn(i, j) - dot);
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(w.d_k));
    for (double& x : d_scores.a) x *= inv_sqrt_dk;

    Mat d_q = matmul(d_scores, c.k);      // n1 x dk
    Mat d_k = matmul_atb(d_scores, c.q);  // n4 x dk

    add_scaled(g.dwq, matmul_atb(d_q, c.f1), 1.0);
    add_scaled(g.dwk, matmul_atb(d_k, c.f4), 1.0);
    add_scaled(g.dwv, matmul_atb(d_v, c.f_cat), 1.0);
}

// Flat views in wq, wk, wv order (row-major each).
inline std::size_t param_count(const FusionWeights& w) {
    return w.wq.a.size() + w.wk.a.size() + w.wv.a.size();
}

inline void get_params(const FusionWeights& w, std::span<double> out) {
    check_dims(out.size() == param_count(w), "get_params(fusion)");
    std::size_t i = 0;
    for (const Mat* m : {&w.wq, &w.wk, &w.wv})
        for (double v : m->a) out[i++] = v;
}

inline void set_params(FusionWeights& w, std::span<const double> in) {
    check_dims(in.size() == param_count(w), "set_params(fusion)");
    std::size_t i = 0;
    for (Mat* m : {&w.wq, &w.wk, &w.wv})
        for (double& v : m->a) v = in[i++];
}

// ---------------------------------------------------------------------------
// Checkpoint layout: three little-endian u32 (d, d_k, d_v), then wq, wk, wv
// as little-endian f64 in row-major order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("fusion checkpoint: truncated header");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw FormatError("fusion checkpoint: truncated payload");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace detail

inline void save_fusion_weights(const FusionWeights& w, std::ostream& os) {
    detail::put_u32(os, static_cast<std::uint32_t>(w.d));
    detail::put_u32(os, static_cast<std::uint32_t>(w.d_k));
    detail::put_u32(os, static_cast<std::uint32_t>(w.d_v));
    for (const Mat* m : {&w.wq, &w.wk, &w.wv})
        for (double x : m->a) detail::put_f64(os, x);
}

inline FusionWeights load_fusion_weights(std::istream& is) {
    FusionWeights w;
    w.d = static_cast<int>(detail::get_u32(is));
    w.d_k = static_cast<int>(detail::get_u32(is));
    w.d_v = static_cast<int>(detail::get_u32(is));
    if (w.d < 1 || w.d_k < 1 || w.d_v < 1)
        throw FormatError("fusion checkpoint: bad dimensions");
    w.wq = Mat(w.d_k, w.d);
    w.wk = Mat(w.d_k, w.d);
    w.wv = Mat(w.d_v, 2 * w.d);
    for (Mat* m : {&w.wq, &w.wk, &w.wv})
        for (double& x : m->a) x = detail::get_f64(is);
    return w;
}

}  // namespace pcmsar
