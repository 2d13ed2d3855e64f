#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "pcmsar/errors.hpp"
#include "pcmsar/matrix.hpp"

namespace pcmsar {

// ---------------------------------------------------------------------------
// The loss currency: K-dim points on the probability simplex produced by a
// temperature softmax, compared with a symmetric cross-entropy.
// ---------------------------------------------------------------------------

struct ProbVector {
    Vec p;

    int k() const { return static_cast<int>(p.size()); }
    double operator[](std::size_t i) const { return p[i]; }
};

// Clamp applied inside every log so boundary simplex points give finite loss.
inline constexpr double kLogEps = 1e-12;

inline ProbVector temperature_softmax(const Vec& v, double t) {
    if (!(t > 0.0)) throw ParamError("temperature_softmax: t must be > 0");
    ProbVector out;
    out.p.resize(v.size());
    double hi = -std::numeric_limits<double>::infinity();
    for (double x : v) hi = std::max(hi, x / t);
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.p[i] = std::exp(v[i] / t - hi);  // max-subtraction, no overflow
        sum += out.p[i];
    }
    for (double& x : out.p) x /= sum;
    return out;
}

// Given dL/dp, returns dL/dv for p = temperature_softmax(v, t):
// dL/dv_i = p_i * (g_i - sum_j g_j p_j) / t.
inline Vec temperature_softmax_backward(const ProbVector& p, const Vec& dLdp,
                                        double t) {
    check_dims(p.p.size() == dLdp.size(), "temperature_softmax_backward");
    double dot = 0.0;
    for (std::size_t i = 0; i < p.p.size(); ++i) dot += dLdp[i] * p.p[i];
    Vec dv(p.p.size());
    for (std::size_t i = 0; i < p.p.size(); ++i)
        dv[i] = p.p[i] * (dLdp[i] - dot) / t;
    return dv;
}

inline double entropy(const ProbVector& p) {
    double h = 0.0;
    for (double x : p.p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

// -1/2 (sum_i p_i ln q_i + sum_i q_i ln p_i), natural log, eps-clamped.
// Symmetric in its arguments and bounded below by (H(p) + H(q)) / 2.
inline double symmetric_ce(const ProbVector& p, const ProbVector& q) {
    if (p.k() != q.k())
        throw ParamError("symmetric_ce: dim mismatch " +
                         std::to_string(p.k()) + " vs " +
                         std::to_string(q.k()));
    double s = 0.0;
    for (int i = 0; i < p.k(); ++i) {
        s += p.p[static_cast<std::size_t>(i)] *
                 std::log(std::max(q.p[static_cast<std::size_t>(i)], kLogEps)) +
             q.p[static_cast<std::size_t>(i)] *
                 std::log(std::max(p.p[static_cast<std::size_t>(i)], kLogEps));
    }
    return -0.5 * s;
}

// Accumulates scale * d(symmetric_ce)/dp and scale * d/dq into dp, dq.
// The clamp makes the loss constant in a coordinate below eps, so the
// matching gradient term is zero there.
inline void symmetric_ce_backward(const ProbVector& p, const ProbVector& q,
                                  double scale, Vec& dp, Vec& dq) {
    check_dims(p.k() == q.k() && dp.size() == p.p.size() &&
                   dq.size() == q.p.size(),
               "symmetric_ce_backward");
    for (std::size_t i = 0; i < p.p.size(); ++i) {
        double pc = std::max(p.p[i], kLogEps);
        double qc = std::max(q.p[i], kLogEps);
        double dLdp = -0.5 * (std::log(qc) + (p.p[i] > kLogEps ? q.p[i] / pc : 0.0));
        double dLdq = -0.5 * (std::log(pc) + (q.p[i] > kLogEps ? p.p[i] / qc : 0.0));
        dp[i] += scale * dLdp;
        dq[i] += scale * dLdq;
    }
}

// Named wrappers so call sites mirror the pairing: cl compares a model's two
// own views, ml compares one model's view with the other model's fused
// vector. Both are the same symmetric kernel.
inline double cl_loss(const ProbVector& za1, const ProbVector& za2) {
    return symmetric_ce(za1, za2);
}
inline double ml_loss(const ProbVector& za, const ProbVector& zb_fused) {
    return symmetric_ce(za, zb_fused);
}

struct LossWeights {
    double lambda1 = 1.0;
    double lambda2 = 1.0;

    void validate() const {
        if (lambda1 < 0.0 || lambda1 > 1.0 || lambda2 < 0.0 || lambda2 > 1.0)
            throw ParamError("LossWeights: lambdas must be in [0,1]");
    }
};

inline double total_loss(double lcl, double lml, const LossWeights& w) {
    return w.lambda1 * lcl + w.lambda2 * lml;
}

// out_i = m * momentum_i + (1-m) * online_i, applied in place to momentum.
inline void ema_update(std::span<double> momentum,
                       std::span<const double> online, double m) {
    if (momentum.size() != online.size())
        throw ParamError("ema_update: length mismatch " +
                         std::to_string(momentum.size()) + " vs " +
                         std::to_string(online.size()));
    if (m < 0.0 || m > 1.0) throw ParamError("ema_update: m must be in [0,1]");
    for (std::size_t i = 0; i < momentum.size(); ++i)
        momentum[i] = m * momentum[i] + (1.0 - m) * online[i];
}

}  // namespace pcmsar
