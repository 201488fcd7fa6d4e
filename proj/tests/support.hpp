#ifndef MOVSEM_TESTS_SUPPORT_HPP
#define MOVSEM_TESTS_SUPPORT_HPP

#include "movsem/data.hpp"
#include "movsem/encoder.hpp"
#include "movsem/features.hpp"
#include "movsem/numeric.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace movsem::test {

// Region used across tests: ~8.9 km x 7.8 km near the equator.
inline geo::Region test_region() { return geo::Region::from_lonlat(0.0, 0.08, 0.0, 0.07); }

inline data::RawTrajectory make_traj(const std::string& id,
                                     const std::vector<std::array<double, 3>>& pts) {
    data::RawTrajectory t;
    t.id = id;
    for (const auto& p : pts) t.points.push_back({p[0], p[1], p[2]});
    return t;
}

// Random feature sequence with values in [-1, 1].
inline feat::FeatureSequence random_features(std::size_t length, std::size_t dim, Rng& rng) {
    feat::FeatureSequence f;
    f.dim = dim;
    f.values.resize(length * dim);
    for (auto& v : f.values) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return f;
}

// Central finite differences of `loss()` w.r.t. every element of `storage`,
// compared against `analytic`. Returns the max relative error, with an
// absolute floor to ignore noise around zero.
inline double gradcheck_max_rel_error(std::vector<double>& storage,
                                      const std::vector<double>& analytic,
                                      const std::function<double()>& loss, double h = 1e-5,
                                      double floor_abs = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < storage.size(); ++i) {
        double keep = storage[i];
        storage[i] = keep + h;
        double up = loss();
        storage[i] = keep - h;
        double down = loss();
        storage[i] = keep;
        double numeric = (up - down) / (2.0 * h);
        double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor_abs});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Naive reference encoder: plain double loops, no tape, no BLAS. Evaluates
// one full-sequence attention block (pre-norm, multi-head, additive key
// masking) + masked mean, i.e. the single-level path that the hierarchical
// encoder must reproduce when P >= L.
// ---------------------------------------------------------------------------

struct NaiveBlockRef {
    // all row-major
    std::vector<double> ln1_g, ln1_b, ln2_g, ln2_b;
    std::vector<double> wq, bq, wk, bk, wv, bv, wo, bo;
    std::vector<double> ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    int d_h = 0, heads = 0, ffn = 0;

    template <typename T>
    static std::vector<double> dump(const num::Parameter<T>& p) {
        return {p.value.begin(), p.value.end()};
    }

    template <typename T>
    static NaiveBlockRef from(enc::TransformerBlock<T>& b, int d_h, int heads, int ffn_mult) {
        NaiveBlockRef r;
        r.d_h = d_h;
        r.heads = heads;
        r.ffn = d_h * ffn_mult;
        r.ln1_g = dump(b.ln1_g);
        r.ln1_b = dump(b.ln1_b);
        r.ln2_g = dump(b.ln2_g);
        r.ln2_b = dump(b.ln2_b);
        r.wq = dump(b.attn.wq);
        r.bq = dump(b.attn.bq);
        r.wk = dump(b.attn.wk);
        r.bk = dump(b.attn.bk);
        r.wv = dump(b.attn.wv);
        r.bv = dump(b.attn.bv);
        r.wo = dump(b.attn.wo);
        r.bo = dump(b.attn.bo);
        r.ffn_w1 = dump(b.ffn_w1);
        r.ffn_b1 = dump(b.ffn_b1);
        r.ffn_w2 = dump(b.ffn_w2);
        r.ffn_b2 = dump(b.ffn_b2);
        return r;
    }

    static std::vector<double> layer_norm_rows(const std::vector<double>& x, int n, int d,
                                               const std::vector<double>& g,
                                               const std::vector<double>& b) {
        std::vector<double> out(x.size());
        for (int i = 0; i < n; ++i) {
            double mean = 0;
            for (int j = 0; j < d; ++j) mean += x[i * d + j];
            mean /= d;
            double var = 0;
            for (int j = 0; j < d; ++j) var += (x[i * d + j] - mean) * (x[i * d + j] - mean);
            var /= d;
            double inv = 1.0 / std::sqrt(var + num::kLayerNormEps);
            for (int j = 0; j < d; ++j) out[i * d + j] = (x[i * d + j] - mean) * inv * g[j] + b[j];
        }
        return out;
    }

    static std::vector<double> affine(const std::vector<double>& x, int n, int din, int dout,
                                      const std::vector<double>& w, const std::vector<double>& b) {
        std::vector<double> out(static_cast<std::size_t>(n) * dout, 0.0);
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < din; ++k) {
                double xv = x[i * din + k];
                for (int j = 0; j < dout; ++j) out[i * dout + j] += xv * w[k * dout + j];
            }
            for (int j = 0; j < dout; ++j) out[i * dout + j] += b[j];
        }
        return out;
    }

    // full-sequence multi-head attention with additive -1e9 key masking
    std::vector<double> attention(const std::vector<double>& x, int n,
                                  const std::vector<std::uint8_t>& padded) const {
        std::vector<double> q = affine(x, n, d_h, d_h, wq, bq);
        std::vector<double> k = affine(x, n, d_h, d_h, wk, bk);
        std::vector<double> v = affine(x, n, d_h, d_h, wv, bv);
        int dk = d_h / heads;
        std::vector<double> ctx(static_cast<std::size_t>(n) * d_h, 0.0);
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < n; ++i) {
                std::vector<double> scores(n);
                for (int j = 0; j < n; ++j) {
                    double dot = 0;
                    for (int c = 0; c < dk; ++c) {
                        dot += q[i * d_h + h * dk + c] * k[j * d_h + h * dk + c];
                    }
                    scores[j] = dot / std::sqrt(static_cast<double>(dk));
                    if (padded[j]) scores[j] += num::kMaskBias;
                }
                double mx = scores[0];
                for (double s : scores) mx = std::max(mx, s);
                double sum = 0;
                for (auto& s : scores) {
                    s = std::exp(s - mx);
                    sum += s;
                }
                for (auto& s : scores) s /= sum;
                for (int j = 0; j < n; ++j) {
                    for (int c = 0; c < dk; ++c) {
                        ctx[i * d_h + h * dk + c] += scores[j] * v[j * d_h + h * dk + c];
                    }
                }
            }
        }
        return affine(ctx, n, d_h, d_h, wo, bo);
    }

    std::vector<double> apply(const std::vector<double>& x, int n,
                              const std::vector<std::uint8_t>& padded) const {
        std::vector<double> a = attention(layer_norm_rows(x, n, d_h, ln1_g, ln1_b), n, padded);
        std::vector<double> x1(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) x1[i] = x[i] + a[i];
        std::vector<double> hn = layer_norm_rows(x1, n, d_h, ln2_g, ln2_b);
        std::vector<double> f = affine(hn, n, d_h, ffn, ffn_w1, ffn_b1);
        for (auto& v : f) v = v > 0 ? v : 0;
        std::vector<double> f2 = affine(f, n, ffn, d_h, ffn_w2, ffn_b2);
        for (std::size_t i = 0; i < x.size(); ++i) f2[i] += x1[i];
        return f2;
    }
};

inline std::vector<double> masked_mean_rows(const std::vector<double>& x, int n, int d,
                                            const std::vector<std::uint8_t>& keep) {
    std::vector<double> out(d, 0.0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        ++count;
        for (int j = 0; j < d; ++j) out[j] += x[i * d + j];
    }
    if (count) {
        for (auto& v : out) v /= count;
    }
    return out;
}

} // namespace movsem::test

#endif // MOVSEM_TESTS_SUPPORT_HPP
