/*
 Copyright 2026 rfpuf project contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#pragma once

#include <array>
#include <span>
#include <vector>

#include "rfpuf/common.hpp"
#include "rfpuf/features.hpp"

namespace rfpuf::pufprops {

using features::FrameFeatures;

// Per-device mean feature vector over a frame window:
// [cfo, cov, i1..i4, q1..q4].
struct FeatureVector10 {
    std::array<double, 10> v{};
    std::size_t window_start = 0;
    std::size_t window_length = 0;

    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
};

// Entrywise mean of the 9 per-frame features over the window; COV computed
// once over the window's CFO series.
inline FeatureVector10 device_feature_vector(std::span<const FrameFeatures> frames,
                                             std::size_t window_start = 0) {
    if (frames.size() < 2) throw DataError("device_feature_vector: need at least 2 frames");
    FeatureVector10 out;
    out.window_start = window_start;
    out.window_length = frames.size();
    std::vector<double> cfo_series;
    cfo_series.reserve(frames.size());
    for (const auto& f : frames) {
        cfo_series.push_back(f.cfo_hz);
        out[0] += f.cfo_hz;
        for (std::size_t k = 0; k < 4; ++k) {
            out[2 + k] += f.i_centroid[k];
            out[6 + k] += f.q_centroid[k];
        }
    }
    const double inv = 1.0 / double(frames.size());
    out[0] *= inv;
    for (std::size_t k = 2; k < 10; ++k) out[k] *= inv;
    const auto cov = features::compute_cov(cfo_series);
    if (!cov) throw NumericError("device_feature_vector: unstable COV (near-zero mean CFO)");
    out[1] = *cov;
    return out;
}

// Time-shifted windows: starts 0, stride, 2*stride, ... (defaults alpha=80,
// window=1000, stride=5), one feature vector per window.
inline std::vector<FeatureVector10> intra_windows(const std::vector<FrameFeatures>& device_frames,
                                                  std::size_t alpha = 80, std::size_t window = 1000,
                                                  std::size_t stride = 5) {
    if (alpha == 0 || window < 2) throw ConfigError("intra_windows: alpha >= 1 and window >= 2 required");
    const std::size_t need = window + (alpha - 1) * stride;
    if (device_frames.size() < need)
        throw DataError("intra_windows: need " + std::to_string(need) + " frames, have " +
                        std::to_string(device_frames.size()) + " (short by " +
                        std::to_string(need - device_frames.size()) + ")");
    std::vector<FeatureVector10> out;
    out.reserve(alpha);
    for (std::size_t a = 0; a < alpha; ++a) {
        const std::size_t start = a * stride;
        out.push_back(device_feature_vector(
            std::span<const FrameFeatures>(device_frames.data() + start, window), start));
    }
    return out;
}

// Euclidean distance in the 10-dimensional feature space.
inline double pairwise_distance(const FeatureVector10& a, const FeatureVector10& b) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
        const double d = a[k] - b[k];
        acc += d * d;
    }
    return std::sqrt(acc);
}

// z-score each of the 10 dimensions over a reference vector population. The
// mixed units (Hz-scale CFO vs unit-scale I/Q) would otherwise let CFO swamp
// every other coordinate; a raw mode is available upstream.
struct VectorScaler {
    std::array<double, 10> mean{};
    std::array<double, 10> std{};

    static VectorScaler fit(const std::vector<FeatureVector10>& population) {
        if (population.size() < 2) throw DataError("VectorScaler::fit: need at least 2 vectors");
        VectorScaler s;
        s.std.fill(1.0);
        for (const auto& fv : population)
            for (std::size_t k = 0; k < 10; ++k) s.mean[k] += fv[k];
        for (auto& v : s.mean) v /= double(population.size());
        std::array<double, 10> acc{};
        for (const auto& fv : population)
            for (std::size_t k = 0; k < 10; ++k) {
                const double d = fv[k] - s.mean[k];
                acc[k] += d * d;
            }
        for (std::size_t k = 0; k < 10; ++k) {
            const double var = acc[k] / double(population.size() - 1);
            if (var > 0.0) s.std[k] = std::sqrt(var);
        }
        return s;
    }

    FeatureVector10 transform(const FeatureVector10& fv) const {
        FeatureVector10 out = fv;
        for (std::size_t k = 0; k < 10; ++k) out[k] = (fv[k] - mean[k]) / std[k];
        return out;
    }

    std::vector<FeatureVector10> transform(const std::vector<FeatureVector10>& fvs) const {
        std::vector<FeatureVector10> out;
        out.reserve(fvs.size());
        for (const auto& fv : fvs) out.push_back(transform(fv));
        return out;
    }
};

struct SymMatrix {
    std::size_t n = 0;
    std::vector<double> d;  // n x n, symmetric, zero diagonal

    double at(std::size_t i, std::size_t j) const { return d[i * n + j]; }

    std::vector<double> upper_triangle() const {
        std::vector<double> out;
        out.reserve(n * (n - 1) / 2);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) out.push_back(at(i, j));
        return out;
    }
};

struct DistanceStats {
    double min = 0.0;
    double max = 0.0;
};

inline SymMatrix distance_matrix(const std::vector<FeatureVector10>& vectors) {
    SymMatrix m;
    m.n = vectors.size();
    m.d.assign(m.n * m.n, 0.0);
    for (std::size_t i = 0; i < m.n; ++i)
        for (std::size_t j = i + 1; j < m.n; ++j) {
            const double dist = pairwise_distance(vectors[i], vectors[j]);
            m.d[i * m.n + j] = dist;
            m.d[j * m.n + i] = dist;
        }
    return m;
}

inline DistanceStats triangle_stats(const SymMatrix& m) {
    const auto tri = m.upper_triangle();
    if (tri.empty()) throw DataError("triangle_stats: need at least 2 vectors");
    DistanceStats s;
    s.min = *std::min_element(tri.begin(), tri.end());
    s.max = *std::max_element(tri.begin(), tri.end());
    return s;
}

inline SymMatrix inter_distance_matrix(const std::vector<FeatureVector10>& device_vectors) {
    if (device_vectors.size() < 2) throw DataError("inter_distance_matrix: need at least 2 devices");
    return distance_matrix(device_vectors);
}

// mean inter-PUF distance: 2 / (N_puf (N_puf - 1) N_chal) * sum of upper triangle.
inline double mean_inter(const SymMatrix& inter, std::size_t n_chal = 1) {
    const auto tri = inter.upper_triangle();
    double sum = 0.0;
    for (double v : tri) sum += v;
    return 2.0 * sum / (double(inter.n) * double(inter.n - 1) * double(n_chal));
}

inline std::vector<SymMatrix> intra_distance_matrices(
    const std::vector<std::vector<FeatureVector10>>& per_device_windows) {
    std::vector<SymMatrix> out;
    out.reserve(per_device_windows.size());
    for (const auto& windows : per_device_windows) out.push_back(distance_matrix(windows));
    return out;
}

// mean intra-PUF distance: 2 / (N_puf N_chal alpha (alpha - 1)) * sum over all devices.
inline double mean_intra(const std::vector<SymMatrix>& matrices, std::size_t n_chal = 1) {
    if (matrices.empty()) throw DataError("mean_intra: no matrices");
    const std::size_t alpha = matrices.front().n;
    double sum = 0.0;
    for (const auto& m : matrices) {
        if (m.n != alpha) throw DataError("mean_intra: inconsistent window counts");
        for (double v : m.upper_triangle()) sum += v;
    }
    return 2.0 * sum / (double(matrices.size()) * double(n_chal) * double(alpha) * double(alpha - 1));
}

struct WeibullFit {
    double shape = 0.0;  // k
    double scale = 0.0;  // lambda
    double log_likelihood = 0.0;
    std::size_t n_samples = 0;
};

inline double weibull_log_likelihood(const std::vector<double>& x, double k, double lambda) {
    double ll = 0.0;
    for (double v : x) {
        const double z = v / lambda;
        ll += std::log(k / lambda) + (k - 1.0) * std::log(z) - std::pow(z, k);
    }
    return ll;
}

// Two-parameter maximum-likelihood fit. The shape solves
//   sum(x^k ln x)/sum(x^k) - 1/k - mean(ln x) = 0
// by safeguarded Newton (bisection fallback); scale follows in closed form.
inline WeibullFit weibull_fit(const std::vector<double>& samples) {
    if (samples.size() < 10) throw DataError("weibull_fit: need at least 10 samples");
    for (double v : samples)
        if (!(v > 0.0)) throw DataError("weibull_fit: samples must be positive");

    const std::size_t n = samples.size();
    double mean_ln = 0.0;
    for (double v : samples) mean_ln += std::log(v);
    mean_ln /= double(n);

    auto g = [&](double k, double* dg) {
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (double v : samples) {
            const double lx = std::log(v);
            const double xk = std::pow(v, k);
            s0 += xk;
            s1 += xk * lx;
            s2 += xk * lx * lx;
        }
        if (dg) *dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        return s1 / s0 - 1.0 / k - mean_ln;
    };

    // bracket: g is increasing in k; g(k) < 0 for small k, > 0 for large k
    double lo = 1e-3, hi = 1.0;
    int expand = 0;
    while (g(hi, nullptr) < 0.0) {
        hi *= 2.0;
        if (++expand > 60) throw NumericError("weibull_fit: failed to bracket shape (degenerate sample?)");
    }
    if (g(lo, nullptr) > 0.0) lo = 1e-9;
    if (g(lo, nullptr) > 0.0)
        throw NumericError("weibull_fit: failed to bracket shape from below (degenerate sample?)");

    double k = std::min(std::max(1.0, lo), hi);
    bool converged = false;
    for (int iter = 0; iter < 200; ++iter) {
        double dg = 0.0;
        const double gv = g(k, &dg);
        if (gv > 0.0)
            hi = k;
        else
            lo = k;
        double step = dg != 0.0 ? gv / dg : 0.0;
        double next = k - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);  // bisection safeguard
        if (std::abs(next - k) < 1e-10) {
            k = next;
            converged = true;
            break;
        }
        k = next;
    }
    if (!converged)
        throw NumericError("weibull_fit: shape iteration did not converge after 200 iterations (k ~ " +
                           std::to_string(k) + ", bracket [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "])");

    double sk = 0.0;
    for (double v : samples) sk += std::pow(v, k);
    const double lambda = std::pow(sk / double(n), 1.0 / k);
    if (!(k > 0.0) || !(lambda > 0.0) || !std::isfinite(k) || !std::isfinite(lambda))
        throw NumericError("weibull_fit: non-finite parameters");

    WeibullFit fit;
    fit.shape = k;
    fit.scale = lambda;
    fit.n_samples = n;
    fit.log_likelihood = weibull_log_likelihood(samples, k, lambda);
    return fit;
}

// Gaussian MLE log-likelihood, for the fit-preference comparison.
inline double normal_log_likelihood(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) throw DataError("normal_log_likelihood: need at least 2 samples");
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= double(n);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= double(n);  // MLE variance
    if (var <= 0.0) throw NumericError("normal_log_likelihood: zero variance");
    return -0.5 * double(n) * (std::log(2.0 * kPi * var) + 1.0);
}

// Weibull inverse-CDF sampler (test oracle support).
inline double weibull_sample(Rng& rng, double shape, double scale) {
    double u = 0.0;
    while (u <= 0.0) u = rng.uniform();
    return scale * std::pow(-std::log(u), 1.0 / shape);
}

struct Identifiability {
    double probability = 0.0;
    std::uint64_t favorable = 0;  // inter > intra, strict
    std::uint64_t total = 0;
};

// Exact count of (inter_i > intra_j) over the cross product, O(n log n) via
// sorting the intra set; ties count as failures.
inline Identifiability identifiability(const std::vector<double>& inter,
                                       const std::vector<double>& intra) {
    if (inter.empty() || intra.empty()) throw DataError("identifiability: empty distance set");
    std::vector<double> sorted_intra = intra;
    std::sort(sorted_intra.begin(), sorted_intra.end());
    Identifiability out;
    out.total = std::uint64_t(inter.size()) * std::uint64_t(intra.size());
    for (double v : inter) {
        const auto it = std::lower_bound(sorted_intra.begin(), sorted_intra.end(), v);
        out.favorable += std::uint64_t(it - sorted_intra.begin());
    }
    out.probability = double(out.favorable) / double(out.total);
    return out;
}

}  // namespace rfpuf::pufprops
