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
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rfpuf/common.hpp"
#include "rfpuf/rxdsp.hpp"

namespace rfpuf::features {

using rxdsp::FrameObservation;

// CFO + 4 in-phase + 4 quadrature quadrant centroids.
struct FrameFeatures {
    double cfo_hz = 0.0;
    std::array<double, 4> i_centroid{};  // quadrant order: (+,+), (-,+), (-,-), (+,-)
    std::array<double, 4> q_centroid{};
};

inline int quadrant_of(const cplx& z) {
    if (z.real() >= 0.0) return z.imag() >= 0.0 ? 0 : 3;
    return z.imag() >= 0.0 ? 1 : 2;
}

// Partition symbols by quadrant and take per-quadrant centroids. A frame
// with an empty quadrant carries no full constellation and is dropped.
inline FrameFeatures extract_frame_features(const FrameObservation& obs) {
    if (obs.symbols.empty()) throw DataError("extract_frame_features: no symbols");
    std::array<cplx, 4> sum{};
    std::array<std::size_t, 4> count{};
    for (const auto& z : obs.symbols) {
        const int q = quadrant_of(z);
        sum[std::size_t(q)] += z;
        ++count[std::size_t(q)];
    }
    FrameFeatures f;
    f.cfo_hz = obs.cfo_hz;
    for (std::size_t q = 0; q < 4; ++q) {
        if (count[q] == 0)
            throw rxdsp::FrameDropError("empty_quadrant",
                                        "extract_frame_features: quadrant " + std::to_string(q) + " empty");
        f.i_centroid[q] = sum[q].real() / double(count[q]);
        f.q_centroid[q] = sum[q].imag() / double(count[q]);
    }
    return f;
}

// |sample std / mean| of a CFO series. nullopt when the mean is too close to
// zero for the ratio to be meaningful (the window is flagged, not guessed).
inline std::optional<double> compute_cov(const std::vector<double>& cfo_series) {
    if (cfo_series.size() < 2) throw DataError("compute_cov: series length must be >= 2");
    const double m = mean(cfo_series);
    const double s = sample_std(cfo_series);
    if (std::abs(m) < 1e-12 * s) return std::nullopt;
    return std::abs(s / m);
}

inline std::pair<double, double> moments(const std::vector<double>& series) {
    return {mean(series), sample_std(series)};
}

struct FeatureMatrix {
    std::size_t n_cols = 0;
    std::vector<std::string> col_names;
    std::vector<double> data;  // row-major
    std::vector<int> labels;   // device_id per row
    std::size_t cov_window = 0;  // window the COV column was built with; 0 = none

    std::size_t n_rows() const { return n_cols == 0 ? 0 : data.size() / n_cols; }
    double* row(std::size_t r) { return data.data() + r * n_cols; }
    const double* row(std::size_t r) const { return data.data() + r * n_cols; }
    double& at(std::size_t r, std::size_t c) { return data[r * n_cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * n_cols + c]; }
};

inline const std::vector<std::string>& feature_names_9() {
    static const std::vector<std::string> names = {"cfo_hz", "i1", "i2", "i3", "i4",
                                                   "q1", "q2", "q3", "q4"};
    return names;
}

// Rows ordered by (device_id, frame_index). When include_cov, row r of
// device d carries COV over the trailing window of cov_window frames of d
// ending at r; the first cov_window-1 rows reuse the first full window.
// cov_window == 0 means the whole per-device series (one value per device
// within the data this matrix is built from, so per-partition builds never
// leak across the split).
inline FeatureMatrix build_feature_matrix(const std::map<int, std::vector<FrameFeatures>>& by_device,
                                          bool include_cov, std::size_t cov_window = 0) {
    FeatureMatrix m;
    m.n_cols = include_cov ? 10 : 9;
    m.col_names = feature_names_9();
    if (include_cov) m.col_names.push_back("cov");
    m.cov_window = include_cov ? cov_window : 0;

    for (const auto& [device, rows] : by_device) {
        const std::size_t window = cov_window == 0 ? rows.size() : cov_window;
        if (include_cov && rows.size() < std::max<std::size_t>(window, 2))
            throw DataError("build_feature_matrix: device " + std::to_string(device) +
                            " has too few frames for the COV window");
        std::vector<double> cfo_series;
        cfo_series.reserve(rows.size());
        for (const auto& f : rows) cfo_series.push_back(f.cfo_hz);

        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& f = rows[r];
            m.labels.push_back(device);
            m.data.push_back(f.cfo_hz);
            for (double v : f.i_centroid) m.data.push_back(v);
            for (double v : f.q_centroid) m.data.push_back(v);
            if (include_cov) {
                const std::size_t end = std::max(r + 1, window);  // first full window for early rows
                const std::vector<double> win(cfo_series.begin() + std::ptrdiff_t(end - window),
                                              cfo_series.begin() + std::ptrdiff_t(end));
                const auto cov = compute_cov(win);
                if (!cov)
                    throw NumericError("build_feature_matrix: unstable COV (near-zero mean CFO) for device " +
                                       std::to_string(device));
                m.data.push_back(*cov);
            }
        }
    }
    return m;
}

// Per-column z-scoring; fit on the training partition and reuse elsewhere.
// Zero-variance columns are centered only.
struct Scaler {
    std::vector<double> col_mean;
    std::vector<double> col_std;  // 1.0 for zero-variance columns

    static Scaler fit(const FeatureMatrix& m) {
        Scaler s;
        const std::size_t rows = m.n_rows(), cols = m.n_cols;
        if (rows == 0) throw DataError("Scaler::fit: empty matrix");
        s.col_mean.assign(cols, 0.0);
        s.col_std.assign(cols, 1.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) s.col_mean[c] += m.at(r, c);
        for (double& v : s.col_mean) v /= double(rows);
        if (rows > 1) {
            std::vector<double> acc(cols, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    const double d = m.at(r, c) - s.col_mean[c];
                    acc[c] += d * d;
                }
            for (std::size_t c = 0; c < cols; ++c) {
                const double var = acc[c] / double(rows - 1);
                if (var > 0.0) s.col_std[c] = std::sqrt(var);
            }
        }
        return s;
    }

    FeatureMatrix transform(const FeatureMatrix& m) const {
        if (m.n_cols != col_mean.size()) throw ConfigError("Scaler: column count mismatch");
        FeatureMatrix out = m;
        for (std::size_t r = 0; r < out.n_rows(); ++r)
            for (std::size_t c = 0; c < out.n_cols; ++c)
                out.at(r, c) = (out.at(r, c) - col_mean[c]) / col_std[c];
        return out;
    }

    FeatureMatrix inverse(const FeatureMatrix& m) const {
        FeatureMatrix out = m;
        for (std::size_t r = 0; r < out.n_rows(); ++r)
            for (std::size_t c = 0; c < out.n_cols; ++c)
                out.at(r, c) = out.at(r, c) * col_std[c] + col_mean[c];
        return out;
    }
};

inline std::pair<FeatureMatrix, Scaler> standardize(const FeatureMatrix& m) {
    Scaler s = Scaler::fit(m);
    return {s.transform(m), s};
}

struct PcaResult {
    std::vector<std::vector<double>> loadings;   // one orthonormal vector per component
    std::vector<double> explained_variance;      // nonincreasing
    std::vector<double> mean;
    bool standardized = false;
};

// Cyclic Jacobi eigendecomposition of a small symmetric matrix.
inline void jacobi_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
    eigvecs.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) eigvecs[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = eigvecs[k * n + p], vkq = eigvecs[k * n + q];
                    eigvecs[k * n + p] = c * vkp - s * vkq;
                    eigvecs[k * n + q] = s * vkp + c * vkq;
                }
            }
    }
    eigvals.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigvals[i] = a[i * n + i];
}

// Eigendecomposition of the (optionally z-scored) column covariance,
// components sorted by explained variance.
inline PcaResult pca(const FeatureMatrix& m, bool standardize_cols = false) {
    const std::size_t rows = m.n_rows(), cols = m.n_cols;
    if (rows <= cols) throw DataError("pca: need more rows than columns");

    FeatureMatrix work = m;
    PcaResult out;
    out.standardized = standardize_cols;
    if (standardize_cols) work = Scaler::fit(m).transform(m);

    out.mean.assign(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.mean[c] += work.at(r, c);
    for (double& v : out.mean) v /= double(rows);

    std::vector<double> cov(cols * cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < cols; ++i) {
            const double di = work.at(r, i) - out.mean[i];
            for (std::size_t j = i; j < cols; ++j)
                cov[i * cols + j] += di * (work.at(r, j) - out.mean[j]);
        }
    for (std::size_t i = 0; i < cols; ++i)
        for (std::size_t j = i; j < cols; ++j) {
            cov[i * cols + j] /= double(rows - 1);
            cov[j * cols + i] = cov[i * cols + j];
        }

    std::vector<double> eigvals, eigvecs;
    jacobi_eigen(cov, cols, eigvals, eigvecs);

    std::vector<std::size_t> order(cols);
    for (std::size_t i = 0; i < cols; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return eigvals[a] > eigvals[b]; });

    for (std::size_t rank = 0; rank < cols; ++rank) {
        const std::size_t k = order[rank];
        out.explained_variance.push_back(std::max(0.0, eigvals[k]));
        std::vector<double> v(cols);
        for (std::size_t i = 0; i < cols; ++i) v[i] = eigvecs[i * cols + k];
        // sign convention: largest-magnitude loading positive
        std::size_t imax = 0;
        for (std::size_t i = 1; i < cols; ++i)
            if (std::abs(v[i]) > std::abs(v[imax])) imax = i;
        if (v[imax] < 0.0)
            for (double& x : v) x = -x;
        out.loadings.push_back(std::move(v));
    }
    return out;
}

inline void write_csv(const std::string& path, const FeatureMatrix& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("write_csv: cannot open " + path);
    out << "device_id";
    for (const auto& n : m.col_names) out << "," << n;
    out << "\n";
    char cell[64];
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        out << m.labels[r];
        for (std::size_t c = 0; c < m.n_cols; ++c) {
            std::snprintf(cell, sizeof(cell), ",%.17g", m.at(r, c));
            out << cell;
        }
        out << "\n";
    }
}

inline FeatureMatrix read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("read_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("read_csv: empty file " + path);
    FeatureMatrix m;
    std::size_t pos = line.find(',');
    while (pos != std::string::npos) {
        std::size_t next = line.find(',', pos + 1);
        m.col_names.push_back(line.substr(pos + 1, next == std::string::npos ? next : next - pos - 1));
        pos = next;
    }
    m.n_cols = m.col_names.size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const char* p = line.c_str();
        char* endp = nullptr;
        m.labels.push_back(int(std::strtol(p, &endp, 10)));
        p = endp;
        for (std::size_t c = 0; c < m.n_cols; ++c) {
            if (*p != ',') throw DataError("read_csv: malformed row in " + path);
            ++p;
            m.data.push_back(std::strtod(p, &endp));
            p = endp;
        }
    }
    if (!m.col_names.empty() && m.col_names.back() == "cov") m.cov_window = 1;
    return m;
}

}  // namespace rfpuf::features
