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

#include <string>
#include <vector>

#include "rfpuf/common.hpp"
#include "rfpuf/features.hpp"

namespace rfpuf::attack {

using features::FeatureMatrix;

struct KmeansResult {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> centroids;
    std::vector<double> objective_per_iter;  // within-cluster sum of squares, nonincreasing
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double v = a[i] - b[i];
        acc += v * v;
    }
    return acc;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. An emptied cluster is re-seeded
// at the point farthest from its centroid assignment.
inline KmeansResult kmeans(const FeatureMatrix& m, std::size_t k, uint64_t seed,
                           std::size_t max_iters = 300) {
    const std::size_t rows = m.n_rows(), d = m.n_cols;
    if (rows < k) throw DataError("kmeans: fewer rows than clusters");
    if (k == 0) throw ConfigError("kmeans: k must be >= 1");

    Rng rng(seed);
    KmeansResult res;
    res.centroids.assign(k, std::vector<double>(d, 0.0));

    // k-means++ seeding
    std::vector<double> min_d2(rows, std::numeric_limits<double>::infinity());
    {
        const std::size_t first = std::size_t(rng.uniform_index(rows));
        res.centroids[0].assign(m.row(first), m.row(first) + d);
        for (std::size_t c = 1; c < k; ++c) {
            double total = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double d2 = detail::sq_dist(m.row(r), res.centroids[c - 1].data(), d);
                min_d2[r] = std::min(min_d2[r], d2);
                total += min_d2[r];
            }
            std::size_t chosen = rows - 1;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t r = 0; r < rows; ++r) {
                    acc += min_d2[r];
                    if (acc >= target) {
                        chosen = r;
                        break;
                    }
                }
            } else {
                chosen = std::size_t(rng.uniform_index(rows));
            }
            res.centroids[c].assign(m.row(chosen), m.row(chosen) + d);
        }
    }

    res.labels.assign(rows, 0);
    std::vector<std::size_t> counts(k, 0);
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (auto& s : sums) std::fill(s.begin(), s.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t(0));

        for (std::size_t r = 0; r < rows; ++r) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d2 = detail::sq_dist(m.row(r), res.centroids[c].data(), d);
                if (d2 < best) {
                    best = d2;
                    best_c = c;
                }
            }
            if (res.labels[r] != best_c) {
                res.labels[r] = best_c;
                changed = true;
            }
            objective += best;
            ++counts[best_c];
            const double* x = m.row(r);
            for (std::size_t i = 0; i < d; ++i) sums[best_c][i] += x[i];
        }
        res.objective_per_iter.push_back(objective);
        res.iterations = iter + 1;
        if (!changed && iter > 0) {
            res.converged = true;
            break;
        }

        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // farthest point from its current centroid
                std::size_t far_r = 0;
                double far_d = -1.0;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double d2 = detail::sq_dist(m.row(r), res.centroids[res.labels[r]].data(), d);
                    if (d2 > far_d) {
                        far_d = d2;
                        far_r = r;
                    }
                }
                res.centroids[c].assign(m.row(far_r), m.row(far_r) + d);
            } else {
                for (std::size_t i = 0; i < d; ++i) res.centroids[c][i] = sums[c][i] / double(counts[c]);
            }
        }
    }
    return res;
}

// Hungarian algorithm (potentials + augmenting paths) on a square cost
// matrix; returns the column assigned to each row, minimizing total cost.
inline std::vector<std::size_t> hungarian(const std::vector<double>& cost, std::size_t n) {
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = std::numeric_limits<double>::infinity();
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

enum class Assignment { identity, optimal };

// identity: raw cluster index vs device index. optimal: accuracy under the
// cluster-to-label matching that maximizes agreement (Hungarian on the
// confusion counts).
inline double attack_accuracy(const std::vector<std::size_t>& pred, const std::vector<int>& truth,
                              Assignment mode) {
    if (pred.size() != truth.size()) throw DataError("attack_accuracy: length mismatch");
    if (pred.empty()) throw DataError("attack_accuracy: empty inputs");

    std::vector<int> classes = truth;
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    std::size_t n = classes.size();
    for (std::size_t c : pred) n = std::max(n, c + 1);

    if (mode == Assignment::identity) {
        std::size_t correct = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const auto it = std::lower_bound(classes.begin(), classes.end(), truth[i]);
            const auto t = std::size_t(it - classes.begin());
            if (pred[i] == t) ++correct;
        }
        return double(correct) / double(pred.size());
    }

    std::vector<double> neg_counts(n * n, 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), truth[i]);
        const auto t = std::size_t(it - classes.begin());
        neg_counts[pred[i] * n + t] -= 1.0;
    }
    const auto match = hungarian(neg_counts, n);
    double correct = 0.0;
    for (std::size_t c = 0; c < n; ++c) correct -= neg_counts[c * n + match[c]];
    return correct / double(pred.size());
}

struct AttackReport {
    std::vector<double> accuracies;
    double mean_accuracy = 0.0;
    double min_accuracy = 0.0;
    double max_accuracy = 0.0;
    Assignment assignment_mode = Assignment::identity;
    std::size_t k = 0;
    std::size_t n_trials = 0;
    uint64_t seed = 0;
};

// n_trials independent k-means runs with deterministically derived seeds.
inline AttackReport repeated_attack(const FeatureMatrix& m, std::size_t k, std::size_t n_trials,
                                    Assignment mode, uint64_t master_seed, unsigned jobs = 1,
                                    std::size_t max_iters = 300) {
    if (n_trials == 0) throw ConfigError("repeated_attack: n_trials must be >= 1");
    AttackReport rep;
    rep.assignment_mode = mode;
    rep.k = k;
    rep.n_trials = n_trials;
    rep.seed = master_seed;
    rep.accuracies.assign(n_trials, 0.0);

    Rng master(master_seed);
    std::vector<uint64_t> seeds(n_trials);
    for (std::size_t t = 0; t < n_trials; ++t) seeds[t] = master.derive(t).next_u64();

    parallel_for(n_trials, jobs, [&](std::size_t t) {
        const auto res = kmeans(m, k, seeds[t], max_iters);
        rep.accuracies[t] = attack_accuracy(res.labels, m.labels, mode);
    });

    rep.min_accuracy = *std::min_element(rep.accuracies.begin(), rep.accuracies.end());
    rep.max_accuracy = *std::max_element(rep.accuracies.begin(), rep.accuracies.end());
    rep.mean_accuracy = mean(rep.accuracies);
    return rep;
}

}  // namespace rfpuf::attack
