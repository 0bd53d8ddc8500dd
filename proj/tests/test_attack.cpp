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
#include <numeric>

#include "doctest.h"
#include "rfpuf/attack.hpp"

using namespace rfpuf;
using namespace rfpuf::attack;
using features::FeatureMatrix;

namespace {

FeatureMatrix make_blobs(std::size_t n_classes, std::size_t per_class, double spread, uint64_t seed) {
    Rng rng(seed);
    FeatureMatrix m;
    m.n_cols = 2;
    m.col_names = {"x", "y"};
    for (std::size_t k = 0; k < n_classes; ++k) {
        const double cx = std::cos(2.0 * kPi * double(k) / double(n_classes)) * 10.0;
        const double cy = std::sin(2.0 * kPi * double(k) / double(n_classes)) * 10.0;
        for (std::size_t r = 0; r < per_class; ++r) {
            m.labels.push_back(int(k));
            m.data.push_back(cx + rng.normal(0.0, spread));
            m.data.push_back(cy + rng.normal(0.0, spread));
        }
    }
    return m;
}

double brute_force_assignment_cost(const std::vector<double>& cost, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += cost[i * n + perm[i]];
        best = std::min(best, acc);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

TEST_CASE("kmeans recovers well-separated blobs") {
    const auto m = make_blobs(4, 50, 0.8, 11);
    const auto res = kmeans(m, 4, 101);

    CHECK(res.converged);
    REQUIRE(res.labels.size() == m.n_rows());
    for (std::size_t c : res.labels) CHECK(c < 4);

    SUBCASE("each true blob maps to exactly one cluster") {
        // all rows of a true class share a label, and labels differ across classes
        std::vector<std::size_t> rep(4, 0);
        for (std::size_t k = 0; k < 4; ++k) {
            rep[k] = res.labels[k * 50];
            for (std::size_t r = 0; r < 50; ++r) CHECK(res.labels[k * 50 + r] == rep[k]);
        }
        std::sort(rep.begin(), rep.end());
        CHECK(std::unique(rep.begin(), rep.end()) == rep.end());
    }

    SUBCASE("objective is nonincreasing") {
        for (std::size_t i = 0; i + 1 < res.objective_per_iter.size(); ++i)
            CHECK(res.objective_per_iter[i + 1] <= res.objective_per_iter[i] + 1e-9);
    }

    SUBCASE("same seed reproduces the run, different seed may differ") {
        const auto res2 = kmeans(m, 4, 101);
        CHECK(res2.labels == res.labels);
        CHECK(res2.objective_per_iter == res.objective_per_iter);
    }

    SUBCASE("invalid configurations are rejected") {
        CHECK_THROWS_AS(kmeans(m, 0, 1), ConfigError);
        FeatureMatrix tiny;
        tiny.n_cols = 2;
        tiny.data = {1, 2};
        tiny.labels = {0};
        CHECK_THROWS_AS(kmeans(tiny, 2, 1), DataError);
    }
}

TEST_CASE("kmeans survives more clusters than distinct points") {
    FeatureMatrix m;
    m.n_cols = 1;
    m.col_names = {"x"};
    m.labels = {0, 0, 0, 1, 1};
    m.data = {1.0, 1.0, 1.0, 9.0, 9.0};  // only two distinct locations
    const auto res = kmeans(m, 3, 5);
    for (std::size_t c : res.labels) CHECK(c < 3);
    CHECK(std::isfinite(res.objective_per_iter.back()));
}

TEST_CASE("hungarian matches brute-force minimum assignments") {
    SUBCASE("hand example") {
        // row 0 -> col 1, row 1 -> col 0, row 2 -> col 2 (cost 1+2+1 = 4)
        const std::vector<double> cost = {9, 1, 8,
                                          2, 9, 7,
                                          6, 5, 1};
        const auto a = hungarian(cost, 3);
        CHECK(a == std::vector<std::size_t>{1, 0, 2});
    }

    SUBCASE("random matrices, n = 5") {
        Rng rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> cost(25);
            for (auto& v : cost) v = rng.uniform(0.0, 10.0);
            const auto a = hungarian(cost, 5);
            std::vector<std::size_t> sorted = a;
            std::sort(sorted.begin(), sorted.end());
            CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4});  // a permutation
            double acc = 0.0;
            for (std::size_t i = 0; i < 5; ++i) acc += cost[i * 5 + a[i]];
            CHECK(acc == doctest::Approx(brute_force_assignment_cost(cost, 5)).epsilon(1e-12));
        }
    }
}

TEST_CASE("attack_accuracy under identity and optimal assignment") {
    const std::vector<int> truth = {5, 5, 7, 7, 9, 9};  // class indices 0,1,2 after sorting

    SUBCASE("identity counts raw index agreement") {
        const std::vector<std::size_t> pred = {0, 0, 1, 2, 2, 2};
        CHECK(attack_accuracy(pred, truth, Assignment::identity) == doctest::Approx(5.0 / 6.0));
    }

    SUBCASE("optimal mode undoes a pure relabeling") {
        const std::vector<std::size_t> permuted = {2, 2, 0, 0, 1, 1};
        CHECK(attack_accuracy(permuted, truth, Assignment::identity) == doctest::Approx(0.0));
        CHECK(attack_accuracy(permuted, truth, Assignment::optimal) == doctest::Approx(1.0));
    }

    SUBCASE("optimal mode scores an imperfect clustering correctly") {
        // best matching fixes 5 of 6 rows
        const std::vector<std::size_t> pred = {1, 1, 2, 2, 0, 1};
        CHECK(attack_accuracy(pred, truth, Assignment::optimal) == doctest::Approx(5.0 / 6.0));
    }

    SUBCASE("degenerate inputs are errors") {
        CHECK_THROWS_AS(attack_accuracy({0, 1}, {5}, Assignment::identity), DataError);
        CHECK_THROWS_AS(attack_accuracy({}, {}, Assignment::identity), DataError);
    }
}

TEST_CASE("repeated_attack aggregates deterministic trials") {
    const auto m = make_blobs(3, 40, 0.8, 31);
    const auto rep = repeated_attack(m, 3, 12, Assignment::optimal, 99);

    CHECK(rep.n_trials == 12);
    CHECK(rep.accuracies.size() == 12);
    CHECK(rep.min_accuracy <= rep.mean_accuracy);
    CHECK(rep.mean_accuracy <= rep.max_accuracy);
    CHECK(rep.max_accuracy == 1.0);  // separated blobs are clusterable
    CHECK(rep.mean_accuracy > 0.9);

    const auto rep2 = repeated_attack(m, 3, 12, Assignment::optimal, 99);
    CHECK(rep2.accuracies == rep.accuracies);

    const auto other = repeated_attack(m, 3, 12, Assignment::optimal, 100);
    CHECK(other.n_trials == 12);  // different master seed still aggregates

    CHECK_THROWS_AS(repeated_attack(m, 3, 0, Assignment::optimal, 1), ConfigError);
}
