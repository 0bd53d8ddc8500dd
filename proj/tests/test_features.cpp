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
#include <filesystem>

#include "doctest.h"
#include "rfpuf/features.hpp"

using namespace rfpuf;
using namespace rfpuf::features;

namespace {

rxdsp::FrameObservation obs_with(std::vector<cplx> symbols, double cfo = 0.0) {
    rxdsp::FrameObservation o;
    o.symbols = std::move(symbols);
    o.cfo_hz = cfo;
    return o;
}

FrameFeatures ff(double cfo) {
    FrameFeatures f;
    f.cfo_hz = cfo;
    return f;
}

}  // namespace

TEST_CASE("quadrant_of covers the four quadrants and the axes") {
    CHECK(quadrant_of({1, 1}) == 0);
    CHECK(quadrant_of({-1, 1}) == 1);
    CHECK(quadrant_of({-1, -1}) == 2);
    CHECK(quadrant_of({1, -1}) == 3);
    CHECK(quadrant_of({0, 0}) == 0);   // axes fold into the closed quadrant
    CHECK(quadrant_of({0, -1}) == 3);
    CHECK(quadrant_of({-1, 0}) == 1);
}

TEST_CASE("extract_frame_features computes per-quadrant centroids by hand") {
    const auto obs = obs_with({{1, 1}, {3, 1}, {-1, 2}, {-1, -1}, {2, -2}}, 12e3);
    const auto f = extract_frame_features(obs);
    CHECK(f.cfo_hz == 12e3);
    CHECK(f.i_centroid[0] == doctest::Approx(2.0));
    CHECK(f.q_centroid[0] == doctest::Approx(1.0));
    CHECK(f.i_centroid[1] == doctest::Approx(-1.0));
    CHECK(f.q_centroid[1] == doctest::Approx(2.0));
    CHECK(f.i_centroid[2] == doctest::Approx(-1.0));
    CHECK(f.q_centroid[2] == doctest::Approx(-1.0));
    CHECK(f.i_centroid[3] == doctest::Approx(2.0));
    CHECK(f.q_centroid[3] == doctest::Approx(-2.0));
}

TEST_CASE("extract_frame_features rejects frames with an empty quadrant") {
    // no symbols in quadrant 2
    const auto obs = obs_with({{1, 1}, {-1, 1}, {1, -1}});
    CHECK_THROWS_AS(extract_frame_features(obs), rxdsp::FrameDropError);
    CHECK_THROWS_AS(extract_frame_features(obs_with({})), DataError);
}

TEST_CASE("compute_cov hand arithmetic") {
    // mean 10000, sample std sqrt(2e6) = 1414.21...
    const auto c = compute_cov({9000.0, 11000.0});
    REQUIRE(c.has_value());
    CHECK(*c == doctest::Approx(std::sqrt(2e6) / 10000.0).epsilon(1e-12));

    SUBCASE("sign of the mean does not matter") {
        const auto cn = compute_cov({-9000.0, -11000.0});
        REQUIRE(cn.has_value());
        CHECK(*cn == doctest::Approx(*c).epsilon(1e-12));
    }

    SUBCASE("constant series has zero spread") {
        const auto cz = compute_cov({5.0, 5.0, 5.0});
        REQUIRE(cz.has_value());
        CHECK(*cz == 0.0);
    }

    SUBCASE("near-zero mean is flagged, not guessed") {
        CHECK_FALSE(compute_cov({-1.0, 1.0}).has_value());
    }

    SUBCASE("too-short series is an error") {
        CHECK_THROWS_AS(compute_cov({1.0}), DataError);
    }
}

TEST_CASE("build_feature_matrix layout and COV window semantics") {
    std::map<int, std::vector<FrameFeatures>> by_device;
    by_device[3] = {ff(1.0), ff(2.0), ff(3.0), ff(4.0)};
    by_device[7] = {ff(10.0), ff(10.0), ff(30.0)};

    SUBCASE("9-feature layout") {
        const auto m = build_feature_matrix(by_device, false);
        CHECK(m.n_cols == 9);
        CHECK(m.n_rows() == 7);
        CHECK(m.cov_window == 0);
        CHECK(m.col_names.front() == "cfo_hz");
        // rows grouped by device in ascending id, frames in order
        CHECK(m.labels == std::vector<int>{3, 3, 3, 3, 7, 7, 7});
        CHECK(m.at(0, 0) == 1.0);
        CHECK(m.at(4, 0) == 10.0);
    }

    SUBCASE("trailing window of 2, first rows reuse the first full window") {
        const auto m = build_feature_matrix(by_device, true, 2);
        REQUIRE(m.n_cols == 10);
        CHECK(m.col_names.back() == "cov");
        auto cov_of = [](std::vector<double> w) { return *compute_cov(w); };
        CHECK(m.at(0, 9) == doctest::Approx(cov_of({1, 2})));  // reused first window
        CHECK(m.at(1, 9) == doctest::Approx(cov_of({1, 2})));
        CHECK(m.at(2, 9) == doctest::Approx(cov_of({2, 3})));
        CHECK(m.at(3, 9) == doctest::Approx(cov_of({3, 4})));
        CHECK(m.at(4, 9) == doctest::Approx(cov_of({10, 10})));
        CHECK(m.at(6, 9) == doctest::Approx(cov_of({10, 30})));
    }

    SUBCASE("window 0 means the whole per-device series") {
        const auto m = build_feature_matrix(by_device, true, 0);
        const double d3 = *compute_cov({1, 2, 3, 4});
        for (std::size_t r = 0; r < 4; ++r) CHECK(m.at(r, 9) == doctest::Approx(d3));
        const double d7 = *compute_cov({10, 10, 30});
        for (std::size_t r = 4; r < 7; ++r) CHECK(m.at(r, 9) == doctest::Approx(d7));
    }

    SUBCASE("a device with fewer frames than the window is an error") {
        CHECK_THROWS_AS(build_feature_matrix(by_device, true, 4), DataError);
    }

    SUBCASE("near-zero mean CFO makes the COV column an error") {
        by_device[7] = {ff(-10.0), ff(10.0)};
        CHECK_THROWS_AS(build_feature_matrix(by_device, true, 2), NumericError);
    }
}

TEST_CASE("Scaler z-scores columns and inverts exactly") {
    Rng rng(11);
    FeatureMatrix m;
    m.n_cols = 3;
    m.col_names = {"a", "b", "const"};
    for (int r = 0; r < 200; ++r) {
        m.labels.push_back(0);
        m.data.push_back(rng.normal(5.0, 2.0));
        m.data.push_back(rng.uniform(-1.0, 1.0));
        m.data.push_back(7.5);  // zero variance
    }

    const auto [z, s] = standardize(m);
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> col(z.n_rows());
        for (std::size_t r = 0; r < z.n_rows(); ++r) col[r] = z.at(r, c);
        CHECK(mean(col) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(sample_std(col) == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (std::size_t r = 0; r < z.n_rows(); ++r) CHECK(z.at(r, 2) == 0.0);  // centered only

    const auto back = s.inverse(z);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(m.data[i]).epsilon(1e-12));

    FeatureMatrix wrong;
    wrong.n_cols = 2;
    wrong.data = {1, 2};
    CHECK_THROWS_AS(s.transform(wrong), ConfigError);
}

TEST_CASE("jacobi_eigen reproduces the closed-form 2x2 spectrum") {
    std::vector<double> a = {2.0, 1.0, 1.0, 2.0};
    std::vector<double> vals, vecs;
    jacobi_eigen(a, 2, vals, vecs);
    std::sort(vals.begin(), vals.end());
    CHECK(vals[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(vals[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("pca recovers a planted principal direction") {
    Rng rng(21);
    FeatureMatrix m;
    m.n_cols = 3;
    m.col_names = {"x", "y", "z"};
    const double ux = 0.6, uy = 0.8;  // planted direction in the x-y plane
    for (int r = 0; r < 500; ++r) {
        const double t = rng.normal(0.0, 4.0);
        const double n1 = rng.normal(0.0, 0.05);
        const double n2 = rng.normal(0.0, 0.03);
        m.labels.push_back(0);
        m.data.push_back(ux * t - uy * n1 + 1.0);
        m.data.push_back(uy * t + ux * n1 - 2.0);
        m.data.push_back(n2);
    }

    const auto p = pca(m);
    REQUIRE(p.loadings.size() == 3);

    SUBCASE("first loading matches the planted direction") {
        CHECK(std::abs(p.loadings[0][0] - ux) < 0.01);
        CHECK(std::abs(p.loadings[0][1] - uy) < 0.01);
        CHECK(std::abs(p.loadings[0][2]) < 0.01);
    }

    SUBCASE("explained variance is nonincreasing and totals the trace") {
        double total = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<double> col(m.n_rows());
            for (std::size_t r = 0; r < m.n_rows(); ++r) col[r] = m.at(r, c);
            const double sd = sample_std(col);
            total += sd * sd;
        }
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < p.explained_variance.size(); ++k)
            CHECK(p.explained_variance[k] >= p.explained_variance[k + 1]);
        for (double v : p.explained_variance) acc += v;
        CHECK(acc == doctest::Approx(total).epsilon(1e-9));
    }

    SUBCASE("loadings are orthonormal") {
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = i; j < 3; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < 3; ++k) dot += p.loadings[i][k] * p.loadings[j][k];
                CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).scale(1.0).epsilon(1e-9));
            }
    }

    SUBCASE("standardized PCA explains n_cols total variance") {
        const auto pz = pca(m, true);
        double acc = 0.0;
        for (double v : pz.explained_variance) acc += v;
        CHECK(acc == doctest::Approx(3.0).epsilon(1e-9));
    }

    SUBCASE("too few rows is an error") {
        FeatureMatrix tiny;
        tiny.n_cols = 3;
        tiny.data = {1, 2, 3, 4, 5, 6};
        tiny.labels = {0, 0};
        CHECK_THROWS_AS(pca(tiny), DataError);
    }
}

TEST_CASE("feature CSV round trip preserves values and labels") {
    Rng rng(31);
    FeatureMatrix m;
    m.n_cols = 10;
    m.col_names = feature_names_9();
    m.col_names.push_back("cov");
    m.cov_window = 5;
    for (int r = 0; r < 40; ++r) {
        m.labels.push_back(r % 4);
        for (std::size_t c = 0; c < 10; ++c) m.data.push_back(rng.normal(0.0, 1e4));
    }

    const auto path = (std::filesystem::temp_directory_path() / "rfpuf_features.csv").string();
    write_csv(path, m);
    const auto back = read_csv(path);
    REQUIRE(back.n_cols == m.n_cols);
    CHECK(back.col_names == m.col_names);
    CHECK(back.labels == m.labels);
    REQUIRE(back.data.size() == m.data.size());
    for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(back.data[i] == m.data[i]);  // %.17g exact

    CHECK_THROWS_AS(read_csv("/nonexistent/rfpuf.csv"), DataError);
}
