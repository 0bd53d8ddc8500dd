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
#include <fstream>
#include <set>

#include "doctest.h"
#include "rfpuf/classifier.hpp"

using namespace rfpuf;
using namespace rfpuf::classifier;
using features::FeatureMatrix;

namespace {

// Gaussian blobs, one per class, labels 10, 20, 30, ...
FeatureMatrix make_blobs(std::size_t n_classes, std::size_t per_class, double spread, uint64_t seed,
                         std::size_t n_cols = 2) {
    Rng rng(seed);
    FeatureMatrix m;
    m.n_cols = n_cols;
    for (std::size_t c = 0; c < n_cols; ++c) m.col_names.push_back("f" + std::to_string(c));
    for (std::size_t k = 0; k < n_classes; ++k) {
        const double cx = std::cos(2.0 * kPi * double(k) / double(n_classes)) * 10.0;
        const double cy = std::sin(2.0 * kPi * double(k) / double(n_classes)) * 10.0;
        for (std::size_t r = 0; r < per_class; ++r) {
            m.labels.push_back(int(10 * (k + 1)));
            m.data.push_back(cx + rng.normal(0.0, spread));
            m.data.push_back(cy + rng.normal(0.0, spread));
            for (std::size_t c = 2; c < n_cols; ++c) m.data.push_back(rng.normal(0.0, spread));
        }
    }
    return m;
}

}  // namespace

TEST_CASE("split_dataset is stratified, disjoint, complete, and deterministic") {
    // tag each row with a unique value in column 0 so rows are identifiable
    FeatureMatrix m;
    m.n_cols = 1;
    m.col_names = {"tag"};
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 100; ++r) {
            m.labels.push_back(c);
            m.data.push_back(double(c * 1000 + r));
        }

    SplitSpec spec;
    spec.rng_seed = 9;
    const auto s = split_dataset(m, spec);

    CHECK(s.train.n_rows() == 210);
    CHECK(s.val.n_rows() == 45);
    CHECK(s.test.n_rows() == 45);
    for (int c = 0; c < 3; ++c) {
        auto count = [&](const FeatureMatrix& p) {
            std::size_t n = 0;
            for (int l : p.labels) n += std::size_t(l == c);
            return n;
        };
        CHECK(count(s.train) == 70);
        CHECK(count(s.val) == 15);
        CHECK(count(s.test) == 15);
    }

    std::set<double> seen;
    for (const auto* p : {&s.train, &s.val, &s.test})
        for (std::size_t r = 0; r < p->n_rows(); ++r) CHECK(seen.insert(p->at(r, 0)).second);
    CHECK(seen.size() == 300);  // disjoint and complete

    const auto s2 = split_dataset(m, spec);
    CHECK(s2.train.data == s.train.data);
    CHECK(s2.test.labels == s.test.labels);

    SplitSpec other = spec;
    other.rng_seed = 10;
    CHECK(split_dataset(m, other).train.data != s.train.data);

    SUBCASE("invalid fractions are rejected") {
        SplitSpec bad;
        bad.train_fraction = 0.8;  // no longer sums to 1
        CHECK_THROWS_AS(split_dataset(m, bad), ConfigError);
    }

    SUBCASE("a class too small to populate every partition is an error") {
        FeatureMatrix tiny;
        tiny.n_cols = 1;
        tiny.col_names = {"tag"};
        tiny.labels = {0, 0, 0, 1};
        tiny.data = {1, 2, 3, 4};
        CHECK_THROWS_AS(split_dataset(tiny, spec), DataError);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    const auto batch = make_blobs(3, 4, 2.0, 41, 4);
    MlpConfig cfg;
    cfg.hidden_layers = {5};
    cfg.rng_seed = 7;
    const auto classes = class_label_set(batch);
    const auto targets = map_targets(batch, classes);
    Mlp net = init_mlp(batch.n_cols, classes, cfg);

    std::vector<std::vector<double>> gw, gb;
    loss_and_gradients(net, batch, targets, gw, gb);

    const double h = 1e-6;
    double worst = 0.0;
    auto fd_check = [&](double& param, double analytic) {
        const double orig = param;
        std::vector<std::vector<double>> tw, tb;
        param = orig + h;
        const double lp = loss_and_gradients(net, batch, targets, tw, tb);
        param = orig - h;
        const double lm = loss_and_gradients(net, batch, targets, tw, tb);
        param = orig;
        const double fd = (lp - lm) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - analytic) / std::max(1.0, std::abs(fd)));
    };
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        for (std::size_t k = 0; k < net.weights[l].size(); ++k) fd_check(net.weights[l][k], gw[l][k]);
        for (std::size_t k = 0; k < net.biases[l].size(); ++k) fd_check(net.biases[l][k], gb[l][k]);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("train_mlp separates well-spaced blobs and reports sane metadata") {
    const auto train = make_blobs(4, 60, 1.0, 51);
    const auto val = make_blobs(4, 15, 1.0, 52);
    const auto test = make_blobs(4, 15, 1.0, 53);

    MlpConfig cfg;
    cfg.hidden_layers = {8};
    cfg.max_epochs = 120;
    cfg.rng_seed = 3;
    TrainInfo info;
    const auto net = train_mlp(train, val, cfg, &info);

    CHECK(info.epochs_run <= cfg.max_epochs);
    CHECK(net.class_labels == std::vector<int>{10, 20, 30, 40});
    CHECK(net.feature_schema == schema_hash(train.col_names));

    const auto rep = evaluate(net, test);
    CHECK(rep.accuracy == 1.0);
    CHECK(rep.n_classes == 4);
    for (double r : rep.per_class_recall) CHECK(r == 1.0);
    // confusion is diagonal
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(rep.confusion[i * 4 + j] == (i == j ? 15u : 0u));

    SUBCASE("training is deterministic for a fixed seed") {
        const auto net2 = train_mlp(train, val, cfg);
        CHECK(net2.weights == net.weights);
        CHECK(net2.biases == net.biases);
    }

    SUBCASE("prediction confidence and open-set rejection") {
        const auto p = predict(net, test.row(0), test.n_cols, 0.5);
        CHECK(p.device_id == test.labels[0]);
        CHECK(p.confidence > 0.9);
        CHECK_FALSE(p.unknown);

        const double far[2] = {200.0, 200.0};  // far outside every blob
        const auto q = predict(net, far, 2, 1.01);  // tau above any softmax output
        CHECK(q.unknown);

        CHECK_THROWS_AS(predict(net, far, 3, 0.0), ConfigError);
    }

    SUBCASE("evaluating labels unseen in training is an error") {
        FeatureMatrix foreign = test;
        foreign.labels[0] = 999;
        CHECK_THROWS_AS(evaluate(net, foreign), DataError);
    }
}

TEST_CASE("train_mlp reports a non-finite loss as a numeric error") {
    auto train = make_blobs(3, 40, 1.0, 61);
    const auto val = make_blobs(3, 10, 1.0, 62);
    train.data[5] = std::numeric_limits<double>::quiet_NaN();  // poisons the batch loss
    MlpConfig cfg;
    cfg.max_epochs = 5;
    CHECK_THROWS_AS(train_mlp(train, val, cfg), NumericError);
}

TEST_CASE("nearest-centroid baseline") {
    SUBCASE("centroids equal per-class means on a hand example") {
        FeatureMatrix m;
        m.n_cols = 1;
        m.col_names = {"x"};
        m.labels = {1, 1, 2, 2};
        m.data = {0.0, 2.0, 10.0, 14.0};
        const auto model = NearestCentroid::train(m);
        CHECK(model.centroids[0][0] == doctest::Approx(1.0));
        CHECK(model.centroids[1][0] == doctest::Approx(12.0));
        const double mid_low = 5.0, mid_high = 8.0;
        CHECK(model.predict(&mid_low, 1) == 1);
        CHECK(model.predict(&mid_high, 1) == 2);
    }

    SUBCASE("perfect accuracy on separated blobs") {
        const auto train = make_blobs(5, 40, 0.8, 71);
        const auto test = make_blobs(5, 10, 0.8, 72);
        const auto model = NearestCentroid::train(train);
        CHECK(model.accuracy(test) == 1.0);
    }
}

TEST_CASE("model file round trip is bit-exact") {
    const auto train = make_blobs(3, 40, 1.0, 81);
    const auto val = make_blobs(3, 10, 1.0, 82);
    MlpConfig cfg;
    cfg.max_epochs = 30;
    const auto net = train_mlp(train, val, cfg);

    const auto path = (std::filesystem::temp_directory_path() / "rfpuf_model.bin").string();
    save_model(path, net);
    const auto back = load_model(path);

    CHECK(back.dims == net.dims);
    CHECK(back.class_labels == net.class_labels);
    CHECK(back.feature_schema == net.feature_schema);
    CHECK(back.weights == net.weights);
    CHECK(back.biases == net.biases);
    const auto a = net.logits(train.row(0));
    const auto b = back.logits(train.row(0));
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    SUBCASE("bad magic is rejected") {
        const auto bad = (std::filesystem::temp_directory_path() / "rfpuf_badmagic.bin").string();
        std::ofstream(bad, std::ios::binary | std::ios::trunc) << "NOTAMODELFILE";
        CHECK_THROWS_AS(load_model(bad), DataError);
    }

    SUBCASE("truncated file is rejected") {
        std::ifstream in(path, std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto trunc = (std::filesystem::temp_directory_path() / "rfpuf_trunc_model.bin").string();
        std::ofstream(trunc, std::ios::binary | std::ios::trunc)
            .write(bytes.data(), std::streamsize(bytes.size() / 2));
        CHECK_THROWS_AS(load_model(trunc), DataError);
    }
}
