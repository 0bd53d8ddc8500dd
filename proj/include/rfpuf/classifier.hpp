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

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rfpuf/common.hpp"
#include "rfpuf/features.hpp"

namespace rfpuf::classifier {

using features::FeatureMatrix;

struct SplitSpec {
    double train_fraction = 0.70;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    bool stratified = true;
    uint64_t rng_seed = 1;

    void validate() const {
        if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
            throw ConfigError("SplitSpec: fractions must sum to 1");
        if (train_fraction <= 0.0 || val_fraction <= 0.0 || test_fraction <= 0.0)
            throw ConfigError("SplitSpec: fractions must be > 0");
    }
};

struct Split {
    FeatureMatrix train, val, test;
};

inline FeatureMatrix take_rows(const FeatureMatrix& m, const std::vector<std::size_t>& rows) {
    FeatureMatrix out;
    out.n_cols = m.n_cols;
    out.col_names = m.col_names;
    out.cov_window = m.cov_window;
    out.data.reserve(rows.size() * m.n_cols);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) {
        out.labels.push_back(m.labels[r]);
        out.data.insert(out.data.end(), m.row(r), m.row(r) + m.n_cols);
    }
    return out;
}

// Disjoint stratified split, deterministic per seed.
inline Split split_dataset(const FeatureMatrix& m, const SplitSpec& spec) {
    spec.validate();
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t r = 0; r < m.n_rows(); ++r) by_class[m.labels[r]].push_back(r);

    Rng rng(spec.rng_seed);
    std::vector<std::size_t> tr, va, te;
    for (auto& [label, rows] : by_class) {
        if (spec.stratified) {
            Rng crng = rng.derive(uint64_t(uint32_t(label)));
            for (std::size_t i = rows.size(); i > 1; --i)
                std::swap(rows[i - 1], rows[crng.uniform_index(i)]);
        }
        const std::size_t n = rows.size();
        const auto n_train = std::size_t(std::llround(spec.train_fraction * double(n)));
        const auto n_val = std::size_t(std::llround(spec.val_fraction * double(n)));
        if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
            throw DataError("split_dataset: class " + std::to_string(label) +
                            " too small for the requested fractions");
        tr.insert(tr.end(), rows.begin(), rows.begin() + std::ptrdiff_t(n_train));
        va.insert(va.end(), rows.begin() + std::ptrdiff_t(n_train),
                  rows.begin() + std::ptrdiff_t(n_train + n_val));
        te.insert(te.end(), rows.begin() + std::ptrdiff_t(n_train + n_val), rows.end());
    }
    std::sort(tr.begin(), tr.end());
    std::sort(va.begin(), va.end());
    std::sort(te.begin(), te.end());
    return {take_rows(m, tr), take_rows(m, va), take_rows(m, te)};
}

enum class Activation { tanh_act, relu };

struct MlpConfig {
    std::vector<std::size_t> hidden_layers = {10};
    Activation activation = Activation::tanh_act;
    std::size_t max_epochs = 300;
    std::size_t early_stop_patience = 25;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 128;
    uint64_t rng_seed = 1;

    void validate() const {
        if (hidden_layers.empty()) throw ConfigError("MlpConfig: need at least one hidden layer");
        for (std::size_t n : hidden_layers)
            if (n == 0) throw ConfigError("MlpConfig: neuron counts must be >= 1");
        if (early_stop_patience == 0) throw ConfigError("MlpConfig: patience must be >= 1");
        if (batch_size == 0) throw ConfigError("MlpConfig: batch_size must be >= 1");
    }
};

inline uint64_t schema_hash(const std::vector<std::string>& col_names) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (const auto& name : col_names) {
        for (char c : name) {
            h ^= uint64_t(uint8_t(c));
            h *= 1099511628211ULL;
        }
        h ^= uint64_t('|');
        h *= 1099511628211ULL;
    }
    return h;
}

struct Mlp {
    std::vector<std::size_t> dims;  // input, hidden..., classes
    Activation activation = Activation::tanh_act;
    std::vector<std::vector<double>> weights;  // weights[l]: dims[l+1] x dims[l], row-major
    std::vector<std::vector<double>> biases;
    std::vector<int> class_labels;  // output index -> device_id
    uint64_t feature_schema = 0;

    std::size_t n_layers() const { return dims.size() - 1; }

    std::vector<double> logits(const double* x) const {
        std::vector<double> cur(x, x + dims[0]);
        std::vector<double> next;
        for (std::size_t l = 0; l < n_layers(); ++l) {
            next.assign(dims[l + 1], 0.0);
            const auto& w = weights[l];
            for (std::size_t j = 0; j < dims[l + 1]; ++j) {
                double acc = biases[l][j];
                const double* wr = w.data() + j * dims[l];
                for (std::size_t i = 0; i < dims[l]; ++i) acc += wr[i] * cur[i];
                next[j] = acc;
            }
            if (l + 1 < n_layers()) {
                if (activation == Activation::tanh_act)
                    for (double& v : next) v = std::tanh(v);
                else
                    for (double& v : next) v = v > 0.0 ? v : 0.0;
            }
            cur.swap(next);
        }
        return cur;
    }
};

inline std::vector<double> softmax(std::vector<double> z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

namespace detail {

struct Workspace {
    std::vector<std::vector<double>> act;    // act[0] = input, act[L] = logits
    std::vector<std::vector<double>> delta;
};

// Forward + backward for one sample; accumulates gradients, returns CE loss.
inline double backprop_sample(const Mlp& net, const double* x, std::size_t target,
                              std::vector<std::vector<double>>& gw,
                              std::vector<std::vector<double>>& gb, Workspace& ws) {
    const std::size_t L = net.n_layers();
    ws.act.resize(L + 1);
    ws.delta.resize(L + 1);
    ws.act[0].assign(x, x + net.dims[0]);
    for (std::size_t l = 0; l < L; ++l) {
        ws.act[l + 1].assign(net.dims[l + 1], 0.0);
        for (std::size_t j = 0; j < net.dims[l + 1]; ++j) {
            double acc = net.biases[l][j];
            const double* wr = net.weights[l].data() + j * net.dims[l];
            for (std::size_t i = 0; i < net.dims[l]; ++i) acc += wr[i] * ws.act[l][i];
            ws.act[l + 1][j] = acc;
        }
        if (l + 1 < L) {
            if (net.activation == Activation::tanh_act)
                for (double& v : ws.act[l + 1]) v = std::tanh(v);
            else
                for (double& v : ws.act[l + 1]) v = v > 0.0 ? v : 0.0;
        }
    }

    auto probs = softmax(ws.act[L]);
    const double loss = -std::log(std::max(probs[target], 1e-300));

    ws.delta[L] = probs;
    ws.delta[L][target] -= 1.0;
    for (std::size_t l = L; l-- > 0;) {
        const auto& d = ws.delta[l + 1];
        for (std::size_t j = 0; j < net.dims[l + 1]; ++j) {
            double* gr = gw[l].data() + j * net.dims[l];
            const double dj = d[j];
            for (std::size_t i = 0; i < net.dims[l]; ++i) gr[i] += dj * ws.act[l][i];
            gb[l][j] += dj;
        }
        if (l > 0) {
            ws.delta[l].assign(net.dims[l], 0.0);
            for (std::size_t j = 0; j < net.dims[l + 1]; ++j) {
                const double dj = d[j];
                const double* wr = net.weights[l].data() + j * net.dims[l];
                for (std::size_t i = 0; i < net.dims[l]; ++i) ws.delta[l][i] += dj * wr[i];
            }
            for (std::size_t i = 0; i < net.dims[l]; ++i) {
                const double a = ws.act[l][i];
                ws.delta[l][i] *= net.activation == Activation::tanh_act ? (1.0 - a * a)
                                                                         : (a > 0.0 ? 1.0 : 0.0);
            }
        }
    }
    return loss;
}

}  // namespace detail

// Mean cross-entropy loss and gradients over a batch; exposed so tests can
// check the analytic gradient against finite differences.
inline double loss_and_gradients(const Mlp& net, const FeatureMatrix& batch,
                                 const std::vector<std::size_t>& targets,
                                 std::vector<std::vector<double>>& gw,
                                 std::vector<std::vector<double>>& gb) {
    gw.resize(net.n_layers());
    gb.resize(net.n_layers());
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        gw[l].assign(net.weights[l].size(), 0.0);
        gb[l].assign(net.biases[l].size(), 0.0);
    }
    detail::Workspace ws;
    double loss = 0.0;
    for (std::size_t r = 0; r < batch.n_rows(); ++r)
        loss += detail::backprop_sample(net, batch.row(r), targets[r], gw, gb, ws);
    const double inv = 1.0 / double(batch.n_rows());
    for (auto& g : gw)
        for (double& v : g) v *= inv;
    for (auto& g : gb)
        for (double& v : g) v *= inv;
    return loss * inv;
}

inline double dataset_loss(const Mlp& net, const FeatureMatrix& m, const std::vector<std::size_t>& targets) {
    double loss = 0.0;
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        auto p = softmax(net.logits(m.row(r)));
        loss += -std::log(std::max(p[targets[r]], 1e-300));
    }
    return loss / double(m.n_rows());
}

inline std::vector<int> class_label_set(const FeatureMatrix& m) {
    std::vector<int> labels = m.labels;
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

inline std::vector<std::size_t> map_targets(const FeatureMatrix& m, const std::vector<int>& class_labels) {
    std::vector<std::size_t> t(m.n_rows());
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        const auto it = std::lower_bound(class_labels.begin(), class_labels.end(), m.labels[r]);
        if (it == class_labels.end() || *it != m.labels[r])
            throw DataError("map_targets: label " + std::to_string(m.labels[r]) + " not in training classes");
        t[r] = std::size_t(it - class_labels.begin());
    }
    return t;
}

inline Mlp init_mlp(std::size_t n_features, const std::vector<int>& class_labels, const MlpConfig& cfg) {
    Mlp net;
    net.activation = cfg.activation;
    net.class_labels = class_labels;
    net.dims.push_back(n_features);
    for (std::size_t h : cfg.hidden_layers) net.dims.push_back(h);
    net.dims.push_back(class_labels.size());
    Rng rng(cfg.rng_seed);
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(double(net.dims[l]));
        net.weights.emplace_back(net.dims[l + 1] * net.dims[l]);
        net.biases.emplace_back(net.dims[l + 1], 0.0);
        for (double& w : net.weights.back()) w = rng.uniform(-bound, bound);
    }
    return net;
}

struct TrainInfo {
    std::size_t epochs_run = 0;
    double best_val_loss = 0.0;
};

// Mini-batch SGD with momentum; returns the best-validation snapshot.
inline Mlp train_mlp(const FeatureMatrix& train, const FeatureMatrix& val, const MlpConfig& cfg,
                     TrainInfo* info = nullptr) {
    cfg.validate();
    if (train.n_rows() == 0 || val.n_rows() == 0) throw DataError("train_mlp: empty partition");
    const auto classes = class_label_set(train);
    const auto train_targets = map_targets(train, classes);
    const auto val_targets = map_targets(val, classes);

    Mlp net = init_mlp(train.n_cols, classes, cfg);
    net.feature_schema = schema_hash(train.col_names);

    std::vector<std::vector<double>> vw(net.n_layers()), vb(net.n_layers());
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        vw[l].assign(net.weights[l].size(), 0.0);
        vb[l].assign(net.biases[l].size(), 0.0);
    }

    Rng shuffle_rng(cfg.rng_seed ^ 0x5bd1e995u);
    std::vector<std::size_t> order(train.n_rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Mlp best = net;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0, epochs = 0;

    std::vector<std::vector<double>> gw, gb;
    detail::Workspace ws;
    FeatureMatrix batch;
    batch.n_cols = train.n_cols;
    batch.col_names = train.col_names;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        ++epochs;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            gw.resize(net.n_layers());
            gb.resize(net.n_layers());
            for (std::size_t l = 0; l < net.n_layers(); ++l) {
                gw[l].assign(net.weights[l].size(), 0.0);
                gb[l].assign(net.biases[l].size(), 0.0);
            }
            double batch_loss = 0.0;
            for (std::size_t i = start; i < stop; ++i)
                batch_loss += detail::backprop_sample(net, train.row(order[i]), train_targets[order[i]], gw, gb, ws);
            if (!std::isfinite(batch_loss))
                throw NumericError("train_mlp: loss diverged (NaN/Inf); lower the learning rate");
            const double inv = 1.0 / double(stop - start);
            for (std::size_t l = 0; l < net.n_layers(); ++l) {
                for (std::size_t k = 0; k < net.weights[l].size(); ++k) {
                    vw[l][k] = cfg.momentum * vw[l][k] - cfg.learning_rate * gw[l][k] * inv;
                    net.weights[l][k] += vw[l][k];
                }
                for (std::size_t k = 0; k < net.biases[l].size(); ++k) {
                    vb[l][k] = cfg.momentum * vb[l][k] - cfg.learning_rate * gb[l][k] * inv;
                    net.biases[l][k] += vb[l][k];
                }
            }
        }

        const double val_loss = dataset_loss(net, val, val_targets);
        if (!std::isfinite(val_loss))
            throw NumericError("train_mlp: validation loss diverged; lower the learning rate");
        if (val_loss < best_val) {
            best_val = val_loss;
            best = net;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    if (info) {
        info->epochs_run = epochs;
        info->best_val_loss = best_val;
    }
    return best;
}

struct EvalReport {
    double accuracy = 0.0;
    std::vector<std::size_t> confusion;  // n_class x n_class, row = true class
    std::vector<double> per_class_recall;
    std::size_t n_classes = 0;
    std::size_t epochs_run = 0;
};

inline EvalReport evaluate(const Mlp& net, const FeatureMatrix& test) {
    if (test.n_rows() == 0) throw DataError("evaluate: empty test set");
    const auto targets = map_targets(test, net.class_labels);
    const std::size_t C = net.class_labels.size();
    EvalReport rep;
    rep.n_classes = C;
    rep.confusion.assign(C * C, 0);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test.n_rows(); ++r) {
        const auto z = net.logits(test.row(r));
        const std::size_t pred = std::size_t(std::max_element(z.begin(), z.end()) - z.begin());
        ++rep.confusion[targets[r] * C + pred];
        if (pred == targets[r]) ++correct;
    }
    rep.accuracy = double(correct) / double(test.n_rows());
    rep.per_class_recall.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        std::size_t row_total = 0;
        for (std::size_t p = 0; p < C; ++p) row_total += rep.confusion[c * C + p];
        if (row_total > 0) rep.per_class_recall[c] = double(rep.confusion[c * C + c]) / double(row_total);
    }
    return rep;
}

struct Prediction {
    int device_id = -1;
    double confidence = 0.0;
    bool unknown = false;
};

// Argmax class with softmax confidence; confidence below tau flags an
// unknown device (open-set extension, not part of the closed-set protocol).
inline Prediction predict(const Mlp& net, const double* row, std::size_t n_features, double tau = 0.0) {
    if (n_features != net.dims[0])
        throw ConfigError("predict: feature schema mismatch (" + std::to_string(n_features) + " vs " +
                          std::to_string(net.dims[0]) + ")");
    const auto p = softmax(net.logits(row));
    const std::size_t k = std::size_t(std::max_element(p.begin(), p.end()) - p.begin());
    Prediction out;
    out.device_id = net.class_labels[k];
    out.confidence = p[k];
    out.unknown = p[k] < tau;
    return out;
}

// Nearest-centroid baseline (Euclidean).
struct NearestCentroid {
    std::vector<int> class_labels;
    std::vector<std::vector<double>> centroids;

    static NearestCentroid train(const FeatureMatrix& m) {
        NearestCentroid model;
        model.class_labels = class_label_set(m);
        const auto targets = map_targets(m, model.class_labels);
        model.centroids.assign(model.class_labels.size(), std::vector<double>(m.n_cols, 0.0));
        std::vector<std::size_t> counts(model.class_labels.size(), 0);
        for (std::size_t r = 0; r < m.n_rows(); ++r) {
            ++counts[targets[r]];
            for (std::size_t c = 0; c < m.n_cols; ++c) model.centroids[targets[r]][c] += m.at(r, c);
        }
        for (std::size_t k = 0; k < model.centroids.size(); ++k)
            for (double& v : model.centroids[k]) v /= double(counts[k]);
        return model;
    }

    int predict(const double* row, std::size_t n_features) const {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_k = 0;
        for (std::size_t k = 0; k < centroids.size(); ++k) {
            double d = 0.0;
            for (std::size_t c = 0; c < n_features; ++c) {
                const double diff = row[c] - centroids[k][c];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_k = k;
            }
        }
        return class_labels[best_k];
    }

    double accuracy(const FeatureMatrix& test) const {
        std::size_t correct = 0;
        for (std::size_t r = 0; r < test.n_rows(); ++r)
            if (predict(test.row(r), test.n_cols) == test.labels[r]) ++correct;
        return double(correct) / double(test.n_rows());
    }
};

// Versioned binary model file: magic, version, activation, layer dims,
// class labels, feature schema hash, then row-major f64 weights and biases.
inline void save_model(const std::string& path, const Mlp& net) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("save_model: cannot open " + path);
    const char magic[8] = {'R', 'F', 'P', 'U', 'F', 'M', 'L', 'P'};
    out.write(magic, 8);
    auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto w64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    w32(1);  // version
    w32(net.activation == Activation::tanh_act ? 0u : 1u);
    w32(uint32_t(net.dims.size()));
    for (std::size_t d : net.dims) w32(uint32_t(d));
    w32(uint32_t(net.class_labels.size()));
    for (int l : net.class_labels) w32(uint32_t(l));
    w64(net.feature_schema);
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        out.write(reinterpret_cast<const char*>(net.weights[l].data()),
                  std::streamsize(net.weights[l].size() * 8));
        out.write(reinterpret_cast<const char*>(net.biases[l].data()),
                  std::streamsize(net.biases[l].size() * 8));
    }
    if (!out) throw DataError("save_model: write failed on " + path);
}

inline Mlp load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_model: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, "RFPUFMLP", 8) != 0) throw DataError("load_model: bad magic in " + path);
    auto r32 = [&]() { uint32_t v; in.read(reinterpret_cast<char*>(&v), 4); return v; };
    auto r64 = [&]() { uint64_t v; in.read(reinterpret_cast<char*>(&v), 8); return v; };
    if (r32() != 1) throw DataError("load_model: unsupported version in " + path);
    Mlp net;
    net.activation = r32() == 0 ? Activation::tanh_act : Activation::relu;
    net.dims.resize(r32());
    for (auto& d : net.dims) d = r32();
    net.class_labels.resize(r32());
    for (auto& l : net.class_labels) l = int(r32());
    net.feature_schema = r64();
    for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
        net.weights.emplace_back(net.dims[l + 1] * net.dims[l]);
        net.biases.emplace_back(net.dims[l + 1]);
        in.read(reinterpret_cast<char*>(net.weights.back().data()),
                std::streamsize(net.weights.back().size() * 8));
        in.read(reinterpret_cast<char*>(net.biases.back().data()),
                std::streamsize(net.biases.back().size() * 8));
    }
    if (!in) throw DataError("load_model: truncated file " + path);
    return net;
}

}  // namespace rfpuf::classifier
