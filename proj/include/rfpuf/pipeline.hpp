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

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rfpuf/attack.hpp"
#include "rfpuf/classifier.hpp"
#include "rfpuf/common.hpp"
#include "rfpuf/dataio.hpp"
#include "rfpuf/features.hpp"
#include "rfpuf/pufprops.hpp"
#include "rfpuf/rxdsp.hpp"
#include "rfpuf/svg.hpp"
#include "rfpuf/txsim.hpp"

namespace rfpuf::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SweepSpec {
    std::vector<std::size_t> neurons = {5, 10, 20, 40, 70};
    std::vector<std::size_t> layers = {1};
    std::vector<std::size_t> frame_counts = {500, 1000};
    std::vector<std::size_t> feature_sets = {9, 10};
    std::size_t max_epochs = 80;
};

struct PufSpec {
    std::size_t window = 1000;
    std::size_t alpha = 80;
    std::size_t stride = 5;
    bool normalize = true;
};

struct AttackSpec {
    std::size_t k = 30;
    std::size_t trials = 1000;
    std::size_t max_iters = 300;
};

struct ExperimentConfig {
    uint64_t seed = 1;
    unsigned jobs = 0;  // 0 = all hardware threads
    std::string out_dir = "run";

    txsim::PopulationSpec population;
    txsim::ModemConfig modem;
    txsim::ChannelModel channel;

    std::size_t frame_len = 3600;
    std::size_t n_frames = 1000;
    double noise_filter_factor = 3.0;

    bool include_cov = true;
    std::size_t cov_window = 0;  // 0 = whole per-partition series

    classifier::SplitSpec split;
    classifier::MlpConfig mlp;
    SweepSpec sweep;
    PufSpec puf;
    AttackSpec attack;

    unsigned effective_jobs() const { return jobs == 0 ? default_jobs() : jobs; }

    // deterministic sub-seeds, all derived from the master seed
    uint64_t population_seed() const { return Rng(seed).derive(1).next_u64(); }
    Rng capture_rng(int device_id) const { return Rng(seed).derive(1000 + uint64_t(uint32_t(device_id))); }
    uint64_t split_seed() const { return Rng(seed).derive(2).next_u64(); }
    uint64_t mlp_seed() const { return Rng(seed).derive(3).next_u64(); }
    uint64_t attack_seed() const { return Rng(seed).derive(4).next_u64(); }
};

namespace detail {

inline ConfigError bad_key(const std::string& path, const std::string& why) {
    return ConfigError("config: " + path + ": " + why);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw bad_key(key, e.what());
    }
}

inline txsim::GaussParam gauss_or(const json& j, const std::string& key, txsim::GaussParam fallback) {
    if (!j.contains(key)) return fallback;
    const json& g = j.at(key);
    txsim::GaussParam out = fallback;
    out.mean = get_or(g, "mean", fallback.mean);
    out.std = get_or(g, "std", fallback.std);
    if (out.std < 0.0) throw bad_key(key, "std must be >= 0");
    return out;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    using detail::get_or;
    ExperimentConfig cfg;
    cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
    cfg.jobs = get_or<unsigned>(j, "jobs", cfg.jobs);
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);

    if (j.contains("population")) {
        const json& p = j.at("population");
        cfg.population.n_devices = get_or<std::size_t>(p, "n_devices", cfg.population.n_devices);
        cfg.population.cfo_mean = detail::gauss_or(p, "cfo_mean_hz", cfg.population.cfo_mean);
        cfg.population.cfo_jitter_std = detail::gauss_or(p, "cfo_jitter_std_hz", cfg.population.cfo_jitter_std);
        cfg.population.cfo_jitter_std.nonnegative = true;
        cfg.population.iq_gain_imbalance_db =
            detail::gauss_or(p, "iq_gain_imbalance_db", cfg.population.iq_gain_imbalance_db);
        cfg.population.iq_phase_error_rad =
            detail::gauss_or(p, "iq_phase_error_rad", cfg.population.iq_phase_error_rad);
        cfg.population.dc_offset_i = detail::gauss_or(p, "dc_offset_i", cfg.population.dc_offset_i);
        cfg.population.dc_offset_q = detail::gauss_or(p, "dc_offset_q", cfg.population.dc_offset_q);
        cfg.population.tx_gain = detail::gauss_or(p, "tx_gain", cfg.population.tx_gain);
        cfg.population.tx_gain.nonnegative = true;
    }

    if (j.contains("modem")) {
        const json& m = j.at("modem");
        cfg.modem.symbol_rate = get_or<double>(m, "symbol_rate", cfg.modem.symbol_rate);
        cfg.modem.samples_per_symbol = get_or<std::size_t>(m, "samples_per_symbol", cfg.modem.samples_per_symbol);
        cfg.modem.rrc_rolloff = get_or<double>(m, "rrc_rolloff", cfg.modem.rrc_rolloff);
        cfg.modem.rrc_span = get_or<std::size_t>(m, "rrc_span", cfg.modem.rrc_span);
        cfg.modem.validate();
    }

    if (j.contains("channel")) {
        const json& c = j.at("channel");
        const auto mode = get_or<std::string>(c, "mode", "cable");
        if (mode == "cable")
            cfg.channel.mode = txsim::ChannelModel::Mode::cable;
        else if (mode == "static_wireless")
            cfg.channel.mode = txsim::ChannelModel::Mode::static_wireless;
        else
            throw detail::bad_key("channel.mode", "expected \"cable\" or \"static_wireless\"");
        cfg.channel.attenuation_db = get_or<double>(c, "attenuation_db", cfg.channel.attenuation_db);
        cfg.channel.phase_rotation = get_or<double>(c, "phase_rotation_rad", cfg.channel.phase_rotation);
        if (c.contains("snr_db") && !c.at("snr_db").is_null())
            cfg.channel.snr_db = c.at("snr_db").get<double>();
        if (c.contains("multipath_taps")) {
            for (const auto& tap : c.at("multipath_taps")) {
                if (!tap.is_array() || tap.size() != 2)
                    throw detail::bad_key("channel.multipath_taps", "each tap must be [re, im]");
                cfg.channel.multipath_taps.emplace_back(tap[0].get<double>(), tap[1].get<double>());
            }
        }
        cfg.channel.validate();
    }

    if (j.contains("frames")) {
        const json& f = j.at("frames");
        cfg.frame_len = get_or<std::size_t>(f, "frame_len", cfg.frame_len);
        cfg.n_frames = get_or<std::size_t>(f, "n_frames", cfg.n_frames);
        cfg.noise_filter_factor = get_or<double>(f, "noise_filter_factor", cfg.noise_filter_factor);
        if (cfg.frame_len == 0 || cfg.n_frames == 0)
            throw detail::bad_key("frames", "frame_len and n_frames must be > 0");
    }

    if (j.contains("features")) {
        const json& f = j.at("features");
        cfg.include_cov = get_or<bool>(f, "include_cov", cfg.include_cov);
        cfg.cov_window = get_or<std::size_t>(f, "cov_window", cfg.cov_window);
    }

    if (j.contains("split")) {
        const json& s = j.at("split");
        cfg.split.train_fraction = get_or<double>(s, "train", cfg.split.train_fraction);
        cfg.split.val_fraction = get_or<double>(s, "val", cfg.split.val_fraction);
        cfg.split.test_fraction = get_or<double>(s, "test", cfg.split.test_fraction);
        cfg.split.validate();
    }

    if (j.contains("mlp")) {
        const json& m = j.at("mlp");
        cfg.mlp.hidden_layers = get_or<std::vector<std::size_t>>(m, "hidden_layers", cfg.mlp.hidden_layers);
        cfg.mlp.max_epochs = get_or<std::size_t>(m, "max_epochs", cfg.mlp.max_epochs);
        cfg.mlp.early_stop_patience = get_or<std::size_t>(m, "patience", cfg.mlp.early_stop_patience);
        cfg.mlp.learning_rate = get_or<double>(m, "learning_rate", cfg.mlp.learning_rate);
        cfg.mlp.momentum = get_or<double>(m, "momentum", cfg.mlp.momentum);
        cfg.mlp.batch_size = get_or<std::size_t>(m, "batch_size", cfg.mlp.batch_size);
        cfg.mlp.validate();
    }

    if (j.contains("sweep")) {
        const json& s = j.at("sweep");
        cfg.sweep.neurons = get_or<std::vector<std::size_t>>(s, "neurons", cfg.sweep.neurons);
        cfg.sweep.layers = get_or<std::vector<std::size_t>>(s, "layers", cfg.sweep.layers);
        cfg.sweep.frame_counts = get_or<std::vector<std::size_t>>(s, "frame_counts", cfg.sweep.frame_counts);
        cfg.sweep.feature_sets = get_or<std::vector<std::size_t>>(s, "feature_sets", cfg.sweep.feature_sets);
        cfg.sweep.max_epochs = get_or<std::size_t>(s, "max_epochs", cfg.sweep.max_epochs);
        for (std::size_t f : cfg.sweep.feature_sets)
            if (f != 9 && f != 10) throw detail::bad_key("sweep.feature_sets", "entries must be 9 or 10");
    }

    if (j.contains("pufprops")) {
        const json& p = j.at("pufprops");
        cfg.puf.window = get_or<std::size_t>(p, "window", cfg.puf.window);
        cfg.puf.alpha = get_or<std::size_t>(p, "alpha", cfg.puf.alpha);
        cfg.puf.stride = get_or<std::size_t>(p, "stride", cfg.puf.stride);
        cfg.puf.normalize = get_or<bool>(p, "normalize", cfg.puf.normalize);
    }

    if (j.contains("attack")) {
        const json& a = j.at("attack");
        cfg.attack.k = get_or<std::size_t>(a, "k", cfg.attack.k);
        cfg.attack.trials = get_or<std::size_t>(a, "trials", cfg.attack.trials);
        cfg.attack.max_iters = get_or<std::size_t>(a, "max_iters", cfg.attack.max_iters);
        if (cfg.attack.k == 0 || cfg.attack.trials == 0)
            throw detail::bad_key("attack", "k and trials must be > 0");
    }

    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

inline json config_to_json(const ExperimentConfig& cfg) {
    auto gauss = [](const txsim::GaussParam& g) { return json{{"mean", g.mean}, {"std", g.std}}; };
    json taps = json::array();
    for (const auto& t : cfg.channel.multipath_taps) taps.push_back({t.real(), t.imag()});
    json j{
        {"seed", cfg.seed},
        {"jobs", cfg.jobs},
        {"out_dir", cfg.out_dir},
        {"population",
         {{"n_devices", cfg.population.n_devices},
          {"cfo_mean_hz", gauss(cfg.population.cfo_mean)},
          {"cfo_jitter_std_hz", gauss(cfg.population.cfo_jitter_std)},
          {"iq_gain_imbalance_db", gauss(cfg.population.iq_gain_imbalance_db)},
          {"iq_phase_error_rad", gauss(cfg.population.iq_phase_error_rad)},
          {"dc_offset_i", gauss(cfg.population.dc_offset_i)},
          {"dc_offset_q", gauss(cfg.population.dc_offset_q)},
          {"tx_gain", gauss(cfg.population.tx_gain)}}},
        {"modem",
         {{"symbol_rate", cfg.modem.symbol_rate},
          {"samples_per_symbol", cfg.modem.samples_per_symbol},
          {"rrc_rolloff", cfg.modem.rrc_rolloff},
          {"rrc_span", cfg.modem.rrc_span}}},
        {"channel",
         {{"mode", cfg.channel.mode == txsim::ChannelModel::Mode::cable ? "cable" : "static_wireless"},
          {"attenuation_db", cfg.channel.attenuation_db},
          {"phase_rotation_rad", cfg.channel.phase_rotation},
          {"snr_db", cfg.channel.snr_db ? json(*cfg.channel.snr_db) : json()},
          {"multipath_taps", taps}}},
        {"frames",
         {{"frame_len", cfg.frame_len},
          {"n_frames", cfg.n_frames},
          {"noise_filter_factor", cfg.noise_filter_factor}}},
        {"features", {{"include_cov", cfg.include_cov}, {"cov_window", cfg.cov_window}}},
        {"split",
         {{"train", cfg.split.train_fraction},
          {"val", cfg.split.val_fraction},
          {"test", cfg.split.test_fraction}}},
        {"mlp",
         {{"hidden_layers", cfg.mlp.hidden_layers},
          {"max_epochs", cfg.mlp.max_epochs},
          {"patience", cfg.mlp.early_stop_patience},
          {"learning_rate", cfg.mlp.learning_rate},
          {"momentum", cfg.mlp.momentum},
          {"batch_size", cfg.mlp.batch_size}}},
        {"sweep",
         {{"neurons", cfg.sweep.neurons},
          {"layers", cfg.sweep.layers},
          {"frame_counts", cfg.sweep.frame_counts},
          {"feature_sets", cfg.sweep.feature_sets},
          {"max_epochs", cfg.sweep.max_epochs}}},
        {"pufprops",
         {{"window", cfg.puf.window},
          {"alpha", cfg.puf.alpha},
          {"stride", cfg.puf.stride},
          {"normalize", cfg.puf.normalize}}},
        {"attack", {{"k", cfg.attack.k}, {"trials", cfg.attack.trials}, {"max_iters", cfg.attack.max_iters}}},
    };
    return j;
}

inline void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
}

inline json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Dataset construction (shared by simulate/extract and the in-memory path)
// ---------------------------------------------------------------------------

struct DeviceExtraction {
    int device_id = -1;
    std::size_t frames_total = 0;
    std::size_t frames_kept = 0;
    std::map<std::string, std::size_t> drop_counts;
};

using DeviceFeatures = std::map<int, std::vector<features::FrameFeatures>>;

inline std::vector<txsim::DeviceSignature> make_population(const ExperimentConfig& cfg) {
    auto pop = cfg.population;
    pop.rng_seed = cfg.population_seed();
    return txsim::sample_population(pop);
}

inline std::vector<dataio::Frame> synthesize_device_frames(const ExperimentConfig& cfg,
                                                           const txsim::DeviceSignature& sig,
                                                           std::size_t n_frames,
                                                           const txsim::ChannelModel& channel) {
    Rng rng = cfg.capture_rng(sig.device_id);
    return txsim::synthesize_capture(sig, cfg.modem, channel, n_frames, cfg.frame_len, rng);
}

inline std::pair<std::vector<features::FrameFeatures>, DeviceExtraction> extract_device_features(
    const std::vector<dataio::Frame>& frames, const rxdsp::Demodulator& demod, double noise_factor,
    unsigned jobs) {
    DeviceExtraction rep;
    rep.frames_total = frames.size();
    if (!frames.empty()) rep.device_id = frames.front().device_id;

    const auto kept = dataio::filter_noise_frames(frames, noise_factor);
    if (kept.size() < frames.size()) rep.drop_counts["noise_gate"] += frames.size() - kept.size();

    auto batch = demod.demodulate_frames(kept, jobs);
    for (const auto& [reason, count] : batch.drop_counts) rep.drop_counts[reason] += count;

    std::vector<features::FrameFeatures> out;
    out.reserve(batch.observations.size());
    for (const auto& obs : batch.observations) {
        try {
            out.push_back(features::extract_frame_features(obs));
        } catch (const rxdsp::FrameDropError& e) {
            ++rep.drop_counts[e.reason];
        }
    }
    rep.frames_kept = out.size();
    return {std::move(out), rep};
}

// Full in-memory pipeline: population -> capture -> receiver -> per-frame
// features, one device at a time to bound memory.
inline std::pair<DeviceFeatures, std::vector<DeviceExtraction>> build_dataset(
    const ExperimentConfig& cfg, std::size_t n_frames, const txsim::ChannelModel& channel) {
    const auto devices = make_population(cfg);
    const rxdsp::Demodulator demod(cfg.modem);
    DeviceFeatures by_device;
    std::vector<DeviceExtraction> reports;
    for (const auto& sig : devices) {
        const auto frames = synthesize_device_frames(cfg, sig, n_frames, channel);
        auto [feats, rep] = extract_device_features(frames, demod, cfg.noise_filter_factor,
                                                    cfg.effective_jobs());
        rep.device_id = sig.device_id;
        by_device[sig.device_id] = std::move(feats);
        reports.push_back(std::move(rep));
    }
    return {std::move(by_device), std::move(reports)};
}

// Reconstruct per-device per-frame features from a 9-column matrix whose rows
// are grouped by device in temporal order (the layout every writer uses).
inline DeviceFeatures group_rows(const features::FeatureMatrix& m9) {
    if (m9.n_cols != 9) throw DataError("group_rows: expected a 9-column feature matrix");
    DeviceFeatures out;
    for (std::size_t r = 0; r < m9.n_rows(); ++r) {
        features::FrameFeatures f;
        f.cfo_hz = m9.at(r, 0);
        for (std::size_t k = 0; k < 4; ++k) {
            f.i_centroid[k] = m9.at(r, 1 + k);
            f.q_centroid[k] = m9.at(r, 5 + k);
        }
        out[m9.labels[r]].push_back(f);
    }
    return out;
}

inline features::FeatureMatrix add_cov_column(const features::FeatureMatrix& m9, std::size_t cov_window) {
    return features::build_feature_matrix(group_rows(m9), true, cov_window);
}

inline features::FeatureMatrix truncate_per_device(const features::FeatureMatrix& m,
                                                   std::size_t max_rows_per_device) {
    std::vector<std::size_t> rows;
    std::map<int, std::size_t> seen;
    for (std::size_t r = 0; r < m.n_rows(); ++r)
        if (seen[m.labels[r]]++ < max_rows_per_device) rows.push_back(r);
    return classifier::take_rows(m, rows);
}

// ---------------------------------------------------------------------------
// Train/eval core (COV is added per split partition so no statistic leaks
// across the train/val/test boundary)
// ---------------------------------------------------------------------------

struct TrainEvalResult {
    classifier::Mlp model;
    features::Scaler scaler;
    classifier::EvalReport report;
    classifier::TrainInfo info;
    double baseline_accuracy = 0.0;
};

inline TrainEvalResult train_eval(const features::FeatureMatrix& m9, const ExperimentConfig& cfg,
                                  bool include_cov, classifier::MlpConfig mlpcfg) {
    auto split_spec = cfg.split;
    split_spec.rng_seed = cfg.split_seed();
    auto split = classifier::split_dataset(m9, split_spec);

    features::FeatureMatrix tr = include_cov ? add_cov_column(split.train, cfg.cov_window) : split.train;
    features::FeatureMatrix va = include_cov ? add_cov_column(split.val, cfg.cov_window) : split.val;
    features::FeatureMatrix te = include_cov ? add_cov_column(split.test, cfg.cov_window) : split.test;

    auto [trz, scaler] = features::standardize(tr);
    const auto vaz = scaler.transform(va);
    const auto tez = scaler.transform(te);

    mlpcfg.rng_seed = cfg.mlp_seed();
    TrainEvalResult out;
    out.model = classifier::train_mlp(trz, vaz, mlpcfg, &out.info);
    out.scaler = scaler;
    out.report = classifier::evaluate(out.model, tez);
    out.report.epochs_run = out.info.epochs_run;
    out.baseline_accuracy = classifier::NearestCentroid::train(trz).accuracy(tez);
    return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline std::string device_capture_name(int device_id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "device_%03d.bin", device_id);
    return buf;
}

// Synthesizes one capture file per device plus two indexes: captures.json
// (plumbing consumed by extract) and manifest.json (ground-truth signatures,
// for oracle tests only — extract/train never read it).
inline void cmd_simulate(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out / "captures");
    write_json_file(out / "run.json", config_to_json(cfg));

    const auto devices = make_population(cfg);
    json index{{"sample_rate", cfg.modem.sample_rate()},
               {"frame_len", cfg.frame_len},
               {"captures", json::array()}};
    json manifest{{"devices", json::array()}};
    for (const auto& sig : devices) {
        const auto frames = synthesize_device_frames(cfg, sig, cfg.n_frames, cfg.channel);
        const auto stream = txsim::frames_to_stream(frames, cfg.modem.sample_rate());
        const auto name = device_capture_name(sig.device_id);
        dataio::write_capture((out / "captures" / name).string(), stream);
        index["captures"].push_back({{"device_id", sig.device_id},
                                     {"file", "captures/" + name},
                                     {"n_frames", cfg.n_frames}});
        manifest["devices"].push_back({{"device_id", sig.device_id},
                                       {"cfo_mean_hz", sig.cfo_mean},
                                       {"cfo_jitter_std_hz", sig.cfo_jitter_std},
                                       {"iq_gain_imbalance_db", sig.iq_gain_imbalance},
                                       {"iq_phase_error_rad", sig.iq_phase_error},
                                       {"dc_offset", {sig.dc_offset.real(), sig.dc_offset.imag()}},
                                       {"tx_gain", sig.tx_gain}});
    }
    write_json_file(out / "captures.json", index);
    write_json_file(out / "manifest.json", manifest);
}

// Capture files -> per-frame 9-feature matrix + exclusion report.
inline void cmd_extract(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const json index = read_json_file(out / "captures.json");
    const double sample_rate = index.at("sample_rate").get<double>();
    const auto frame_len = index.at("frame_len").get<std::size_t>();
    if (std::abs(sample_rate - cfg.modem.sample_rate()) > 1e-6)
        throw ConfigError("extract: capture sample_rate disagrees with the modem config");

    const rxdsp::Demodulator demod(cfg.modem);
    DeviceFeatures by_device;
    json report{{"devices", json::array()}};
    std::size_t total = 0, kept_total = 0;
    for (const auto& entry : index.at("captures")) {
        const int device_id = entry.at("device_id").get<int>();
        const auto stream = dataio::read_capture((out / entry.at("file").get<std::string>()).string(),
                                                 sample_rate);
        auto frames = dataio::segment_frames(stream, frame_len);
        for (auto& f : frames) f.device_id = device_id;
        auto [feats, rep] = extract_device_features(frames, demod, cfg.noise_filter_factor,
                                                    cfg.effective_jobs());
        total += rep.frames_total;
        kept_total += rep.frames_kept;
        report["devices"].push_back({{"device_id", device_id},
                                     {"frames_total", rep.frames_total},
                                     {"frames_kept", rep.frames_kept},
                                     {"drop_counts", rep.drop_counts}});
        by_device[device_id] = std::move(feats);
    }
    report["frames_total"] = total;
    report["frames_kept"] = kept_total;
    report["exclusion_rate"] = total == 0 ? 0.0 : double(total - kept_total) / double(total);

    const auto m9 = features::build_feature_matrix(by_device, false);
    features::write_csv((out / "features.csv").string(), m9);
    write_json_file(out / "extract_report.json", report);
}

inline json eval_to_json(const classifier::EvalReport& rep, const classifier::TrainInfo& info,
                         double baseline) {
    return json{{"accuracy", rep.accuracy},
                {"baseline_accuracy", baseline},
                {"n_classes", rep.n_classes},
                {"epochs_run", info.epochs_run},
                {"best_val_loss", info.best_val_loss},
                {"per_class_recall", rep.per_class_recall}};
}

inline void write_confusion_csv(const fs::path& path, const classifier::EvalReport& rep,
                                const std::vector<int>& class_labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string());
    out << "true_device";
    for (int l : class_labels) out << ",pred_" << l;
    out << "\n";
    const std::size_t C = rep.n_classes;
    for (std::size_t i = 0; i < C; ++i) {
        out << class_labels[i];
        for (std::size_t j = 0; j < C; ++j) out << "," << rep.confusion[i * C + j];
        out << "\n";
    }
}

// Split, train, evaluate; writes the model, metrics, a confusion matrix, and
// the PCA report (raw and standardized) for the training features.
inline void cmd_train(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const auto m9 = features::read_csv((out / "features.csv").string());
    if (m9.n_cols != 9) throw DataError("train: features.csv must have 9 feature columns");

    const auto res = train_eval(m9, cfg, cfg.include_cov, cfg.mlp);
    classifier::save_model((out / "model.bin").string(), res.model);
    json ev = eval_to_json(res.report, res.info, res.baseline_accuracy);
    ev["features"] = cfg.include_cov ? 10 : 9;
    write_json_file(out / "eval.json", ev);
    write_confusion_csv(out / "confusion.csv", res.report, res.model.class_labels);

    const auto full = cfg.include_cov ? add_cov_column(m9, cfg.cov_window) : m9;
    const auto raw = features::pca(full, false);
    const auto zed = features::pca(full, true);
    json pj{{"raw", {{"explained_variance", raw.explained_variance}, {"loadings", raw.loadings}}},
            {"standardized",
             {{"explained_variance", zed.explained_variance}, {"loadings", zed.loadings}}},
            {"columns", full.col_names}};
    write_json_file(out / "pca.json", pj);
    svg::write_scree_svg((out / "scree.svg").string(), raw.explained_variance);
}

// Accuracy grid over feature set x depth x width x per-device frame budget.
inline void cmd_sweep(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const auto m9 = features::read_csv((out / "features.csv").string());
    if (m9.n_cols != 9) throw DataError("sweep: features.csv must have 9 feature columns");

    std::ofstream csv(out / "sweep.csv", std::ios::trunc);
    if (!csv) throw DataError("cannot open sweep.csv");
    csv << "feature_set,layers,neurons,frames_per_device,epochs_run,test_accuracy,baseline_accuracy\n";
    for (std::size_t feature_set : cfg.sweep.feature_sets)
        for (std::size_t frames : cfg.sweep.frame_counts) {
            const auto mt = truncate_per_device(m9, frames);
            for (std::size_t layers : cfg.sweep.layers)
                for (std::size_t neurons : cfg.sweep.neurons) {
                    classifier::MlpConfig mlpcfg = cfg.mlp;
                    mlpcfg.hidden_layers.assign(layers, neurons);
                    mlpcfg.max_epochs = cfg.sweep.max_epochs;
                    const auto res = train_eval(mt, cfg, feature_set == 10, mlpcfg);
                    char row[160];
                    std::snprintf(row, sizeof(row), "%zu,%zu,%zu,%zu,%zu,%.6f,%.6f\n", feature_set,
                                  layers, neurons, frames, res.info.epochs_run, res.report.accuracy,
                                  res.baseline_accuracy);
                    csv << row;
                }
        }
}

// Identical pipelines with the channel enabled and disabled; reports the
// minimum width reaching 95% accuracy in each mode.
inline void cmd_channel_compare(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_json_file(out / "run.json", config_to_json(cfg));

    std::ofstream csv(out / "channel_compare.csv", std::ios::trunc);
    if (!csv) throw DataError("cannot open channel_compare.csv");
    csv << "channel,neurons,test_accuracy,baseline_accuracy\n";

    json summary;
    for (const bool wireless : {false, true}) {
        txsim::ChannelModel channel = cfg.channel;
        if (wireless) {
            channel.mode = txsim::ChannelModel::Mode::static_wireless;
        } else {
            channel.mode = txsim::ChannelModel::Mode::cable;
            channel.phase_rotation = 0.0;
            channel.multipath_taps.clear();
        }
        const auto [by_device, reports] = build_dataset(cfg, cfg.n_frames, channel);
        const auto m9 = features::build_feature_matrix(by_device, false);

        const char* name = wireless ? "static_wireless" : "cable";
        std::optional<std::size_t> min_neurons_95;
        for (std::size_t neurons : cfg.sweep.neurons) {
            classifier::MlpConfig mlpcfg = cfg.mlp;
            mlpcfg.hidden_layers = {neurons};
            mlpcfg.max_epochs = cfg.sweep.max_epochs;
            const auto res = train_eval(m9, cfg, cfg.include_cov, mlpcfg);
            char row[128];
            std::snprintf(row, sizeof(row), "%s,%zu,%.6f,%.6f\n", name, neurons, res.report.accuracy,
                          res.baseline_accuracy);
            csv << row;
            if (!min_neurons_95 && res.report.accuracy >= 0.95) min_neurons_95 = neurons;
        }
        summary[name]["min_neurons_for_95pct"] = min_neurons_95 ? json(*min_neurons_95) : json();
    }
    write_json_file(out / "channel_compare.json", summary);
}

struct PufResults {
    double mu_inter = 0.0;
    double mu_intra = 0.0;
    std::size_t n_inter = 0;
    std::size_t n_intra = 0;
    pufprops::Identifiability ident;
    pufprops::WeibullFit inter_fit, intra_fit;
    double inter_normal_ll = 0.0, intra_normal_ll = 0.0;
    std::vector<double> inter_distances, intra_distances;
    std::vector<int> excluded_devices;
};

// The uniqueness/reliability protocol on per-device windows: one mean vector
// per device for inter distances, alpha stride-shifted windows per device for
// intra distances, Weibull and normal fits, and the identifiability count.
inline PufResults compute_pufprops(const DeviceFeatures& by_device, const PufSpec& spec) {
    const std::size_t need = spec.window + (spec.alpha - 1) * spec.stride;
    std::vector<pufprops::FeatureVector10> device_vectors;
    std::vector<std::vector<pufprops::FeatureVector10>> windows;
    PufResults res;
    for (const auto& [device, frames] : by_device) {
        if (frames.size() < need) {
            res.excluded_devices.push_back(device);
            continue;
        }
        auto w = pufprops::intra_windows(frames, spec.alpha, spec.window, spec.stride);
        device_vectors.push_back(w.front());
        windows.push_back(std::move(w));
    }
    if (device_vectors.size() < 2)
        throw DataError("pufprops: fewer than 2 devices have the required " + std::to_string(need) +
                        " frames");

    if (spec.normalize) {
        const auto scaler = pufprops::VectorScaler::fit(device_vectors);
        device_vectors = scaler.transform(device_vectors);
        for (auto& w : windows) w = scaler.transform(w);
    }

    const auto inter = pufprops::inter_distance_matrix(device_vectors);
    const auto intra = pufprops::intra_distance_matrices(windows);
    res.mu_inter = pufprops::mean_inter(inter);
    res.mu_intra = pufprops::mean_intra(intra);
    res.inter_distances = inter.upper_triangle();
    for (const auto& m : intra) {
        const auto tri = m.upper_triangle();
        res.intra_distances.insert(res.intra_distances.end(), tri.begin(), tri.end());
    }
    res.n_inter = res.inter_distances.size();
    res.n_intra = res.intra_distances.size();
    res.ident = pufprops::identifiability(res.inter_distances, res.intra_distances);
    res.inter_fit = pufprops::weibull_fit(res.inter_distances);
    res.intra_fit = pufprops::weibull_fit(res.intra_distances);
    res.inter_normal_ll = pufprops::normal_log_likelihood(res.inter_distances);
    res.intra_normal_ll = pufprops::normal_log_likelihood(res.intra_distances);
    return res;
}

inline void write_distance_csv(const fs::path& path, const std::string& header,
                               const std::vector<double>& values) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string());
    out << header << "\n";
    char cell[32];
    for (double v : values) {
        std::snprintf(cell, sizeof(cell), "%.9g\n", v);
        out << cell;
    }
}

inline void write_distance_histogram(const fs::path& path, const std::string& title,
                                     const std::vector<double>& values,
                                     const pufprops::WeibullFit& fit) {
    const auto h = svg::make_histogram(values);
    svg::Curve weib{"Weibull fit", "#d62728", {}, {}};
    const double lo = h.bin_edges.front(), hi = h.bin_edges.back();
    for (int i = 0; i <= 200; ++i) {
        const double x = lo + (hi - lo) * double(i) / 200.0;
        weib.x.push_back(x);
        const double z = std::max(x, 1e-12) / fit.scale;
        weib.y.push_back(fit.shape / fit.scale * std::pow(z, fit.shape - 1.0) *
                         std::exp(-std::pow(z, fit.shape)));
    }
    svg::write_histogram_svg(path.string(), title, h, {weib});
}

inline void cmd_pufprops(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const auto m9 = features::read_csv((out / "features.csv").string());
    if (m9.n_cols != 9) throw DataError("pufprops: features.csv must have 9 feature columns");

    const auto res = compute_pufprops(group_rows(m9), cfg.puf);
    json j{{"window", cfg.puf.window},
           {"alpha", cfg.puf.alpha},
           {"stride", cfg.puf.stride},
           {"normalized", cfg.puf.normalize},
           {"excluded_devices", res.excluded_devices},
           {"n_inter_distances", res.n_inter},
           {"n_intra_distances", res.n_intra},
           {"mu_inter", res.mu_inter},
           {"mu_intra", res.mu_intra},
           {"identifiability",
            {{"probability", res.ident.probability},
             {"favorable", res.ident.favorable},
             {"total", res.ident.total}}},
           {"inter_fit",
            {{"weibull_shape", res.inter_fit.shape},
             {"weibull_scale", res.inter_fit.scale},
             {"weibull_log_likelihood", res.inter_fit.log_likelihood},
             {"normal_log_likelihood", res.inter_normal_ll}}},
           {"intra_fit",
            {{"weibull_shape", res.intra_fit.shape},
             {"weibull_scale", res.intra_fit.scale},
             {"weibull_log_likelihood", res.intra_fit.log_likelihood},
             {"normal_log_likelihood", res.intra_normal_ll}}}};
    write_json_file(out / "pufprops.json", j);
    write_distance_csv(out / "distances_inter.csv", "inter_distance", res.inter_distances);
    write_distance_csv(out / "distances_intra.csv", "intra_distance", res.intra_distances);
    write_distance_histogram(out / "hist_inter.svg", "Inter-device distances", res.inter_distances,
                             res.inter_fit);
    write_distance_histogram(out / "hist_intra.svg", "Intra-device distances", res.intra_distances,
                             res.intra_fit);
}

// k-means attack: every trial is scored under both assignment conventions so
// the threat model (can the attacker match clusters to victims?) is explicit.
inline void cmd_attack(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    const auto m9 = features::read_csv((out / "features.csv").string());
    if (m9.n_cols != 9) throw DataError("attack: features.csv must have 9 feature columns");
    const auto full = cfg.include_cov ? add_cov_column(m9, cfg.cov_window) : m9;
    const auto mz = features::standardize(full).first;

    Rng master(cfg.attack_seed());
    std::vector<uint64_t> seeds(cfg.attack.trials);
    for (std::size_t t = 0; t < seeds.size(); ++t) seeds[t] = master.derive(t).next_u64();

    std::vector<double> identity_acc(cfg.attack.trials), optimal_acc(cfg.attack.trials);
    std::vector<std::size_t> first_labels;
    parallel_for(cfg.attack.trials, cfg.effective_jobs(), [&](std::size_t t) {
        const auto km = attack::kmeans(mz, cfg.attack.k, seeds[t], cfg.attack.max_iters);
        identity_acc[t] = attack::attack_accuracy(km.labels, mz.labels, attack::Assignment::identity);
        optimal_acc[t] = attack::attack_accuracy(km.labels, mz.labels, attack::Assignment::optimal);
        if (t == 0) first_labels = km.labels;
    });

    auto stats = [](const std::vector<double>& v) {
        return json{{"mean", mean(v)},
                    {"min", *std::min_element(v.begin(), v.end())},
                    {"max", *std::max_element(v.begin(), v.end())}};
    };
    json j{{"k", cfg.attack.k},
           {"trials", cfg.attack.trials},
           {"identity", stats(identity_acc)},
           {"optimal", stats(optimal_acc)}};
    write_json_file(out / "attack.json", j);
    svg::write_histogram_svg((out / "attack_hist.svg").string(),
                             "k-means attack accuracy (identity assignment)",
                             svg::make_histogram(identity_acc));

    // cluster-vs-device count matrix for the first trial
    const auto classes = classifier::class_label_set(mz);
    std::vector<std::size_t> counts(cfg.attack.k * classes.size(), 0);
    for (std::size_t r = 0; r < mz.n_rows(); ++r) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), mz.labels[r]);
        counts[first_labels[r] * classes.size() + std::size_t(it - classes.begin())]++;
    }
    std::ofstream csv(out / "attack_confusion.csv", std::ios::trunc);
    csv << "cluster";
    for (int c : classes) csv << ",device_" << c;
    csv << "\n";
    for (std::size_t k = 0; k < cfg.attack.k; ++k) {
        csv << k;
        for (std::size_t c = 0; c < classes.size(); ++c) csv << "," << counts[k * classes.size() + c];
        csv << "\n";
    }
}

// Consolidated markdown report from whatever artifacts exist in the run dir.
inline void cmd_report(const ExperimentConfig& cfg) {
    const fs::path out(cfg.out_dir);
    std::ofstream md(out / "report.md", std::ios::trunc);
    if (!md) throw DataError("cannot open report.md");
    md << "# Run report\n\n";

    if (fs::exists(out / "extract_report.json")) {
        const auto r = read_json_file(out / "extract_report.json");
        md << "## Extraction\n\n"
           << "- frames kept: " << r.at("frames_kept") << " / " << r.at("frames_total") << "\n"
           << "- exclusion rate: " << r.at("exclusion_rate") << "\n\n";
    }
    if (fs::exists(out / "eval.json")) {
        const auto e = read_json_file(out / "eval.json");
        md << "## Classifier\n\n"
           << "| metric | value |\n|---|---|\n"
           << "| features | " << e.at("features") << " |\n"
           << "| test accuracy | " << e.at("accuracy") << " |\n"
           << "| nearest-centroid baseline | " << e.at("baseline_accuracy") << " |\n"
           << "| epochs | " << e.at("epochs_run") << " |\n\n"
           << "Confusion matrix: `confusion.csv`; PCA scree: `scree.svg`\n\n";
    }
    if (fs::exists(out / "sweep.csv")) md << "## Sweep\n\nGrid results: `sweep.csv`\n\n";
    if (fs::exists(out / "channel_compare.json")) {
        const auto c = read_json_file(out / "channel_compare.json");
        md << "## Channel comparison\n\n"
           << "- min neurons for 95% (cable): " << c.at("cable").at("min_neurons_for_95pct") << "\n"
           << "- min neurons for 95% (wireless): "
           << c.at("static_wireless").at("min_neurons_for_95pct") << "\n\n";
    }
    if (fs::exists(out / "pufprops.json")) {
        const auto p = read_json_file(out / "pufprops.json");
        md << "## Device-uniqueness analysis\n\n"
           << "| metric | value |\n|---|---|\n"
           << "| mean inter distance | " << p.at("mu_inter") << " |\n"
           << "| mean intra distance | " << p.at("mu_intra") << " |\n"
           << "| identifiability | " << p.at("identifiability").at("probability") << " |\n"
           << "| inter distances | " << p.at("n_inter_distances") << " |\n"
           << "| intra distances | " << p.at("n_intra_distances") << " |\n\n"
           << "Histograms: `hist_inter.svg`, `hist_intra.svg`\n\n";
    }
    if (fs::exists(out / "attack.json")) {
        const auto a = read_json_file(out / "attack.json");
        md << "## Clustering attack\n\n"
           << "- identity-assignment mean accuracy: " << a.at("identity").at("mean") << "\n"
           << "- optimal-assignment mean accuracy: " << a.at("optimal").at("mean") << "\n\n"
           << "Histogram: `attack_hist.svg`; first-trial counts: `attack_confusion.csv`\n\n";
    }
}

}  // namespace rfpuf::pipeline
