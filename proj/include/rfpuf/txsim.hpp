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

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfpuf/common.hpp"
#include "rfpuf/dataio.hpp"

namespace rfpuf::txsim {

using dataio::Frame;
using dataio::SampleStream;

// Per-transmitter impairment parameters: the PUF entropy source.
struct DeviceSignature {
    int device_id = 0;
    double cfo_mean = 0.0;        // Hz
    double cfo_jitter_std = 0.0;  // Hz, per-frame LO drift
    double iq_gain_imbalance = 0.0;  // dB
    double iq_phase_error = 0.0;     // radians
    cplx dc_offset = {0.0, 0.0};     // fraction of unit amplitude
    double tx_gain = 1.0;            // linear

    void validate() const {
        if (tx_gain <= 0.0) throw ConfigError("DeviceSignature: tx_gain must be > 0");
        if (cfo_jitter_std < 0.0) throw ConfigError("DeviceSignature: cfo_jitter_std must be >= 0");
        for (double v : {cfo_mean, cfo_jitter_std, iq_gain_imbalance, iq_phase_error,
                         dc_offset.real(), dc_offset.imag(), tx_gain})
            if (!std::isfinite(v)) throw ConfigError("DeviceSignature: non-finite parameter");
    }
};

struct GaussParam {
    double mean = 0.0;
    double std = 0.0;
    bool nonnegative = false;  // rejection-resample negative draws

    double draw(Rng& rng) const {
        if (std < 0.0) throw ConfigError("GaussParam: std must be >= 0");
        double v = rng.normal(mean, std);
        if (nonnegative)
            while (v < 0.0) v = rng.normal(mean, std);
        return v;
    }
};

struct PopulationSpec {
    std::size_t n_devices = 30;
    uint64_t rng_seed = 1;
    GaussParam cfo_mean{0.0, 15e3, false};
    GaussParam cfo_jitter_std{200.0, 100.0, true};
    GaussParam iq_gain_imbalance_db{0.0, 0.3, false};
    GaussParam iq_phase_error_rad{0.0, kPi / 180.0, false};
    GaussParam dc_offset_i{0.0, 0.01, false};
    GaussParam dc_offset_q{0.0, 0.01, false};
    GaussParam tx_gain{1.0, 0.05, true};

    void validate() const {
        if (n_devices < 2) throw ConfigError("PopulationSpec: n_devices must be >= 2");
    }
};

struct ChannelModel {
    enum class Mode { cable, static_wireless };
    Mode mode = Mode::cable;
    double attenuation_db = 0.0;
    double phase_rotation = 0.0;          // radians, wireless only
    std::optional<double> snr_db;         // AWGN; nullopt disables noise
    std::vector<cplx> multipath_taps;     // wireless only

    void validate() const {
        if (mode == Mode::cable && !multipath_taps.empty())
            throw ConfigError("ChannelModel: cable mode forbids multipath taps");
        if (snr_db && !std::isfinite(*snr_db)) throw ConfigError("ChannelModel: snr must be finite");
    }
};

struct ModemConfig {
    double symbol_rate = 115200.0;  // symbols/s (230400 bps QPSK)
    std::size_t samples_per_symbol = 52;
    double rrc_rolloff = 0.35;
    std::size_t rrc_span = 10;  // symbols

    double sample_rate() const { return symbol_rate * double(samples_per_symbol); }

    void validate() const {
        if (symbol_rate <= 0.0) throw ConfigError("ModemConfig: symbol_rate must be > 0");
        if (samples_per_symbol < 4) throw ConfigError("ModemConfig: samples_per_symbol must be >= 4");
        if (rrc_rolloff <= 0.0 || rrc_rolloff > 1.0) throw ConfigError("ModemConfig: rolloff in (0,1]");
        if (rrc_span == 0) throw ConfigError("ModemConfig: rrc_span must be > 0");
    }
};

// Unit-energy root-raised-cosine prototype, span*sps+1 taps.
inline std::vector<double> rrc_taps(const ModemConfig& cfg) {
    cfg.validate();
    const double beta = cfg.rrc_rolloff;
    const std::size_t sps = cfg.samples_per_symbol;
    const std::size_t n = cfg.rrc_span * sps + 1;
    std::vector<double> h(n);
    const double half = double(cfg.rrc_span) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = double(i) / double(sps) - half;  // symbol units
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 - beta + 4.0 * beta / kPi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
            v = beta / std::sqrt(2.0) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) +
                 (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
        } else {
            const double num = std::sin(kPi * t * (1.0 - beta)) +
                               4.0 * beta * t * std::cos(kPi * t * (1.0 + beta));
            const double den = kPi * t * (1.0 - 16.0 * beta * beta * t * t);
            v = num / den;
        }
        h[i] = v;
    }
    double energy = 0.0;
    for (double v : h) energy += v * v;
    const double scale = 1.0 / std::sqrt(energy);
    for (double& v : h) v *= scale;
    return h;
}

// 31-bit maximal LFSR, polynomial x^5 + x^3 + 1, seed all-ones, repeated to
// the requested length.
inline std::vector<uint8_t> generate_prbs(std::size_t length) {
    if (length == 0) throw ConfigError("generate_prbs: length must be > 0");
    std::vector<uint8_t> bits;
    bits.reserve(length);
    uint8_t state = 0x1f;  // 5-bit register
    while (bits.size() < length) {
        const uint8_t out = state & 1u;
        bits.push_back(out);
        const uint8_t fb = ((state >> 0) ^ (state >> 2)) & 1u;  // taps 5 and 3
        state = uint8_t((state >> 1) | (fb << 4));
    }
    return bits;
}

// Gray map: 00 -> (+,+), 01 -> (-,+), 11 -> (-,-), 10 -> (+,-), unit power.
inline cplx qpsk_map(uint8_t b0, uint8_t b1) {
    const double s = 1.0 / std::sqrt(2.0);
    const double re = b0 ? -s : s;
    const double im = (b0 ^ b1) ? -s : s;
    return {re, im};
}

// Inverse of qpsk_map on the decision region of z.
inline std::pair<uint8_t, uint8_t> qpsk_demap(const cplx& z) {
    const uint8_t b0 = z.real() < 0.0 ? 1 : 0;
    const uint8_t b1 = (z.imag() < 0.0 ? 1 : 0) ^ b0;
    return {b0, b1};
}

inline std::vector<cplx> map_bits_to_symbols(const std::vector<uint8_t>& bits) {
    if (bits.size() % 2 != 0) throw ConfigError("modulate: bit count must be even");
    std::vector<cplx> symbols(bits.size() / 2);
    for (std::size_t i = 0; i < symbols.size(); ++i) symbols[i] = qpsk_map(bits[2 * i], bits[2 * i + 1]);
    return symbols;
}

// RRC-shaped baseband QPSK, normalized to unit average power.
inline SampleStream modulate(const std::vector<uint8_t>& bits, const ModemConfig& cfg) {
    cfg.validate();
    const auto symbols = map_bits_to_symbols(bits);
    const auto h = rrc_taps(cfg);
    const std::size_t sps = cfg.samples_per_symbol;
    SampleStream out;
    out.sample_rate = cfg.sample_rate();
    out.samples.assign(symbols.size() * sps + h.size() - 1, cplx(0.0, 0.0));
    for (std::size_t m = 0; m < symbols.size(); ++m) {
        const std::size_t base = m * sps;
        const cplx a = symbols[m];
        for (std::size_t k = 0; k < h.size(); ++k) out.samples[base + k] += a * h[k];
    }
    // trim the trailing filter tail so sample m*sps + delay hits symbol m
    out.samples.resize(symbols.size() * sps + (h.size() - 1) / 2);
    const double p = mean_power(out.samples);
    if (p > 0.0) {
        const double scale = 1.0 / std::sqrt(p);
        for (auto& z : out.samples) z *= scale;
    }
    return out;
}

// Impairments in fixed order: I/Q gain+phase imbalance, DC offset add,
// tx_gain scale, per-frame carrier rotation exp(j*2*pi*f_k*t) with
// f_k ~ N(cfo_mean, cfo_jitter_std^2) drawn once per frame_len block.
// The imbalance model is gain on the I branch and quadrature phase error:
// I' = g*I, Q' = Q*cos(phi) + I*sin(phi).
inline SampleStream apply_impairments(const SampleStream& stream, const DeviceSignature& sig,
                                      std::size_t frame_len, Rng& rng) {
    sig.validate();
    if (stream.samples.empty()) throw DataError("apply_impairments: empty stream");
    if (frame_len == 0) throw ConfigError("apply_impairments: frame_len must be > 0");

    const double g = db_to_linear_amplitude(sig.iq_gain_imbalance);
    const double cphi = std::cos(sig.iq_phase_error), sphi = std::sin(sig.iq_phase_error);
    const double fs = stream.sample_rate;

    SampleStream out;
    out.sample_rate = fs;
    out.samples.resize(stream.samples.size());

    double f_k = 0.0;
    for (std::size_t n = 0; n < stream.samples.size(); ++n) {
        if (n % frame_len == 0) f_k = rng.normal(sig.cfo_mean, sig.cfo_jitter_std);
        const cplx& x = stream.samples[n];
        cplx y(g * x.real(), x.imag() * cphi + x.real() * sphi);
        y += sig.dc_offset;
        y *= sig.tx_gain;
        const double ang = 2.0 * kPi * f_k * (double(n) / fs);
        y *= cplx(std::cos(ang), std::sin(ang));
        out.samples[n] = y;
    }
    return out;
}

// Cable: attenuation + AWGN. Static wireless: attenuation, fixed phase
// rotation, optional multipath convolution (same-length output), AWGN at the
// stated SNR relative to post-attenuation signal power.
inline SampleStream apply_channel(const SampleStream& stream, const ChannelModel& ch, Rng& rng) {
    ch.validate();
    SampleStream out;
    out.sample_rate = stream.sample_rate;
    out.samples = stream.samples;

    const double att = db_to_linear_amplitude(-ch.attenuation_db);
    cplx scale(att, 0.0);
    if (ch.mode == ChannelModel::Mode::static_wireless)
        scale *= cplx(std::cos(ch.phase_rotation), std::sin(ch.phase_rotation));
    for (auto& z : out.samples) z *= scale;

    if (ch.mode == ChannelModel::Mode::static_wireless && !ch.multipath_taps.empty()) {
        std::vector<cplx> conv(out.samples.size(), cplx(0.0, 0.0));
        for (std::size_t n = 0; n < out.samples.size(); ++n)
            for (std::size_t k = 0; k < ch.multipath_taps.size() && k <= n; ++k)
                conv[n] += ch.multipath_taps[k] * out.samples[n - k];
        out.samples = std::move(conv);
    }

    if (ch.snr_db) {
        const double sig_power = mean_power(out.samples);
        const double noise_power = sig_power / db_to_linear_power(*ch.snr_db);
        const double std_axis = std::sqrt(noise_power / 2.0);
        for (auto& z : out.samples) z += rng.normal_complex(std_axis);
    }
    return out;
}

// Draw n_devices signatures; deterministic for a fixed seed.
inline std::vector<DeviceSignature> sample_population(const PopulationSpec& spec) {
    spec.validate();
    Rng rng(spec.rng_seed);
    std::vector<DeviceSignature> devices;
    devices.reserve(spec.n_devices);
    for (std::size_t d = 0; d < spec.n_devices; ++d) {
        Rng drng = rng.derive(uint64_t(d));
        DeviceSignature sig;
        sig.device_id = int(d);
        sig.cfo_mean = spec.cfo_mean.draw(drng);
        sig.cfo_jitter_std = spec.cfo_jitter_std.draw(drng);
        sig.iq_gain_imbalance = spec.iq_gain_imbalance_db.draw(drng);
        sig.iq_phase_error = spec.iq_phase_error_rad.draw(drng);
        sig.dc_offset = {spec.dc_offset_i.draw(drng), spec.dc_offset_q.draw(drng)};
        sig.tx_gain = spec.tx_gain.draw(drng);
        while (sig.tx_gain <= 0.0) sig.tx_gain = spec.tx_gain.draw(drng);
        sig.validate();
        devices.push_back(sig);
    }
    return devices;
}

// PRBS -> modulate -> impairments -> channel -> segment; exactly n_frames
// frames labeled with sig.device_id.
inline std::vector<Frame> synthesize_capture(const DeviceSignature& sig, const ModemConfig& cfg,
                                             const ChannelModel& ch, std::size_t n_frames,
                                             std::size_t frame_len, Rng& rng) {
    if (n_frames == 0) throw ConfigError("synthesize_capture: n_frames must be > 0");
    cfg.validate();
    const std::size_t need_samples = n_frames * frame_len;
    const std::size_t n_symbols = need_samples / cfg.samples_per_symbol + cfg.rrc_span + 2;
    auto bits = generate_prbs(2 * n_symbols);
    auto clean = modulate(bits, cfg);
    auto impaired = apply_impairments(clean, sig, frame_len, rng);
    auto received = apply_channel(impaired, ch, rng);
    received.samples.resize(need_samples);
    auto frames = dataio::segment_frames(received, frame_len);
    for (auto& f : frames) f.device_id = sig.device_id;
    return frames;
}

inline SampleStream frames_to_stream(const std::vector<Frame>& frames, double sample_rate) {
    SampleStream s;
    s.sample_rate = sample_rate;
    for (const auto& f : frames) s.samples.insert(s.samples.end(), f.samples.begin(), f.samples.end());
    return s;
}

}  // namespace rfpuf::txsim
