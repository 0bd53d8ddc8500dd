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

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rfpuf/common.hpp"
#include "rfpuf/fft.hpp"
#include "rfpuf/txsim.hpp"

namespace rfpuf::rxdsp {

using dataio::Frame;
using txsim::ModemConfig;

// Recovered frame: synchronized symbols plus the measured total CFO.
struct FrameObservation {
    int device_id = -1;
    std::size_t frame_index = 0;
    double cfo_hz = 0.0;  // coarse + fine residual
    std::vector<cplx> symbols;  // unit RMS, rotation-canonicalized
    double evm = 0.0;
};

struct FrameDropError : DataError {
    std::string reason;
    FrameDropError(std::string reason_, const std::string& msg)
        : DataError(msg), reason(std::move(reason_)) {}
};

struct SyncConfig {
    double coarse_prominence_min = 8.0;  // 4th-power peak / median spectrum magnitude
    std::size_t coarse_zero_pad = 4;     // FFT length multiplier
    double timing_loop_bw = 0.005;       // normalized, per symbol
    double timing_damping = 0.707;
    double fine_loop_bw = 0.01;          // normalized, per symbol
    double fine_damping = 0.707;
    std::size_t settle_symbols = 8;      // discarded loop transient
    std::size_t min_symbols = 16;
    double max_evm = 0.7;                // lock threshold
};

struct CoarseCfo {
    double hz = 0.0;
    double prominence = 0.0;
};

// Coarse CFO via FFT of the 4th-power signal (QPSK modulation stripping);
// peak-bin frequency / 4, refined by parabolic interpolation. Unambiguous
// range is +/- sample_rate/8; offsets beyond wrap.
inline CoarseCfo coarse_cfo_estimate(const std::vector<cplx>& samples, double sample_rate,
                                     std::size_t zero_pad = 4) {
    if (samples.empty()) throw NumericError("coarse_cfo_estimate: empty frame");
    if (mean_power(samples) == 0.0) throw NumericError("coarse_cfo_estimate: all-zero frame");

    const std::size_t nfft = next_pow2(samples.size()) * std::max<std::size_t>(1, zero_pad);
    std::vector<cplx> buf(nfft, cplx(0.0, 0.0));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const cplx x2 = samples[i] * samples[i];
        buf[i] = x2 * x2;
    }
    fft_inplace(buf, false);

    std::vector<double> mag(nfft);
    std::size_t peak = 0;
    for (std::size_t i = 0; i < nfft; ++i) {
        mag[i] = std::abs(buf[i]);
        if (mag[i] > mag[peak]) peak = i;
    }
    std::vector<double> tmp = mag;
    std::nth_element(tmp.begin(), tmp.begin() + std::ptrdiff_t(nfft / 2), tmp.end());
    const double med = tmp[nfft / 2];

    const double alpha = mag[(peak + nfft - 1) % nfft];
    const double beta = mag[peak];
    const double gamma = mag[(peak + 1) % nfft];
    double delta = 0.0;
    const double denom = alpha - 2.0 * beta + gamma;
    if (std::abs(denom) > 1e-300) delta = 0.5 * (alpha - gamma) / denom;

    double bin = double(peak) + delta;
    if (bin > double(nfft) / 2.0) bin -= double(nfft);
    CoarseCfo out;
    out.hz = bin * sample_rate / double(nfft) / 4.0;
    out.prominence = med > 0.0 ? beta / med : std::numeric_limits<double>::infinity();
    return out;
}

inline std::vector<cplx> derotate(const std::vector<cplx>& samples, double hz, double sample_rate) {
    std::vector<cplx> out(samples.size());
    const double step = -2.0 * kPi * hz / sample_rate;
    for (std::size_t n = 0; n < samples.size(); ++n) {
        const double ang = step * double(n);
        out[n] = samples[n] * cplx(std::cos(ang), std::sin(ang));
    }
    return out;
}

// Same-length RRC matched filter with group delay compensated. The kernel
// spectrum is cached for a fixed input length.
class MatchedFilter {
public:
    explicit MatchedFilter(std::vector<double> taps) : taps_(std::move(taps)) {}

    std::vector<cplx> apply(const std::vector<cplx>& x) const {
        if (x.size() < taps_.size())
            throw FrameDropError("too_short", "matched_filter: frame shorter than filter span");
        const std::size_t n = next_pow2(x.size() + taps_.size() - 1);
        const auto kernel = kernel_fft(n);
        std::vector<cplx> buf(n, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < x.size(); ++i) buf[i] = x[i];
        fft_inplace(buf, false);
        for (std::size_t i = 0; i < n; ++i) buf[i] *= (*kernel)[i];
        fft_inplace(buf, true);
        const std::size_t delay = (taps_.size() - 1) / 2;
        std::vector<cplx> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = buf[i + delay];
        return out;
    }

    std::size_t span_samples() const { return taps_.size(); }

private:
    std::shared_ptr<const std::vector<cplx>> kernel_fft(std::size_t n) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = kernels_.find(n);
        if (it != kernels_.end()) return it->second;
        auto k = std::make_shared<std::vector<cplx>>(n, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < taps_.size(); ++i) (*k)[i] = cplx(taps_[i], 0.0);
        fft_inplace(*k, false);
        return kernels_.emplace(n, std::move(k)).first->second;
    }

    std::vector<double> taps_;
    mutable std::mutex mutex_;
    mutable std::map<std::size_t, std::shared_ptr<const std::vector<cplx>>> kernels_;
};

inline std::vector<cplx> matched_filter(const std::vector<cplx>& frame, const ModemConfig& cfg) {
    return MatchedFilter(txsim::rrc_taps(cfg)).apply(frame);
}

// Square-law (Oerder-Meyr) feedforward timing estimate: fractional symbol
// phase in [0, 1) symbol units.
inline double square_law_timing(const std::vector<cplx>& x, std::size_t sps) {
    cplx acc(0.0, 0.0);
    const double step = -2.0 * kPi / double(sps);
    for (std::size_t n = 0; n < x.size(); ++n)
        acc += std::norm(x[n]) * cplx(std::cos(step * double(n)), std::sin(step * double(n)));
    double mu = -std::arg(acc) / (2.0 * kPi);
    mu -= std::floor(mu);
    return mu;
}

// 4-point cubic Lagrange interpolation at fractional position t.
inline cplx cubic_interp(const std::vector<cplx>& x, double t) {
    const auto i = std::size_t(std::floor(t));
    const double mu = t - double(i);
    const cplx xm1 = x[i - 1], x0 = x[i], x1 = x[i + 1], x2 = x[i + 2];
    const cplx a = (x2 - xm1 + 3.0 * (x0 - x1)) / 6.0;
    const cplx b = (xm1 + x1) / 2.0 - x0;
    const cplx c = x1 - xm1 / 3.0 - x0 / 2.0 - x2 / 6.0;
    return ((a * mu + b) * mu + c) * mu + x0;
}

struct TimingResult {
    std::vector<cplx> symbols;
    double error_rms = 0.0;  // steady-state detector output
};

// Gardner timing-error detector with an interpolating second-order loop,
// initialized from the square-law feedforward estimate so that lock is
// reached within a short frame. Edge symbols inside the matched-filter
// transient and the loop settle window are discarded.
inline TimingResult timing_recovery(const std::vector<cplx>& frame, const ModemConfig& cfg,
                                    const SyncConfig& sync) {
    const std::size_t sps = cfg.samples_per_symbol;
    const double margin = double(cfg.rrc_span * sps) / 2.0;
    const double power = mean_power(frame);
    if (power <= 0.0) throw FrameDropError("no_lock", "timing_recovery: zero-power frame");

    const double mu = square_law_timing(frame, sps);

    // loop constants (proportional + integral) from bandwidth and damping
    const double zeta = sync.timing_damping;
    const double theta = sync.timing_loop_bw / (zeta + 0.25 / zeta);
    const double denom = 1.0 + 2.0 * zeta * theta + theta * theta;
    const double k1 = 4.0 * zeta * theta / denom;
    const double k2 = 4.0 * theta * theta / denom;

    double tau = margin + mu * double(sps);
    while (tau < margin + double(sps) / 2.0 + 2.0) tau += double(sps);
    double integ = 0.0;

    std::vector<cplx> symbols;
    std::vector<double> errors;
    cplx prev(0.0, 0.0);
    bool have_prev = false;
    const double end = double(frame.size()) - margin - 3.0;
    while (tau < end) {
        const cplx y = cubic_interp(frame, tau);
        if (have_prev) {
            // Gardner detector output is positive when sampling late, so the
            // correction is applied with a negative sign.
            const cplx mid = cubic_interp(frame, tau - double(sps) / 2.0);
            const double e = -((y - prev) * std::conj(mid)).real() / power;
            errors.push_back(e);
            integ += k2 * e;
            tau += k1 * e * double(sps);
        }
        symbols.push_back(y);
        prev = y;
        have_prev = true;
        tau += double(sps) * (1.0 + integ);
    }

    if (symbols.size() < sync.settle_symbols + sync.min_symbols)
        throw FrameDropError("too_few_symbols", "timing_recovery: only " + std::to_string(symbols.size()) +
                                                     " symbols recovered");
    symbols.erase(symbols.begin(), symbols.begin() + std::ptrdiff_t(sync.settle_symbols));

    TimingResult out;
    out.symbols = std::move(symbols);
    double acc = 0.0;
    const std::size_t half = errors.size() / 2;
    for (std::size_t i = half; i < errors.size(); ++i) acc += errors[i] * errors[i];
    out.error_rms = errors.size() > half ? std::sqrt(acc / double(errors.size() - half)) : 0.0;
    return out;
}

inline void normalize_rms(std::vector<cplx>& symbols) {
    double p = mean_power(symbols);
    if (p > 0.0) {
        const double s = 1.0 / std::sqrt(p);
        for (auto& z : symbols) z *= s;
    }
}

inline cplx nearest_qpsk_point(const cplx& z) {
    const double s = 1.0 / std::sqrt(2.0);
    return {z.real() < 0.0 ? -s : s, z.imag() < 0.0 ? -s : s};
}

struct FineResult {
    std::vector<cplx> symbols;
    double residual_hz = 0.0;
};

// Decision-directed second-order phase tracking on recovered symbols. The
// loop keeps decisions consistent while the per-symbol total phase readings
// are fitted with a line; the slope is the residual frequency and the fitted
// ramp (not the jittery instantaneous loop phase) is removed from the output.
inline FineResult fine_cfo_compensate(const std::vector<cplx>& symbols_in, double symbol_rate,
                                      const SyncConfig& sync) {
    if (symbols_in.size() < 4) throw FrameDropError("too_few_symbols", "fine_cfo_compensate: too few symbols");
    std::vector<cplx> y = symbols_in;
    normalize_rms(y);

    const double zeta = sync.fine_damping;
    const double theta = sync.fine_loop_bw / (zeta + 0.25 / zeta);
    const double denom = 1.0 + 2.0 * zeta * theta + theta * theta;
    const double k1 = 4.0 * zeta * theta / denom;
    const double k2 = 4.0 * theta * theta / denom;

    const std::size_t n = y.size();
    std::vector<double> theta_total(n);
    double phi = 0.0, omega = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const cplx z = y[k] * cplx(std::cos(-phi), std::sin(-phi));
        const cplx d = nearest_qpsk_point(z);
        const double e = std::arg(z * std::conj(d));
        theta_total[k] = phi + e;
        phi += omega + k1 * e;
        omega += k2 * e;
    }

    // least-squares line through (k, theta_total)
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sx += double(k);
        sy += theta_total[k];
        sxx += double(k) * double(k);
        sxy += double(k) * theta_total[k];
    }
    const double nn = double(n);
    const double slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / nn;

    FineResult out;
    out.residual_hz = slope * symbol_rate / (2.0 * kPi);
    out.symbols.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double ang = -(intercept + slope * double(k));
        out.symbols[k] = y[k] * cplx(std::cos(ang), std::sin(ang));
    }
    normalize_rms(out.symbols);
    return out;
}

struct CanonicalizeResult {
    std::vector<cplx> symbols;
    int rotation_quadrants = 0;
    std::size_t bit_matches = 0;
    std::size_t bit_total = 0;
};

// QPSK sync has a 4-fold phase ambiguity; resolve it by choosing the 90-degree
// rotation (and cyclic alignment) that best matches the known PRBS challenge.
inline CanonicalizeResult canonicalize_rotation(const std::vector<cplx>& symbols,
                                                const std::vector<uint8_t>& prbs_period_bits) {
    if (prbs_period_bits.size() % 2 != 0)
        throw ConfigError("canonicalize_rotation: reference bit count must be even");
    const std::size_t period = prbs_period_bits.size() / 2;  // symbols
    CanonicalizeResult best;
    best.bit_total = 2 * symbols.size();

    for (int r = 0; r < 4; ++r) {
        const double ang = double(r) * kPi / 2.0;
        const cplx rot(std::cos(ang), std::sin(ang));
        std::vector<std::pair<uint8_t, uint8_t>> bits(symbols.size());
        for (std::size_t k = 0; k < symbols.size(); ++k) bits[k] = txsim::qpsk_demap(symbols[k] * rot);
        for (std::size_t shift = 0; shift < period; ++shift) {
            std::size_t matches = 0;
            for (std::size_t k = 0; k < symbols.size(); ++k) {
                const std::size_t m = (k + shift) % period;
                matches += std::size_t(bits[k].first == prbs_period_bits[2 * m]);
                matches += std::size_t(bits[k].second == prbs_period_bits[2 * m + 1]);
            }
            if (matches > best.bit_matches) {
                best.bit_matches = matches;
                best.rotation_quadrants = r;
            }
        }
    }

    const double ang = double(best.rotation_quadrants) * kPi / 2.0;
    const cplx rot(std::cos(ang), std::sin(ang));
    best.symbols.resize(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) best.symbols[k] = symbols[k] * rot;
    return best;
}

inline double compute_evm(const std::vector<cplx>& symbols) {
    if (symbols.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& z : symbols) acc += std::norm(z - nearest_qpsk_point(z));
    return std::sqrt(acc / double(symbols.size()));
}

struct DemodBatchResult {
    std::vector<FrameObservation> observations;
    std::map<std::string, std::size_t> drop_counts;
};

// Full per-frame chain. The coarse CFO is estimated and removed before
// matched filtering: with offsets a sizable fraction of the symbol rate the
// uncorrected spectrum falls partly outside the matched filter passband.
class Demodulator {
public:
    Demodulator(ModemConfig modem, SyncConfig sync = {})
        : modem_(modem),
          sync_(sync),
          filter_(txsim::rrc_taps(modem)),
          prbs_ref_(txsim::generate_prbs(62)) {}

    FrameObservation demodulate(const Frame& frame) const {
        if (frame.samples.size() < filter_.span_samples())
            throw FrameDropError("too_short", "demodulate: frame shorter than filter span");

        CoarseCfo coarse;
        try {
            coarse = coarse_cfo_estimate(frame.samples, modem_.sample_rate(), sync_.coarse_zero_pad);
        } catch (const NumericError& e) {
            throw FrameDropError("no_carrier", e.what());
        }
        if (coarse.prominence < sync_.coarse_prominence_min)
            throw FrameDropError("no_carrier", "demodulate: 4th-power carrier peak not prominent");

        auto compensated = derotate(frame.samples, coarse.hz, modem_.sample_rate());
        auto filtered = filter_.apply(compensated);
        auto timing = timing_recovery(filtered, modem_, sync_);
        auto fine = fine_cfo_compensate(timing.symbols, modem_.symbol_rate, sync_);
        auto canon = canonicalize_rotation(fine.symbols, prbs_ref_);

        FrameObservation obs;
        obs.device_id = frame.device_id;
        obs.frame_index = frame.frame_index;
        obs.cfo_hz = coarse.hz + fine.residual_hz;
        obs.symbols = std::move(canon.symbols);
        obs.evm = compute_evm(obs.symbols);
        if (obs.evm > sync_.max_evm)
            throw FrameDropError("no_lock", "demodulate: EVM " + std::to_string(obs.evm) + " above lock threshold");
        return obs;
    }

    // Frame-parallel batch; surviving frames keep their original frame_index.
    DemodBatchResult demodulate_frames(const std::vector<Frame>& frames, unsigned jobs = 1) const {
        std::vector<FrameObservation> slots(frames.size());
        std::vector<std::string> drops(frames.size());
        std::vector<char> ok(frames.size(), 0);
        parallel_for(frames.size(), jobs, [&](std::size_t i) {
            try {
                slots[i] = demodulate(frames[i]);
                ok[i] = 1;
            } catch (const FrameDropError& e) {
                drops[i] = e.reason;
            }
        });
        DemodBatchResult out;
        out.observations.reserve(frames.size());
        for (std::size_t i = 0; i < frames.size(); ++i) {
            if (ok[i])
                out.observations.push_back(std::move(slots[i]));
            else
                ++out.drop_counts[drops[i]];
        }
        return out;
    }

    const ModemConfig& modem() const { return modem_; }
    const SyncConfig& sync() const { return sync_; }

private:
    ModemConfig modem_;
    SyncConfig sync_;
    MatchedFilter filter_;
    std::vector<uint8_t> prbs_ref_;
};

}  // namespace rfpuf::rxdsp
