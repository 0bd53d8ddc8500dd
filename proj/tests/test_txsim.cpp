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
#include "doctest.h"
#include "rfpuf/fft.hpp"
#include "rfpuf/txsim.hpp"

using namespace rfpuf;
using namespace rfpuf::txsim;

TEST_CASE("prbs has the full 31-bit m-sequence structure") {
    const auto one_period = generate_prbs(31);
    std::size_t ones = 0;
    for (auto b : one_period) ones += b;
    CHECK(ones == 16);  // balanced m-sequence: 16 ones, 15 zeros

    // maximal period: no shorter cycle
    const auto two_periods = generate_prbs(62);
    for (std::size_t i = 0; i < 31; ++i) CHECK(two_periods[i + 31] == one_period[i]);
    bool shorter_period = false;
    for (std::size_t p = 1; p < 31; ++p) {
        bool periodic = true;
        for (std::size_t i = 0; i + p < 31; ++i)
            if (one_period[i] != one_period[i + p]) periodic = false;
        if (periodic) shorter_period = true;
    }
    CHECK_FALSE(shorter_period);
}

TEST_CASE("prbs cyclic autocorrelation is -1/31 at every nonzero lag") {
    const auto bits = generate_prbs(31);
    std::vector<int> pm(31);
    for (std::size_t i = 0; i < 31; ++i) pm[i] = bits[i] ? 1 : -1;
    for (std::size_t lag = 1; lag < 31; ++lag) {
        int acc = 0;
        for (std::size_t i = 0; i < 31; ++i) acc += pm[i] * pm[(i + lag) % 31];
        CHECK(acc == -1);  // normalized: -1/31
    }
}

TEST_CASE("sample_population determinism and zero-variance degenerate case") {
    PopulationSpec spec;
    spec.n_devices = 30;
    spec.rng_seed = 7;

    SUBCASE("zero stds give identical signatures") {
        PopulationSpec z = spec;
        z.cfo_mean = {5e3, 0.0, false};
        z.cfo_jitter_std = {100.0, 0.0, true};
        z.iq_gain_imbalance_db = {0.1, 0.0, false};
        z.iq_phase_error_rad = {0.01, 0.0, false};
        z.dc_offset_i = {0.02, 0.0, false};
        z.dc_offset_q = {-0.01, 0.0, false};
        z.tx_gain = {1.0, 0.0, true};
        const auto pop = sample_population(z);
        for (const auto& s : pop) {
            CHECK(s.cfo_mean == 5e3);
            CHECK(s.cfo_jitter_std == 100.0);
            CHECK(s.dc_offset == cplx(0.02, -0.01));
        }
    }

    SUBCASE("same seed, same population") {
        spec.n_devices = 300;
        const auto a = sample_population(spec);
        const auto b = sample_population(spec);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].cfo_mean == b[i].cfo_mean);
            CHECK(a[i].tx_gain == b[i].tx_gain);
        }
    }

    SUBCASE("law of large numbers on cfo_mean draws") {
        spec.n_devices = 10000;
        spec.cfo_mean = {30e3, 10e3, false};
        const auto pop = sample_population(spec);
        double acc = 0.0;
        for (const auto& s : pop) acc += s.cfo_mean;
        const double sample_mean = acc / double(pop.size());
        CHECK(std::abs(sample_mean - 30e3) < 3.0 * 10e3 / std::sqrt(10000.0));
    }

    SUBCASE("nonnegative parameters never go negative") {
        spec.n_devices = 2000;
        spec.cfo_jitter_std = {50.0, 200.0, true};  // heavy negative mass without rejection
        for (const auto& s : sample_population(spec)) CHECK(s.cfo_jitter_std >= 0.0);
    }
}

TEST_CASE("modulate produces unit power and rejects odd bit counts") {
    ModemConfig cfg;
    cfg.samples_per_symbol = 8;
    const auto bits = generate_prbs(2000);
    const auto s = modulate(bits, cfg);
    CHECK(mean_power(s.samples) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.sample_rate == cfg.sample_rate());
    CHECK_THROWS_AS(modulate(std::vector<uint8_t>{1, 0, 1}, cfg), ConfigError);
}

TEST_CASE("constant 00 bits give a single constellation point after matched filtering") {
    ModemConfig cfg;
    cfg.samples_per_symbol = 8;
    std::vector<uint8_t> bits(400, 0);
    const auto s = modulate(bits, cfg);
    // matched filter = same RRC; inspect mid-stream symbol instants
    const auto h = rrc_taps(cfg);
    const auto filtered = fft_convolve(s.samples, h);
    const std::size_t delay = h.size() - 1;  // two filters' worth of group delay
    std::vector<cplx> pts;
    for (std::size_t m = 40; m < 160; ++m) pts.push_back(filtered[m * cfg.samples_per_symbol + delay]);
    // all points equal (constant symbol), EVM vs their mean < 1%
    cplx meanp(0, 0);
    for (auto& p : pts) meanp += p;
    meanp /= double(pts.size());
    double err = 0.0;
    for (auto& p : pts) err += std::norm(p - meanp);
    err = std::sqrt(err / double(pts.size())) / std::abs(meanp);
    CHECK(err < 0.01);
    CHECK(meanp.real() > 0.0);
    CHECK(meanp.imag() > 0.0);
}

TEST_CASE("apply_impairments identity when all impairments are neutral") {
    ModemConfig cfg;
    cfg.samples_per_symbol = 8;
    const auto s = modulate(generate_prbs(512), cfg);
    DeviceSignature sig;  // all zero/identity
    Rng rng(3);
    const auto out = apply_impairments(s, sig, 100, rng);
    REQUIRE(out.samples.size() == s.samples.size());
    for (std::size_t i = 0; i < s.samples.size(); ++i) CHECK(out.samples[i] == s.samples[i]);
}

TEST_CASE("pure CFO shifts a constant tone by exactly that frequency") {
    SampleStream tone;
    tone.sample_rate = 1e6;
    tone.samples.assign(1 << 14, cplx(1.0, 0.0));
    DeviceSignature sig;
    sig.cfo_mean = 1000.0;
    Rng rng(1);
    const auto out = apply_impairments(tone, sig, tone.samples.size(), rng);
    auto spec = fft(out.samples);
    std::size_t peak = 0;
    for (std::size_t i = 0; i < spec.size(); ++i)
        if (std::abs(spec[i]) > std::abs(spec[peak])) peak = i;
    const double peak_hz = double(peak) * tone.sample_rate / double(spec.size());
    CHECK(peak_hz == doctest::Approx(1000.0).epsilon(0.05));
}

TEST_CASE("dc offset shifts the stream mean on the I axis") {
    ModemConfig cfg;
    cfg.samples_per_symbol = 8;
    const auto s = modulate(generate_prbs(4096), cfg);
    DeviceSignature sig;
    sig.dc_offset = {0.1, 0.0};
    Rng rng(1);
    const auto out = apply_impairments(s, sig, s.samples.size(), rng);
    cplx mean_in(0, 0), mean_out(0, 0);
    for (const auto& z : s.samples) mean_in += z;
    for (const auto& z : out.samples) mean_out += z;
    mean_in /= double(s.samples.size());
    mean_out /= double(out.samples.size());
    CHECK((mean_out - mean_in).real() == doctest::Approx(0.1).epsilon(0.01));
    CHECK(std::abs((mean_out - mean_in).imag()) < 0.01);
}

TEST_CASE("apply_channel identity, analytic rotation and measured SNR") {
    SampleStream s;
    s.sample_rate = 1e6;
    Rng srng(8);
    for (int i = 0; i < 1 << 20; ++i) s.samples.push_back(srng.normal_complex(std::sqrt(0.5)));

    SUBCASE("disabled noise, zero attenuation is the identity") {
        ChannelModel ch;  // cable, no snr
        Rng rng(2);
        const auto out = apply_channel(s, ch, rng);
        for (std::size_t i = 0; i < 100; ++i) CHECK(out.samples[i] == s.samples[i]);
    }

    SUBCASE("pi rotation negates every sample") {
        ChannelModel ch;
        ch.mode = ChannelModel::Mode::static_wireless;
        ch.phase_rotation = kPi;
        Rng rng(2);
        const auto out = apply_channel(s, ch, rng);
        for (std::size_t i = 0; i < 100; ++i) {
            CHECK(out.samples[i].real() == doctest::Approx(-s.samples[i].real()).epsilon(1e-12));
            CHECK(out.samples[i].imag() == doctest::Approx(-s.samples[i].imag()).epsilon(1e-12));
        }
    }

    SUBCASE("20 dB SNR measured within 0.3 dB over 1e6 samples") {
        ChannelModel ch;
        ch.snr_db = 20.0;
        Rng rng(2);
        const auto out = apply_channel(s, ch, rng);
        double noise_power = 0.0;
        for (std::size_t i = 0; i < s.samples.size(); ++i) noise_power += std::norm(out.samples[i] - s.samples[i]);
        noise_power /= double(s.samples.size());
        const double measured_snr = linear_power_to_db(mean_power(s.samples) / noise_power);
        CHECK(std::abs(measured_snr - 20.0) < 0.3);
    }

    SUBCASE("cable mode forbids multipath") {
        ChannelModel ch;
        ch.multipath_taps = {cplx(1, 0), cplx(0.1, 0.05)};
        Rng rng(2);
        CHECK_THROWS_AS(apply_channel(s, ch, rng), ConfigError);
    }
}

TEST_CASE("power bookkeeping: neutral gain and attenuation preserve power") {
    ModemConfig cfg;
    cfg.samples_per_symbol = 8;
    const auto s = modulate(generate_prbs(2048), cfg);
    DeviceSignature sig;
    sig.cfo_mean = 12e3;
    Rng rng(4);
    const auto imp = apply_impairments(s, sig, 512, rng);
    ChannelModel ch;  // 0 dB attenuation, no AWGN
    const auto out = apply_channel(imp, ch, rng);
    CHECK(mean_power(out.samples) == doctest::Approx(mean_power(s.samples)).epsilon(1e-6));
}

TEST_CASE("per-frame CFO draws have the configured jitter std") {
    // measure per-frame frequency via mean phase increment of an impaired tone
    SampleStream tone;
    tone.sample_rate = 1e6;
    const std::size_t frame_len = 1000, n_frames = 600;
    tone.samples.assign(frame_len * n_frames, cplx(1.0, 0.0));
    DeviceSignature sig;
    sig.cfo_mean = 5e3;
    sig.cfo_jitter_std = 250.0;
    Rng rng(11);
    const auto out = apply_impairments(tone, sig, frame_len, rng);
    std::vector<double> freqs;
    for (std::size_t f = 0; f < n_frames; ++f) {
        cplx acc(0, 0);
        for (std::size_t i = 1; i < frame_len; ++i)
            acc += out.samples[f * frame_len + i] * std::conj(out.samples[f * frame_len + i - 1]);
        freqs.push_back(std::arg(acc) * tone.sample_rate / (2.0 * kPi));
    }
    CHECK(mean(freqs) == doctest::Approx(5e3).epsilon(0.02));
    CHECK(sample_std(freqs) == doctest::Approx(250.0).epsilon(0.05));
}

TEST_CASE("synthesize_capture shape, labels and determinism") {
    ModemConfig cfg;
    cfg.samples_per_symbol = 8;
    ChannelModel ch;
    ch.snr_db = 30.0;
    DeviceSignature sig;
    sig.device_id = 4;
    sig.cfo_mean = 2e3;

    Rng rng1(21), rng2(21);
    const auto a = synthesize_capture(sig, cfg, ch, 5, 1200, rng1);
    const auto b = synthesize_capture(sig, cfg, ch, 5, 1200, rng2);
    REQUIRE(a.size() == 5);
    for (const auto& f : a) {
        CHECK(f.samples.size() == 1200);
        CHECK(f.device_id == 4);
    }
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < 1200; ++j) CHECK(a[i].samples[j] == b[i].samples[j]);

    Rng rng3(22);
    const auto single = synthesize_capture(sig, cfg, ch, 1, 1200, rng3);
    CHECK(single.size() == 1);
}
