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
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rfpuf/common.hpp"

namespace rfpuf::dataio {

struct SampleStream {
    std::vector<cplx> samples;
    double sample_rate = 0.0;  // Hz
};

struct Frame {
    std::vector<cplx> samples;
    std::size_t frame_index = 0;
    int device_id = -1;  // optional label, -1 = unlabeled
    double timestamp_offset = 0.0;  // seconds from capture start
};

// Capture format: interleaved 32-bit little-endian IEEE-754 floats, I then
// Q, no header.
inline SampleStream read_capture(const std::string& path, double sample_rate) {
    if (sample_rate <= 0.0) throw ConfigError("read_capture: sample_rate must be > 0");
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("read_capture: cannot open " + path);
    const std::streamsize bytes = in.tellg();
    in.seekg(0);
    if (bytes % 8 != 0)
        throw DataError("read_capture: truncated capture " + path + ": trailing partial sample at byte offset " +
                        std::to_string((bytes / 8) * 8));
    SampleStream out;
    out.sample_rate = sample_rate;
    const std::size_t n = std::size_t(bytes) / 8;
    out.samples.reserve(n);
    std::vector<float> buf(std::size_t(bytes) / 4);
    if (bytes > 0 && !in.read(reinterpret_cast<char*>(buf.data()), bytes))
        throw DataError("read_capture: short read on " + path);
    for (std::size_t i = 0; i < n; ++i) {
        const float re = buf[2 * i], im = buf[2 * i + 1];
        if (!std::isfinite(re) || !std::isfinite(im))
            throw DataError("read_capture: non-finite sample at index " + std::to_string(i) + " in " + path);
        out.samples.emplace_back(double(re), double(im));
    }
    return out;
}

inline void write_capture(const std::string& path, const SampleStream& stream) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("write_capture: cannot open " + path);
    std::vector<float> buf(2 * stream.samples.size());
    for (std::size_t i = 0; i < stream.samples.size(); ++i) {
        buf[2 * i] = float(stream.samples[i].real());
        buf[2 * i + 1] = float(stream.samples[i].imag());
    }
    if (!buf.empty()) out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
    if (!out) throw DataError("write_capture: write failed on " + path);
}

// floor(N / frame_len) frames; tail remainder dropped (partial frames would
// bias per-frame features).
inline std::vector<Frame> segment_frames(const SampleStream& stream, std::size_t frame_len) {
    if (frame_len == 0) throw ConfigError("segment_frames: frame_len must be > 0");
    const std::size_t n_frames = stream.samples.size() / frame_len;
    std::vector<Frame> frames;
    frames.reserve(n_frames);
    const double dt = stream.sample_rate > 0.0 ? double(frame_len) / stream.sample_rate : 0.0;
    for (std::size_t k = 0; k < n_frames; ++k) {
        Frame f;
        f.frame_index = k;
        f.timestamp_offset = double(k) * dt;
        f.samples.assign(stream.samples.begin() + std::ptrdiff_t(k * frame_len),
                         stream.samples.begin() + std::ptrdiff_t((k + 1) * frame_len));
        frames.push_back(std::move(f));
    }
    return frames;
}

// Noise-floor estimate: median mean-power of the lowest-decile frames, so a
// capture that is mostly signal does not self-censor. A frame is kept when
// its mean power >= threshold_factor * floor. When no frame clears the
// threshold the capture has no detectable signal/noise split (e.g. uniform
// power, or an already-filtered list) and everything is kept; this also
// makes the filter idempotent.
inline std::vector<Frame> filter_noise_frames(const std::vector<Frame>& frames, double threshold_factor) {
    if (threshold_factor <= 1.0) throw ConfigError("filter_noise_frames: threshold_factor must be > 1");
    if (frames.empty()) return {};

    std::vector<double> powers(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) powers[i] = mean_power(frames[i].samples);

    std::vector<double> sorted = powers;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t decile = std::max<std::size_t>(1, sorted.size() / 10);
    const double floor_est = (decile % 2 == 1)
                                 ? sorted[decile / 2]
                                 : 0.5 * (sorted[decile / 2 - 1] + sorted[decile / 2]);

    std::vector<Frame> kept;
    kept.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (powers[i] >= threshold_factor * floor_est) kept.push_back(frames[i]);

    if (kept.empty()) return frames;  // no signal/noise split detected
    return kept;
}

struct FrameManifestEntry {
    std::string capture;
    std::size_t frame_index;
    bool kept;
    double mean_power;
};

// JSON-lines manifest: {capture, frame_index, kept, mean_power}.
inline void write_frame_manifest(const std::string& path, const std::vector<FrameManifestEntry>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("write_frame_manifest: cannot open " + path);
    char line[512];
    for (const auto& e : entries) {
        std::snprintf(line, sizeof(line),
                      "{\"capture\":\"%s\",\"frame_index\":%zu,\"kept\":%s,\"mean_power\":%.17g}\n",
                      e.capture.c_str(), e.frame_index, e.kept ? "true" : "false", e.mean_power);
        out << line;
    }
}

}  // namespace rfpuf::dataio
