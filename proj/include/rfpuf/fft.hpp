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

#include <cstddef>
#include <vector>

#include "rfpuf/common.hpp"

namespace rfpuf {

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place iterative radix-2 DIT transform. Length must be a power of two.
inline void fft_inplace(std::vector<cplx>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw NumericError("fft: length must be a nonzero power of two");

    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / double(n);
        for (auto& z : a) z *= inv;
    }
}

inline std::vector<cplx> fft(std::vector<cplx> a) {
    fft_inplace(a, false);
    return a;
}

inline std::vector<cplx> ifft(std::vector<cplx> a) {
    fft_inplace(a, true);
    return a;
}

// Linear convolution of a complex signal with a real kernel via a
// zero-padded transform. Output length = x.size() + h.size() - 1.
inline std::vector<cplx> fft_convolve(const std::vector<cplx>& x, const std::vector<double>& h) {
    if (x.empty() || h.empty()) return {};
    const std::size_t out_len = x.size() + h.size() - 1;
    const std::size_t n = next_pow2(out_len);
    std::vector<cplx> xa(n, cplx(0.0, 0.0)), ha(n, cplx(0.0, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) xa[i] = x[i];
    for (std::size_t i = 0; i < h.size(); ++i) ha[i] = cplx(h[i], 0.0);
    fft_inplace(xa, false);
    fft_inplace(ha, false);
    for (std::size_t i = 0; i < n; ++i) xa[i] *= ha[i];
    fft_inplace(xa, true);
    xa.resize(out_len);
    return xa;
}

}  // namespace rfpuf
