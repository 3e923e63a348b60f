/*
Copyright 2025 The sceneverb Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "sceneverb/common.hpp"

namespace sceneverb {

// Radix-2 real FFT sized for block convolution. forward() produces the
// n/2 + 1 non-redundant bins of a real signal; inverse() reconstructs the
// real signal including the 1/n scale, so inverse(forward(x)) == x.
class RealFft {
 public:
  explicit RealFft(size_t n) : n_(n), half_(n / 2) {
    if (n < 4 || (n & (n - 1)) != 0) {
      fail("InvalidLength", "FFT size must be a power of two >= 4");
    }
    rev_.resize(half_);
    size_t log2m = 0;
    while ((size_t{1} << log2m) < half_) ++log2m;
    for (size_t i = 0; i < half_; ++i) {
      size_t r = 0;
      for (size_t bit = 0; bit < log2m; ++bit) {
        if (i & (size_t{1} << bit)) r |= size_t{1} << (log2m - 1 - bit);
      }
      rev_[i] = r;
    }
    tw_.resize(half_ / 2);
    for (size_t i = 0; i < tw_.size(); ++i) {
      const double a = -2.0 * kPi * static_cast<double>(i) / static_cast<double>(half_);
      tw_[i] = {static_cast<float>(std::cos(a)), static_cast<float>(std::sin(a))};
    }
    post_.resize(half_ + 1);
    for (size_t k = 0; k <= half_; ++k) {
      const double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n_);
      post_[k] = {static_cast<float>(std::cos(a)), static_cast<float>(std::sin(a))};
    }
    work_.resize(half_);
    packed_.resize(half_);
  }

  size_t size() const { return n_; }
  size_t bins() const { return half_ + 1; }

  // in: n real samples. out_re/out_im: n/2 + 1 bins.
  void forward(const float* in, float* out_re, float* out_im) const {
    auto& z = work_;
    for (size_t i = 0; i < half_; ++i) {
      z[rev_[i]] = {in[2 * i], in[2 * i + 1]};
    }
    fft_in_place(z);

    // Untangle the packed even/odd spectra: for Z = FFT(even + i odd),
    // E_k = (Z_k + conj(Z_{m-k})) / 2, O_k = (Z_k - conj(Z_{m-k})) / (2i),
    // X_k = E_k + w^k O_k with w = exp(-2 pi i / n).
    for (size_t k = 0; k <= half_ / 2; ++k) {
      const size_t km = (half_ - k) % half_;
      const std::complex<float> zk = z[k];
      const std::complex<float> zkm = std::conj(z[km]);
      const std::complex<float> e = 0.5f * (zk + zkm);
      const std::complex<float> o = std::complex<float>(0.0f, -0.5f) * (zk - zkm);
      const std::complex<float> xk = e + post_[k] * o;
      out_re[k] = xk.real();
      out_im[k] = xk.imag();
      if (k != 0 && k != km) {
        const std::complex<float> em = std::conj(e);
        const std::complex<float> om = std::conj(o);
        const std::complex<float> xkm = em + post_[km] * om;
        out_re[km] = xkm.real();
        out_im[km] = xkm.imag();
      }
    }
    // Nyquist bin: X_{n/2} = E_0 - O_0.
    out_re[half_] = z[0].real() - z[0].imag();
    out_im[half_] = 0.0f;
  }

  // re/im: n/2 + 1 bins of a conjugate-symmetric spectrum. out: n samples.
  void inverse(const float* re, const float* im, float* out) const {
    auto& z = work_;
    auto& packed = packed_;
    for (size_t k = 0; k < half_; ++k) {
      const std::complex<float> a{re[k], im[k]};
      // X_{m - k} read from the stored non-redundant half (k = 0 hits the
      // Nyquist bin).
      const std::complex<float> b =
          std::conj(std::complex<float>{re[half_ - k], im[half_ - k]});
      const std::complex<float> e = 0.5f * (a + b);
      const std::complex<float> o = 0.5f * (a - b) * std::conj(post_[k]);
      packed[k] = e + std::complex<float>(0.0f, 1.0f) * o;
    }
    for (size_t i = 0; i < half_; ++i) z[rev_[i]] = std::conj(packed[i]);
    fft_in_place(z);
    const float scale = 1.0f / static_cast<float>(half_);
    for (size_t i = 0; i < half_; ++i) {
      const std::complex<float> v = std::conj(z[i]) * scale;
      out[2 * i] = v.real();
      out[2 * i + 1] = v.imag();
    }
  }

 private:
  void fft_in_place(std::vector<std::complex<float>>& z) const {
    const size_t m = half_;
    for (size_t len = 2; len <= m; len <<= 1) {
      const size_t step = m / len;
      for (size_t start = 0; start < m; start += len) {
        for (size_t i = 0; i < len / 2; ++i) {
          const std::complex<float> w = tw_[i * step];
          const std::complex<float> u = z[start + i];
          const std::complex<float> v = z[start + i + len / 2] * w;
          z[start + i] = u + v;
          z[start + i + len / 2] = u - v;
        }
      }
    }
  }

  size_t n_;
  size_t half_;
  std::vector<size_t> rev_;
  std::vector<std::complex<float>> tw_;
  std::vector<std::complex<float>> post_;
  mutable std::vector<std::complex<float>> work_;
  mutable std::vector<std::complex<float>> packed_;
};

}  // namespace sceneverb
