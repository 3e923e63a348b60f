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

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "sceneverb/common.hpp"

namespace sceneverb {

struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

namespace bank_detail {

// 4th-order Butterworth band-pass (order-2 low-pass prototype through the
// band transform), realized as two biquad sections via the bilinear
// transform. Gain is normalized to unity at the band center.
inline std::array<Biquad, 2> design_octave_bandpass(double center_hz,
                                                    double sample_rate) {
  using cd = std::complex<double>;
  const double f1 = center_hz / kSqrt2;
  const double f2 = center_hz * kSqrt2;
  const double w1 = std::tan(kPi * f1 / sample_rate);
  const double w2 = std::tan(kPi * f2 / sample_rate);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  // Prototype poles exp(i 3pi/4), exp(i 5pi/4); the band transform of each
  // yields two band-pass poles. The full pole set is closed under
  // conjugation, so keeping the upper-half-plane poles defines both biquads.
  std::vector<cd> upper;
  const cd proto[2] = {std::polar(1.0, 3.0 * kPi / 4.0),
                       std::polar(1.0, 5.0 * kPi / 4.0)};
  for (const cd& p : proto) {
    const cd half = 0.5 * bw * p;
    const cd disc = std::sqrt(half * half - w0sq);
    for (const cd& s : {half + disc, half - disc}) {
      const cd z = (1.0 + s) / (1.0 - s);
      if (z.imag() > 0.0) upper.push_back(z);
    }
  }
  if (upper.size() != 2) {
    fail("RateTooLow", "octave band design degenerated; raise sample rate");
  }

  std::array<Biquad, 2> sos;
  for (int i = 0; i < 2; ++i) {
    sos[i].b0 = 1.0;
    sos[i].b1 = 0.0;
    sos[i].b2 = -1.0;
    sos[i].a1 = -2.0 * upper[i].real();
    sos[i].a2 = std::norm(upper[i]);
  }

  // Normalize so the cascade has unit gain at the (geometric) center.
  const double theta = 2.0 * kPi * std::sqrt(f1 * f2) / sample_rate;
  const cd z = std::polar(1.0, theta);
  const cd z2 = z * z;
  cd h = 1.0;
  for (const Biquad& s : sos) {
    h *= (s.b0 * z2 + s.b1 * z + s.b2) / (z2 + s.a1 * z + s.a2);
  }
  const double g = 1.0 / std::abs(h);
  const double per_section = std::sqrt(g);
  for (Biquad& s : sos) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

inline void filter_forward(std::span<double> x, const std::array<Biquad, 2>& sos) {
  for (const Biquad& s : sos) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace bank_detail

// Fixed 8-band octave analysis bank (62.5 Hz .. 8 kHz). Each band is a
// 4th-order band-pass applied forward-backward, so band outputs are
// zero-phase and features stay time-aligned with the input.
class OctaveFilterBank {
 public:
  explicit OctaveFilterBank(double sample_rate) : sample_rate_(sample_rate) {
    const double min_rate = 2.0 * kBandCenters.back() * kSqrt2;
    if (!(sample_rate >= min_rate)) {
      fail("RateTooLow", "sample rate " + std::to_string(sample_rate) +
                             " below required " + std::to_string(min_rate));
    }
    for (int b = 0; b < kNumBands; ++b) {
      sections_[b] =
          bank_detail::design_octave_bandpass(kBandCenters[b], sample_rate);
      const double f1 = kBandCenters[b] / kSqrt2;
      // Pad with enough zeros for the band filter to ring out in both
      // directions of the zero-phase pass.
      pad_[b] = std::max<size_t>(
          256, static_cast<size_t>(std::lround(sample_rate * 24.0 / (kPi * f1))));
    }
  }

  double sample_rate() const { return sample_rate_; }

  // Zero-phase band filter of one band; output length equals input length.
  template <typename T>
  std::vector<double> band_filter(int band, std::span<const T> signal) const {
    const size_t pad = pad_[band];
    std::vector<double> work(signal.size() + 2 * pad, 0.0);
    for (size_t i = 0; i < signal.size(); ++i) {
      work[pad + i] = static_cast<double>(signal[i]);
    }
    bank_detail::filter_forward(work, sections_[band]);
    std::reverse(work.begin(), work.end());
    bank_detail::filter_forward(work, sections_[band]);
    std::reverse(work.begin(), work.end());
    return {work.begin() + pad, work.begin() + pad + signal.size()};
  }

  template <typename T>
  std::array<std::vector<double>, kNumBands> analyze(
      std::span<const T> signal) const {
    std::array<std::vector<double>, kNumBands> out;
    for (int b = 0; b < kNumBands; ++b) out[b] = band_filter(b, signal);
    return out;
  }

 private:
  double sample_rate_;
  std::array<std::array<Biquad, 2>, kNumBands> sections_;
  std::array<size_t, kNumBands> pad_ = {};
};

}  // namespace sceneverb
