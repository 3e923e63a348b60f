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
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sceneverb/common.hpp"
#include "sceneverb/geometry.hpp"
#include "sceneverb/material.hpp"
#include "sceneverb/octave_bank.hpp"

namespace sceneverb {

inline constexpr double kRt60Floor = 0.01;
inline constexpr double kRt60Ceiling = 10.0;
inline constexpr int kMaxImageSourceOrder = 4;
// ln(10^6) / 2: maps the amplitude envelope exp(-k t / RT60) to a 60 dB
// energy decay at t = RT60.
inline constexpr double kDecayConstant = 6.91;
inline constexpr double kMinSourceDistance = 0.1;

// Mirror image of the source on the rectangular-room reflection lattice.
// `amplitude` is the cumulative per-band reflection product of the bounce
// sequence; distance attenuation is applied later per listener.
struct ImageSource {
  std::array<int, 3> lattice_index = {0, 0, 0};
  int order = 0;
  Vec3 position;  // room-local frame
  BandArray amplitude = {};
};

struct ReflectionTap {
  double delay = 0.0;       // seconds
  BandArray amplitude = {}; // linear, per band
  Vec3 direction;           // unit vector listener -> image, room-local
};

struct DirectTap {
  double delay = 0.0;
  double amplitude = 0.0;
};

struct LateReverbSpec {
  BandArray rt60 = {};
  double gain = 0.0;   // linear, relative to unit direct-path energy
  double onset = 0.0;  // seconds
  std::uint64_t seed = 0;
};

// Sampled impulse response with bookkeeping for its direct / early / late
// segmentation: `direct_end` is the direct tap's sample, `early_end` the
// last early-tap sample, `late_onset` where the tail was mixed in.
struct RoomImpulseResponse {
  double sample_rate = 48000.0;
  int channels = 1;
  std::vector<std::vector<float>> samples;  // per channel
  long direct_end = 0;
  long early_end = 0;
  long late_onset = 0;

  size_t length() const { return samples.empty() ? 0 : samples[0].size(); }
  double duration() const { return static_cast<double>(length()) / sample_rate; }

  void validate() const {
    if (channels < 1 || channels > 2 ||
        samples.size() != static_cast<size_t>(channels)) {
      fail("ParseError", "impulse response must have 1 or 2 channels");
    }
    for (const auto& ch : samples) {
      if (ch.size() != length()) {
        fail("ParseError", "impulse response channels differ in length");
      }
      for (float v : ch) {
        if (!std::isfinite(v) || std::abs(v) > 4.0f) {
          fail("ParseError", "impulse response sample outside sanity bounds");
        }
      }
    }
  }
};

// Area-weighted Eyring reverberation time per band:
//   RT60_b = 0.161 V / (-S ln(1 - mean_alpha_b))
// with the mean absorption clamped to [0.01, 0.99] before the logarithm and
// the result clamped to [0.01, 10] s.
inline BandArray eyring_rt60(const ShoeboxModel& shoebox,
                             const std::array<AbsorptionSpectrum, kNumFaces>&
                                 face_absorptions) {
  const double volume = shoebox.volume();
  if (!(volume > 0.0)) {
    fail("InvalidGeometry", "Eyring model requires positive room volume");
  }
  const auto areas = shoebox.face_areas();
  const double total_area = shoebox.total_area();

  BandArray rt60;
  for (int b = 0; b < kNumBands; ++b) {
    double absorbing_area = 0.0;
    for (int f = 0; f < kNumFaces; ++f) {
      absorbing_area += areas[f] * face_absorptions[f].alpha[b];
    }
    const double mean_alpha =
        std::clamp(absorbing_area / total_area, 0.01, 0.99);
    const double t = 0.161 * volume / (-total_area * std::log(1.0 - mean_alpha));
    rt60[b] = std::clamp(t, kRt60Floor, kRt60Ceiling);
  }
  return rt60;
}

// Pressure reflection amplitude of a face per band, sqrt(1 - alpha).
inline std::array<BandArray, kNumFaces> reflection_spectra(
    const std::array<AbsorptionSpectrum, kNumFaces>& face_absorptions) {
  std::array<BandArray, kNumFaces> r;
  for (int f = 0; f < kNumFaces; ++f) {
    for (int b = 0; b < kNumBands; ++b) {
      r[f][b] = std::sqrt(std::max(0.0, 1.0 - face_absorptions[f].alpha[b]));
    }
  }
  return r;
}

namespace ism_detail {

// 1-D mirror lattice: index i maps the source coordinate u (relative to the
// min bound) to  i L + u  for even i and  (i + 1) L - u  for odd i. The
// bounce counts along the axis are |m - q| on the min face and |m| on the
// max face with i = 2m - q, q = i mod 2; they always sum to |i|.
struct AxisImage {
  double coordinate;
  int min_hits;
  int max_hits;
};

inline AxisImage axis_image(int i, double u, double extent) {
  const int q = ((i % 2) + 2) % 2;
  const int m = (i + q) / 2;
  AxisImage img;
  img.coordinate = (q == 0) ? i * extent + u : (i + 1) * extent - u;
  img.min_hits = std::abs(m - q);
  img.max_hits = std::abs(m);
  return img;
}

}  // namespace ism_detail

// Enumerates mirror images (i, j, k) with 1 <= |i|+|j|+|k| <= max_order for
// a source strictly inside the shoebox. Source pose is room-local.
inline std::vector<ImageSource> compute_image_sources(
    const ShoeboxModel& shoebox, const Pose& source, int max_order,
    const std::array<BandArray, kNumFaces>& face_reflection) {
  if (max_order < 0 || max_order > kMaxImageSourceOrder) {
    fail("InvalidScene", "image source order must lie in [0, " +
                             std::to_string(kMaxImageSourceOrder) + "]");
  }
  if (!shoebox.contains_local(source.position, -1e-9)) {
    fail("SourceOutsideRoom", "image sources require the source inside the box");
  }

  const Vec3 dims = shoebox.dimensions();
  const Vec3 rel = source.position - shoebox.min_corner;

  std::vector<ImageSource> images;
  for (int i = -max_order; i <= max_order; ++i) {
    for (int j = -max_order; j <= max_order; ++j) {
      for (int k = -max_order; k <= max_order; ++k) {
        const int order = std::abs(i) + std::abs(j) + std::abs(k);
        if (order < 1 || order > max_order) continue;
        const std::array<int, 3> idx = {i, j, k};
        ImageSource img;
        img.lattice_index = idx;
        img.order = order;
        img.amplitude.fill(1.0);
        for (int axis = 0; axis < 3; ++axis) {
          const auto ai =
              ism_detail::axis_image(idx[axis], rel[axis], dims[axis]);
          img.position[axis] = shoebox.min_corner[axis] + ai.coordinate;
          const BandArray& r_min = face_reflection[axis * 2];
          const BandArray& r_max = face_reflection[axis * 2 + 1];
          for (int b = 0; b < kNumBands; ++b) {
            img.amplitude[b] *= std::pow(r_min[b], ai.min_hits) *
                                std::pow(r_max[b], ai.max_hits);
          }
        }
        images.push_back(img);
      }
    }
  }
  return images;
}

// Converts image sources into listener-relative reflection taps. Early
// reflections are only rendered when the listener is inside the box; the
// result is empty otherwise.
inline std::vector<ReflectionTap> synthesize_early(
    std::span<const ImageSource> images, const Pose& listener,
    const ShoeboxModel& shoebox, double reflection_gain,
    double speed_of_sound = kDefaultSpeedOfSound) {
  std::vector<ReflectionTap> taps;
  if (!shoebox.contains_local(listener.position)) return taps;

  taps.reserve(images.size());
  for (const ImageSource& img : images) {
    const Vec3 diff = img.position - listener.position;
    const double distance = diff.norm();
    ReflectionTap tap;
    tap.delay = distance / speed_of_sound;
    tap.direction = distance > 1e-12 ? diff / distance : Vec3{1.0, 0.0, 0.0};
    const double spread = 1.0 / std::max(distance, kMinSourceDistance);
    for (int b = 0; b < kNumBands; ++b) {
      tap.amplitude[b] = reflection_gain * img.amplitude[b] * spread;
    }
    taps.push_back(tap);
  }
  return taps;
}

// Applies the scene parameter refinement to a baseline RT60 spectrum:
//   RT60'_b = clamp(RT60_b * modulator * tilt_b, 0.01, 10)
// where tilt_b = 1 + brightness * log2(f_b / 1 kHz) / 3.5 anchors to 1 at
// 1 kHz and spans the 3.5 octaves up to 8 kHz.
inline BandArray refine_rt60(const BandArray& baseline, double rt_modulator,
                             double reverb_brightness) {
  BandArray out;
  for (int b = 0; b < kNumBands; ++b) {
    const double tilt =
        1.0 + reverb_brightness * std::log2(kBandCenters[b] / 1000.0) / 3.5;
    out[b] = std::clamp(baseline[b] * rt_modulator * tilt, kRt60Floor,
                        kRt60Ceiling);
  }
  return out;
}

// Spectrally shaped late tail: per band, seeded noise band-limited by the
// analysis bank, multiplied by exp(-6.91 (t - onset) / RT60_b) from the
// onset, then summed and scaled so the buffer's total energy equals gain^2
// (the direct path carries unit energy by convention).
inline std::vector<float> synthesize_late(const LateReverbSpec& spec,
                                          double length_seconds,
                                          double sample_rate,
                                          const OctaveFilterBank& bank) {
  if (!(length_seconds >= spec.onset) || !(length_seconds > 0.0)) {
    fail("InvalidLength", "late tail length must cover the onset");
  }
  for (double t : spec.rt60) {
    if (!(t >= kRt60Floor && t <= kRt60Ceiling)) {
      fail("InvalidLength", "late RT60 outside [0.01, 10] s");
    }
  }

  const size_t n = static_cast<size_t>(std::lround(length_seconds * sample_rate));
  std::vector<float> out(n, 0.0f);
  if (spec.gain <= 0.0) return out;

  const size_t onset_sample =
      static_cast<size_t>(std::lround(spec.onset * sample_rate));
  std::vector<double> sum(n, 0.0);
  std::vector<double> noise(n);
  std::vector<double> sq(n + 1, 0.0);
  for (int b = 0; b < kNumBands; ++b) {
    Rng rng(spec.seed * 0x9e3779b97f4a7c15ULL + 0x1000003 * (b + 1));
    for (size_t i = 0; i < n; ++i) noise[i] = rng.gaussian();
    std::vector<double> band =
        bank.band_filter(b, std::span<const double>(noise));

    // Flatten the filtered noise's own short-time envelope so the imposed
    // decay is the only level contour left; narrow bands otherwise carry
    // slow level flutter that shows up as decay-time jitter.
    for (size_t i = 0; i < n; ++i) sq[i + 1] = sq[i] + band[i] * band[i];
    const size_t half = std::max<size_t>(
        32, static_cast<size_t>(std::lround(2.83 * sample_rate / kBandCenters[b])));
    const double floor_rms = std::sqrt(sq[n] / static_cast<double>(n)) * 1e-4;
    for (size_t i = 0; i < n; ++i) {
      const size_t lo = i > half ? i - half : 0;
      const size_t hi = std::min(n, i + half + 1);
      const double rms =
          std::sqrt((sq[hi] - sq[lo]) / static_cast<double>(hi - lo));
      band[i] /= std::max(rms, floor_rms);
    }

    // Unit tail energy per band before the envelope so longer-decaying
    // bands naturally carry more energy.
    double band_energy = 0.0;
    for (size_t i = onset_sample; i < n; ++i) band_energy += band[i] * band[i];
    if (band_energy <= 0.0) continue;
    const double norm = 1.0 / std::sqrt(band_energy);
    const double rate = kDecayConstant / spec.rt60[b];
    for (size_t i = onset_sample; i < n; ++i) {
      const double t = (static_cast<double>(i) - static_cast<double>(onset_sample)) /
                       sample_rate;
      sum[i] += band[i] * norm * std::exp(-rate * t);
    }
  }

  double energy = 0.0;
  for (double v : sum) energy += v * v;
  if (energy <= 0.0) return out;
  const double scale = spec.gain / std::sqrt(energy);
  for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(sum[i] * scale);
  return out;
}

// Assembles the final impulse response. The direct tap lands broadband at
// its rounded delay; early taps are rendered per band through the analysis
// bank and placed at their rounded delays; late buffers are added from the
// onset (one per output channel, direct/early duplicated across channels).
inline RoomImpulseResponse compose_rir(
    const std::optional<DirectTap>& direct, std::span<const ReflectionTap> early,
    std::span<const std::vector<float>> late_channels, double late_onset,
    double sample_rate, int channels, const OctaveFilterBank& bank) {
  if (channels < 1 || channels > 2) {
    fail("ParseError", "impulse response channel count must be 1 or 2");
  }
  if (!late_channels.empty() &&
      late_channels.size() != static_cast<size_t>(channels)) {
    fail("ParseError", "late buffer count must match channel count");
  }

  const auto to_sample = [sample_rate](double seconds) {
    return static_cast<long>(std::lround(seconds * sample_rate));
  };

  long direct_sample = direct ? to_sample(direct->delay) : 0;
  long last_early_sample = 0;
  for (const ReflectionTap& tap : early) {
    last_early_sample = std::max(last_early_sample, to_sample(tap.delay));
  }
  const long onset_sample = late_channels.empty() ? 0 : to_sample(late_onset);
  const size_t late_len = late_channels.empty() ? 0 : late_channels[0].size();

  size_t length = 1;
  if (direct) length = std::max<size_t>(length, direct_sample + 1);
  if (!early.empty()) {
    // Leave room for the zero-phase band filters to ring out past the last
    // tap; the slowest (62.5 Hz) band settles well inside 0.2 s.
    const long ring = std::lround(0.2 * sample_rate);
    length = std::max<size_t>(length, last_early_sample + 1 + ring);
  }
  if (late_len > 0) length = std::max<size_t>(length, onset_sample + late_len);

  std::vector<float> mono(length, 0.0f);
  if (direct) {
    mono[direct_sample] += static_cast<float>(direct->amplitude);
  }
  if (!early.empty()) {
    std::vector<double> train(length, 0.0);
    for (int b = 0; b < kNumBands; ++b) {
      std::fill(train.begin(), train.end(), 0.0);
      bool any = false;
      for (const ReflectionTap& tap : early) {
        if (tap.amplitude[b] == 0.0) continue;
        train[to_sample(tap.delay)] += tap.amplitude[b];
        any = true;
      }
      if (!any) continue;
      const std::vector<double> band =
          bank.band_filter(b, std::span<const double>(train));
      for (size_t i = 0; i < length; ++i) {
        mono[i] += static_cast<float>(band[i]);
      }
    }
  }

  RoomImpulseResponse rir;
  rir.sample_rate = sample_rate;
  rir.channels = channels;
  rir.direct_end = direct ? direct_sample : 0;
  rir.early_end = early.empty() ? rir.direct_end : last_early_sample;
  rir.late_onset = late_len > 0 ? onset_sample : rir.early_end;
  rir.samples.assign(channels, mono);
  for (int ch = 0; ch < channels && late_len > 0; ++ch) {
    const std::vector<float>& late = late_channels[ch];
    for (size_t i = 0; i < late.size(); ++i) {
      rir.samples[ch][onset_sample + i] += late[i];
    }
  }
  return rir;
}

inline DirectTap make_direct_tap(const Vec3& source, const Vec3& listener,
                                 double speed_of_sound = kDefaultSpeedOfSound) {
  const double distance = (source - listener).norm();
  DirectTap tap;
  tap.delay = distance / speed_of_sound;
  tap.amplitude = 1.0 / std::max(distance, kMinSourceDistance);
  return tap;
}

// Perceptual mixing-time rule: the tail starts 80 ms after the direct sound
// or 5 ms after the last early tap, whichever is later.
inline double late_onset_seconds(const DirectTap& direct,
                                 std::span<const ReflectionTap> early) {
  double last_tap = direct.delay;
  for (const ReflectionTap& tap : early) last_tap = std::max(last_tap, tap.delay);
  return std::max(direct.delay + 0.080, last_tap + 0.005);
}

}  // namespace sceneverb
