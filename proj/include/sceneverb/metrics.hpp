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
#include <limits>
#include <span>
#include <vector>

#include "sceneverb/common.hpp"
#include "sceneverb/octave_bank.hpp"

namespace sceneverb {

// Backward-integrated energy decay in dB, normalized so level(0) = 0. The
// curve ends at the last sample with positive remaining tail energy, which
// keeps it finite and monotone non-increasing by construction.
struct DecayCurve {
  double sample_rate = 0.0;
  std::vector<double> level_db;

  double time_at(size_t i) const { return static_cast<double>(i) / sample_rate; }
};

template <typename T>
inline DecayCurve schroeder_decay(std::span<const T> band_rir,
                                  double sample_rate) {
  long double total = 0.0L;
  for (const T& v : band_rir) {
    const long double s = static_cast<long double>(v);
    total += s * s;
  }
  if (!(total > 0.0L) || !std::isfinite(static_cast<double>(total))) {
    fail("ZeroEnergy", "decay analysis requires positive finite energy");
  }

  DecayCurve curve;
  curve.sample_rate = sample_rate;
  curve.level_db.reserve(band_rir.size());
  long double tail = total;
  for (size_t i = 0; i < band_rir.size(); ++i) {
    if (tail <= 0.0L) break;
    const double ratio = static_cast<double>(tail / total);
    if (ratio <= 0.0) break;
    curve.level_db.push_back(10.0 * std::log10(ratio));
    const long double s = static_cast<long double>(band_rir[i]);
    tail -= s * s;
  }
  if (!curve.level_db.empty()) curve.level_db[0] = 0.0;
  return curve;
}

enum class DecayEstimator { kT30, kT20, kEdt };

struct DecayTimeEstimate {
  double seconds = 0.0;
  bool valid = false;
  DecayEstimator method = DecayEstimator::kT30;
};

namespace metrics_detail {

// Least-squares slope (dB per second) of curve samples whose level lies in
// [lo_db, hi_db], bounded by the first crossings of the endpoints.
inline bool fit_slope(const DecayCurve& curve, double hi_db, double lo_db,
                      double* slope_out) {
  size_t start = curve.level_db.size(), stop = curve.level_db.size();
  for (size_t i = 0; i < curve.level_db.size(); ++i) {
    if (start == curve.level_db.size() && curve.level_db[i] <= hi_db) start = i;
    if (curve.level_db[i] <= lo_db) {
      stop = i;
      break;
    }
  }
  if (start >= curve.level_db.size() || stop >= curve.level_db.size() ||
      stop <= start) {
    return false;
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(stop - start + 1);
  for (size_t i = start; i <= stop; ++i) {
    const double x = curve.time_at(i);
    const double y = curve.level_db[i];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) return false;
  const double slope = (n * sxy - sx * sy) / denom;
  if (!(slope < 0.0)) return false;
  *slope_out = slope;
  return true;
}

}  // namespace metrics_detail

// Reverberation time from a decay curve: line fit over [-5, -35] dB (T30)
// extrapolated to 60 dB, falling back to [-5, -25] (T20) when the curve
// never reaches -35 dB, invalid when it never reaches -25 dB.
inline DecayTimeEstimate rt60_from_decay(const DecayCurve& curve) {
  DecayTimeEstimate est;
  double slope = 0.0;
  if (metrics_detail::fit_slope(curve, -5.0, -35.0, &slope)) {
    est.seconds = -60.0 / slope;
    est.valid = true;
    est.method = DecayEstimator::kT30;
    return est;
  }
  if (metrics_detail::fit_slope(curve, -5.0, -25.0, &slope)) {
    est.seconds = -60.0 / slope;
    est.valid = true;
    est.method = DecayEstimator::kT20;
    return est;
  }
  est.valid = false;
  return est;
}

// Early decay time: line fit over [0, -10] dB extrapolated to 60 dB; invalid
// when the curve never reaches -10 dB.
inline DecayTimeEstimate edt_from_decay(const DecayCurve& curve) {
  DecayTimeEstimate est;
  est.method = DecayEstimator::kEdt;
  double slope = 0.0;
  if (metrics_detail::fit_slope(curve, 0.0, -10.0, &slope)) {
    est.seconds = -60.0 / slope;
    est.valid = true;
  }
  return est;
}

// Per-band RT60/EDT of one impulse response.
struct BandMetrics {
  BandArray rt60 = {};
  BandArray edt = {};
  std::array<bool, kNumBands> rt60_valid = {};
  std::array<bool, kNumBands> edt_valid = {};

  // Reference metrics from a plain RT60 table (no waveform, so no EDT).
  static BandMetrics from_rt60(const BandArray& rt60) {
    BandMetrics m;
    m.rt60 = rt60;
    for (int b = 0; b < kNumBands; ++b) m.rt60_valid[b] = rt60[b] > 0.0;
    return m;
  }
};

template <typename T>
inline BandMetrics measure_band_metrics(std::span<const T> rir,
                                        const OctaveFilterBank& bank) {
  BandMetrics out;
  for (int b = 0; b < kNumBands; ++b) {
    const std::vector<double> band = bank.band_filter(b, rir);
    double energy = 0.0;
    for (double v : band) energy += v * v;
    if (!(energy > 0.0)) continue;
    const DecayCurve curve =
        schroeder_decay(std::span<const double>(band), bank.sample_rate());
    const DecayTimeEstimate rt = rt60_from_decay(curve);
    const DecayTimeEstimate edt = edt_from_decay(curve);
    out.rt60[b] = rt.seconds;
    out.rt60_valid[b] = rt.valid;
    out.edt[b] = edt.seconds;
    out.edt_valid[b] = edt.valid;
  }
  return out;
}

struct MetricErrors {
  double mae = 0.0;
  double rmse = 0.0;
  long count = 0;
};

// MAE/RMSE between estimated and reference band metrics, pooled over all
// valid (scene, band) pairs and reported per band. Pairs where either side
// is invalid are excluded.
struct ErrorSummary {
  MetricErrors rt60;
  MetricErrors edt;
  std::array<MetricErrors, kNumBands> rt60_per_band;
  std::array<MetricErrors, kNumBands> edt_per_band;
};

inline ErrorSummary error_summary(std::span<const BandMetrics> estimates,
                                  std::span<const BandMetrics> ground_truth) {
  if (estimates.size() != ground_truth.size()) {
    fail("MissingPair", "estimate and ground-truth sets differ in size");
  }
  struct Acc {
    double abs = 0.0;
    double sq = 0.0;
    long n = 0;
    void add(double err) {
      abs += std::abs(err);
      sq += err * err;
      ++n;
    }
    MetricErrors resolve() const {
      MetricErrors m;
      m.count = n;
      if (n > 0) {
        m.mae = abs / static_cast<double>(n);
        m.rmse = std::sqrt(sq / static_cast<double>(n));
      }
      return m;
    }
  };
  Acc rt_pool, edt_pool;
  std::array<Acc, kNumBands> rt_band, edt_band;

  for (size_t s = 0; s < estimates.size(); ++s) {
    for (int b = 0; b < kNumBands; ++b) {
      if (estimates[s].rt60_valid[b] && ground_truth[s].rt60_valid[b]) {
        const double err = estimates[s].rt60[b] - ground_truth[s].rt60[b];
        rt_pool.add(err);
        rt_band[b].add(err);
      }
      if (estimates[s].edt_valid[b] && ground_truth[s].edt_valid[b]) {
        const double err = estimates[s].edt[b] - ground_truth[s].edt[b];
        edt_pool.add(err);
        edt_band[b].add(err);
      }
    }
  }
  if (rt_pool.n == 0 && edt_pool.n == 0) {
    fail("NoValidPairs", "no valid (scene, band) pairs to compare");
  }

  ErrorSummary out;
  out.rt60 = rt_pool.resolve();
  out.edt = edt_pool.resolve();
  for (int b = 0; b < kNumBands; ++b) {
    out.rt60_per_band[b] = rt_band[b].resolve();
    out.edt_per_band[b] = edt_band[b].resolve();
  }
  return out;
}

}  // namespace sceneverb
