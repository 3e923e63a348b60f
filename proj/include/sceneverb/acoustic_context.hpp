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
#include <functional>
#include <istream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sceneverb/common.hpp"
#include "sceneverb/geometry.hpp"
#include "sceneverb/material.hpp"
#include "sceneverb/rir_synthesis.hpp"

namespace sceneverb {

enum class SceneType : int {
  kConferenceRoom = 0,
  kLivingRoom,
  kBedroom,
  kOutdoor,
  kOther,
};

inline constexpr int kNumSceneTypes = 5;

inline const char* to_string(SceneType s) {
  switch (s) {
    case SceneType::kConferenceRoom: return "conference_room";
    case SceneType::kLivingRoom: return "living_room";
    case SceneType::kBedroom: return "bedroom";
    case SceneType::kOutdoor: return "outdoor";
    case SceneType::kOther: return "other";
  }
  return "unknown";
}

inline SceneType parse_scene_type(const std::string& name) {
  for (int i = 0; i < kNumSceneTypes; ++i) {
    const auto s = static_cast<SceneType>(i);
    if (name == to_string(s)) return s;
  }
  fail("ParseError", "unknown scene type '" + name + "'");
}

// Scene-conditioned synthesis controls: late gain relative to unit direct
// energy, a multiplier on the Eyring RT60, a high-frequency decay tilt, and
// the early-reflection gain.
struct AcousticParameterVector {
  double reverb_gain = 0.15;
  double rt_modulator = 1.0;
  double reverb_brightness = 0.0;
  double reflection_gain = 0.8;

  void validate() const {
    if (!(reverb_gain >= 0.0) || !(rt_modulator > 0.0) ||
        !(reverb_brightness >= -1.0 && reverb_brightness <= 1.0) ||
        !(reflection_gain >= 0.0) || !std::isfinite(reverb_gain) ||
        !std::isfinite(rt_modulator) || !std::isfinite(reverb_brightness) ||
        !std::isfinite(reflection_gain)) {
      fail("ParseError", "acoustic parameter vector out of range");
    }
  }

  auto tie() const {
    return std::make_tuple(reverb_gain, rt_modulator,
                           std::abs(reverb_brightness), reflection_gain);
  }
};

using SceneParameterTable = std::array<AcousticParameterVector, kNumSceneTypes>;

// Engineering defaults; calibration against measured RT60 data replaces
// them (see calibrate below).
inline SceneParameterTable default_scene_parameter_table() {
  SceneParameterTable t;
  t[static_cast<int>(SceneType::kConferenceRoom)] = {0.18, 1.0, 0.0, 0.9};
  t[static_cast<int>(SceneType::kLivingRoom)] = {0.15, 0.9, -0.1, 0.8};
  t[static_cast<int>(SceneType::kBedroom)] = {0.10, 0.7, -0.2, 0.7};
  t[static_cast<int>(SceneType::kOutdoor)] = {0.0, 1.0, 0.0, 0.2};
  t[static_cast<int>(SceneType::kOther)] = {0.15, 1.0, 0.0, 0.8};
  return t;
}

inline const AcousticParameterVector& params_for_scene(
    SceneType scene, const SceneParameterTable& table) {
  return table[static_cast<int>(scene)];
}

inline BandArray refine_rt60(const BandArray& baseline,
                             const AcousticParameterVector& params) {
  return refine_rt60(baseline, params.rt_modulator, params.reverb_brightness);
}

// Tabular table format: one row per scene type with the four parameter
// values. Every scene type must appear; that is checked at load time so
// lookups never fail.
inline SceneParameterTable parse_scene_parameter_table(std::istream& in) {
  SceneParameterTable table;
  std::array<bool, kNumSceneTypes> seen = {};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string name;
    if (!(row >> name)) continue;
    const SceneType s = parse_scene_type(name);
    if (seen[static_cast<int>(s)]) {
      fail("ParseError", "duplicate scene type row '" + name + "' at line " +
                             std::to_string(line_no));
    }
    AcousticParameterVector v;
    if (!(row >> v.reverb_gain >> v.rt_modulator >> v.reverb_brightness >>
          v.reflection_gain)) {
      fail("ParseError", "scene parameter row '" + name +
                             "' needs 4 values (line " +
                             std::to_string(line_no) + ")");
    }
    v.validate();
    table[static_cast<int>(s)] = v;
    seen[static_cast<int>(s)] = true;
  }
  for (int i = 0; i < kNumSceneTypes; ++i) {
    if (!seen[i]) {
      fail("IncompleteTable", std::string("scene parameter table missing '") +
                                  to_string(static_cast<SceneType>(i)) + "'");
    }
  }
  return table;
}

inline std::string format_scene_parameter_table(const SceneParameterTable& t) {
  std::ostringstream out;
  out << "# scene_type reverb_gain rt_modulator reverb_brightness "
         "reflection_gain\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (int i = 0; i < kNumSceneTypes; ++i) {
    const AcousticParameterVector& v = t[i];
    out << to_string(static_cast<SceneType>(i)) << " " << v.reverb_gain << " "
        << v.rt_modulator << " " << v.reverb_brightness << " "
        << v.reflection_gain << "\n";
  }
  return out.str();
}

// One calibration example: a described room with its classified type and
// measured per-band RT60.
struct CalibrationEntry {
  SceneType scene_type = SceneType::kOther;
  ShoeboxModel shoebox;
  std::array<SurfaceMaterialProfile, kNumFaces> materials;
  BandArray rt60_truth = {};
};

struct ParameterGrid {
  std::vector<double> reverb_gain;
  std::vector<double> rt_modulator;
  std::vector<double> reverb_brightness;
  std::vector<double> reflection_gain;

  size_t size() const {
    return reverb_gain.size() * rt_modulator.size() * reverb_brightness.size() *
           reflection_gain.size();
  }
};

// 7 x 11 x 5 x 5 = 1925 candidate vectors covering plausible indoor rooms.
inline ParameterGrid default_parameter_grid() {
  ParameterGrid g;
  for (int i = 0; i <= 6; ++i) g.reverb_gain.push_back(0.05 * i);
  for (int i = 0; i <= 10; ++i) g.rt_modulator.push_back(0.5 + 0.1 * i);
  for (int i = -2; i <= 2; ++i) g.reverb_brightness.push_back(0.2 * i);
  for (int i = 1; i <= 5; ++i) g.reflection_gain.push_back(0.2 * i);
  return g;
}

// Forward model handed to the calibration: per-band RT60 a parameter vector
// would produce for a described scene.
using RtSynthesizer = std::function<BandArray(const CalibrationEntry&,
                                              const AcousticParameterVector&)>;

// Predicted RT60 through the standard pipeline math: blended absorption,
// Eyring baseline, parameter refinement.
inline BandArray predict_rt60(const CalibrationEntry& entry,
                              const AcousticParameterVector& params,
                              const MaterialLibrary& library) {
  std::array<AbsorptionSpectrum, kNumFaces> absorption;
  for (int f = 0; f < kNumFaces; ++f) {
    absorption[f] = blend_absorption(entry.materials[f], library);
  }
  return refine_rt60(eyring_rt60(entry.shoebox, absorption), params);
}

// Exhaustive grid search per scene type, minimizing the mean absolute RT60
// error over that type's entries and all bands. Ties resolve to the
// lexicographically smallest (gain, modulator, |brightness|, reflection)
// vector, which also makes the search order irrelevant.
inline SceneParameterTable calibrate(std::span<const CalibrationEntry> dataset,
                                     const ParameterGrid& grid,
                                     const RtSynthesizer& synthesizer) {
  if (grid.reverb_gain.empty() || grid.rt_modulator.empty() ||
      grid.reverb_brightness.empty() || grid.reflection_gain.empty()) {
    fail("EmptyGrid", "every parameter needs at least one grid value");
  }
  std::array<std::vector<const CalibrationEntry*>, kNumSceneTypes> by_type;
  for (const CalibrationEntry& e : dataset) {
    by_type[static_cast<int>(e.scene_type)].push_back(&e);
  }
  for (int i = 0; i < kNumSceneTypes; ++i) {
    if (by_type[i].empty()) {
      fail("EmptyDataset", std::string("no calibration entries for '") +
                               to_string(static_cast<SceneType>(i)) + "'");
    }
  }

  SceneParameterTable result;
  for (int type = 0; type < kNumSceneTypes; ++type) {
    bool have_best = false;
    double best_mae = 0.0;
    AcousticParameterVector best;
    for (double gain : grid.reverb_gain) {
      for (double mod : grid.rt_modulator) {
        for (double bright : grid.reverb_brightness) {
          for (double refl : grid.reflection_gain) {
            const AcousticParameterVector candidate{gain, mod, bright, refl};
            double abs_err = 0.0;
            long n = 0;
            for (const CalibrationEntry* e : by_type[type]) {
              const BandArray predicted = synthesizer(*e, candidate);
              for (int b = 0; b < kNumBands; ++b) {
                abs_err += std::abs(predicted[b] - e->rt60_truth[b]);
                ++n;
              }
            }
            const double mae = abs_err / static_cast<double>(n);
            if (!have_best || mae < best_mae ||
                (mae == best_mae && candidate.tie() < best.tie())) {
              have_best = true;
              best_mae = mae;
              best = candidate;
            }
          }
        }
      }
    }
    result[type] = best;
  }
  return result;
}

}  // namespace sceneverb
