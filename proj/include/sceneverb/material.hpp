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
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sceneverb/common.hpp"
#include "sceneverb/geometry.hpp"

namespace sceneverb {

// Nine observable surface classes plus the reserved fallback spectrum used
// for faces nothing has been observed on yet.
enum class MaterialClass : int {
  kConcreteBrick = 0,
  kGlass,
  kWoodPanel,
  kCarpet,
  kHeavyCurtain,
  kPlasterDrywall,
  kAcousticTile,
  kMetal,
  kOther,
  kDefaultReflective,
};

inline constexpr int kNumMaterialClasses = 10;

inline const char* to_string(MaterialClass m) {
  switch (m) {
    case MaterialClass::kConcreteBrick: return "concrete_brick";
    case MaterialClass::kGlass: return "glass";
    case MaterialClass::kWoodPanel: return "wood_panel";
    case MaterialClass::kCarpet: return "carpet";
    case MaterialClass::kHeavyCurtain: return "heavy_curtain";
    case MaterialClass::kPlasterDrywall: return "plaster_drywall";
    case MaterialClass::kAcousticTile: return "acoustic_tile";
    case MaterialClass::kMetal: return "metal";
    case MaterialClass::kOther: return "other";
    case MaterialClass::kDefaultReflective: return "default_reflective";
  }
  return "unknown";
}

inline MaterialClass parse_material_class(const std::string& name) {
  for (int i = 0; i < kNumMaterialClasses; ++i) {
    const auto m = static_cast<MaterialClass>(i);
    if (name == to_string(m)) return m;
  }
  fail("ParseError", "unknown material class '" + name + "'");
}

// Per-octave-band energy absorption coefficients.
struct AbsorptionSpectrum {
  BandArray alpha = {};

  void validate() const {
    for (double a : alpha) {
      if (!(a >= 0.0 && a <= 1.0)) {
        fail("ParseError", "absorption coefficient outside [0, 1]");
      }
    }
  }
};

using MaterialLibrary = std::array<AbsorptionSpectrum, kNumMaterialClasses>;

inline const AbsorptionSpectrum& library_spectrum(const MaterialLibrary& lib,
                                                  MaterialClass m) {
  return lib[static_cast<int>(m)];
}

// Published octave-band absorption values for representative indoor
// surfaces, in band order 62.5 Hz .. 8 kHz.
inline MaterialLibrary default_material_library() {
  MaterialLibrary lib;
  auto set = [&lib](MaterialClass m, BandArray a) {
    lib[static_cast<int>(m)].alpha = a;
  };
  set(MaterialClass::kConcreteBrick,
      {0.030, 0.030, 0.030, 0.030, 0.040, 0.050, 0.070, 0.140});
  set(MaterialClass::kGlass,
      {0.169, 0.180, 0.060, 0.040, 0.030, 0.020, 0.020, 0.040});
  set(MaterialClass::kWoodPanel,
      {0.280, 0.280, 0.220, 0.170, 0.090, 0.100, 0.110, 0.220});
  set(MaterialClass::kCarpet,
      {0.020, 0.020, 0.060, 0.140, 0.370, 0.600, 0.650, 0.700});
  set(MaterialClass::kHeavyCurtain,
      {0.106, 0.140, 0.350, 0.550, 0.720, 0.700, 0.650, 1.000});
  set(MaterialClass::kPlasterDrywall,
      {0.012, 0.013, 0.015, 0.020, 0.030, 0.040, 0.050, 0.100});
  set(MaterialClass::kAcousticTile,
      {0.675, 0.700, 0.660, 0.720, 0.920, 0.880, 0.750, 1.000});
  set(MaterialClass::kMetal,
      {0.035, 0.040, 0.040, 0.050, 0.050, 0.050, 0.070, 0.090});
  set(MaterialClass::kOther,
      {0.040, 0.040, 0.050, 0.060, 0.070, 0.080, 0.080, 0.100});
  set(MaterialClass::kDefaultReflective,
      {0.050, 0.050, 0.050, 0.050, 0.050, 0.050, 0.050, 0.050});
  return lib;
}

// Tabular library format: one row per class, name followed by 8 absorption
// values in band order. '#' starts a comment. Every class must appear
// exactly once; malformed rows are hard errors.
inline MaterialLibrary parse_material_library(std::istream& in) {
  MaterialLibrary lib;
  std::array<bool, kNumMaterialClasses> seen = {};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string name;
    if (!(row >> name)) continue;
    const MaterialClass m = parse_material_class(name);
    if (seen[static_cast<int>(m)]) {
      fail("ParseError", "duplicate material row '" + name + "' at line " +
                             std::to_string(line_no));
    }
    AbsorptionSpectrum s;
    for (int b = 0; b < kNumBands; ++b) {
      if (!(row >> s.alpha[b])) {
        fail("ParseError", "material row '" + name + "' needs " +
                               std::to_string(kNumBands) + " values (line " +
                               std::to_string(line_no) + ")");
      }
    }
    double extra;
    if (row >> extra) {
      fail("ParseError", "material row '" + name + "' has trailing values");
    }
    s.validate();
    lib[static_cast<int>(m)] = s;
    seen[static_cast<int>(m)] = true;
  }
  for (int i = 0; i < kNumMaterialClasses; ++i) {
    if (!seen[i]) {
      fail("ParseError", std::string("material library is missing '") +
                             to_string(static_cast<MaterialClass>(i)) + "'");
    }
  }
  return lib;
}

inline std::string format_material_library(const MaterialLibrary& lib) {
  std::ostringstream out;
  out << "# material";
  for (double f : kBandCenters) out << " " << f;
  out << "\n";
  out.setf(std::ios::fixed);
  out.precision(3);
  for (int i = 0; i < kNumMaterialClasses; ++i) {
    out << to_string(static_cast<MaterialClass>(i));
    for (double a : lib[i].alpha) out << " " << a;
    out << "\n";
  }
  return out.str();
}

// One material seen on one shoebox face in one frame. `pixel_fraction` is
// that label's share of the face's projected pixels and `frame_weight` the
// face's projected pixel count (the evidence the frame carries).
struct MaterialObservation {
  int face_id = 0;
  MaterialClass material = MaterialClass::kOther;
  double pixel_fraction = 0.0;
  double confidence = 0.0;
  double timestamp = 0.0;
  double frame_weight = 1.0;
};

struct ProfileEntry {
  MaterialClass material;
  double area_ratio;
  double confidence;
};

// Running material distribution for one face: up to ten materials with
// normalized area ratios and evidence-weighted confidences.
class SurfaceMaterialProfile {
 public:
  static constexpr int kMaxEntries = 10;

  SurfaceMaterialProfile() = default;
  explicit SurfaceMaterialProfile(int face_id) : face_id_(face_id) {}

  int face_id() const { return face_id_; }
  bool empty() const { return accum_.empty(); }
  double total_weight() const { return total_weight_; }

  // Seeds a resolved entry directly (scene files carry already-aggregated
  // distributions).
  void set_entry(MaterialClass m, double area_ratio, double confidence) {
    Accum& a = accum_[m];
    a.ratio_weighted = area_ratio;
    a.conf_weighted = confidence;
    a.conf_weight = 1.0;
    total_weight_ = std::max(total_weight_, 1.0);
    enforce_cap();
  }

  std::vector<ProfileEntry> entries() const {
    std::vector<ProfileEntry> out;
    if (accum_.empty() || total_weight_ <= 0.0) return out;
    double ratio_sum = 0.0;
    for (const auto& [m, a] : accum_) ratio_sum += a.ratio_weighted;
    if (ratio_sum <= 0.0) return out;
    for (const auto& [m, a] : accum_) {
      const double conf =
          a.conf_weight > 0.0 ? a.conf_weighted / a.conf_weight : 0.0;
      out.push_back({m, a.ratio_weighted / ratio_sum, conf});
    }
    return out;
  }

  // Folds one frame's observations for this face into the running averages.
  // Materials absent from a frame average toward zero area; confidence only
  // aggregates over frames where the material was actually seen.
  void update(std::span<const MaterialObservation> observations) {
    if (observations.empty()) return;
    double frame_weight = 0.0;
    for (const MaterialObservation& o : observations) {
      if (o.face_id != face_id_) {
        fail("FaceMismatch", "observation for face " +
                                 std::to_string(o.face_id) +
                                 " applied to profile of face " +
                                 std::to_string(face_id_));
      }
      frame_weight = std::max(frame_weight, o.frame_weight);
    }
    if (frame_weight <= 0.0) return;

    total_weight_ += frame_weight;
    for (const MaterialObservation& o : observations) {
      Accum& a = accum_[o.material];
      a.ratio_weighted += frame_weight * o.pixel_fraction;
      a.conf_weighted += frame_weight * o.confidence;
      a.conf_weight += frame_weight;
    }
    enforce_cap();
  }

 private:
  struct Accum {
    double ratio_weighted = 0.0;
    double conf_weighted = 0.0;
    double conf_weight = 0.0;
  };

  void enforce_cap() {
    while (static_cast<int>(accum_.size()) > kMaxEntries) {
      auto lowest = accum_.begin();
      double lowest_score = prominence(lowest->second);
      for (auto it = std::next(accum_.begin()); it != accum_.end(); ++it) {
        const double score = prominence(it->second);
        if (score < lowest_score) {
          lowest = it;
          lowest_score = score;
        }
      }
      accum_.erase(lowest);
    }
  }

  double prominence(const Accum& a) const {
    const double conf = a.conf_weight > 0.0 ? a.conf_weighted / a.conf_weight : 0.0;
    return a.ratio_weighted * conf;
  }

  int face_id_ = 0;
  double total_weight_ = 0.0;
  std::map<MaterialClass, Accum> accum_;
};

inline SurfaceMaterialProfile update_profile(
    const SurfaceMaterialProfile& profile,
    std::span<const MaterialObservation> observations) {
  SurfaceMaterialProfile next = profile;
  next.update(observations);
  return next;
}

// Blended absorption for one face: per band the entry spectra averaged with
// weights area_ratio * confidence. Empty profiles fall back to the reserved
// reflective spectrum.
inline AbsorptionSpectrum blend_absorption(const SurfaceMaterialProfile& profile,
                                           const MaterialLibrary& library) {
  const auto entries = profile.entries();
  if (entries.empty()) {
    return library_spectrum(library, MaterialClass::kDefaultReflective);
  }
  AbsorptionSpectrum out;
  double wsum = 0.0;
  BandArray acc = {};
  for (const ProfileEntry& e : entries) {
    if (static_cast<int>(e.material) < 0 ||
        static_cast<int>(e.material) >= kNumMaterialClasses) {
      fail("UnknownMaterial", "profile entry outside the material library");
    }
    const double w = e.area_ratio * e.confidence;
    const AbsorptionSpectrum& s = library_spectrum(library, e.material);
    for (int b = 0; b < kNumBands; ++b) acc[b] += w * s.alpha[b];
    wsum += w;
  }
  if (wsum <= 0.0) {
    return library_spectrum(library, MaterialClass::kDefaultReflective);
  }
  for (int b = 0; b < kNumBands; ++b) out.alpha[b] = acc[b] / wsum;
  return out;
}

// Pinhole camera model; +z forward, +x right, +y down in camera space.
struct PinholeIntrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0.0 || fy <= 0.0 || width <= 0 || height <= 0) {
      fail("ParseError", "invalid pinhole intrinsics");
    }
  }
};

// Dense material labels with per-pixel confidence; label -1 marks pixels the
// segmenter left unassigned.
struct SegmentationFrame {
  static constexpr int kUnlabeled = -1;
  int width = 0, height = 0;
  std::vector<int> labels;        // MaterialClass index or kUnlabeled
  std::vector<double> confidence; // same layout as labels
};

// Projects shoebox faces into the camera and aggregates the label map per
// face: one observation per (face, material) with that material's pixel
// share and mean confidence. Occlusion between faces resolves to the nearest
// face along each pixel ray; back-facing faces and rays that miss every face
// contribute nothing.
inline std::vector<MaterialObservation> project_face_coverage(
    const ShoeboxModel& shoebox, const Pose& camera_pose,
    const PinholeIntrinsics& intrinsics, const SegmentationFrame& segmentation,
    double timestamp = 0.0) {
  intrinsics.validate();
  if (segmentation.width != intrinsics.width ||
      segmentation.height != intrinsics.height ||
      segmentation.labels.size() !=
          static_cast<size_t>(segmentation.width) * segmentation.height ||
      segmentation.confidence.size() != segmentation.labels.size()) {
    fail("ParseError", "segmentation dimensions do not match intrinsics");
  }

  struct FaceTally {
    long total_pixels = 0;
    std::map<int, std::pair<long, double>> per_label;  // pixels, conf sum
  };
  std::array<FaceTally, kNumFaces> tally;

  const Vec3 origin = shoebox.to_local(camera_pose.position);
  const Mat3 world_to_local = Mat3::rotation_z(-shoebox.frame_yaw);

  for (int v = 0; v < segmentation.height; ++v) {
    for (int u = 0; u < segmentation.width; ++u) {
      const Vec3 dir_cam{(u + 0.5 - intrinsics.cx) / intrinsics.fx,
                         (v + 0.5 - intrinsics.cy) / intrinsics.fy, 1.0};
      const Vec3 dir =
          world_to_local * camera_pose.orientation.rotate(dir_cam.normalized());

      int best_face = -1;
      double best_t = 0.0;
      for (int face = 0; face < kNumFaces; ++face) {
        const int axis = face_axis(face);
        const double inward = face_is_min(face) ? 1.0 : -1.0;
        // Front-facing means the ray approaches against the inward normal.
        if (dir[axis] * inward >= -1e-12) continue;
        const double t = (shoebox.face_bound(face) - origin[axis]) / dir[axis];
        if (t <= 1e-9) continue;
        const Vec3 hit = origin + dir * t;
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        const double slack = 1e-9;
        if (hit[a1] < shoebox.min_corner[a1] - slack ||
            hit[a1] > shoebox.max_corner[a1] + slack ||
            hit[a2] < shoebox.min_corner[a2] - slack ||
            hit[a2] > shoebox.max_corner[a2] + slack) {
          continue;
        }
        if (best_face < 0 || t < best_t) {
          best_face = face;
          best_t = t;
        }
      }
      if (best_face < 0) continue;

      FaceTally& ft = tally[best_face];
      ++ft.total_pixels;
      const size_t idx = static_cast<size_t>(v) * segmentation.width + u;
      const int label = segmentation.labels[idx];
      if (label == SegmentationFrame::kUnlabeled) continue;
      if (label < 0 || label >= kNumMaterialClasses) {
        fail("ParseError", "segmentation label out of range");
      }
      auto& cell = ft.per_label[label];
      ++cell.first;
      cell.second += segmentation.confidence[idx];
    }
  }

  std::vector<MaterialObservation> out;
  for (int face = 0; face < kNumFaces; ++face) {
    const FaceTally& ft = tally[face];
    if (ft.total_pixels == 0) continue;
    for (const auto& [label, cell] : ft.per_label) {
      MaterialObservation o;
      o.face_id = face;
      o.material = static_cast<MaterialClass>(label);
      o.pixel_fraction =
          static_cast<double>(cell.first) / static_cast<double>(ft.total_pixels);
      o.confidence = cell.second / static_cast<double>(cell.first);
      o.timestamp = timestamp;
      o.frame_weight = static_cast<double>(ft.total_pixels);
      out.push_back(o);
    }
  }
  return out;
}

}  // namespace sceneverb
