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

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sceneverb/acoustic_context.hpp"
#include "sceneverb/common.hpp"
#include "sceneverb/geometry.hpp"
#include "sceneverb/material.hpp"
#include "sceneverb/metrics.hpp"

namespace sceneverb {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kConfigEnvVar = "SCENEVERB_CONFIG";

namespace io_detail {

inline Json parse_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("ParseError", "cannot open '" + path + "'");
  Json j;
  try {
    f >> j;
  } catch (const Json::exception& e) {
    fail("ParseError", "'" + path + "': " + e.what());
  }
  if (!j.is_object()) fail("ParseError", "'" + path + "' must hold an object");
  if (j.value("format_version", 0) != kFormatVersion) {
    fail("ParseError", "'" + path + "' has an unsupported format_version");
  }
  return j;
}

inline Vec3 parse_vec3(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    fail("ParseError", std::string(what) + " must be a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Quat parse_quat(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 4) {
    fail("ParseError", std::string(what) + " must be a 4-element array [w,x,y,z]");
  }
  const Quat q{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
               j[3].get<double>()};
  if (std::abs(q.norm() - 1.0) > 1e-6) {
    fail("ParseError", std::string(what) + " quaternion must be unit length");
  }
  return q.normalized();
}

inline BandArray parse_bands(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != kNumBands) {
    fail("ParseError",
         std::string(what) + " must list " + std::to_string(kNumBands) +
             " per-band values");
  }
  BandArray out;
  for (int b = 0; b < kNumBands; ++b) out[b] = j[b].get<double>();
  return out;
}

inline Pose parse_pose(const Json& j, const char* what) {
  Pose p;
  p.position = parse_vec3(j.at("position"), what);
  if (j.contains("orientation")) {
    p.orientation = parse_quat(j.at("orientation"), what);
  }
  return p;
}

inline Json pose_to_json(const Pose& p) {
  return Json{{"position", {p.position.x, p.position.y, p.position.z}},
              {"orientation",
               {p.orientation.w, p.orientation.x, p.orientation.y,
                p.orientation.z}}};
}

inline ShoeboxModel parse_shoebox(const Json& j) {
  ShoeboxModel box;
  box.frame_yaw = j.value("yaw", 0.0);
  box.min_corner = parse_vec3(j.at("min_corner"), "shoebox min_corner");
  box.max_corner = parse_vec3(j.at("max_corner"), "shoebox max_corner");
  if (j.contains("face_confidence")) {
    const Json& fc = j.at("face_confidence");
    if (!fc.is_array() || fc.size() != kNumFaces) {
      fail("ParseError", "face_confidence must list 6 values");
    }
    for (int f = 0; f < kNumFaces; ++f) box.face_confidence[f] = fc[f];
  } else {
    box.face_confidence.fill(1.0);
  }
  if (!box.valid()) fail("InvalidScene", "shoebox has non-positive extent");
  return box;
}

inline Plane parse_plane(const Json& j) {
  Plane p;
  p.normal = parse_vec3(j.at("normal"), "plane normal");
  if (std::abs(p.normal.norm() - 1.0) > 1e-6) {
    fail("ParseError", "plane normal must be unit length");
  }
  p.normal = p.normal.normalized();
  p.offset = j.at("offset").get<double>();
  p.extent.center = parse_vec3(j.at("extent_center"), "plane extent_center");
  if (std::abs(p.normal.dot(p.extent.center) - p.offset) > 1e-6) {
    fail("ParseError", "plane extent_center does not lie on the plane");
  }
  if (j.contains("extent_size")) {
    const Json& s = j.at("extent_size");
    if (!s.is_array() || s.size() != 2) {
      fail("ParseError", "plane extent_size must be [width, height]");
    }
    p.extent.width = s[0].get<double>();
    p.extent.height = s[1].get<double>();
    if (p.extent.width < 0.0 || p.extent.height < 0.0) {
      fail("ParseError", "plane extent sides must be non-negative");
    }
  }
  p.confidence = j.value("confidence", 1.0);
  if (p.confidence < 0.0 || p.confidence > 1.0) {
    fail("ParseError", "plane confidence must lie in [0, 1]");
  }
  p.timestamp = j.value("t", 0.0);
  return p;
}

inline MaterialObservation parse_material_observation(const Json& j) {
  MaterialObservation o;
  o.face_id = j.at("face").get<int>();
  if (o.face_id < 0 || o.face_id >= kNumFaces) {
    fail("ParseError", "material observation face must lie in [0, 5]");
  }
  o.material = parse_material_class(j.at("material").get<std::string>());
  o.pixel_fraction = j.at("pixel_fraction").get<double>();
  o.confidence = j.at("confidence").get<double>();
  if (o.pixel_fraction < 0.0 || o.pixel_fraction > 1.0 || o.confidence < 0.0 ||
      o.confidence > 1.0) {
    fail("ParseError", "material observation values must lie in [0, 1]");
  }
  o.frame_weight = j.value("weight", 1.0);
  o.timestamp = j.value("t", 0.0);
  return o;
}

inline std::array<SurfaceMaterialProfile, kNumFaces> parse_face_materials(
    const Json& j) {
  std::array<SurfaceMaterialProfile, kNumFaces> faces;
  for (int f = 0; f < kNumFaces; ++f) faces[f] = SurfaceMaterialProfile(f);
  if (!j.is_array()) fail("ParseError", "materials must be an array of faces");
  for (const Json& fj : j) {
    const int face = fj.at("face").get<int>();
    if (face < 0 || face >= kNumFaces) {
      fail("ParseError", "material face must lie in [0, 5]");
    }
    for (const Json& ej : fj.at("entries")) {
      faces[face].set_entry(
          parse_material_class(ej.at("material").get<std::string>()),
          ej.at("area_ratio").get<double>(), ej.at("confidence").get<double>());
    }
  }
  return faces;
}

}  // namespace io_detail

// Runtime configuration. File values come from an optional JSON config
// (picked up from SCENEVERB_CONFIG when no path is given); command-line
// flags override file values.
struct Config {
  double sample_rate = 48000.0;
  int block_size = 256;
  int channels = 1;
  int max_ism_order = 2;
  double speed_of_sound = kDefaultSpeedOfSound;
  std::uint64_t seed = 1234;
  double replay_cadence_hz = 2.0;
  double rir_seconds = 0.0;  // 0 = derive from the refined RT60
  double max_rir_seconds = 8.0;
  std::string material_library_path;
  std::string scene_params_path;

  MaterialLibrary material_library = default_material_library();
  SceneParameterTable scene_params = default_scene_parameter_table();

  void validate() const {
    if (max_ism_order < 0 || max_ism_order > kMaxImageSourceOrder) {
      fail("ParseError", "max_ism_order must lie in [0, 4]");
    }
    if (!(speed_of_sound > 0.0)) {
      fail("ParseError", "speed_of_sound must be positive");
    }
    if (!(replay_cadence_hz > 0.0)) {
      fail("ParseError", "replay_cadence_hz must be positive");
    }
  }
};

inline Config load_config(const std::optional<std::string>& explicit_path) {
  Config c;
  std::string path;
  if (explicit_path) {
    path = *explicit_path;
  } else if (const char* env = std::getenv(kConfigEnvVar)) {
    path = env;
  }
  if (!path.empty()) {
    const Json j = io_detail::parse_json_file(path);
    c.sample_rate = j.value("sample_rate", c.sample_rate);
    c.block_size = j.value("block_size", c.block_size);
    c.channels = j.value("channels", c.channels);
    c.max_ism_order = j.value("max_ism_order", c.max_ism_order);
    c.speed_of_sound = j.value("speed_of_sound", c.speed_of_sound);
    c.seed = j.value("seed", c.seed);
    c.replay_cadence_hz = j.value("replay_cadence_hz", c.replay_cadence_hz);
    c.rir_seconds = j.value("rir_seconds", c.rir_seconds);
    c.max_rir_seconds = j.value("max_rir_seconds", c.max_rir_seconds);
    c.material_library_path = j.value("material_library", std::string());
    c.scene_params_path = j.value("scene_params", std::string());
  }
  if (!c.material_library_path.empty()) {
    std::ifstream f(c.material_library_path);
    if (!f) fail("ParseError", "cannot open '" + c.material_library_path + "'");
    c.material_library = parse_material_library(f);
  }
  if (!c.scene_params_path.empty()) {
    std::ifstream f(c.scene_params_path);
    if (!f) fail("ParseError", "cannot open '" + c.scene_params_path + "'");
    c.scene_params = parse_scene_parameter_table(f);
  }
  c.validate();
  return c;
}

// Offline surrogate for the perception inputs: a room described either by a
// resolved shoebox or raw planes, materials either resolved per face or as
// raw observations, plus poses and optional reference RT60.
struct SceneDescriptor {
  std::string id = "scene";
  SceneType scene_type = SceneType::kOther;
  std::optional<ShoeboxModel> shoebox;
  std::vector<Plane> planes;
  std::optional<std::array<SurfaceMaterialProfile, kNumFaces>> materials;
  std::vector<MaterialObservation> material_observations;
  Pose listener;
  std::vector<Pose> sources;
  std::optional<BandArray> ground_truth_rt60;
};

inline SceneDescriptor parse_scene(const Json& j) {
  using namespace io_detail;
  SceneDescriptor scene;
  scene.id = j.value("id", std::string("scene"));
  scene.scene_type = parse_scene_type(j.value("scene_type", std::string("other")));

  const bool has_box = j.contains("shoebox");
  const bool has_planes = j.contains("planes");
  if (has_box && has_planes) {
    fail("InvalidScene", "scene may carry a shoebox or raw planes, not both");
  }
  if (!has_box && !has_planes) {
    fail("InvalidScene", "scene needs a shoebox or raw planes");
  }
  if (has_box) scene.shoebox = parse_shoebox(j.at("shoebox"));
  if (has_planes) {
    for (const Json& pj : j.at("planes")) scene.planes.push_back(parse_plane(pj));
  }

  const bool has_materials = j.contains("materials");
  const bool has_observations = j.contains("material_observations");
  if (has_materials && has_observations) {
    fail("InvalidScene",
         "scene may carry resolved materials or raw observations, not both");
  }
  if (has_materials) scene.materials = parse_face_materials(j.at("materials"));
  if (has_observations) {
    for (const Json& oj : j.at("material_observations")) {
      scene.material_observations.push_back(parse_material_observation(oj));
    }
  }

  scene.listener = parse_pose(j.at("listener"), "listener");
  if (!j.contains("sources") || !j.at("sources").is_array() ||
      j.at("sources").empty()) {
    fail("InvalidScene", "scene needs at least one source");
  }
  for (const Json& sj : j.at("sources")) {
    scene.sources.push_back(parse_pose(sj, "source"));
  }
  if (j.contains("ground_truth_rt60")) {
    scene.ground_truth_rt60 =
        parse_bands(j.at("ground_truth_rt60"), "ground_truth_rt60");
  }
  return scene;
}

inline SceneDescriptor load_scene(const std::string& path) {
  return parse_scene(io_detail::parse_json_file(path));
}

// Time-ordered perception records for the replay harness.
struct ObservationRecord {
  enum class Kind {
    kPlane,
    kMaterial,
    kSceneType,
    kListenerPose,
    kSourcePose,
    kSegmentationFrame,
  };

  double t = 0.0;
  Kind kind = Kind::kPlane;
  Plane plane;
  MaterialObservation material;
  SceneType scene_type = SceneType::kOther;
  Pose pose;
  int source_index = 0;
  Pose camera;
  PinholeIntrinsics intrinsics;
  SegmentationFrame segmentation;
};

struct ObservationStream {
  std::vector<ObservationRecord> records;
};

inline ObservationStream parse_observation_stream(const Json& j) {
  using namespace io_detail;
  ObservationStream stream;
  double last_t = -std::numeric_limits<double>::infinity();
  for (const Json& rj : j.value("records", Json::array())) {
    ObservationRecord rec;
    rec.t = rj.at("t").get<double>();
    if (rec.t < last_t) {
      fail("StreamOrderError", "observation timestamps must be non-decreasing");
    }
    last_t = rec.t;
    const std::string kind = rj.at("kind").get<std::string>();
    if (kind == "plane") {
      rec.kind = ObservationRecord::Kind::kPlane;
      rec.plane = parse_plane(rj);
      rec.plane.timestamp = rec.t;
    } else if (kind == "material") {
      rec.kind = ObservationRecord::Kind::kMaterial;
      rec.material = parse_material_observation(rj);
      rec.material.timestamp = rec.t;
    } else if (kind == "scene_type") {
      rec.kind = ObservationRecord::Kind::kSceneType;
      rec.scene_type = parse_scene_type(rj.at("value").get<std::string>());
    } else if (kind == "listener_pose") {
      rec.kind = ObservationRecord::Kind::kListenerPose;
      rec.pose = parse_pose(rj, "listener_pose");
    } else if (kind == "source_pose") {
      rec.kind = ObservationRecord::Kind::kSourcePose;
      rec.pose = parse_pose(rj, "source_pose");
      rec.source_index = rj.value("source", 0);
    } else if (kind == "segmentation_frame") {
      rec.kind = ObservationRecord::Kind::kSegmentationFrame;
      rec.camera = parse_pose(rj.at("camera"), "segmentation camera");
      const Json& ij = rj.at("intrinsics");
      rec.intrinsics.fx = ij.at("fx").get<double>();
      rec.intrinsics.fy = ij.at("fy").get<double>();
      rec.intrinsics.cx = ij.at("cx").get<double>();
      rec.intrinsics.cy = ij.at("cy").get<double>();
      rec.intrinsics.width = ij.at("width").get<int>();
      rec.intrinsics.height = ij.at("height").get<int>();
      rec.intrinsics.validate();
      rec.segmentation.width = rec.intrinsics.width;
      rec.segmentation.height = rec.intrinsics.height;
      const Json& labels = rj.at("labels");
      const Json& conf = rj.at("confidence");
      const size_t expected =
          static_cast<size_t>(rec.intrinsics.width) * rec.intrinsics.height;
      if (labels.size() != expected || conf.size() != expected) {
        fail("ParseError", "segmentation frame pixel counts do not match");
      }
      rec.segmentation.labels.reserve(expected);
      rec.segmentation.confidence.reserve(expected);
      for (const Json& v : labels) rec.segmentation.labels.push_back(v.get<int>());
      for (const Json& v : conf) {
        rec.segmentation.confidence.push_back(v.get<double>());
      }
    } else {
      fail("ParseError", "unknown observation record kind '" + kind + "'");
    }
    stream.records.push_back(std::move(rec));
  }
  return stream;
}

inline ObservationStream load_observation_stream(const std::string& path) {
  return parse_observation_stream(io_detail::parse_json_file(path));
}

inline std::vector<CalibrationEntry> load_calibration_dataset(
    const std::string& path) {
  using namespace io_detail;
  const Json j = parse_json_file(path);
  std::vector<CalibrationEntry> entries;
  for (const Json& ej : j.value("entries", Json::array())) {
    CalibrationEntry e;
    e.scene_type = parse_scene_type(ej.at("scene_type").get<std::string>());
    e.shoebox = parse_shoebox(ej.at("shoebox"));
    e.materials = parse_face_materials(ej.at("materials"));
    e.rt60_truth = parse_bands(ej.at("rt60"), "calibration rt60");
    for (double t : e.rt60_truth) {
      if (!(t > 0.0) || !std::isfinite(t)) {
        fail("ParseError", "calibration rt60 values must be positive");
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline ParameterGrid load_parameter_grid(const std::string& path) {
  const Json j = io_detail::parse_json_file(path);
  ParameterGrid g;
  auto read_axis = [&j](const char* name, std::vector<double>* out) {
    if (!j.contains(name)) fail("EmptyGrid", std::string("grid missing ") + name);
    for (const Json& v : j.at(name)) out->push_back(v.get<double>());
    if (out->empty()) fail("EmptyGrid", std::string("grid axis ") + name + " is empty");
  };
  read_axis("reverb_gain", &g.reverb_gain);
  read_axis("rt_modulator", &g.rt_modulator);
  read_axis("reverb_brightness", &g.reverb_brightness);
  read_axis("reflection_gain", &g.reflection_gain);
  return g;
}

// Scene pairing for evaluation: each entry names an estimated RIR file and
// a reference, either a measured RIR file or a plain RT60 table.
struct EvalPair {
  std::string id;
  std::string estimate_path;
  std::string truth_rir_path;             // empty when truth_rt60 is set
  std::optional<BandArray> truth_rt60;
};

inline std::vector<EvalPair> load_eval_manifest(const std::string& path) {
  using namespace io_detail;
  const Json j = parse_json_file(path);
  std::vector<EvalPair> pairs;
  for (const Json& pj : j.value("pairs", Json::array())) {
    EvalPair p;
    p.id = pj.at("id").get<std::string>();
    if (!pj.contains("estimate")) {
      fail("MissingPair", "pair '" + p.id + "' lacks an estimate");
    }
    p.estimate_path = pj.at("estimate").get<std::string>();
    const bool has_rir = pj.contains("truth_rir");
    const bool has_table = pj.contains("truth_rt60");
    if (has_rir == has_table) {
      fail("MissingPair",
           "pair '" + p.id + "' needs exactly one of truth_rir / truth_rt60");
    }
    if (has_rir) p.truth_rir_path = pj.at("truth_rir").get<std::string>();
    if (has_table) p.truth_rt60 = parse_bands(pj.at("truth_rt60"), "truth_rt60");
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) fail("MissingPair", "evaluation manifest lists no pairs");
  return pairs;
}

namespace io_detail {

inline std::string format_metric(double v, bool valid) {
  if (!valid) return "nan";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(6);
  s << v;
  return s.str();
}

}  // namespace io_detail

// Tabular metric report: one row per (scene, band) with fixed column order,
// followed by a pooled summary block.
inline std::string format_metric_report(
    const std::vector<std::string>& scene_ids,
    const std::vector<BandMetrics>& estimates,
    const std::vector<BandMetrics>& ground_truth, const ErrorSummary& summary) {
  using io_detail::format_metric;
  std::ostringstream out;
  out << "# scene band_hz rt60_est rt60_gt edt_est edt_gt\n";
  for (size_t s = 0; s < scene_ids.size(); ++s) {
    for (int b = 0; b < kNumBands; ++b) {
      out << scene_ids[s] << " " << kBandCenters[b] << " "
          << format_metric(estimates[s].rt60[b], estimates[s].rt60_valid[b])
          << " "
          << format_metric(ground_truth[s].rt60[b], ground_truth[s].rt60_valid[b])
          << " " << format_metric(estimates[s].edt[b], estimates[s].edt_valid[b])
          << " "
          << format_metric(ground_truth[s].edt[b], ground_truth[s].edt_valid[b])
          << "\n";
    }
  }
  out << "# pooled\n";
  out << "rt60_mae " << format_metric(summary.rt60.mae, summary.rt60.count > 0)
      << "\n";
  out << "rt60_rmse " << format_metric(summary.rt60.rmse, summary.rt60.count > 0)
      << "\n";
  out << "edt_mae " << format_metric(summary.edt.mae, summary.edt.count > 0)
      << "\n";
  out << "edt_rmse " << format_metric(summary.edt.rmse, summary.edt.count > 0)
      << "\n";
  out << "rt60_pairs " << summary.rt60.count << "\n";
  out << "edt_pairs " << summary.edt.count << "\n";
  return out.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("ParseError", "cannot open '" + path + "' for writing");
  f << text;
  if (!f) fail("ParseError", "failed writing '" + path + "'");
}

}  // namespace sceneverb
