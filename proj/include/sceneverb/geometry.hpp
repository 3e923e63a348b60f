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
#include <optional>
#include <span>
#include <vector>

#include "sceneverb/common.hpp"

namespace sceneverb {

// Planar-surface observation, as delivered by an external plane-detection
// stage. The plane satisfies normal . x == offset; `extent` is the bounding
// rectangle of the observed patch, carried as its on-plane center plus side
// lengths. Normals are expected to point into the room.
struct PlaneExtent {
  Vec3 center;
  double width = 0.0;
  double height = 0.0;
};

struct Plane {
  Vec3 normal;
  double offset = 0.0;
  PlaneExtent extent;
  double confidence = 1.0;
  double timestamp = 0.0;
};

struct Pose {
  Vec3 position;
  Quat orientation = Quat::identity();
};

// Axis-aligned cuboid in a gravity-aligned, yaw-fitted room-local frame.
// World coordinates relate to local ones by a rotation of `frame_yaw` about
// the z (gravity) axis.
struct ShoeboxModel {
  double frame_yaw = 0.0;
  Vec3 min_corner;
  Vec3 max_corner;
  std::array<double, kNumFaces> face_confidence = {};

  Vec3 dimensions() const { return max_corner - min_corner; }

  double volume() const {
    const Vec3 d = dimensions();
    return d.x * d.y * d.z;
  }

  std::array<double, kNumFaces> face_areas() const {
    const Vec3 d = dimensions();
    return {d.y * d.z, d.y * d.z, d.x * d.z, d.x * d.z, d.x * d.y, d.x * d.y};
  }

  double total_area() const {
    const auto a = face_areas();
    double s = 0.0;
    for (double v : a) s += v;
    return s;
  }

  // Bound coordinate of a face along its axis.
  double face_bound(int face) const {
    return face_is_min(face) ? min_corner[face_axis(face)]
                             : max_corner[face_axis(face)];
  }

  Vec3 to_local(const Vec3& world) const {
    return Mat3::rotation_z(-frame_yaw) * world;
  }
  Vec3 to_world(const Vec3& local) const {
    return Mat3::rotation_z(frame_yaw) * local;
  }

  bool contains_local(const Vec3& p, double slack = 0.0) const {
    for (int a = 0; a < 3; ++a) {
      if (p[a] < min_corner[a] - slack || p[a] > max_corner[a] + slack)
        return false;
    }
    return true;
  }

  bool valid() const {
    const Vec3 d = dimensions();
    return d.x > 0.0 && d.y > 0.0 && d.z > 0.0 && std::isfinite(volume());
  }
};

namespace geometry_detail {

// Planes whose normals are within this cone of a face axis join that face
// family; typical depth-derived plane noise stays well inside it.
inline constexpr double kFamilyConeDeg = 15.0;
// Co-planarity window around the extreme plane of a family when several
// observations describe the same wall.
inline constexpr double kCoplanarTolerance = 0.02;
inline constexpr double kUnobservedFaceOffset = 3.0;
inline constexpr double kBoundSmoothing = 0.8;
inline constexpr double kConfidenceDecay = 0.99;

struct FaceSupport {
  bool supported = false;
  double bound = 0.0;
  double confidence = 0.0;
};

inline bool near_horizontal(const Plane& p) {
  return std::abs(p.normal.z) >= std::cos(deg_to_rad(kFamilyConeDeg));
}

inline bool near_vertical(const Plane& p) {
  return std::abs(p.normal.z) <= std::sin(deg_to_rad(kFamilyConeDeg));
}

// Heading of a vertical plane folded into the 90-degree wall period.
inline double folded_heading(const Plane& p) {
  return std::atan2(p.normal.y, p.normal.x);
}

// Circular mean of wall headings on the 4x-folded circle, confidence
// weighted. Returns the dominant yaw in (-pi/4, pi/4].
inline std::optional<double> fit_yaw(std::span<const Plane> planes) {
  double sx = 0.0, sy = 0.0;
  for (const Plane& p : planes) {
    if (!near_vertical(p)) continue;
    const double a = 4.0 * folded_heading(p);
    sx += p.confidence * std::cos(a);
    sy += p.confidence * std::sin(a);
  }
  if (sx == 0.0 && sy == 0.0) return std::nullopt;
  return std::atan2(sy, sx) / 4.0;
}

// Classify a plane (already rotated into the room-local frame) to one of the
// six faces, or -1 when its normal sits outside every face cone. Inward
// normals map +axis to the min face.
inline int classify_face(const Vec3& local_normal) {
  const double cone = std::cos(deg_to_rad(kFamilyConeDeg));
  for (int axis = 0; axis < 3; ++axis) {
    const double c = local_normal[axis];
    if (c >= cone) return axis * 2;
    if (c <= -cone) return axis * 2 + 1;
  }
  return -1;
}

// Resolve each face family to a single bound: the extreme supporting plane
// wins, with confidence-weighted averaging over observations that are
// co-planar with it.
inline std::array<FaceSupport, kNumFaces> collect_support(
    std::span<const Plane> planes, double yaw) {
  struct Candidate {
    double bound;
    double confidence;
  };
  std::array<std::vector<Candidate>, kNumFaces> families;
  const Mat3 to_local = Mat3::rotation_z(-yaw);
  for (const Plane& p : planes) {
    const Vec3 n = to_local * p.normal;
    const int face = classify_face(n);
    if (face < 0) continue;
    const Vec3 c = to_local * p.extent.center;
    families[face].push_back({c[face_axis(face)], p.confidence});
  }

  std::array<FaceSupport, kNumFaces> support;
  for (int face = 0; face < kNumFaces; ++face) {
    const auto& cands = families[face];
    if (cands.empty()) continue;
    double extreme = cands.front().bound;
    for (const Candidate& c : cands) {
      extreme = face_is_min(face) ? std::min(extreme, c.bound)
                                  : std::max(extreme, c.bound);
    }
    double wsum = 0.0, bsum = 0.0, conf = 0.0;
    for (const Candidate& c : cands) {
      if (std::abs(c.bound - extreme) <= kCoplanarTolerance) {
        wsum += c.confidence;
        bsum += c.confidence * c.bound;
        conf = std::max(conf, c.confidence);
      }
    }
    support[face] = {true, wsum > 0.0 ? bsum / wsum : extreme,
                     std::clamp(conf, 0.0, 1.0)};
  }
  return support;
}

}  // namespace geometry_detail

// Fits a shoebox to planar observations. The room frame yaw is the dominant
// vertical-plane heading; every supported face bound comes from its extreme
// supporting plane, and unsupported faces default to 3 m from the listener
// with zero support confidence.
inline ShoeboxModel estimate_shoebox(std::span<const Plane> planes,
                                     const Vec3& listener_position = {}) {
  using namespace geometry_detail;

  int horizontals = 0, verticals = 0;
  for (const Plane& p : planes) {
    if (near_horizontal(p)) ++horizontals;
    if (near_vertical(p)) ++verticals;
  }
  if (horizontals < 1 || verticals < 1) {
    fail("InsufficientPlanes",
         "need at least one floor candidate and one wall plane (got " +
             std::to_string(horizontals) + " horizontal, " +
             std::to_string(verticals) + " vertical)");
  }

  const double yaw = fit_yaw(planes).value_or(0.0);
  const auto support = collect_support(planes, yaw);

  ShoeboxModel box;
  box.frame_yaw = wrap_angle(yaw);
  const Vec3 listener_local = Mat3::rotation_z(-yaw) * listener_position;

  for (int axis = 0; axis < 3; ++axis) {
    const auto& lo = support[axis * 2];
    const auto& hi = support[axis * 2 + 1];
    double lo_bound = lo.supported ? lo.bound
                                   : listener_local[axis] - kUnobservedFaceOffset;
    double hi_bound = hi.supported ? hi.bound
                                   : listener_local[axis] + kUnobservedFaceOffset;
    if (hi_bound <= lo_bound) {
      fail("InsufficientPlanes", "conflicting plane support on axis " +
                                     std::to_string(axis));
    }
    box.min_corner[axis] = lo_bound;
    box.max_corner[axis] = hi_bound;
    box.face_confidence[axis * 2] = lo.supported ? lo.confidence : 0.0;
    box.face_confidence[axis * 2 + 1] = hi.supported ? hi.confidence : 0.0;
  }
  return box;
}

// One temporal-refinement tick. Faces with fresh plane support move toward
// the new bound with factor (1 - lambda); everything else keeps its geometry
// while support confidence decays.
inline ShoeboxModel update_shoebox(const ShoeboxModel& model,
                                   std::span<const Plane> planes) {
  using namespace geometry_detail;

  ShoeboxModel next = model;
  for (int face = 0; face < kNumFaces; ++face) {
    next.face_confidence[face] = model.face_confidence[face] * kConfidenceDecay;
  }
  if (planes.empty()) return next;

  const auto support = collect_support(planes, model.frame_yaw);
  for (int face = 0; face < kNumFaces; ++face) {
    if (!support[face].supported) continue;
    const int axis = face_axis(face);
    const double blended = kBoundSmoothing * model.face_bound(face) +
                           (1.0 - kBoundSmoothing) * support[face].bound;
    if (face_is_min(face)) {
      if (blended < next.max_corner[axis]) next.min_corner[axis] = blended;
    } else {
      if (blended > next.min_corner[axis]) next.max_corner[axis] = blended;
    }
    next.face_confidence[face] =
        std::max(next.face_confidence[face], support[face].confidence);
  }
  return next;
}

// Smallest rotation taking the direction of v_orig to the direction of
// v_new: the axis is perpendicular to both and the angle equals the angle
// between them. The antipodal case rotates pi about a deterministic axis
// perpendicular to v_orig (largest component paired with its cyclic
// successor, lowest index winning ties).
inline Mat3 minimal_rotation(const Vec3& v_orig, const Vec3& v_new) {
  if (v_orig.norm() < 1e-12 || v_new.norm() < 1e-12) {
    fail("DegenerateInput", "minimal_rotation requires nonzero vectors");
  }
  const Vec3 a = v_orig.normalized();
  const Vec3 b = v_new.normalized();
  const double c = std::clamp(a.dot(b), -1.0, 1.0);

  if (c <= -1.0 + 1e-9) {
    int i = 0;
    for (int k = 1; k < 3; ++k) {
      if (std::abs(a[k]) > std::abs(a[i])) i = k;
    }
    const int j = (i + 1) % 3;
    Vec3 axis;
    axis[i] = -a[j];
    axis[j] = a[i];
    axis = axis.normalized();
    // Half-turn about `axis`: R = 2 axis axis^T - I.
    Mat3 r;
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        r(p, q) = 2.0 * axis[p] * axis[q] - (p == q ? 1.0 : 0.0);
    return r;
  }

  const Vec3 v = a.cross(b);
  Mat3 k;
  k.m = {0, -v.z, v.y, v.z, 0, -v.x, -v.y, v.x, 0};
  // Rodrigues with (1 - cos)/sin^2 reduced to 1/(1 + cos); stable away from
  // the antipodal branch handled above.
  const Mat3 k2 = k * k;
  Mat3 r = Mat3::identity();
  for (int idx = 0; idx < 9; ++idx) {
    r.m[idx] += k.m[idx] + k2.m[idx] / (1.0 + c);
  }
  return r;
}

// Per-axis wall-distance description of an entity inside the real room: the
// distance to the nearest real surface along each room-local axis plus which
// side of the axis that surface lies on.
struct WallDistances {
  std::array<double, 3> distance = {0.0, 0.0, 0.0};
  std::array<bool, 3> from_min_face = {true, true, true};
};

// Companion endpoint for orientation-preserving remaps: the other end of a
// source-listener pair, before and after mapping.
struct CompanionMapping {
  Vec3 original_position;
  Vec3 mapped_position;
};

// Places an entity inside the shoebox so its distance to each referenced
// face equals the measured real-world distance. When a companion is given,
// the orientation is additionally rotated by the minimal rotation between
// the pre- and post-map connecting vectors. The returned pose is expressed
// in the room-local frame.
inline Pose map_pose_into_shoebox(
    const Pose& entity_pose, const WallDistances& walls,
    const ShoeboxModel& shoebox,
    const std::optional<CompanionMapping>& companion = std::nullopt) {
  Pose mapped = entity_pose;
  const Vec3 dims = shoebox.dimensions();
  for (int axis = 0; axis < 3; ++axis) {
    const double d = walls.distance[axis];
    if (d < 0.0 || d > dims[axis]) {
      fail("OutOfRoom", "wall distance " + std::to_string(d) +
                            " outside shoebox extent on axis " +
                            std::to_string(axis));
    }
    mapped.position[axis] = walls.from_min_face[axis]
                                ? shoebox.min_corner[axis] + d
                                : shoebox.max_corner[axis] - d;
  }

  if (companion) {
    const Vec3 v_orig = companion->original_position - entity_pose.position;
    const Vec3 v_new = companion->mapped_position - mapped.position;
    if (v_orig.norm() >= 1e-12 && v_new.norm() >= 1e-12) {
      const Mat3 r = minimal_rotation(v_orig, v_new);
      mapped.orientation =
          (Quat::from_matrix(r) * entity_pose.orientation).normalized();
    }
  }
  return mapped;
}

// Wall distances of a point that already lies inside the box, choosing the
// nearest face per axis.
inline WallDistances wall_distances_in_box(const Vec3& local_position,
                                           const ShoeboxModel& box) {
  WallDistances w;
  for (int axis = 0; axis < 3; ++axis) {
    const double to_min = local_position[axis] - box.min_corner[axis];
    const double to_max = box.max_corner[axis] - local_position[axis];
    w.from_min_face[axis] = to_min <= to_max;
    w.distance[axis] = std::max(0.0, std::min(to_min, to_max));
  }
  return w;
}

}  // namespace sceneverb
