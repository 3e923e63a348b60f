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
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "sceneverb/acoustic_context.hpp"
#include "sceneverb/audio_io.hpp"
#include "sceneverb/common.hpp"
#include "sceneverb/geometry.hpp"
#include "sceneverb/material.hpp"
#include "sceneverb/metrics.hpp"
#include "sceneverb/octave_bank.hpp"
#include "sceneverb/renderer.hpp"
#include "sceneverb/rir_synthesis.hpp"
#include "sceneverb/scene_io.hpp"

namespace sceneverb {

// Pipeline configurations: the adaptive system, a fixed preset, and the
// three single-cue reductions (geometry only, materials with a canonical
// room, acoustic embedding with a default room).
enum class PipelineMode { kNonAdaptive, kGeoOnly, kMatOnly, kAeOnly, kFull };

inline const char* to_string(PipelineMode m) {
  switch (m) {
    case PipelineMode::kNonAdaptive: return "non_adaptive";
    case PipelineMode::kGeoOnly: return "geo_only";
    case PipelineMode::kMatOnly: return "mat_only";
    case PipelineMode::kAeOnly: return "ae_only";
    case PipelineMode::kFull: return "full";
  }
  return "unknown";
}

inline PipelineMode parse_pipeline_mode(const std::string& name) {
  for (PipelineMode m :
       {PipelineMode::kNonAdaptive, PipelineMode::kGeoOnly, PipelineMode::kMatOnly,
        PipelineMode::kAeOnly, PipelineMode::kFull}) {
    if (name == to_string(m)) return m;
  }
  fail("ParseError", "unknown pipeline mode '" + name + "'");
}

namespace pipeline_detail {

// Neutral parameters used by the reduced modes that drop the acoustic
// embedding: unity time scaling, no tilt, and a late gain high enough that
// decay metrics of the rendered response stay measurable.
inline AcousticParameterVector neutral_params() { return {0.8, 1.0, 0.0, 0.8}; }

inline ShoeboxModel make_box(double x, double y, double z) {
  ShoeboxModel box;
  box.min_corner = {0.0, 0.0, 0.0};
  box.max_corner = {x, y, z};
  box.face_confidence.fill(1.0);
  return box;
}

// Canonical stand-in room for the reduced modes that drop real geometry.
inline ShoeboxModel canonical_room() { return make_box(5.0, 4.0, 3.0); }

// Fixed virtual room of the non-adaptive preset.
inline ShoeboxModel preset_room() { return make_box(6.0, 5.0, 3.0); }

inline std::array<AbsorptionSpectrum, kNumFaces> default_absorption(
    const MaterialLibrary& library) {
  std::array<AbsorptionSpectrum, kNumFaces> a;
  a.fill(library_spectrum(library, MaterialClass::kDefaultReflective));
  return a;
}

// Re-embeds a pose from one box into another by matching fractional
// coordinates, clamped to keep entities strictly inside.
inline Vec3 embed_fractional(const Vec3& local, const ShoeboxModel& from,
                             const ShoeboxModel& to) {
  Vec3 out;
  const Vec3 fd = from.dimensions();
  const Vec3 td = to.dimensions();
  for (int axis = 0; axis < 3; ++axis) {
    double frac = fd[axis] > 0.0
                      ? (local[axis] - from.min_corner[axis]) / fd[axis]
                      : 0.5;
    frac = std::clamp(frac, 0.02, 0.98);
    out[axis] = to.min_corner[axis] + frac * td[axis];
  }
  return out;
}

}  // namespace pipeline_detail

// The scene as one pipeline configuration sees it: a box, per-face
// absorption, parameters, refined late RT60, and room-local poses.
struct ResolvedScene {
  ShoeboxModel box;
  std::array<AbsorptionSpectrum, kNumFaces> absorption;
  AcousticParameterVector params;
  BandArray late_rt60 = {};
  Pose listener;
  std::vector<Pose> sources;
};

inline ResolvedScene resolve_scene(const SceneDescriptor& scene,
                                   PipelineMode mode, const Config& config) {
  using namespace pipeline_detail;

  if (mode == PipelineMode::kNonAdaptive) {
    // Fixed preset: a generic box with a flat 0.8 s tail, independent of
    // every scene input.
    ResolvedScene r;
    r.box = preset_room();
    r.absorption = default_absorption(config.material_library);
    r.params = {0.15, 1.0, 0.0, 0.8};
    r.late_rt60.fill(0.8);
    r.listener = Pose{{3.0, 2.5, 1.5}, Quat::identity()};
    r.sources = {Pose{{4.5, 2.5, 1.5}, Quat::identity()}};
    return r;
  }

  // Real geometry, resolved or estimated from raw planes.
  ShoeboxModel real_box;
  if (scene.shoebox) {
    real_box = *scene.shoebox;
  } else {
    real_box = estimate_shoebox(scene.planes, scene.listener.position);
  }

  // Real materials, resolved or folded from raw observations.
  std::array<SurfaceMaterialProfile, kNumFaces> profiles;
  for (int f = 0; f < kNumFaces; ++f) profiles[f] = SurfaceMaterialProfile(f);
  if (scene.materials) {
    profiles = *scene.materials;
  } else {
    std::array<std::vector<MaterialObservation>, kNumFaces> per_face;
    for (const MaterialObservation& o : scene.material_observations) {
      per_face[o.face_id].push_back(o);
    }
    for (int f = 0; f < kNumFaces; ++f) {
      if (!per_face[f].empty()) profiles[f].update(per_face[f]);
    }
  }

  ResolvedScene r;
  const bool use_geometry =
      mode == PipelineMode::kGeoOnly || mode == PipelineMode::kFull;
  const bool use_materials =
      mode == PipelineMode::kMatOnly || mode == PipelineMode::kFull;
  const bool use_embedding =
      mode == PipelineMode::kAeOnly || mode == PipelineMode::kFull;

  r.box = use_geometry ? real_box : canonical_room();
  if (use_materials) {
    for (int f = 0; f < kNumFaces; ++f) {
      r.absorption[f] = blend_absorption(profiles[f], config.material_library);
    }
  } else {
    r.absorption = default_absorption(config.material_library);
  }
  r.params = use_embedding ? params_for_scene(scene.scene_type, config.scene_params)
                           : neutral_params();
  r.late_rt60 = refine_rt60(eyring_rt60(r.box, r.absorption), r.params);

  const Vec3 listener_local = real_box.to_local(scene.listener.position);
  r.listener.orientation = scene.listener.orientation;
  r.listener.position = use_geometry
                            ? listener_local
                            : embed_fractional(listener_local, real_box, r.box);
  for (const Pose& src : scene.sources) {
    Pose mapped = src;
    const Vec3 src_local = real_box.to_local(src.position);
    mapped.position = use_geometry
                          ? src_local
                          : embed_fractional(src_local, real_box, r.box);
    r.sources.push_back(mapped);
  }
  return r;
}

// Synthesized components of a scene: per-source direct+early responses plus
// the shared late tail, all placed on a common timeline so the per-source
// and late responses sum to the full response.
struct SynthesizedScene {
  double sample_rate = 48000.0;
  int channels = 1;
  ResolvedScene resolved;
  std::vector<DirectTap> direct;
  std::vector<std::vector<ReflectionTap>> early;
  std::vector<std::vector<float>> late_channels;
  double late_onset = 0.0;

  RoomImpulseResponse source_rir(size_t s, const OctaveFilterBank& bank) const {
    return compose_rir(direct[s], early[s], {}, 0.0, sample_rate, channels, bank);
  }

  RoomImpulseResponse late_rir(const OctaveFilterBank& bank) const {
    return compose_rir(std::nullopt, {}, late_channels, late_onset, sample_rate,
                       channels, bank);
  }

  RoomImpulseResponse full_rir(size_t s, const OctaveFilterBank& bank) const {
    return compose_rir(direct[s], early[s], late_channels, late_onset,
                       sample_rate, channels, bank);
  }
};

inline SynthesizedScene synthesize_scene(const SceneDescriptor& scene,
                                         PipelineMode mode, const Config& config,
                                         const OctaveFilterBank& bank) {
  const ResolvedScene resolved = resolve_scene(scene, mode, config);

  SynthesizedScene out;
  out.sample_rate = config.sample_rate;
  out.channels = config.channels;
  out.resolved = resolved;

  const auto reflect = reflection_spectra(resolved.absorption);
  double onset = 0.0;
  for (const Pose& src : resolved.sources) {
    const DirectTap direct = make_direct_tap(src.position,
                                             resolved.listener.position,
                                             config.speed_of_sound);
    std::vector<ReflectionTap> taps;
    if (resolved.box.contains_local(src.position, -1e-9)) {
      const auto images = compute_image_sources(resolved.box, src,
                                                config.max_ism_order, reflect);
      taps = synthesize_early(images, resolved.listener, resolved.box,
                              resolved.params.reflection_gain,
                              config.speed_of_sound);
    }
    onset = std::max(onset, late_onset_seconds(direct, taps));
    out.direct.push_back(direct);
    out.early.push_back(std::move(taps));
  }
  out.late_onset = onset;

  if (resolved.params.reverb_gain > 0.0) {
    double max_rt = 0.0;
    for (double t : resolved.late_rt60) max_rt = std::max(max_rt, t);
    double length = config.rir_seconds > 0.0
                        ? config.rir_seconds
                        : onset + 0.8 * max_rt + 0.2;
    length = std::clamp(length, onset + 0.05, config.max_rir_seconds);
    LateReverbSpec spec;
    spec.rt60 = resolved.late_rt60;
    spec.gain = resolved.params.reverb_gain;
    spec.onset = onset;
    for (int ch = 0; ch < config.channels; ++ch) {
      spec.seed = config.seed + static_cast<std::uint64_t>(ch);
      out.late_channels.push_back(
          synthesize_late(spec, length, config.sample_rate, bank));
    }
  }
  return out;
}

// --- Offline rendering -----------------------------------------------------

// Renders input audio through per-source RIRs plus the shared late path and
// returns input_length + kernel_length - 1 samples (an empty input renders
// to an empty output).
inline AudioBuffer render_offline(
    const std::vector<RoomImpulseResponse>& source_rirs,
    const std::optional<RoomImpulseResponse>& late_rir,
    const std::vector<AudioBuffer>& inputs, const Config& config) {
  if (inputs.size() != source_rirs.size()) {
    fail("ParseError", "need exactly one input per source");
  }
  EngineConfig ec;
  ec.sample_rate = config.sample_rate;
  ec.block_size = config.block_size;
  ec.channels = config.channels;
  ec.max_rir_seconds = config.max_rir_seconds;
  RenderEngine engine(ec);

  size_t input_len = 0;
  size_t kernel_len = 1;
  for (size_t s = 0; s < inputs.size(); ++s) {
    if (inputs[s].sample_rate != config.sample_rate) {
      fail("RateMismatch", "input sample rate differs from engine rate");
    }
    input_len = std::max(input_len, inputs[s].length());
    engine.add_source();
    engine.submit_rir(static_cast<int>(s), source_rirs[s]);
    kernel_len = std::max(kernel_len, source_rirs[s].length());
  }
  if (late_rir && late_rir->length() > 0) {
    engine.submit_late_rir(*late_rir);
    kernel_len = std::max(kernel_len, late_rir->length());
  }

  AudioBuffer out;
  out.sample_rate = config.sample_rate;
  out.channels.assign(config.channels, {});
  if (input_len == 0) return out;

  const size_t block = static_cast<size_t>(config.block_size);
  const size_t total = input_len + kernel_len - 1;
  const size_t blocks = (total + block - 1) / block;

  std::vector<std::vector<float>> in_blocks(inputs.size(),
                                            std::vector<float>(block));
  std::vector<std::span<const float>> in_spans;
  for (const auto& b : in_blocks) in_spans.emplace_back(b.data(), b.size());
  std::vector<std::vector<float>> out_block(config.channels,
                                            std::vector<float>(block));

  for (int ch = 0; ch < config.channels; ++ch) out.channels[ch].reserve(total);
  for (size_t n = 0; n < blocks; ++n) {
    for (size_t s = 0; s < inputs.size(); ++s) {
      const auto& src = inputs[s].channels.empty() ? std::vector<float>{}
                                                   : inputs[s].channels[0];
      for (size_t i = 0; i < block; ++i) {
        const size_t idx = n * block + i;
        in_blocks[s][i] = idx < src.size() ? src[idx] : 0.0f;
      }
    }
    engine.render_block(in_spans, out_block);
    for (int ch = 0; ch < config.channels; ++ch) {
      const size_t want = std::min(block, total - std::min(total, n * block));
      out.channels[ch].insert(out.channels[ch].end(), out_block[ch].begin(),
                              out_block[ch].begin() + want);
    }
  }
  return out;
}

// --- Command drivers --------------------------------------------------------

inline RoomImpulseResponse run_synth_rir(const SceneDescriptor& scene,
                                         PipelineMode mode, const Config& config,
                                         size_t source_index = 0) {
  if (source_index >= scene.sources.size()) {
    fail("InvalidScene", "scene has no source " + std::to_string(source_index));
  }
  const OctaveFilterBank bank(config.sample_rate);
  const SynthesizedScene synth = synthesize_scene(scene, mode, config, bank);
  return synth.full_rir(source_index, bank);
}

inline AudioBuffer run_render_scene(const SceneDescriptor& scene,
                                    PipelineMode mode, const Config& config,
                                    const std::vector<AudioBuffer>& inputs) {
  const OctaveFilterBank bank(config.sample_rate);
  const SynthesizedScene synth = synthesize_scene(scene, mode, config, bank);
  std::vector<RoomImpulseResponse> source_rirs;
  for (size_t s = 0; s < synth.direct.size(); ++s) {
    source_rirs.push_back(synth.source_rir(s, bank));
  }
  std::optional<RoomImpulseResponse> late;
  if (!synth.late_channels.empty()) late = synth.late_rir(bank);
  return render_offline(source_rirs, late, inputs, config);
}

inline AudioBuffer run_render_rir(const RoomImpulseResponse& rir,
                                  const Config& config,
                                  const AudioBuffer& input) {
  return render_offline({rir}, std::nullopt, {input}, config);
}

// --- Replay ------------------------------------------------------------------

struct ReplayResult {
  AudioBuffer output;
  std::string rir_log;  // JSON lines: {"t": ..., "rt60": [...]}
  int submissions = 0;
};

// Consumes observation records in time order, re-estimating the room model
// at the configured cadence and resubmitting RIRs through the renderer's
// boundary-crossfade path. Submissions that would change neither the RT60
// (by 1 % in any band) nor the geometry (by 2 cm) are skipped.
inline ReplayResult run_replay(const ObservationStream& stream,
                               const AudioBuffer& input, const Config& config) {
  if (input.sample_rate != config.sample_rate) {
    fail("RateMismatch", "replay input rate differs from engine rate");
  }
  const OctaveFilterBank bank(config.sample_rate);

  EngineConfig ec;
  ec.sample_rate = config.sample_rate;
  ec.block_size = config.block_size;
  ec.channels = config.channels;
  ec.max_rir_seconds = config.max_rir_seconds;
  RenderEngine engine(ec);
  engine.add_source();

  // Perception state.
  std::optional<ShoeboxModel> box;
  std::array<SurfaceMaterialProfile, kNumFaces> profiles;
  for (int f = 0; f < kNumFaces; ++f) profiles[f] = SurfaceMaterialProfile(f);
  SceneType scene_type = SceneType::kOther;
  Pose listener;
  Pose source{Vec3{1.5, 0.0, 0.0}, Quat::identity()};
  bool source_seen = false;

  std::optional<BandArray> last_rt60;
  std::optional<ShoeboxModel> last_box;
  ReplayResult result;
  std::string log;

  const size_t block = static_cast<size_t>(config.block_size);
  const size_t total = input.length();
  const size_t blocks = (total + block - 1) / block;
  result.output.sample_rate = config.sample_rate;
  result.output.channels.assign(config.channels, {});

  size_t record_cursor = 0;
  double next_tick = 0.0;
  std::vector<Plane> plane_batch;

  auto synth_and_submit = [&](double t) {
    SceneDescriptor scene;
    scene.scene_type = scene_type;
    scene.listener = listener;
    scene.sources = {source};
    RoomImpulseResponse early_rir, late_rir;
    BandArray rt60 = {};
    if (box) {
      scene.shoebox = *box;
      auto materials = profiles;
      scene.materials = materials;
      const SynthesizedScene synth =
          synthesize_scene(scene, PipelineMode::kFull, config, bank);
      rt60 = synth.resolved.late_rt60;
      // Skip churn: unchanged acoustics within threshold keep the last RIR.
      if (last_rt60 && last_box) {
        bool rt_close = true;
        for (int b = 0; b < kNumBands; ++b) {
          if (std::abs(rt60[b] - (*last_rt60)[b]) > 0.01 * (*last_rt60)[b]) {
            rt_close = false;
            break;
          }
        }
        double geo_delta = 0.0;
        for (int axis = 0; axis < 3; ++axis) {
          geo_delta = std::max(
              geo_delta, std::abs(box->min_corner[axis] -
                                  last_box->min_corner[axis]));
          geo_delta = std::max(
              geo_delta, std::abs(box->max_corner[axis] -
                                  last_box->max_corner[axis]));
        }
        if (rt_close && geo_delta < 0.02) return;
      }
      early_rir = synth.source_rir(0, bank);
      if (!synth.late_channels.empty()) {
        late_rir = synth.late_rir(bank);
      }
      last_box = *box;
    } else {
      // Cold start: direct-only response.
      const DirectTap direct = make_direct_tap(source.position,
                                               listener.position,
                                               config.speed_of_sound);
      early_rir = compose_rir(direct, {}, {}, 0.0, config.sample_rate,
                              config.channels, bank);
      rt60.fill(0.0);
      if (last_rt60) return;  // still cold; nothing changed
    }

    engine.submit_rir(0, early_rir);
    if (late_rir.length() > 0) {
      engine.submit_late_rir(late_rir);
    }
    last_rt60 = rt60;
    ++result.submissions;

    char line[512];
    int off = std::snprintf(line, sizeof(line), "{\"t\": %.6f, \"rt60\": [", t);
    for (int b = 0; b < kNumBands; ++b) {
      off += std::snprintf(line + off, sizeof(line) - off, "%s%.6f",
                           b ? ", " : "", rt60[b]);
    }
    std::snprintf(line + off, sizeof(line) - off, "]}\n");
    log += line;
  };

  auto flush_planes = [&]() {
    if (plane_batch.empty()) return;
    if (!box) {
      try {
        box = estimate_shoebox(plane_batch, listener.position);
      } catch (const Error&) {
        // Not enough structure yet; stay cold.
      }
    } else {
      box = update_shoebox(*box, plane_batch);
    }
    plane_batch.clear();
  };

  std::vector<std::vector<float>> in_block(1, std::vector<float>(block));
  std::vector<std::span<const float>> in_span{
      std::span<const float>(in_block[0].data(), block)};
  std::vector<std::vector<float>> out_block(config.channels,
                                            std::vector<float>(block));

  for (size_t n = 0; n < blocks; ++n) {
    const double t_block =
        static_cast<double>(n) * static_cast<double>(block) / config.sample_rate;

    while (record_cursor < stream.records.size() &&
           stream.records[record_cursor].t <= t_block) {
      const ObservationRecord& rec = stream.records[record_cursor];
      switch (rec.kind) {
        case ObservationRecord::Kind::kPlane:
          plane_batch.push_back(rec.plane);
          break;
        case ObservationRecord::Kind::kMaterial:
          profiles[rec.material.face_id].update({&rec.material, 1});
          break;
        case ObservationRecord::Kind::kSceneType:
          scene_type = rec.scene_type;
          break;
        case ObservationRecord::Kind::kListenerPose:
          listener = rec.pose;
          break;
        case ObservationRecord::Kind::kSourcePose:
          source = rec.pose;
          source_seen = true;
          break;
        case ObservationRecord::Kind::kSegmentationFrame: {
          if (box) {
            const auto obs = project_face_coverage(*box, rec.camera,
                                                   rec.intrinsics,
                                                   rec.segmentation, rec.t);
            std::array<std::vector<MaterialObservation>, kNumFaces> per_face;
            for (const MaterialObservation& o : obs) {
              per_face[o.face_id].push_back(o);
            }
            for (int f = 0; f < kNumFaces; ++f) {
              if (!per_face[f].empty()) profiles[f].update(per_face[f]);
            }
          }
          break;
        }
      }
      ++record_cursor;
    }

    if (t_block >= next_tick) {
      flush_planes();
      if (!source_seen) {
        source.position = listener.position + Vec3{1.5, 0.0, 0.0};
      }
      synth_and_submit(t_block);
      next_tick += 1.0 / config.replay_cadence_hz;
    }

    for (size_t i = 0; i < block; ++i) {
      const size_t idx = n * block + i;
      in_block[0][i] =
          idx < total && !input.channels.empty() ? input.channels[0][idx] : 0.0f;
    }
    engine.render_block(in_span, out_block);
    for (int ch = 0; ch < config.channels; ++ch) {
      const size_t want = std::min(block, total - std::min(total, n * block));
      result.output.channels[ch].insert(result.output.channels[ch].end(),
                                        out_block[ch].begin(),
                                        out_block[ch].begin() + want);
    }
  }

  result.rir_log = std::move(log);
  return result;
}

// --- Evaluation ---------------------------------------------------------------

struct EvalResult {
  std::vector<std::string> ids;
  std::vector<BandMetrics> estimates;
  std::vector<BandMetrics> ground_truth;
  ErrorSummary summary;
};

inline EvalResult run_eval(const std::vector<EvalPair>& pairs) {
  EvalResult result;
  for (const EvalPair& pair : pairs) {
    AudioBuffer est;
    try {
      est = read_wav(pair.estimate_path);
    } catch (const Error& e) {
      fail("MissingPair", "pair '" + pair.id + "': " + e.what());
    }
    const OctaveFilterBank bank(est.sample_rate);
    result.estimates.push_back(measure_band_metrics(
        std::span<const float>(est.channels.at(0)), bank));

    if (pair.truth_rt60) {
      result.ground_truth.push_back(BandMetrics::from_rt60(*pair.truth_rt60));
    } else {
      AudioBuffer truth;
      try {
        truth = read_wav(pair.truth_rir_path);
      } catch (const Error& e) {
        fail("MissingPair", "pair '" + pair.id + "': " + e.what());
      }
      const OctaveFilterBank truth_bank(truth.sample_rate);
      result.ground_truth.push_back(measure_band_metrics(
          std::span<const float>(truth.channels.at(0)), truth_bank));
    }
    result.ids.push_back(pair.id);
  }
  result.summary = error_summary(result.estimates, result.ground_truth);
  return result;
}

}  // namespace sceneverb
