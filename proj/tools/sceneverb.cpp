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

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sceneverb/pipeline.hpp"

namespace {

using namespace sceneverb;

struct CommonFlags {
  std::optional<std::string> config_path;
  std::string mode = "full";
  std::optional<std::uint64_t> seed;
  std::optional<double> sample_rate;
};

void add_common(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--config", flags->config_path, "Config file (JSON)");
  cmd->add_option("--mode", flags->mode,
                  "Pipeline mode: non_adaptive|geo_only|mat_only|ae_only|full");
  cmd->add_option("--seed", flags->seed, "Deterministic seed override");
  cmd->add_option("--sample-rate", flags->sample_rate, "Sample rate override");
}

Config resolve_config(const CommonFlags& flags) {
  Config config = load_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.sample_rate) config.sample_rate = *flags.sample_rate;
  config.validate();
  return config;
}

AudioBuffer rir_to_audio(const RoomImpulseResponse& rir) {
  AudioBuffer audio;
  audio.sample_rate = rir.sample_rate;
  audio.channels = rir.samples;
  return audio;
}

RoomImpulseResponse audio_to_rir(const AudioBuffer& audio) {
  RoomImpulseResponse rir;
  rir.sample_rate = audio.sample_rate;
  rir.channels = audio.num_channels();
  rir.samples = audio.channels;
  rir.validate();
  return rir;
}

int cmd_synth_rir(const CommonFlags& flags, const std::string& scene_path,
                  const std::string& out_path, int source_index) {
  const Config config = resolve_config(flags);
  const SceneDescriptor scene = load_scene(scene_path);
  const PipelineMode mode = parse_pipeline_mode(flags.mode);
  const RoomImpulseResponse rir =
      run_synth_rir(scene, mode, config, static_cast<size_t>(source_index));
  write_wav(out_path, rir_to_audio(rir));
  std::printf("wrote %s (%zu samples, %d ch, %.0f Hz)\n", out_path.c_str(),
              rir.length(), rir.channels, rir.sample_rate);
  return 0;
}

int cmd_render(const CommonFlags& flags, const std::string& scene_path,
               const std::string& rir_path,
               const std::vector<std::string>& input_paths,
               const std::string& out_path) {
  const Config config = resolve_config(flags);
  if (scene_path.empty() == rir_path.empty()) {
    fail("ParseError", "render needs exactly one of --scene / --rir");
  }
  if (input_paths.empty()) fail("ParseError", "render needs at least one --in");

  std::vector<AudioBuffer> inputs;
  for (const std::string& p : input_paths) inputs.push_back(read_wav(p));

  AudioBuffer out;
  if (!scene_path.empty()) {
    const SceneDescriptor scene = load_scene(scene_path);
    const PipelineMode mode = parse_pipeline_mode(flags.mode);
    if (inputs.size() != scene.sources.size()) {
      fail("ParseError", "render needs one --in per scene source");
    }
    out = run_render_scene(scene, mode, config, inputs);
  } else {
    if (inputs.size() != 1) {
      fail("ParseError", "RIR rendering takes a single --in");
    }
    const AudioBuffer rir_audio = read_wav(rir_path);
    if (rir_audio.sample_rate != config.sample_rate) {
      fail("RateMismatch", "RIR sample rate differs from engine rate");
    }
    out = run_render_rir(audio_to_rir(rir_audio), config, inputs[0]);
  }
  write_wav(out_path, out);
  std::printf("wrote %s (%zu samples, %d ch)\n", out_path.c_str(), out.length(),
              out.num_channels());
  return 0;
}

int cmd_replay(const CommonFlags& flags, const std::string& stream_path,
               const std::string& input_path, const std::string& out_path,
               const std::string& log_path, std::optional<double> cadence) {
  Config config = resolve_config(flags);
  if (cadence) config.replay_cadence_hz = *cadence;
  config.validate();
  const ObservationStream stream = load_observation_stream(stream_path);
  const AudioBuffer input = read_wav(input_path);
  const ReplayResult result = run_replay(stream, input, config);
  write_wav(out_path, result.output);
  if (!log_path.empty()) write_text_file(log_path, result.rir_log);
  std::printf("wrote %s; %d RIR submissions\n", out_path.c_str(),
              result.submissions);
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& manifest_path,
             const std::string& out_path) {
  (void)resolve_config(flags);
  const std::vector<EvalPair> pairs = load_eval_manifest(manifest_path);
  const EvalResult result = run_eval(pairs);
  const std::string report = format_metric_report(
      result.ids, result.estimates, result.ground_truth, result.summary);
  write_text_file(out_path, report);
  std::printf("wrote %s (rt60_mae %.6f over %ld pairs)\n", out_path.c_str(),
              result.summary.rt60.mae, result.summary.rt60.count);
  return 0;
}

int cmd_calibrate(const CommonFlags& flags, const std::string& dataset_path,
                  const std::string& grid_path, const std::string& out_path) {
  const Config config = resolve_config(flags);
  const std::vector<CalibrationEntry> dataset =
      load_calibration_dataset(dataset_path);
  const ParameterGrid grid = grid_path.empty() ? default_parameter_grid()
                                               : load_parameter_grid(grid_path);
  const MaterialLibrary& library = config.material_library;
  const SceneParameterTable table = calibrate(
      dataset, grid,
      [&library](const CalibrationEntry& entry,
                 const AcousticParameterVector& params) {
        return predict_rt60(entry, params, library);
      });
  write_text_file(out_path, format_scene_parameter_table(table));

  // Residual per scene type for the log.
  for (int type = 0; type < kNumSceneTypes; ++type) {
    double abs_err = 0.0;
    long n = 0;
    for (const CalibrationEntry& e : dataset) {
      if (static_cast<int>(e.scene_type) != type) continue;
      const BandArray predicted = predict_rt60(e, table[type], library);
      for (int b = 0; b < kNumBands; ++b) {
        abs_err += std::abs(predicted[b] - e.rt60_truth[b]);
        ++n;
      }
    }
    std::printf("%s mae %.6f\n", to_string(static_cast<SceneType>(type)),
                n > 0 ? abs_err / static_cast<double>(n) : 0.0);
  }
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene-aware room impulse response synthesis and rendering"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string scene_path, rir_path, out_path, stream_path, log_path;
  std::string manifest_path, dataset_path, grid_path;
  std::vector<std::string> input_paths;
  int source_index = 0;
  std::optional<double> cadence;

  CLI::App* synth = app.add_subcommand("synth-rir", "Synthesize a scene RIR");
  add_common(synth, &flags);
  synth->add_option("--scene", scene_path, "Scene file (JSON)")->required();
  synth->add_option("--out", out_path, "Output RIR (WAV)")->required();
  synth->add_option("--source", source_index, "Source index (default 0)");

  CLI::App* render = app.add_subcommand("render", "Convolve audio with a scene");
  add_common(render, &flags);
  render->add_option("--scene", scene_path, "Scene file (JSON)");
  render->add_option("--rir", rir_path, "Direct RIR file (WAV)");
  render->add_option("--in", input_paths, "Input audio (one per source)");
  render->add_option("--out", out_path, "Output audio (WAV)")->required();

  CLI::App* replay = app.add_subcommand("replay", "Replay an observation stream");
  add_common(replay, &flags);
  replay->add_option("--stream", stream_path, "Observation stream (JSON)")
      ->required();
  replay->add_option("--in", input_paths, "Input audio (WAV)")->required();
  replay->add_option("--out", out_path, "Output audio (WAV)")->required();
  replay->add_option("--log", log_path, "RIR snapshot log (JSON lines)");
  replay->add_option("--cadence", cadence, "RIR update cadence (Hz)");

  CLI::App* eval = app.add_subcommand("eval", "Compare RIR sets");
  add_common(eval, &flags);
  eval->add_option("--manifest", manifest_path, "Evaluation manifest (JSON)")
      ->required();
  eval->add_option("--out", out_path, "Metrics report (text)")->required();

  CLI::App* calib = app.add_subcommand("calibrate", "Grid-search parameters");
  add_common(calib, &flags);
  calib->add_option("--dataset", dataset_path, "Calibration dataset (JSON)")
      ->required();
  calib->add_option("--grid", grid_path, "Grid file (JSON; default grid if omitted)");
  calib->add_option("--out", out_path, "Output parameter table")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      return cmd_synth_rir(flags, scene_path, out_path, source_index);
    }
    if (render->parsed()) {
      return cmd_render(flags, scene_path, rir_path, input_paths, out_path);
    }
    if (replay->parsed()) {
      if (input_paths.size() != 1) {
        fail("ParseError", "replay takes a single --in");
      }
      return cmd_replay(flags, stream_path, input_paths[0], out_path, log_path,
                        cadence);
    }
    if (eval->parsed()) return cmd_eval(flags, manifest_path, out_path);
    if (calib->parsed()) {
      return cmd_calibrate(flags, dataset_path, grid_path, out_path);
    }
  } catch (const sceneverb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
