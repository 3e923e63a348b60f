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

#include <array>
#include <atomic>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sceneverb/common.hpp"
#include "sceneverb/fft.hpp"
#include "sceneverb/rir_synthesis.hpp"

namespace sceneverb {

struct EngineConfig {
  double sample_rate = 48000.0;
  int block_size = 256;
  int channels = 1;
  double max_rir_seconds = 8.0;
  double master_gain = 1.0;

  void validate() const {
    if (!(sample_rate > 0.0)) fail("ParseError", "sample rate must be positive");
    if (block_size < 64 || block_size > 4096 ||
        (block_size & (block_size - 1)) != 0) {
      fail("ParseError", "block size must be a power of two in [64, 4096]");
    }
    if (channels != 1 && channels != 2) {
      fail("ParseError", "engine channels must be 1 or 2");
    }
    if (!(max_rir_seconds > 0.0)) {
      fail("ParseError", "max RIR length must be positive");
    }
  }
};

// Frequency-domain image of an impulse response: uniform block-size
// partitions, each transformed at 2x block size for overlap-save. Built in
// the control context; the audio context only reads it.
class PreparedRir {
 public:
  static std::unique_ptr<PreparedRir> prepare(const RoomImpulseResponse& rir,
                                              const EngineConfig& config,
                                              const RealFft& fft) {
    if (rir.sample_rate != config.sample_rate) {
      fail("RateMismatch",
           "impulse response rate " + std::to_string(rir.sample_rate) +
               " differs from engine rate " +
               std::to_string(config.sample_rate));
    }
    const size_t block = static_cast<size_t>(config.block_size);
    const size_t max_len =
        static_cast<size_t>(config.max_rir_seconds * config.sample_rate);
    if (rir.length() > max_len) {
      fail("InvalidLength", "impulse response exceeds the engine maximum of " +
                                std::to_string(config.max_rir_seconds) + " s");
    }

    auto prepared = std::make_unique<PreparedRir>();
    prepared->channels_ = rir.channels;
    prepared->length_ = rir.length();
    prepared->partitions_ = (rir.length() + block - 1) / block;
    const size_t bins = fft.bins();
    prepared->bins_ = bins;

    std::vector<float> padded(2 * block, 0.0f);
    for (int ch = 0; ch < rir.channels; ++ch) {
      std::vector<float> re(prepared->partitions_ * bins);
      std::vector<float> im(prepared->partitions_ * bins);
      for (size_t p = 0; p < prepared->partitions_; ++p) {
        std::fill(padded.begin(), padded.end(), 0.0f);
        const size_t begin = p * block;
        const size_t count = std::min(block, rir.length() - begin);
        // Kernel occupies the first half of the FFT frame; the second half
        // is zero so the last `block` output samples of the circular
        // convolution are linear.
        for (size_t i = 0; i < count; ++i) {
          padded[i] = rir.samples[ch][begin + i];
        }
        fft.forward(padded.data(), re.data() + p * bins, im.data() + p * bins);
      }
      prepared->re_[ch] = std::move(re);
      prepared->im_[ch] = std::move(im);
    }
    return prepared;
  }

  int channels() const { return channels_; }
  size_t partitions() const { return partitions_; }
  size_t length() const { return length_; }
  const float* re(int ch, size_t partition) const {
    return re_[ch % channels_].data() + partition * bins_;
  }
  const float* im(int ch, size_t partition) const {
    return im_[ch % channels_].data() + partition * bins_;
  }

 private:
  int channels_ = 1;
  size_t partitions_ = 0;
  size_t length_ = 0;
  size_t bins_ = 0;
  std::array<std::vector<float>, 2> re_;
  std::array<std::vector<float>, 2> im_;
};

namespace renderer_detail {

// Fixed-capacity single-producer single-consumer pointer queue. The audio
// context pushes retired kernels; the control context drains and frees them.
class RetireQueue {
 public:
  explicit RetireQueue(size_t capacity) : slots_(capacity) {}

  bool push(PreparedRir* p) {
    const size_t head = head_.load(std::memory_order_relaxed);
    const size_t next = (head + 1) % slots_.size();
    if (next == tail_.load(std::memory_order_acquire)) return false;
    slots_[head] = p;
    head_.store(next, std::memory_order_release);
    return true;
  }

  PreparedRir* pop() {
    const size_t tail = tail_.load(std::memory_order_relaxed);
    if (tail == head_.load(std::memory_order_acquire)) return nullptr;
    PreparedRir* p = slots_[tail];
    tail_.store((tail + 1) % slots_.size(), std::memory_order_release);
    return p;
  }

 private:
  std::vector<PreparedRir*> slots_;
  std::atomic<size_t> head_{0};
  std::atomic<size_t> tail_{0};
};

}  // namespace renderer_detail

// One convolution path (a source's direct+early kernel, or the shared late
// kernel). Keeps a frequency-domain delay line of input spectra sized for
// the engine's maximum kernel, the active kernel, and the one it is fading
// from. Kernel swaps land at block boundaries with a one-block linear fade.
class ConvolutionTrack {
 public:
  ConvolutionTrack(const EngineConfig& config, const RealFft& fft)
      : block_(static_cast<size_t>(config.block_size)),
        bins_(fft.bins()),
        out_channels_(config.channels),
        fft_(fft),
        retired_(64) {
    const size_t max_len =
        static_cast<size_t>(config.max_rir_seconds * config.sample_rate);
    max_partitions_ = (max_len + block_ - 1) / block_ + 1;
    fdl_re_.assign(max_partitions_ * bins_, 0.0f);
    fdl_im_.assign(max_partitions_ * bins_, 0.0f);
    window_.assign(2 * block_, 0.0f);
    acc_re_.assign(bins_, 0.0f);
    acc_im_.assign(bins_, 0.0f);
    time_buf_.assign(2 * block_, 0.0f);
    fade_buf_.assign(block_ * static_cast<size_t>(out_channels_), 0.0f);
  }

  ~ConvolutionTrack() {
    drain_retired();
    delete pending_.exchange(nullptr);
    delete current_;
    delete previous_;
  }

  ConvolutionTrack(const ConvolutionTrack&) = delete;
  ConvolutionTrack& operator=(const ConvolutionTrack&) = delete;

  // Control context. Never touches audio-context state directly; the swap
  // happens at the next block boundary.
  void submit(std::unique_ptr<PreparedRir> rir) {
    if (rir && rir->partitions() > max_partitions_) {
      fail("InvalidLength", "kernel longer than the preallocated history");
    }
    drain_retired();
    PreparedRir* displaced = pending_.exchange(rir.release(),
                                               std::memory_order_acq_rel);
    delete displaced;
  }

  size_t kernel_length() const { return kernel_length_.load(); }

  // Audio context: convolve one input block and mix into `out` (one pointer
  // per engine channel, block_size samples each). Wait-free, no allocation.
  void process_add(const float* input, float* const* out) {
    // Pick up a pending kernel exactly at the block boundary.
    PreparedRir* incoming = pending_.exchange(nullptr, std::memory_order_acq_rel);
    bool fading = false;
    if (incoming) {
      if (previous_) {
        // Two swaps inside one block: the half-faded kernel retires early.
        retire(previous_);
      }
      previous_ = current_;
      current_ = incoming;
      kernel_length_.store(current_->length());
      fading = previous_ != nullptr;
    }

    // Slide the input window and push its spectrum into the delay line.
    std::memcpy(window_.data(), window_.data() + block_, block_ * sizeof(float));
    std::memcpy(window_.data() + block_, input, block_ * sizeof(float));
    head_ = (head_ + max_partitions_ - 1) % max_partitions_;
    fft_.forward(window_.data(), fdl_re_.data() + head_ * bins_,
                 fdl_im_.data() + head_ * bins_);

    if (current_ == nullptr) {
      if (previous_) {
        retire(previous_);
        previous_ = nullptr;
      }
      return;
    }

    if (!fading) {
      for (int ch = 0; ch < out_channels_; ++ch) {
        accumulate(*current_, ch);
        for (size_t i = 0; i < block_; ++i) {
          out[ch][i] += time_buf_[block_ + i];
        }
      }
      return;
    }

    // Crossfade: blend old-kernel and new-kernel outputs linearly across
    // the block, ending fully on the new kernel.
    for (int ch = 0; ch < out_channels_; ++ch) {
      accumulate(*previous_, ch);
      float* fade = fade_buf_.data() + static_cast<size_t>(ch) * block_;
      std::memcpy(fade, time_buf_.data() + block_, block_ * sizeof(float));
    }
    for (int ch = 0; ch < out_channels_; ++ch) {
      accumulate(*current_, ch);
      const float* fade = fade_buf_.data() + static_cast<size_t>(ch) * block_;
      const float inv = 1.0f / static_cast<float>(block_);
      for (size_t i = 0; i < block_; ++i) {
        const float t = static_cast<float>(i + 1) * inv;
        out[ch][i] += (1.0f - t) * fade[i] + t * time_buf_[block_ + i];
      }
    }
    retire(previous_);
    previous_ = nullptr;
  }

 private:
  void accumulate(const PreparedRir& kernel, int ch) {
    std::fill(acc_re_.begin(), acc_re_.end(), 0.0f);
    std::fill(acc_im_.begin(), acc_im_.end(), 0.0f);
    for (size_t p = 0; p < kernel.partitions(); ++p) {
      const size_t slot = (head_ + p) % max_partitions_;
      const float* xr = fdl_re_.data() + slot * bins_;
      const float* xi = fdl_im_.data() + slot * bins_;
      const float* hr = kernel.re(ch, p);
      const float* hi = kernel.im(ch, p);
      float* ar = acc_re_.data();
      float* ai = acc_im_.data();
      for (size_t k = 0; k < bins_; ++k) {
        ar[k] += xr[k] * hr[k] - xi[k] * hi[k];
        ai[k] += xr[k] * hi[k] + xi[k] * hr[k];
      }
    }
    fft_.inverse(acc_re_.data(), acc_im_.data(), time_buf_.data());
  }

  void retire(PreparedRir* p) {
    if (p == nullptr) return;
    if (!retired_.push(p)) {
      // Queue full; leak rather than free on the audio thread. The control
      // context drains on every submit, so this needs sustained submit
      // bursts with no control activity.
      return;
    }
  }

  void drain_retired() {
    while (PreparedRir* p = retired_.pop()) delete p;
  }

  size_t block_;
  size_t bins_;
  int out_channels_;
  const RealFft& fft_;
  size_t max_partitions_ = 0;

  std::vector<float> fdl_re_, fdl_im_;
  size_t head_ = 0;
  std::vector<float> window_;
  std::vector<float> acc_re_, acc_im_, time_buf_, fade_buf_;

  PreparedRir* current_ = nullptr;
  PreparedRir* previous_ = nullptr;
  std::atomic<PreparedRir*> pending_{nullptr};
  std::atomic<size_t> kernel_length_{0};
  renderer_detail::RetireQueue retired_;
};

// Block renderer: per-source direct+early convolution plus one shared late
// path fed by the unity mix of all source inputs.
class RenderEngine {
 public:
  explicit RenderEngine(const EngineConfig& config)
      : config_(config),
        fft_(2 * static_cast<size_t>(config.block_size)),
        control_fft_(2 * static_cast<size_t>(config.block_size)) {
    config_.validate();
    late_ = std::make_unique<ConvolutionTrack>(config_, fft_);
    mix_.assign(config_.block_size, 0.0f);
  }

  const EngineConfig& config() const { return config_; }

  int add_source() {
    sources_.push_back(std::make_unique<ConvolutionTrack>(config_, fft_));
    return static_cast<int>(sources_.size()) - 1;
  }

  int num_sources() const { return static_cast<int>(sources_.size()); }

  // Control context; preparation runs on its own FFT scratch so it never
  // races the audio context.
  void submit_rir(int source, const RoomImpulseResponse& rir) {
    track(source).submit(PreparedRir::prepare(rir, config_, control_fft_));
  }
  void submit_late_rir(const RoomImpulseResponse& rir) {
    late_->submit(PreparedRir::prepare(rir, config_, control_fft_));
  }

  size_t max_kernel_length() const {
    size_t n = late_->kernel_length();
    for (const auto& s : sources_) n = std::max(n, s->kernel_length());
    return n;
  }

  // Audio context: renders one block. `inputs` carries one block per source;
  // `output` one buffer per engine channel, all exactly block_size long.
  void render_block(std::span<const std::span<const float>> inputs,
                    std::span<std::vector<float>> output) {
    const size_t block = static_cast<size_t>(config_.block_size);
    if (inputs.size() != sources_.size()) {
      fail("BlockSizeMismatch", "expected one input block per source");
    }
    for (const auto& in : inputs) {
      if (in.size() != block) {
        fail("BlockSizeMismatch", "input block size differs from engine block");
      }
    }
    if (output.size() != static_cast<size_t>(config_.channels)) {
      fail("BlockSizeMismatch", "output channel count mismatch");
    }
    std::array<float*, 2> out_ptrs = {nullptr, nullptr};
    for (int ch = 0; ch < config_.channels; ++ch) {
      if (output[ch].size() != block) {
        fail("BlockSizeMismatch", "output block size differs from engine block");
      }
      std::fill(output[ch].begin(), output[ch].end(), 0.0f);
      out_ptrs[ch] = output[ch].data();
    }

    std::fill(mix_.begin(), mix_.end(), 0.0f);
    for (size_t s = 0; s < sources_.size(); ++s) {
      sources_[s]->process_add(inputs[s].data(), out_ptrs.data());
      for (size_t i = 0; i < block; ++i) mix_[i] += inputs[s][i];
    }
    late_->process_add(mix_.data(), out_ptrs.data());

    if (config_.master_gain != 1.0) {
      const float g = static_cast<float>(config_.master_gain);
      for (int ch = 0; ch < config_.channels; ++ch) {
        for (float& v : output[ch]) v *= g;
      }
    }
  }

 private:
  ConvolutionTrack& track(int source) {
    if (source < 0 || source >= static_cast<int>(sources_.size())) {
      fail("ParseError", "unknown source id " + std::to_string(source));
    }
    return *sources_[source];
  }

  EngineConfig config_;
  RealFft fft_;
  RealFft control_fft_;
  std::vector<std::unique_ptr<ConvolutionTrack>> sources_;
  std::unique_ptr<ConvolutionTrack> late_;
  std::vector<float> mix_;
};

}  // namespace sceneverb
