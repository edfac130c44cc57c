// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Optimization loop: AdamW with decoupled weight decay, linear warmup +
// single-cycle cosine decay, batched gradient accumulation, cue dropout for
// the hybrid variant, and warm starting from separator checkpoints.

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cse/checkpoint.hpp"
#include "cse/cues.hpp"
#include "cse/error.hpp"
#include "cse/losses.hpp"
#include "cse/model.hpp"
#include "cse/signal.hpp"

namespace cse {

struct TrainConfig {
  int64_t total_steps = 300000;
  int64_t warmup_steps = 5000;
  double peak_lr = 1.5e-4;
  int batch_size = 16;
  double weight_decay = 1e-2;
  uint64_t seed = 0;
  int64_t eval_every = 1000;       // checkpoint cadence
  std::string init_checkpoint;     // optional warm start
  double grad_clip_norm = 5.0;
  double segment_seconds = 3.0;    // training crop length
  double cue_dropout_p = 1.0 / 3.0;  // hybrid only, per cue

  void validate() const {
    check_arg(total_steps > 0, "total_steps must be > 0");
    check_arg(warmup_steps >= 0 && warmup_steps < total_steps, "warmup_steps must be < total_steps");
    check_arg(peak_lr > 0, "peak_lr must be > 0");
    check_arg(batch_size > 0, "batch_size must be > 0");
    check_arg(weight_decay >= 0, "weight_decay must be >= 0");
    check_arg(segment_seconds > 0, "segment_seconds must be > 0");
  }
};

// Linear warmup to the peak, then cosine decay to zero at total_steps.
inline double lr_at_step(int64_t step, const TrainConfig& cfg) {
  cfg.validate();
  check_arg(step >= 0 && step <= cfg.total_steps, "lr_at_step: step out of range");
  if (step < cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  const double phase = static_cast<double>(step - cfg.warmup_steps) /
                       static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(M_PI * phase));
}

// ---- AdamW ----

struct OptimizerState {
  std::map<std::string, Tensor<float>> m, v;
  int64_t step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// One bias-corrected moment update plus decoupled decay lr*wd*theta.
inline void optimizer_step(ParamSet<float>& params,
                           const std::map<std::string, Tensor<float>>& grads,
                           OptimizerState& state, double lr, double weight_decay) {
  for (const auto& [name, g] : grads) {
    check_arg(params.has(name), "optimizer_step: unknown parameter " + name);
    check_arg(g.shape == params.at(name).shape, "optimizer_step: grad shape mismatch for " + name);
    for (float v : g.data)
      check(std::isfinite(v), ErrorCode::kInvalidState,
            "optimizer_step: non-finite gradient for parameter " + name);
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));

  for (auto& [name, theta] : params.tensors) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor<float>& g = git->second;
    Tensor<float>& m = state.m.try_emplace(name, Tensor<float>::zeros(theta.shape)).first->second;
    Tensor<float>& v = state.v.try_emplace(name, Tensor<float>::zeros(theta.shape)).first->second;
    for (size_t i = 0; i < theta.data.size(); ++i) {
      const double gi = g.data[i];
      m.data[i] = static_cast<float>(kAdamBeta1 * m.data[i] + (1.0 - kAdamBeta1) * gi);
      v.data[i] = static_cast<float>(kAdamBeta2 * v.data[i] + (1.0 - kAdamBeta2) * gi * gi);
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      double w = theta.data[i];
      w -= lr * (mhat / (std::sqrt(vhat) + kAdamEps));
      w -= lr * weight_decay * theta.data[i];
      theta.data[i] = static_cast<float>(w);
    }
  }
}

// ---- data plumbing ----

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual MixtureSample next(Rng& rng) = 0;
};

// Cycles a fixed set in order; used for overfit checks.
class FixedSampleSource : public SampleSource {
 public:
  explicit FixedSampleSource(std::vector<MixtureSample> samples) : samples_(std::move(samples)) {
    check_arg(!samples_.empty(), "FixedSampleSource: empty set");
  }
  MixtureSample next(Rng&) override {
    MixtureSample s = samples_[cursor_];
    cursor_ = (cursor_ + 1) % samples_.size();
    return s;
  }

 private:
  std::vector<MixtureSample> samples_;
  size_t cursor_ = 0;
};

// Crops mixture and sources at a shared random offset (or zero-pads) so all
// batch elements share one segment length; additivity is preserved.
inline void crop_sample(MixtureSample& s, int64_t segment_len, Rng& rng) {
  const int64_t len = s.mixture.size();
  int64_t offset = 0;
  if (len > segment_len) offset = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(len - segment_len + 1)));
  auto crop = [&](Waveform& w) {
    std::vector<float> out(static_cast<size_t>(segment_len), 0.f);
    const int64_t n = std::min(segment_len, w.size() - offset);
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = w.samples[static_cast<size_t>(offset + i)];
    w.samples = std::move(out);
  };
  crop(s.mixture);
  for (auto& src : s.sources) crop(src);
  // Enrollment keeps its own length; it only feeds the speaker embedder.
}

struct CueProviders {
  EmbeddingProvider* context = nullptr;
  EmbeddingProvider* speaker = nullptr;
};

struct TraceRow {
  int64_t step = 0;
  double lr = 0;
  double loss = 0;
  double ce_term = 0;
  double pit_term = 0;
};

inline void write_loss_trace(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream f(path, std::ios::trunc);
  check(f.good(), ErrorCode::kIo, "cannot open for write: " + path);
  f << "step,lr,loss,ce_term,pit_term\n";
  for (const auto& r : trace)
    f << r.step << "," << r.lr << "," << r.loss << "," << r.ce_term << "," << r.pit_term << "\n";
  check(f.good(), ErrorCode::kIo, "write failed: " + path);
}

struct TrainResult {
  ParamSet<float> params;
  std::vector<TraceRow> trace;
  std::vector<std::string> warm_loaded;  // tensor names taken from init_checkpoint
};

struct TrainHooks {
  std::function<void(int64_t step, const TraceRow&)> on_step;
  std::string checkpoint_dir;  // when set, checkpoints every eval_every steps
};

namespace detail {

inline double global_grad_norm(const std::map<std::string, Tensor<float>>& grads) {
  double acc = 0;
  for (const auto& [name, g] : grads)
    for (float v : g.data) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

}  // namespace detail

// Per step: fetch batch -> embed cues -> (hybrid) cue dropout -> forward ->
// variant loss -> backward -> clipped AdamW update. The sample source is
// responsible for augmentation and mixing; crops happen here.
inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                         SampleSource& data, const CueProviders& cues,
                         const TrainHooks& hooks = {}) {
  model_cfg.validate();
  train_cfg.validate();
  if (model_cfg.uses_context_cue())
    check_arg(cues.context != nullptr, "train: context cue provider required");
  if (model_cfg.uses_speaker_cue())
    check_arg(cues.speaker != nullptr, "train: speaker cue provider required");

  TrainResult result;
  result.params = init_parameters<float>(model_cfg, train_cfg.seed);
  if (!train_cfg.init_checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(train_cfg.init_checkpoint);
    result.warm_loaded = load_overlapping(result.params, ck.params);
  }

  OptimizerState opt;
  Rng rng(mix_seed(train_cfg.seed, 0x747261696eull /*"train"*/));
  result.trace.reserve(static_cast<size_t>(train_cfg.total_steps));

  for (int64_t step = 0; step < train_cfg.total_steps; ++step) {
    Tape<float> tape;
    auto ids = ModelGraph<float>::stage_parameters(tape, result.params, true);
    ModelGraph<float> graph(tape, model_cfg, ids);

    int total_loss = -1, total_ce = -1, total_pit = -1;
    int64_t segment_len = 0;

    for (int b = 0; b < train_cfg.batch_size; ++b) {
      MixtureSample s = data.next(rng);
      if (segment_len == 0)
        segment_len = std::llround(train_cfg.segment_seconds * s.mixture.sample_rate);
      crop_sample(s, segment_len, rng);

      std::optional<CueEmbedding> f_c, f_s;
      if (model_cfg.uses_context_cue()) f_c = embed_context(s.context_text, *cues.context);
      if (model_cfg.uses_speaker_cue()) {
        check_arg(s.enrollment.has_value(), "train: hybrid variant needs enrollment audio");
        f_s = embed_speaker(*s.enrollment, *cues.speaker, s.id + ".enroll");
      }
      if (model_cfg.variant == Variant::kHybrid && f_c && f_s) {
        auto [c2, s2] = dropout_cues(*f_c, *f_s, rng, train_cfg.cue_dropout_p, train_cfg.cue_dropout_p);
        f_c = c2;
        f_s = s2;
      }

      auto fg = graph.build(s.mixture.samples, cue_vector(f_c), cue_vector(f_s));

      std::vector<std::vector<float>> refs;
      for (const auto& src : s.sources) refs.push_back(src.samples);
      const std::vector<float>& target = s.sources[static_cast<size_t>(s.target_index)].samples;

      int loss = -1, ce = -1, pit = -1;
      switch (model_cfg.variant) {
        case Variant::kSeparator:
          pit = pit_loss_node(tape, fg.streams, refs).first;
          loss = pit;
          break;
        case Variant::kContSep: {
          auto parts = contsep_loss_node(tape, fg.logits, fg.streams, refs, target);
          loss = parts.total;
          ce = parts.ce;
          pit = parts.pit;
          break;
        }
        case Variant::kContext:
        case Variant::kHybrid:
          loss = si_snr_loss_node(tape, fg.streams[0], target);
          break;
      }
      total_loss = total_loss < 0 ? loss : tape.add(total_loss, loss);
      if (ce >= 0) total_ce = total_ce < 0 ? ce : tape.add(total_ce, ce);
      if (pit >= 0) total_pit = total_pit < 0 ? pit : tape.add(total_pit, pit);
    }

    const double inv_b = 1.0 / train_cfg.batch_size;
    const int mean_loss = tape.affine(total_loss, inv_b);
    tape.backward(mean_loss);

    std::map<std::string, Tensor<float>> grads;
    for (const auto& [name, id] : ids)
      if (tape.has_grad(id)) grads.emplace(name, tape.grad(id));

    if (train_cfg.grad_clip_norm > 0) {
      const double norm = detail::global_grad_norm(grads);
      if (norm > train_cfg.grad_clip_norm) {
        const float scale = static_cast<float>(train_cfg.grad_clip_norm / norm);
        for (auto& [name, g] : grads)
          for (float& v : g.data) v *= scale;
      }
    }

    const double lr = lr_at_step(step, train_cfg);
    optimizer_step(result.params, grads, opt, lr, train_cfg.weight_decay);

    TraceRow row;
    row.step = step;
    row.lr = lr;
    row.loss = tape.val(mean_loss).data[0];
    row.ce_term = total_ce >= 0 ? tape.val(total_ce).data[0] * inv_b : 0.0;
    row.pit_term = total_pit >= 0 ? tape.val(total_pit).data[0] * inv_b : 0.0;
    result.trace.push_back(row);
    if (hooks.on_step) hooks.on_step(step, row);

    if (!hooks.checkpoint_dir.empty() && train_cfg.eval_every > 0 &&
        (step + 1) % train_cfg.eval_every == 0)
      save_checkpoint(hooks.checkpoint_dir + "/step_" + std::to_string(step + 1) + ".csem",
                      model_cfg, result.params);
  }
  return result;
}

// Mean loss of the current parameters on a fixed batch, computed exactly as
// one training step would (no update). Used for warm-start fidelity checks.
inline double eval_loss_on_batch(const ModelConfig& model_cfg, const ParamSet<float>& params,
                                 const std::vector<MixtureSample>& batch,
                                 const CueProviders& cues) {
  Tape<float> tape;
  auto ids = ModelGraph<float>::stage_parameters(tape, params, false);
  ModelGraph<float> graph(tape, model_cfg, ids);
  int total = -1;
  for (const auto& s : batch) {
    std::optional<CueEmbedding> f_c, f_s;
    if (model_cfg.uses_context_cue()) f_c = embed_context(s.context_text, *cues.context);
    if (model_cfg.uses_speaker_cue() && s.enrollment)
      f_s = embed_speaker(*s.enrollment, *cues.speaker, s.id + ".enroll");
    auto fg = graph.build(s.mixture.samples, cue_vector(f_c), cue_vector(f_s));
    std::vector<std::vector<float>> refs;
    for (const auto& src : s.sources) refs.push_back(src.samples);
    const std::vector<float>& target = s.sources[static_cast<size_t>(s.target_index)].samples;
    int loss = -1;
    switch (model_cfg.variant) {
      case Variant::kSeparator:
        loss = pit_loss_node(tape, fg.streams, refs).first;
        break;
      case Variant::kContSep:
        loss = contsep_loss_node(tape, fg.logits, fg.streams, refs, target).total;
        break;
      default:
        loss = si_snr_loss_node(tape, fg.streams[0], target);
    }
    total = total < 0 ? loss : tape.add(total, loss);
  }
  return tape.val(tape.affine(total, 1.0 / batch.size())).data[0];
}

}  // namespace cse
