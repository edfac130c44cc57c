// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Time-domain dual-path masking network with cue injection. One model
// family, four variants:
//   separator — plain source separation, no cue, n masks
//   contsep   — separation + a target-selection head, context cue
//   context   — single-mask extraction from the context cue
//   hybrid    — single-mask extraction from context and/or speaker cues

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cse/autodiff.hpp"
#include "cse/cues.hpp"
#include "cse/error.hpp"
#include "cse/rng.hpp"
#include "cse/signal.hpp"
#include "cse/tensor.hpp"

namespace cse {

enum class Variant { kSeparator, kContSep, kContext, kHybrid };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSeparator: return "separator";
    case Variant::kContSep: return "contsep";
    case Variant::kContext: return "context";
    case Variant::kHybrid: return "hybrid";
  }
  return "?";
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "separator") return Variant::kSeparator;
  if (s == "contsep") return Variant::kContSep;
  if (s == "context") return Variant::kContext;
  if (s == "hybrid") return Variant::kHybrid;
  throw_error(ErrorCode::kValidation, "unknown variant: " + s);
}

struct ModelConfig {
  int embed_dim = 256;        // D
  int layers_per_pass = 8;    // Intra/Inter layers per block
  int num_blocks = 2;
  int chunk_size = 250;       // C
  double chunk_overlap = 0.5;
  int encoder_kernel = 16;
  int encoder_stride = 8;
  int num_heads = 8;
  int num_streams = 2;        // n
  Variant variant = Variant::kSeparator;
  int context_dim = 64;       // E_c
  int speaker_dim = 64;       // E_s

  int hop() const {
    const double h = chunk_size * (1.0 - chunk_overlap);
    return static_cast<int>(std::lround(h));
  }

  int ff_dim() const { return 4 * embed_dim; }

  // Masks predicted by the head: extractors produce one, separators n.
  int num_masks() const {
    return (variant == Variant::kContext || variant == Variant::kHybrid) ? 1 : num_streams;
  }

  bool uses_context_cue() const { return variant != Variant::kSeparator; }
  bool uses_speaker_cue() const { return variant == Variant::kHybrid; }

  void validate() const {
    check_arg(embed_dim > 0 && layers_per_pass > 0 && num_blocks > 0, "bad model dims");
    check_arg(chunk_size > 0, "chunk_size must be > 0");
    check_arg(chunk_overlap > 0 && chunk_overlap < 1, "chunk_overlap must be in (0,1)");
    const double h = chunk_size * (1.0 - chunk_overlap);
    check_arg(std::abs(h - std::lround(h)) < 1e-9 && std::lround(h) >= 1,
              "chunk_size * (1 - overlap) must be a positive integer");
    check_arg(embed_dim % num_heads == 0, "embed_dim must be divisible by num_heads");
    check_arg(num_streams >= 2 && num_streams <= 4, "num_streams must be 2..4");
    check_arg(encoder_kernel > 0 && encoder_stride > 0, "bad encoder geometry");
    check_arg(context_dim > 0 && speaker_dim > 0, "cue dims must be > 0");
  }

  // Small configuration used throughout the test and toy pipelines.
  static ModelConfig tiny(Variant v, int n = 2) {
    ModelConfig c;
    c.embed_dim = 16;
    c.layers_per_pass = 1;
    c.num_blocks = 1;
    c.chunk_size = 8;
    c.chunk_overlap = 0.5;
    c.num_heads = 2;
    c.num_streams = n;
    c.variant = v;
    c.context_dim = 32;
    c.speaker_dim = 32;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"embed_dim", c.embed_dim},
                     {"layers_per_pass", c.layers_per_pass},
                     {"num_blocks", c.num_blocks},
                     {"chunk_size", c.chunk_size},
                     {"chunk_overlap", c.chunk_overlap},
                     {"encoder_kernel", c.encoder_kernel},
                     {"encoder_stride", c.encoder_stride},
                     {"num_heads", c.num_heads},
                     {"num_streams", c.num_streams},
                     {"variant", variant_name(c.variant)},
                     {"context_dim", c.context_dim},
                     {"speaker_dim", c.speaker_dim}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.layers_per_pass = j.value("layers_per_pass", c.layers_per_pass);
  c.num_blocks = j.value("num_blocks", c.num_blocks);
  c.chunk_size = j.value("chunk_size", c.chunk_size);
  c.chunk_overlap = j.value("chunk_overlap", c.chunk_overlap);
  c.encoder_kernel = j.value("encoder_kernel", c.encoder_kernel);
  c.encoder_stride = j.value("encoder_stride", c.encoder_stride);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.num_streams = j.value("num_streams", c.num_streams);
  if (j.contains("variant")) c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.context_dim = j.value("context_dim", c.context_dim);
  c.speaker_dim = j.value("speaker_dim", c.speaker_dim);
}

// ---- parameters ----

template <typename S>
struct ParamSet {
  std::map<std::string, Tensor<S>> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  const Tensor<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    check(it != tensors.end(), ErrorCode::kInvalidState, "missing parameter: " + name);
    return it->second;
  }

  template <typename T>
  ParamSet<T> cast() const {
    ParamSet<T> out;
    for (const auto& [k, v] : tensors) out.tensors.emplace(k, v.template cast<T>());
    return out;
  }
};

namespace detail {

template <typename S>
Tensor<S> xavier_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (S& v : t.data) v = static_cast<S>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace detail

// Per-layer parameter names, shared by init, the graph builder and
// checkpoint warm-starting.
inline std::vector<std::string> layer_prefixes(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (int b = 0; b < cfg.num_blocks; ++b)
    for (const char* pass : {"intra", "inter"})
      for (int l = 0; l < cfg.layers_per_pass; ++l)
        out.push_back("block" + std::to_string(b) + "." + pass + std::to_string(l) + ".");
  return out;
}

// Fresh parameters; every tensor gets its own stream seeded from
// (seed, name), so initialization does not depend on iteration order.
template <typename S = float>
ParamSet<S> init_parameters(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParamSet<S> p;
  const int d = cfg.embed_dim;

  auto put = [&](const std::string& name, std::vector<int> shape, int fan_in, int fan_out) {
    Rng rng(mix_seed(seed, fnv1a64(name)));
    p.tensors.emplace(name, detail::xavier_uniform<S>(std::move(shape), fan_in, fan_out, rng));
  };
  auto put_const = [&](const std::string& name, std::vector<int> shape, S value) {
    Tensor<S> t(std::move(shape));
    t.fill(value);
    p.tensors.emplace(name, std::move(t));
  };

  put("encoder.weight", {cfg.encoder_kernel, d}, cfg.encoder_kernel, d);
  put_const("encoder.bias", {d}, S(0));
  put("decoder.weight", {d, cfg.encoder_kernel}, d, cfg.encoder_kernel);

  for (const std::string& prefix : layer_prefixes(cfg)) {
    put_const(prefix + "ln1.gamma", {d}, S(1));
    put_const(prefix + "ln1.beta", {d}, S(0));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) put(prefix + w, {d, d}, d, d);
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) put_const(prefix + b, {d}, S(0));
    put_const(prefix + "ln2.gamma", {d}, S(1));
    put_const(prefix + "ln2.beta", {d}, S(0));
    put(prefix + "ff.w1", {d, cfg.ff_dim()}, d, cfg.ff_dim());
    put_const(prefix + "ff.b1", {cfg.ff_dim()}, S(0));
    put(prefix + "ff.w2", {cfg.ff_dim(), d}, cfg.ff_dim(), d);
    put_const(prefix + "ff.b2", {d}, S(0));
  }

  put("mask_head.weight", {d, cfg.num_masks() * d}, d, cfg.num_masks() * d);
  put_const("mask_head.bias", {cfg.num_masks() * d}, S(0));

  if (cfg.variant == Variant::kContSep) {
    put("target_head.weight", {d, cfg.num_streams}, d, cfg.num_streams);
    put_const("target_head.bias", {cfg.num_streams}, S(0));
  }
  if (cfg.uses_context_cue()) {
    put("cue.context.weight", {cfg.context_dim, d}, cfg.context_dim, d);
    put_const("cue.context.bias", {d}, S(0));
  }
  if (cfg.uses_speaker_cue()) {
    put("cue.speaker.weight", {cfg.speaker_dim, d}, cfg.speaker_dim, d);
    put_const("cue.speaker.bias", {d}, S(0));
  }
  return p;
}

// ---- plain segmentation round trip (also used outside the graph) ----

enum class AxisOrder { kNCD, kCND };

template <typename S>
struct ChunkTensor {
  Tensor<S> data;  // [N,C,D] for kNCD
  AxisOrder order = AxisOrder::kNCD;
  int orig_frames = 0;  // F before padding
  int hop = 0;
};

inline int segment_hop(int chunk, double overlap) {
  check_arg(chunk > 0, "segment: chunk size must be > 0");
  const double h = chunk * (1.0 - overlap);
  check_arg(overlap > 0 && overlap < 1 && std::abs(h - std::lround(h)) < 1e-9 && std::lround(h) >= 1,
            "segment: chunk * (1 - overlap) must be a positive integer");
  return static_cast<int>(std::lround(h));
}

inline int segment_count(int frames, int chunk, int hop) {
  const int over = std::max(0, frames - chunk);
  return over / hop + (over % hop ? 2 : 1);  // ceil over hop, then +1
}

template <typename S>
ChunkTensor<S> segment(const Tensor<S>& feature, int chunk, double overlap) {
  check_arg(feature.rank() == 2, "segment: feature must be [F, D]");
  const int hop = segment_hop(chunk, overlap);
  const int f = feature.dim(0), d = feature.dim(1);
  const int n = segment_count(f, chunk, hop);
  ChunkTensor<S> out;
  out.data = Tensor<S>({n, chunk, d});
  out.order = AxisOrder::kNCD;
  out.orig_frames = f;
  out.hop = hop;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < chunk; ++c) {
      const int src = i * hop + c;
      if (src >= f) continue;  // zero padding
      for (int j = 0; j < d; ++j) out.data.at(i, c, j) = feature.at(src, j);
    }
  return out;
}

template <typename S>
Tensor<S> overlap_add(const ChunkTensor<S>& chunks) {
  check_arg(chunks.order == AxisOrder::kNCD, "overlap_add: expected [N,C,D] order");
  check_arg(chunks.data.rank() == 3 && chunks.hop > 0 && chunks.orig_frames > 0,
            "overlap_add: inconsistent metadata");
  const int n = chunks.data.dim(0), c = chunks.data.dim(1), d = chunks.data.dim(2);
  const int fp = (n - 1) * chunks.hop + c;
  check_arg(chunks.orig_frames <= fp, "overlap_add: inconsistent metadata");
  Tensor<S> acc({fp, d});
  std::vector<int> count(static_cast<size_t>(fp), 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const int f = i * chunks.hop + j;
      count[static_cast<size_t>(f)]++;
      for (int k = 0; k < d; ++k) acc.at(f, k) += chunks.data.at(i, j, k);
    }
  Tensor<S> out({chunks.orig_frames, d});
  for (int f = 0; f < chunks.orig_frames; ++f)
    for (int k = 0; k < d; ++k) out.at(f, k) = acc.at(f, k) / static_cast<S>(count[static_cast<size_t>(f)]);
  return out;
}

// ---- forward graph ----

struct ForwardOptions {
  // Excludes cue positions from attention keys; with zeroed cue projections
  // this makes a cued pass identical to an uncued one (used by tests).
  bool exclude_cue_keys = false;
};

template <typename S>
struct ForwardGraph {
  std::vector<int> streams;  // node ids, each [T]
  int logits = -1;           // node id [n], contsep only
  int frames = 0;            // encoder frames F
};

struct ModelOutput {
  std::vector<Waveform> streams;
  std::optional<std::vector<float>> target_logits;
};

namespace detail {

template <typename S>
Tensor<S> sinusoidal_pe(int len, int cue_rows, int d) {
  // Cue rows carry no positional code; content rows are indexed from zero
  // regardless of how many cues are prepended.
  Tensor<S> pe({cue_rows + len, d});
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < d; ++i) {
      const double angle = pos / std::pow(10000.0, 2.0 * (i / 2) / d);
      pe.at(cue_rows + pos, i) = static_cast<S>((i % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  return pe;
}

inline std::vector<int64_t> head_split_map(int b, int l, int heads, int dh) {
  std::vector<int64_t> map(static_cast<size_t>(b) * heads * l * dh);
  size_t o = 0;
  for (int bi = 0; bi < b; ++bi)
    for (int h = 0; h < heads; ++h)
      for (int li = 0; li < l; ++li)
        for (int di = 0; di < dh; ++di)
          map[o++] = (static_cast<int64_t>(bi) * l + li) * (heads * dh) + h * dh + di;
  return map;
}

inline std::vector<int64_t> head_merge_map(int b, int l, int heads, int dh) {
  std::vector<int64_t> map(static_cast<size_t>(b) * heads * l * dh);
  size_t o = 0;
  for (int bi = 0; bi < b; ++bi)
    for (int li = 0; li < l; ++li)
      for (int h = 0; h < heads; ++h)
        for (int di = 0; di < dh; ++di)
          map[o++] = ((static_cast<int64_t>(bi) * heads + h) * l + li) * dh + di;
  return map;
}

inline std::vector<int64_t> transpose01_map(int a, int b, int d) {
  std::vector<int64_t> map(static_cast<size_t>(a) * b * d);
  size_t o = 0;
  for (int j = 0; j < b; ++j)
    for (int i = 0; i < a; ++i)
      for (int k = 0; k < d; ++k) map[o++] = (static_cast<int64_t>(i) * b + j) * d + k;
  return map;
}

}  // namespace detail

// Builds the forward computation on a tape. Parameters are staged once per
// tape (`stage_parameters`) so several samples can share one backward pass.
template <typename S>
class ModelGraph {
 public:
  ModelGraph(Tape<S>& tape, const ModelConfig& cfg, const std::map<std::string, int>& param_ids)
      : t_(tape), cfg_(cfg), pid_(param_ids) {
    cfg_.validate();
  }

  static std::map<std::string, int> stage_parameters(Tape<S>& tape, const ParamSet<S>& params,
                                                     bool trainable) {
    std::map<std::string, int> ids;
    for (const auto& [name, tensor] : params.tensors) ids.emplace(name, tape.leaf(tensor, trainable));
    return ids;
  }

  ForwardGraph<S> build(const std::vector<S>& mixture, const std::optional<std::vector<S>>& ctx,
                        const std::optional<std::vector<S>>& spk, ForwardOptions opt = {}) {
    validate_cues(ctx, spk);
    const int t_len = static_cast<int>(mixture.size());
    check_arg(t_len >= cfg_.encoder_kernel, "forward: input shorter than encoder kernel");

    const int x = t_.leaf(Tensor<S>({t_len}, mixture), false);
    const int enc = encode(x, t_len);
    const int f = t_.val(enc).dim(0);

    // Projected cue vectors, re-prepended at every layer.
    std::vector<int> cues;
    if (ctx) cues.push_back(project(*ctx, "cue.context"));
    if (spk) cues.push_back(project(*spk, "cue.speaker"));

    const int hop = cfg_.hop();
    const int n_chunks = segment_count(f, cfg_.chunk_size, hop);
    int h = t_.gather(enc, segment_map(f, n_chunks, hop), {n_chunks, cfg_.chunk_size, cfg_.embed_dim});

    int logits = -1;
    for (int b = 0; b < cfg_.num_blocks; ++b) {
      for (int l = 0; l < cfg_.layers_per_pass; ++l)
        h = layer(h, prefix(b, "intra", l), cues, opt, nullptr);
      h = transpose01(h);  // [C, N, D]
      for (int l = 0; l < cfg_.layers_per_pass; ++l) {
        const bool last_inter = (b == cfg_.num_blocks - 1 && l == cfg_.layers_per_pass - 1);
        int full = -1;
        h = layer(h, prefix(b, "inter", l), cues, opt,
                  (last_inter && cfg_.variant == Variant::kContSep) ? &full : nullptr);
        if (full >= 0) logits = target_logits(full);
      }
      h = transpose01(h);  // back to [N, C, D]
    }

    ForwardGraph<S> out;
    out.frames = f;
    out.logits = logits;

    // Per-stream mask -> overlap-add -> ReLU gate on the encoder feature ->
    // transposed-conv decode, trimmed to the input length.
    const int mh = t_.add_last(t_.matmul(h, pid("mask_head.weight")), pid("mask_head.bias"));
    for (int s = 0; s < cfg_.num_masks(); ++s) {
      const int chunk_mask = slice_mask(mh, s, n_chunks);
      const int mask = t_.relu(t_.overlap_add_chunks(chunk_mask, hop, f));
      const int masked = t_.mul(mask, enc);
      const int taps = t_.matmul(masked, pid("decoder.weight"));
      const int wave = t_.frame_overlap_add(taps, cfg_.encoder_stride, t_len);
      out.streams.push_back(wave);
    }
    return out;
  }

 private:
  void validate_cues(const std::optional<std::vector<S>>& ctx,
                     const std::optional<std::vector<S>>& spk) const {
    switch (cfg_.variant) {
      case Variant::kSeparator:
        check_arg(!ctx && !spk, "separator takes no cues");
        break;
      case Variant::kContSep:
      case Variant::kContext:
        check_arg(ctx.has_value(), variant_name(cfg_.variant) + " requires a context cue");
        check_arg(!spk, variant_name(cfg_.variant) + " takes no speaker cue");
        break;
      case Variant::kHybrid:
        break;  // any subset, possibly empty
    }
    if (ctx)
      check_arg(static_cast<int>(ctx->size()) == cfg_.context_dim,
                "context embedding dim mismatch");
    if (spk)
      check_arg(static_cast<int>(spk->size()) == cfg_.speaker_dim,
                "speaker embedding dim mismatch");
  }

  int pid(const std::string& name) const {
    auto it = pid_.find(name);
    check(it != pid_.end(), ErrorCode::kInvalidState, "parameter not staged: " + name);
    return it->second;
  }

  static std::string prefix(int block, const char* pass, int l) {
    return "block" + std::to_string(block) + "." + pass + std::to_string(l) + ".";
  }

  int project(const std::vector<S>& e, const std::string& which) {
    const int leaf = t_.leaf(Tensor<S>({1, static_cast<int>(e.size())}, e), false);
    const int y = t_.add_last(t_.matmul(leaf, pid(which + ".weight")), pid(which + ".bias"));
    return t_.reshape(y, {cfg_.embed_dim});
  }

  int encode(int x, int t_len) {
    const int f = (t_len - cfg_.encoder_kernel) / cfg_.encoder_stride + 1;
    std::vector<int64_t> map(static_cast<size_t>(f) * cfg_.encoder_kernel);
    size_t o = 0;
    for (int i = 0; i < f; ++i)
      for (int k = 0; k < cfg_.encoder_kernel; ++k)
        map[o++] = static_cast<int64_t>(i) * cfg_.encoder_stride + k;
    const int frames = t_.gather(x, std::move(map), {f, cfg_.encoder_kernel});
    return t_.relu(t_.add_last(t_.matmul(frames, pid("encoder.weight")), pid("encoder.bias")));
  }

  std::vector<int64_t> segment_map(int f, int n_chunks, int hop) const {
    const int c = cfg_.chunk_size, d = cfg_.embed_dim;
    std::vector<int64_t> map(static_cast<size_t>(n_chunks) * c * d);
    size_t o = 0;
    for (int i = 0; i < n_chunks; ++i)
      for (int j = 0; j < c; ++j) {
        const int src = i * hop + j;
        for (int k = 0; k < d; ++k)
          map[o++] = src < f ? static_cast<int64_t>(src) * d + k : -1;
      }
    return map;
  }

  int transpose01(int h) {
    const Tensor<S>& v = t_.val(h);
    return t_.gather(h, detail::transpose01_map(v.dim(0), v.dim(1), v.dim(2)),
                     {v.dim(1), v.dim(0), v.dim(2)});
  }

  // Pre-norm transformer layer over [B, L, D] with cue rows prepended and
  // dropped around the residual body. `full_out`, when set, receives the
  // pre-drop output (the contsep target head reads its first row).
  int layer(int x, const std::string& p, const std::vector<int>& cues, const ForwardOptions& opt,
            int* full_out) {
    const Tensor<S>& v = t_.val(x);
    const int L = v.dim(1);
    const int k = static_cast<int>(cues.size());

    int z = k ? t_.prepend_rows(x, cues) : x;
    z = t_.add_bcast0(z, t_.leaf(detail::sinusoidal_pe<S>(L, k, cfg_.embed_dim), false));

    int mask = -1;
    if (k && opt.exclude_cue_keys) {
      Tensor<S> m({k + L});
      for (int j = 0; j < k; ++j) m.data[static_cast<size_t>(j)] = S(-1e30);
      mask = t_.leaf(std::move(m), false);
    }

    const int a = t_.layer_norm(z, pid(p + "ln1.gamma"), pid(p + "ln1.beta"));
    z = t_.add(z, attention(a, p, mask));
    const int f = t_.layer_norm(z, pid(p + "ln2.gamma"), pid(p + "ln2.beta"));
    const int ff1 = t_.relu(t_.add_last(t_.matmul(f, pid(p + "ff.w1")), pid(p + "ff.b1")));
    const int ff2 = t_.add_last(t_.matmul(ff1, pid(p + "ff.w2")), pid(p + "ff.b2"));
    z = t_.add(z, ff2);

    if (full_out) *full_out = z;
    return k ? t_.drop_rows(z, k) : z;
  }

  int attention(int x, const std::string& p, int mask) {
    const Tensor<S>& v = t_.val(x);
    const int B = v.dim(0), L = v.dim(1), D = cfg_.embed_dim;
    const int H = cfg_.num_heads, dh = D / H;

    const int q = t_.add_last(t_.matmul(x, pid(p + "attn.wq")), pid(p + "attn.bq"));
    const int kk = t_.add_last(t_.matmul(x, pid(p + "attn.wk")), pid(p + "attn.bk"));
    const int vv = t_.add_last(t_.matmul(x, pid(p + "attn.wv")), pid(p + "attn.bv"));

    const auto split = detail::head_split_map(B, L, H, dh);
    const int qh = t_.gather(q, split, {B * H, L, dh});
    const int kh = t_.gather(kk, split, {B * H, L, dh});
    const int vh = t_.gather(vv, split, {B * H, L, dh});

    int scores = t_.affine(t_.bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (mask >= 0) scores = t_.add_last(scores, mask);
    const int probs = t_.softmax_last(scores);
    const int ctxv = t_.bmm(probs, vh);
    const int merged = t_.gather(ctxv, detail::head_merge_map(B, L, H, dh), {B, L, D});
    return t_.add_last(t_.matmul(merged, pid(p + "attn.wo")), pid(p + "attn.bo"));
  }

  // Mean over the chunk axis of the first inter row, then a linear head.
  int target_logits(int full /*[C, k+N, D]*/) {
    const int row = t_.slice_row(full, 0);  // [C, D]
    const int pooled = t_.reshape(t_.mean_axis0(row), {1, cfg_.embed_dim});
    const int y = t_.add_last(t_.matmul(pooled, pid("target_head.weight")), pid("target_head.bias"));
    return t_.reshape(y, {cfg_.num_streams});
  }

  int slice_mask(int mh, int stream, int n_chunks) {
    const int c = cfg_.chunk_size, d = cfg_.embed_dim, nm = cfg_.num_masks();
    std::vector<int64_t> map(static_cast<size_t>(n_chunks) * c * d);
    size_t o = 0;
    for (int i = 0; i < n_chunks; ++i)
      for (int j = 0; j < c; ++j)
        for (int k = 0; k < d; ++k)
          map[o++] = (static_cast<int64_t>(i) * c + j) * (nm * d) + stream * d + k;
    return t_.gather(mh, std::move(map), {n_chunks, c, d});
  }

  Tape<S>& t_;
  ModelConfig cfg_;
  const std::map<std::string, int>& pid_;
};

inline std::optional<std::vector<float>> cue_vector(const std::optional<CueEmbedding>& e) {
  if (!e || !e->present) return std::nullopt;
  return e->vector;
}

// Inference entry point: runs one mixture through the network.
inline ModelOutput forward(const Waveform& mixture, const std::optional<CueEmbedding>& f_c,
                           const std::optional<CueEmbedding>& f_s, const ParamSet<float>& params,
                           const ModelConfig& cfg, ForwardOptions opt = {}) {
  Tape<float> tape;
  auto ids = ModelGraph<float>::stage_parameters(tape, params, false);
  ModelGraph<float> graph(tape, cfg, ids);
  auto fg = graph.build(mixture.samples, cue_vector(f_c), cue_vector(f_s), opt);

  ModelOutput out;
  for (int s : fg.streams) {
    Waveform w;
    w.sample_rate = mixture.sample_rate;
    w.samples = tape.val(s).data;
    out.streams.push_back(std::move(w));
  }
  if (fg.logits >= 0) out.target_logits = tape.val(fg.logits).data;
  return out;
}

}  // namespace cse
