// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Conditioning cues: dialogue-history formatting, embedding providers
// (deterministic mock, file-backed cache), cue projection and training-time
// cue dropout.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cse/error.hpp"
#include "cse/rng.hpp"
#include "cse/signal.hpp"
#include "cse/tensor.hpp"

namespace cse {

enum class CueKind { kContext, kSpeaker };

struct CueEmbedding {
  std::vector<float> vector;
  CueKind kind = CueKind::kContext;
  bool present = false;

  static CueEmbedding absent(CueKind k, int dim) {
    CueEmbedding e;
    e.kind = k;
    e.present = false;
    e.vector.assign(static_cast<size_t>(dim), 0.f);
    return e;
  }

  void mark_absent() {
    present = false;
    std::fill(vector.begin(), vector.end(), 0.f);
  }
};

struct DialogueTurn {
  std::string speaker_label;
  std::string text;
  int turn_index = 0;
};

struct DialogueHistory {
  std::vector<DialogueTurn> turns;
};

// Renders the last `max_turns` turns (all when absent) as
// "Speaker {label}: {text}" lines; turns with an empty label render as bare
// text (monologue data).
inline std::string format_history(const DialogueHistory& h, std::optional<int> max_turns = {}) {
  if (max_turns && *max_turns == 0) return "";
  check_arg(!h.turns.empty(), "format_history: empty history");
  for (size_t i = 1; i < h.turns.size(); ++i)
    check_arg(h.turns[i].turn_index > h.turns[i - 1].turn_index,
              "format_history: turn_index must be strictly increasing");

  size_t first = 0;
  if (max_turns && static_cast<size_t>(*max_turns) < h.turns.size())
    first = h.turns.size() - static_cast<size_t>(*max_turns);

  std::string out;
  for (size_t i = first; i < h.turns.size(); ++i) {
    if (i > first) out += "\n";
    const DialogueTurn& t = h.turns[i];
    if (t.speaker_label.empty())
      out += t.text;
    else
      out += "Speaker " + t.speaker_label + ": " + t.text;
  }
  return out;
}

// ---- providers ----

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dim() const = 0;
  // Context cue from text.
  virtual std::vector<float> embed_text(const std::string& text) = 0;
  // Speaker cue from an enrollment clip; `key` is a stable identifier
  // (usually the audio path) used by cache and subprocess providers.
  virtual std::vector<float> embed_audio(const Waveform& w, const std::string& key) = 0;
};

namespace detail {

// Coarse fundamental estimate by scanning DFT magnitudes on a 1 Hz grid.
inline double estimate_f0(const Waveform& w, double lo_hz = 40, double hi_hz = 280) {
  const int64_t n = std::min<int64_t>(w.size(), 4096);
  check(n > 16, ErrorCode::kDegenerateSignal, "estimate_f0: clip too short");
  double best_mag = -1, best_f = lo_hz;
  for (int f = static_cast<int>(lo_hz); f <= static_cast<int>(hi_hz); ++f) {
    double re = 0, im = 0;
    const double wstep = 2.0 * M_PI * f / w.sample_rate;
    for (int64_t i = 0; i < n; ++i) {
      re += w.samples[static_cast<size_t>(i)] * std::cos(wstep * i);
      im += w.samples[static_cast<size_t>(i)] * std::sin(wstep * i);
    }
    const double mag = re * re + im * im;
    if (mag > best_mag) {
      best_mag = mag;
      best_f = f;
    }
  }
  return best_f;
}

inline std::vector<float> hashed_unit_vector(uint64_t seed, int dim) {
  Rng rng(seed);
  std::vector<float> v(static_cast<size_t>(dim));
  double norm2 = 0;
  for (float& x : v) {
    x = static_cast<float>(rng.uniform(-1.0, 1.0));
    norm2 += static_cast<double>(x) * x;
  }
  const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (float& x : v) x *= inv;
  return v;
}

}  // namespace detail

// Deterministic stand-in for an external language/speaker model: hashes the
// payload to a unit-norm pseudo-random vector. Lets the full pipeline run
// with no external model.
class MockEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit MockEmbeddingProvider(int dim = 64) : dim_(dim) {
    check_arg(dim > 0, "MockEmbeddingProvider: dim must be > 0");
  }

  int dim() const override { return dim_; }

  std::vector<float> embed_text(const std::string& text) override {
    return detail::hashed_unit_vector(mix_seed(fnv1a64(text), 0x63747874u /*"ctxt"*/), dim_);
  }

  // Buckets the clip by its fundamental on the toy-speaker grid
  // f0 = 80 + 17k, so every clip of one synthetic speaker maps to the same
  // vector.
  std::vector<float> embed_audio(const Waveform& w, const std::string&) override {
    const double f0 = detail::estimate_f0(w);
    const int bucket = std::max(0, static_cast<int>(std::lround((f0 - 80.0) / 17.0)));
    return detail::hashed_unit_vector(mix_seed(static_cast<uint64_t>(bucket), 0x73706b72u /*"spkr"*/),
                                      dim_);
  }

 private:
  int dim_;
};

// ---- embedding cache file ----
// Layout: magic "CSEC", version u32, dim u32, count u64, then records of
// (key_len u32, key bytes, dim f32 little-endian).

struct EmbeddingCache {
  int dim = 0;
  std::map<std::string, std::vector<float>> entries;
};

inline void write_embedding_cache(const std::string& path, const EmbeddingCache& cache) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  check(f.good(), ErrorCode::kIo, "cannot open for write: " + path);
  auto put_u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
  f.write("CSEC", 4);
  put_u32(1);
  put_u32(static_cast<uint32_t>(cache.dim));
  const uint64_t count = cache.entries.size();
  f.write(reinterpret_cast<const char*>(&count), 8);
  for (const auto& [key, vec] : cache.entries) {
    check_arg(static_cast<int>(vec.size()) == cache.dim, "cache entry dim mismatch: " + key);
    put_u32(static_cast<uint32_t>(key.size()));
    f.write(key.data(), static_cast<std::streamsize>(key.size()));
    f.write(reinterpret_cast<const char*>(vec.data()),
            static_cast<std::streamsize>(vec.size() * 4));
  }
  check(f.good(), ErrorCode::kIo, "write failed: " + path);
}

inline EmbeddingCache read_embedding_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), ErrorCode::kIo, "cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  check(f.good() && std::memcmp(magic, "CSEC", 4) == 0, ErrorCode::kParse,
        "not an embedding cache: " + path);
  auto get_u32 = [&]() {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  const uint32_t version = get_u32();
  check(version == 1, ErrorCode::kParse, "unsupported cache version: " + std::to_string(version));
  EmbeddingCache cache;
  cache.dim = static_cast<int>(get_u32());
  uint64_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 8);
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t klen = get_u32();
    std::string key(klen, '\0');
    f.read(key.data(), klen);
    std::vector<float> vec(static_cast<size_t>(cache.dim));
    f.read(reinterpret_cast<char*>(vec.data()), static_cast<std::streamsize>(vec.size() * 4));
    check(f.good(), ErrorCode::kParse, "truncated cache: " + path);
    cache.entries.emplace(std::move(key), std::move(vec));
  }
  return cache;
}

class CacheEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit CacheEmbeddingProvider(EmbeddingCache cache) : cache_(std::move(cache)) {}
  static CacheEmbeddingProvider from_file(const std::string& path) {
    return CacheEmbeddingProvider(read_embedding_cache(path));
  }

  int dim() const override { return cache_.dim; }

  std::vector<float> embed_text(const std::string& text) override { return lookup(text); }
  std::vector<float> embed_audio(const Waveform&, const std::string& key) override {
    return lookup(key);
  }

 private:
  std::vector<float> lookup(const std::string& key) const {
    auto it = cache_.entries.find(key);
    check(it != cache_.entries.end(), ErrorCode::kMissingEmbedding,
          "embedding cache miss for key: \"" + key + "\"");
    return it->second;
  }

  EmbeddingCache cache_;
};

// ---- cue operations ----

inline CueEmbedding embed_context(const std::string& text, EmbeddingProvider& provider) {
  CueEmbedding e;
  e.kind = CueKind::kContext;
  e.vector = provider.embed_text(text);
  e.present = true;
  return e;
}

inline CueEmbedding embed_speaker(const Waveform& enrollment, EmbeddingProvider& provider,
                                  const std::string& key = "") {
  CueEmbedding e;
  e.kind = CueKind::kSpeaker;
  e.vector = provider.embed_audio(enrollment, key);
  e.present = true;
  return e;
}

// Linear projection to the model dimension; absent cues map to zero.
inline std::vector<float> project_cue(const CueEmbedding& e, const Tensor<float>& weight,
                                      const Tensor<float>& bias) {
  check_arg(weight.rank() == 2, "project_cue: weight must be rank 2");
  const int in = weight.dim(0), out = weight.dim(1);
  check_arg(bias.numel() == out, "project_cue: bias shape mismatch");
  check_arg(static_cast<int>(e.vector.size()) == in,
            "project_cue: embedding dim " + std::to_string(e.vector.size()) +
                " does not match configured " + std::to_string(in));
  std::vector<float> y(static_cast<size_t>(out), 0.f);
  if (!e.present) return y;
  for (int j = 0; j < out; ++j) {
    double acc = bias.at(j);
    for (int i = 0; i < in; ++i) acc += static_cast<double>(e.vector[static_cast<size_t>(i)]) * weight.at(i, j);
    y[static_cast<size_t>(j)] = static_cast<float>(acc);
  }
  return y;
}

// Training-time cue masking for the hybrid model: with probability p_ctx the
// context cue is dropped, with p_spk the speaker cue; never both.
inline std::pair<CueEmbedding, CueEmbedding> dropout_cues(CueEmbedding f_c, CueEmbedding f_s,
                                                          Rng& rng, double p_ctx = 1.0 / 3.0,
                                                          double p_spk = 1.0 / 3.0) {
  check_arg(p_ctx >= 0 && p_spk >= 0 && p_ctx + p_spk <= 1.0, "dropout_cues: bad probabilities");
  const double u = rng.uniform();
  if (u < p_ctx)
    f_c.mark_absent();
  else if (u < p_ctx + p_spk)
    f_s.mark_absent();
  return {std::move(f_c), std::move(f_s)};
}

}  // namespace cse
