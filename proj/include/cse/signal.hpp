// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cse/error.hpp"
#include "cse/rng.hpp"
#include "cse/wav.hpp"

namespace cse {

struct MixtureSample {
  Waveform mixture;
  std::vector<Waveform> sources;  // stored post-scaling; they sum to the mixture
  int target_index = 0;
  std::string context_text;
  std::optional<Waveform> enrollment;
  std::string id;
};

struct AugmentConfig {
  double snr_range_db[2] = {-5.0, 5.0};
  std::vector<double> speed_ratios = {0.9, 1.0, 1.1};
  double noise_snr_range_db[2] = {0.0, 10.0};
  double max_shift_s = 1.0;
  std::vector<std::string> noise_paths;

  void validate() const {
    check_arg(snr_range_db[0] <= snr_range_db[1], "snr_range_db: lo > hi");
    check_arg(noise_snr_range_db[0] <= noise_snr_range_db[1], "noise_snr_range_db: lo > hi");
    check_arg(!speed_ratios.empty(), "speed_ratios empty");
    for (double r : speed_ratios) check_arg(r > 0, "speed ratio must be > 0");
    check_arg(max_shift_s >= 0, "max_shift_s must be >= 0");
  }
};

inline double rms(const Waveform& w) {
  double acc = 0;
  for (float v : w.samples) acc += static_cast<double>(v) * v;
  return std::sqrt(acc / std::max<size_t>(1, w.samples.size()));
}

inline double energy(const Waveform& w) {
  double acc = 0;
  for (float v : w.samples) acc += static_cast<double>(v) * v;
  return acc;
}

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double x2 = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= x2 / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-14 * sum) break;
  }
  return sum;
}

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

// Windowed-sinc interpolation kernel. `u` is the offset from the output
// instant in input-sample units, |u| <= half_width.
struct SincKernel {
  double cutoff;      // normalized to input Nyquist, in (0, 1]
  int half_width;     // taps per side
  double beta;        // Kaiser shape
  double inv_i0beta;

  SincKernel(double cutoff_, int half_width_, double beta_)
      : cutoff(cutoff_), half_width(half_width_), beta(beta_),
        inv_i0beta(1.0 / bessel_i0(beta_)) {}

  double operator()(double u) const {
    const double a = u / half_width;
    if (a <= -1.0 || a >= 1.0) return 0.0;
    const double window = bessel_i0(beta * std::sqrt(1.0 - a * a)) * inv_i0beta;
    return cutoff * sinc(cutoff * u) * window;
  }
};

// p/q in lowest terms; output sample m sits at input time m*q/p.
inline std::vector<float> resample_rational(const std::vector<float>& in, int64_t p, int64_t q) {
  static constexpr int kHalfWidth = 32;  // 64 taps per phase
  static constexpr double kBeta = 8.6;
  static constexpr double kRolloff = 0.945;

  const double cutoff = kRolloff * std::min(1.0, static_cast<double>(p) / q);
  const SincKernel kernel(cutoff, kHalfWidth, kBeta);

  const int64_t in_len = static_cast<int64_t>(in.size());
  const int64_t out_len = std::llround(static_cast<double>(in_len) * p / q);
  std::vector<float> out(static_cast<size_t>(out_len), 0.f);

  // One filter row per fractional phase; phases repeat with period p.
  const bool tabulate = p <= 4096;
  std::vector<double> table;
  if (tabulate) {
    table.resize(static_cast<size_t>(p) * 2 * kHalfWidth);
    for (int64_t ph = 0; ph < p; ++ph) {
      const double frac = static_cast<double>(ph * q % p) / p;
      for (int k = 0; k < 2 * kHalfWidth; ++k) {
        const double u = (k - kHalfWidth + 1) - frac;
        table[static_cast<size_t>(ph) * 2 * kHalfWidth + k] = kernel(u);
      }
    }
  }

  for (int64_t m = 0; m < out_len; ++m) {
    const int64_t num = m * q;
    const int64_t base = num / p;
    double acc = 0;
    if (tabulate) {
      const double* taps = &table[static_cast<size_t>(m % p) * 2 * kHalfWidth];
      for (int k = 0; k < 2 * kHalfWidth; ++k) {
        const int64_t n = base + k - kHalfWidth + 1;
        if (n >= 0 && n < in_len) acc += taps[k] * in[static_cast<size_t>(n)];
      }
    } else {
      const double t = static_cast<double>(num) / p;
      for (int k = 0; k < 2 * kHalfWidth; ++k) {
        const int64_t n = base + k - kHalfWidth + 1;
        if (n >= 0 && n < in_len) acc += kernel(n - t) * in[static_cast<size_t>(n)];
      }
    }
    out[static_cast<size_t>(m)] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace detail

inline Waveform resample(const Waveform& w, int target_rate) {
  check_arg(target_rate > 0, "resample: target rate must be positive");
  check_arg(w.sample_rate > 0, "resample: source rate must be positive");
  if (target_rate == w.sample_rate) return w;
  const int64_t g = std::gcd<int64_t>(target_rate, w.sample_rate);
  Waveform out;
  out.sample_rate = target_rate;
  out.samples = detail::resample_rational(w.samples, target_rate / g, w.sample_rate / g);
  return out;
}

// Time stretch by 1/ratio via rational resampling; the sample rate label is
// kept, so ratio 0.9 lengthens the signal.
inline Waveform speed_perturb(const Waveform& w, double ratio) {
  check_arg(ratio > 0, "speed ratio must be > 0");
  if (ratio == 1.0) return w;
  int64_t num = std::llround(ratio * 1000.0), den = 1000;
  const int64_t g = std::gcd(num, den);
  num /= g;
  den /= g;
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = detail::resample_rational(w.samples, den, num);
  return out;
}

// Gain applied to `interference` so that 20*log10(rms(target)/rms(scaled))
// equals snr_db.
inline double snr_gain(const Waveform& target, const Waveform& interference, double snr_db) {
  check_arg(target.samples.size() == interference.samples.size(),
            "mix_at_snr: length mismatch");
  check_arg(target.sample_rate == interference.sample_rate, "mix_at_snr: rate mismatch");
  const double rt = rms(target), ri = rms(interference);
  check(rt > 0, ErrorCode::kDegenerateSignal, "mix_at_snr: zero-energy target");
  check(ri > 0, ErrorCode::kDegenerateSignal, "mix_at_snr: zero-energy interference");
  return rt / ri * std::pow(10.0, -snr_db / 20.0);
}

inline std::pair<Waveform, Waveform> mix_at_snr(const Waveform& target,
                                                const Waveform& interference, double snr_db) {
  const double g = snr_gain(target, interference, snr_db);
  Waveform scaled = interference;
  for (float& v : scaled.samples) v = static_cast<float>(g * v);
  Waveform mixture = target;
  for (size_t i = 0; i < mixture.samples.size(); ++i) mixture.samples[i] += scaled.samples[i];
  return {std::move(mixture), std::move(scaled)};
}

inline Waveform fit_length(const Waveform& w, int64_t len) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(static_cast<size_t>(len), 0.f);
  const int64_t n = std::min<int64_t>(len, w.size());
  std::copy(w.samples.begin(), w.samples.begin() + n, out.samples.begin());
  return out;
}

// Training-time augmentation: speed perturbation, additive noise at a random
// SNR, circular time shift, in that order. Deterministic given the rng seed.
inline Waveform augment(const Waveform& w, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  validate_waveform(w, "augment");

  std::vector<double> ratios = cfg.speed_ratios;
  std::sort(ratios.begin(), ratios.end());
  const double ratio = ratios[rng.uniform_index(ratios.size())];
  Waveform out = speed_perturb(w, ratio);

  if (!cfg.noise_paths.empty()) {
    const std::string& path = cfg.noise_paths[rng.uniform_index(cfg.noise_paths.size())];
    Waveform noise;
    try {
      noise = read_wav(path);
    } catch (const Error&) {
      throw_error(ErrorCode::kIo, "augment: unreadable noise file: " + path);
    }
    if (noise.sample_rate != out.sample_rate) noise = resample(noise, out.sample_rate);
    check(!noise.samples.empty(), ErrorCode::kDegenerateSignal, "augment: empty noise: " + path);

    // Random circular offset; short noise files tile to the needed length.
    const int64_t need = out.size();
    Waveform cut;
    cut.sample_rate = out.sample_rate;
    cut.samples.resize(static_cast<size_t>(need));
    const int64_t start = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(noise.size())));
    for (int64_t i = 0; i < need; ++i)
      cut.samples[static_cast<size_t>(i)] =
          noise.samples[static_cast<size_t>((start + i) % noise.size())];

    const double snr = rng.uniform(cfg.noise_snr_range_db[0], cfg.noise_snr_range_db[1]);
    const double g = snr_gain(out, cut, snr);
    for (int64_t i = 0; i < need; ++i)
      out.samples[static_cast<size_t>(i)] += static_cast<float>(g * cut.samples[static_cast<size_t>(i)]);
  }

  const int64_t max_shift = std::llround(cfg.max_shift_s * out.sample_rate);
  const int64_t k =
      static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(max_shift) + 1)) % out.size();
  if (k > 0) std::rotate(out.samples.begin(), out.samples.end() - k, out.samples.end());
  return out;
}

// Composes a mixture: the target keeps unit gain, each interferer is scaled
// to an independent random SNR. Stored sources sum to the mixture exactly.
inline MixtureSample make_mixture_sample(const std::vector<Waveform>& sources, int target_index,
                                         const std::string& context_text,
                                         const AugmentConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(sources.size());
  check_arg(n >= 2 && n <= 4, "make_mixture_sample: need 2..4 sources");
  check_arg(target_index >= 0 && target_index < n, "make_mixture_sample: bad target index");

  const Waveform& target = sources[static_cast<size_t>(target_index)];
  MixtureSample s;
  s.target_index = target_index;
  s.context_text = context_text;
  s.sources.resize(static_cast<size_t>(n));
  s.sources[static_cast<size_t>(target_index)] = target;
  s.mixture = target;

  for (int i = 0; i < n; ++i) {
    if (i == target_index) continue;
    Waveform interf = fit_length(sources[static_cast<size_t>(i)], target.size());
    interf.sample_rate = target.sample_rate;
    const double snr = rng.uniform(cfg.snr_range_db[0], cfg.snr_range_db[1]);
    auto [mixture, scaled] = mix_at_snr(target, interf, snr);
    (void)mixture;
    for (size_t j = 0; j < s.mixture.samples.size(); ++j)
      s.mixture.samples[j] += scaled.samples[j];
    s.sources[static_cast<size_t>(i)] = std::move(scaled);
  }
  return s;
}

// Deterministic synthetic voice: three harmonics of a speaker-specific
// fundamental with slow random amplitude envelopes, peak-normalized to 0.9.
inline Waveform synth_toy_source(int speaker_id, double duration_s, int sample_rate, Rng& rng) {
  check_arg(duration_s > 0, "synth_toy_source: duration must be > 0");
  check_arg(sample_rate > 0, "synth_toy_source: rate must be > 0");
  check_arg(speaker_id >= 0, "synth_toy_source: speaker_id must be >= 0");

  const double f0 = 80.0 + 17.0 * speaker_id;
  const int64_t n = std::llround(duration_s * sample_rate);
  check_arg(n > 0, "synth_toy_source: zero-length output");

  static constexpr double kBase[3] = {1.0, 0.45, 0.22};
  double env_freq[3], env_phase[3], phase0[3];
  for (int m = 0; m < 3; ++m) {
    env_freq[m] = rng.uniform(0.5, 2.0);
    env_phase[m] = rng.uniform(0.0, 2.0 * M_PI);
    phase0[m] = rng.uniform(0.0, 2.0 * M_PI);
  }

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(static_cast<size_t>(n));
  double peak = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = 0;
    for (int m = 0; m < 3; ++m) {
      const double env = 1.0 + 0.5 * std::sin(2.0 * M_PI * env_freq[m] * t + env_phase[m]);
      v += kBase[m] * env * std::sin(2.0 * M_PI * f0 * (m + 1) * t + phase0[m]);
    }
    w.samples[static_cast<size_t>(i)] = static_cast<float>(v);
    peak = std::max(peak, std::abs(v));
  }
  const float scale = static_cast<float>(0.9 / peak);
  for (float& v : w.samples) v *= scale;
  return w;
}

}  // namespace cse
