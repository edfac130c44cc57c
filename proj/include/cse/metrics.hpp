// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Evaluation metrics: SI-SNR / SDR improvements, stream-selection accuracy,
// word error rate, and the JSONL eval report.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cse/error.hpp"
#include "cse/losses.hpp"
#include "cse/signal.hpp"

namespace cse {

inline constexpr double kMetricCapDb = 60.0;

inline double cap_db(double v) { return std::clamp(v, -kMetricCapDb, kMetricCapDb); }

inline void check_equal_lengths(const Waveform& a, const Waveform& b, const std::string& who) {
  check_arg(a.samples.size() == b.samples.size(), who + ": length mismatch");
}

inline double si_snr_improvement(const Waveform& mixture, const Waveform& extracted,
                                 const Waveform& target) {
  check_equal_lengths(mixture, target, "si_snr_improvement");
  check_equal_lengths(extracted, target, "si_snr_improvement");
  return cap_db(si_snr_db(extracted.samples, target.samples)) -
         cap_db(si_snr_db(mixture.samples, target.samples));
}

// Plain SDR, no allowed-distortion filtering: 10 log10(||y||^2/||y-ŷ||^2).
// Not scale-invariant, and not comparable to BSSEval's filtered variant.
inline double sdr_db(const std::vector<float>& est, const std::vector<float>& ref) {
  check_arg(est.size() == ref.size(), "sdr: length mismatch");
  double ref_energy = 0, err_energy = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += static_cast<double>(ref[i]) * ref[i];
    const double e = static_cast<double>(ref[i]) - est[i];
    err_energy += e * e;
  }
  check(ref_energy > kSiSnrEps, ErrorCode::kDegenerateSignal, "sdr: zero-energy reference");
  return 10.0 * std::log10((ref_energy + kSiSnrEps) / (err_energy + kSiSnrEps));
}

inline double sdr_improvement(const Waveform& mixture, const Waveform& extracted,
                              const Waveform& target) {
  check_equal_lengths(mixture, target, "sdr_improvement");
  check_equal_lengths(extracted, target, "sdr_improvement");
  return cap_db(sdr_db(extracted.samples, target.samples)) -
         cap_db(sdr_db(mixture.samples, target.samples));
}

// True when the extracted stream is closest (by SI-SNR) to the true target.
inline bool selection_accuracy(const Waveform& extracted, const std::vector<Waveform>& sources,
                               int target_index) {
  check_arg(target_index >= 0 && target_index < static_cast<int>(sources.size()),
            "selection_accuracy: bad target index");
  int best = 0;
  double best_snr = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < sources.size(); ++i) {
    check_equal_lengths(extracted, sources[i], "selection_accuracy");
    const double snr = si_snr_db(extracted.samples, sources[i].samples);
    if (snr > best_snr) {
      best_snr = snr;
      best = static_cast<int>(i);
    }
  }
  return best == target_index;
}

// ---- word error rate ----

inline std::vector<std::string> wer_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// Word-level Levenshtein edits over max(1, reference length).
inline double wer(const std::string& reference, const std::string& hypothesis) {
  const auto ref = wer_tokens(reference);
  const auto hyp = wer_tokens(hypothesis);
  const size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = j;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]) / static_cast<double>(std::max<size_t>(1, n));
}

// ---- eval records ----

struct EvalRecord {
  std::string sample_id;
  double si_snr_i = 0;
  double sdr_i = 0;
  bool selected_correct = false;
  int n_context_turns = 0;
};

inline void to_json(nlohmann::json& j, const EvalRecord& r) {
  j = nlohmann::json{{"sample_id", r.sample_id},
                     {"si_snr_i", r.si_snr_i},
                     {"sdr_i", r.sdr_i},
                     {"selected_correct", r.selected_correct},
                     {"n_context_turns", r.n_context_turns}};
}

inline void from_json(const nlohmann::json& j, EvalRecord& r) {
  j.at("sample_id").get_to(r.sample_id);
  j.at("si_snr_i").get_to(r.si_snr_i);
  j.at("sdr_i").get_to(r.sdr_i);
  j.at("selected_correct").get_to(r.selected_correct);
  j.at("n_context_turns").get_to(r.n_context_turns);
}

inline void write_eval_records(const std::string& path, const std::vector<EvalRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  check(f.good(), ErrorCode::kIo, "cannot open for write: " + path);
  for (const auto& r : records) f << nlohmann::json(r).dump() << "\n";
  check(f.good(), ErrorCode::kIo, "write failed: " + path);
}

}  // namespace cse
