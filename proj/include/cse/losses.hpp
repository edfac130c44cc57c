// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// SI-SNR loss, exhaustive permutation-invariant training loss, target-label
// assignment, and the combined separation + selection objective. Plain
// forms compute values; *_node forms build the same expression on a tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cse/autodiff.hpp"
#include "cse/error.hpp"
#include "cse/signal.hpp"

namespace cse {

inline constexpr double kSiSnrEps = 1e-8;

// Scale-invariant SNR in dB of `est` against reference `ref`.
inline double si_snr_db(const std::vector<float>& est, const std::vector<float>& ref) {
  check_arg(est.size() == ref.size(), "si_snr: length mismatch");
  double ref_energy = 0, cross = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += static_cast<double>(ref[i]) * ref[i];
    cross += static_cast<double>(est[i]) * ref[i];
  }
  check(ref_energy > kSiSnrEps, ErrorCode::kDegenerateSignal, "si_snr: zero-energy reference");
  const double alpha = cross / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  double err_energy = 0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double e = static_cast<double>(est[i]) - alpha * ref[i];
    err_energy += e * e;
  }
  return 10.0 * std::log10((target_energy + kSiSnrEps) / (err_energy + kSiSnrEps));
}

// Negative SI-SNR of the estimate ŷ against the reference y.
inline double si_snr_loss(const Waveform& y, const Waveform& y_hat) {
  return -si_snr_db(y_hat.samples, y.samples);
}

struct PitResult {
  double loss = 0;
  std::vector<int> permutation;       // reference i pairs with estimate permutation[i]
  std::vector<double> per_pair_losses;
};

namespace detail {

inline std::vector<std::vector<int>> all_permutations(int n) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(idx);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

inline PitResult pit_from_pairs(const std::vector<std::vector<double>>& pair_loss) {
  const int n = static_cast<int>(pair_loss.size());
  PitResult best;
  best.loss = std::numeric_limits<double>::infinity();
  for (const auto& perm : all_permutations(n)) {
    double total = 0;
    for (int i = 0; i < n; ++i) total += pair_loss[static_cast<size_t>(i)][static_cast<size_t>(perm[static_cast<size_t>(i)])];
    if (total < best.loss) {
      best.loss = total;
      best.permutation = perm;
    }
  }
  best.per_pair_losses.resize(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    best.per_pair_losses[static_cast<size_t>(i)] =
        pair_loss[static_cast<size_t>(i)][static_cast<size_t>(best.permutation[static_cast<size_t>(i)])];
  return best;
}

}  // namespace detail

// Exhaustive min over all assignments of estimates to references.
inline PitResult pit_loss(const std::vector<Waveform>& refs, const std::vector<Waveform>& est) {
  const int n = static_cast<int>(refs.size());
  check_arg(n >= 1 && static_cast<int>(est.size()) == n, "pit_loss: stream count mismatch");
  check(n <= 4, ErrorCode::kUnsupported, "pit_loss: exhaustive search supports n <= 4");
  std::vector<std::vector<double>> pair_loss(static_cast<size_t>(n),
                                             std::vector<double>(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      pair_loss[static_cast<size_t>(i)][static_cast<size_t>(j)] =
          si_snr_loss(refs[static_cast<size_t>(i)], est[static_cast<size_t>(j)]);
  return detail::pit_from_pairs(pair_loss);
}

// Index of the stream with the highest SI-SNR against y; ties break low.
inline int assign_target_label(const std::vector<Waveform>& streams, const Waveform& y) {
  check_arg(!streams.empty(), "assign_target_label: no streams");
  int best = 0;
  double best_snr = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < streams.size(); ++i) {
    check_arg(streams[i].samples.size() == y.samples.size(), "assign_target_label: length mismatch");
    const double snr = si_snr_db(streams[i].samples, y.samples);
    if (snr > best_snr) {
      best_snr = snr;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Cross entropy of the selection head plus the PIT separation term. The
// label is assigned post hoc from the produced streams, since under a
// permutation-invariant objective the target slot is unknown up front.
inline double contsep_loss(const std::vector<float>& logits, const std::vector<Waveform>& streams,
                           const std::vector<Waveform>& refs, const Waveform& y_target) {
  check_arg(logits.size() == streams.size(), "contsep_loss: logit/stream count mismatch");
  const int t = assign_target_label(streams, y_target);
  double mx = logits[0];
  for (float v : logits) mx = std::max(mx, static_cast<double>(v));
  double lse = 0;
  for (float v : logits) lse += std::exp(static_cast<double>(v) - mx);
  const double ce = std::log(lse) + mx - logits[static_cast<size_t>(t)];
  return ce + pit_loss(refs, streams).loss;
}

// ---- tape builders ----

template <typename S>
int si_snr_loss_node(Tape<S>& t, int y_hat, const std::vector<S>& y_ref) {
  check_arg(static_cast<size_t>(t.val(y_hat).numel()) == y_ref.size(),
            "si_snr_loss: length mismatch");
  double ref_energy = 0;
  for (S v : y_ref) ref_energy += static_cast<double>(v) * v;
  check(ref_energy > kSiSnrEps, ErrorCode::kDegenerateSignal, "si_snr_loss: zero-energy reference");

  const int y = t.leaf(Tensor<S>({static_cast<int>(y_ref.size())}, y_ref), false);
  const int dyy = t.dot(y, y);
  const int dxy = t.dot(y_hat, y);
  const int alpha = t.sdiv(dxy, dyy);
  const int ybar = t.vscale(y, alpha);
  const int err = t.sub(y_hat, ybar);
  const int num = t.affine(t.dot(ybar, ybar), 1.0, kSiSnrEps);
  const int den = t.affine(t.dot(err, err), 1.0, kSiSnrEps);
  return t.affine(t.sub(t.sln(num), t.sln(den)), -10.0 / std::log(10.0));
}

template <typename S>
std::pair<int, PitResult> pit_loss_node(Tape<S>& t, const std::vector<int>& est_nodes,
                                        const std::vector<std::vector<S>>& refs) {
  const int n = static_cast<int>(refs.size());
  check_arg(static_cast<int>(est_nodes.size()) == n, "pit_loss: stream count mismatch");
  check(n <= 4, ErrorCode::kUnsupported, "pit_loss: exhaustive search supports n <= 4");

  std::vector<std::vector<int>> pair_node(static_cast<size_t>(n), std::vector<int>(static_cast<size_t>(n)));
  std::vector<std::vector<double>> pair_loss(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n)));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int node = si_snr_loss_node(t, est_nodes[static_cast<size_t>(j)], refs[static_cast<size_t>(i)]);
      pair_node[static_cast<size_t>(i)][static_cast<size_t>(j)] = node;
      pair_loss[static_cast<size_t>(i)][static_cast<size_t>(j)] = static_cast<double>(t.val(node).data[0]);
    }
  PitResult res = detail::pit_from_pairs(pair_loss);
  int total = -1;
  for (int i = 0; i < n; ++i) {
    const int node = pair_node[static_cast<size_t>(i)][static_cast<size_t>(res.permutation[static_cast<size_t>(i)])];
    total = (total < 0) ? node : t.add(total, node);
  }
  return {total, res};
}

template <typename S>
struct ContsepLossNodes {
  int total = -1;
  int ce = -1;
  int pit = -1;
  int label = 0;
};

template <typename S>
ContsepLossNodes<S> contsep_loss_node(Tape<S>& t, int logits_node,
                                      const std::vector<int>& stream_nodes,
                                      const std::vector<std::vector<S>>& refs,
                                      const std::vector<S>& y_target) {
  std::vector<Waveform> streams(stream_nodes.size());
  for (size_t i = 0; i < stream_nodes.size(); ++i) {
    const auto& v = t.val(stream_nodes[i]).data;
    streams[i].samples.assign(v.begin(), v.end());
  }
  Waveform target;
  target.samples.assign(y_target.begin(), y_target.end());

  ContsepLossNodes<S> out;
  out.label = assign_target_label(streams, target);
  out.ce = t.cross_entropy_logits(logits_node, out.label);
  out.pit = pit_loss_node(t, stream_nodes, refs).first;
  out.total = t.add(out.ce, out.pit);
  return out;
}

}  // namespace cse
