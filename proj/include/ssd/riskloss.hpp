#pragma once

// Smoothed bits-per-dimension loss and the risk estimators built on it.
//
// Predictions are mixed with uniform mass, p~ = (1 - alpha) p + alpha / V, so
// every per-token loss -log2 p~ lies in [B - Delta, B] with
//   B     = log2(V / alpha)
//   Delta = log2(1 + (1 - alpha) V / alpha).
// All quantities are in bits.

#include <cstddef>
#include <span>
#include <vector>

#include "ssd/common.hpp"

namespace ssd {

class LossConfig {
 public:
  LossConfig(double alpha, std::size_t vocab_size);

  double alpha() const { return alpha_; }
  std::size_t vocab_size() const { return vocab_; }

  /// Upper bound on the loss, log2(V / alpha).
  double upper() const { return upper_; }
  /// Width of the loss range.
  double width() const { return width_; }
  /// Lower bound, -log2((1 - alpha) + alpha / V).
  double lower() const { return upper_ - width_; }
  /// Smallest smoothed probability, alpha / V.
  double floor() const { return alpha_ / static_cast<double>(vocab_); }
  /// Random-guess baseline log2(V), used for the vacuousness verdict.
  double baseline() const;

  /// True when `loss` lies in [lower, upper] up to `tol`.
  bool in_range(double loss, double tol = 1e-9) const;

 private:
  double alpha_;
  std::size_t vocab_;
  double upper_;
  double width_;
};

/// Mixes `p` with the uniform distribution.
std::vector<double> smooth(std::span<const double> p, double alpha);

/// Smoothed probability of a single entry, (1 - alpha) p + alpha / V.
double smooth_entry(double p, const LossConfig& cfg);

/// -log2 of a smoothed true-token probability; throws if the probability is
/// below the smoothing floor.
double token_loss(double smoothed_prob, const LossConfig& cfg);

/// Mean of -log2 over the smoothed true-token probabilities of one sequence,
/// summed left to right.
double smoothed_bpd(std::span<const double> smoothed_probs, const LossConfig& cfg);

/// |loss_m - loss_proxy|, validating both against the loss range.
double loss_gap(double loss_m, double loss_proxy, const LossConfig& cfg);

struct RiskSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;  // population
};

/// Mean (fixed left-to-right order) with min/max/std.
RiskSummary empirical_risk(std::span<const double> losses);

}  // namespace ssd
