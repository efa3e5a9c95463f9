#include "ssd/riskloss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ssd {

LossConfig::LossConfig(double alpha, std::size_t vocab_size) : alpha_(alpha), vocab_(vocab_size) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1), got " + std::to_string(alpha));
  if (vocab_size == 0) throw Error("vocabulary size must be positive");
  const double v = static_cast<double>(vocab_size);
  upper_ = std::log2(v / alpha);
  width_ = std::log2(1.0 + (1.0 - alpha) * v / alpha);
}

double LossConfig::baseline() const { return std::log2(static_cast<double>(vocab_)); }

bool LossConfig::in_range(double loss, double tol) const {
  return loss >= lower() - tol && loss <= upper() + tol;
}

std::vector<double> smooth(std::span<const double> p, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0, 1), got " + std::to_string(alpha));
  const double u = alpha / static_cast<double>(p.size());
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = (1.0 - alpha) * p[i] + u;
  return out;
}

double smooth_entry(double p, const LossConfig& cfg) {
  return (1.0 - cfg.alpha()) * p + cfg.floor();
}

double token_loss(double smoothed_prob, const LossConfig& cfg) {
  // Relative slack absorbs the rounding of (1 - alpha) * 0 + alpha / V.
  if (!(smoothed_prob >= cfg.floor() * (1.0 - 1e-12)) || smoothed_prob > 1.0 + 1e-12) {
    throw NumericError("smoothed probability " + std::to_string(smoothed_prob) +
                       " outside [alpha/V, 1]; smoothing was not applied upstream");
  }
  return std::min(-std::log2(smoothed_prob), cfg.upper());
}

double smoothed_bpd(std::span<const double> smoothed_probs, const LossConfig& cfg) {
  if (smoothed_probs.empty()) throw Error("smoothed_bpd on an empty sequence");
  double sum = 0.0;
  for (double p : smoothed_probs) sum += token_loss(p, cfg);
  return sum / static_cast<double>(smoothed_probs.size());
}

double loss_gap(double loss_m, double loss_proxy, const LossConfig& cfg) {
  if (!cfg.in_range(loss_m) || !cfg.in_range(loss_proxy)) {
    throw Error("loss outside [B - Delta, B]: " + std::to_string(loss_m) + ", " + std::to_string(loss_proxy));
  }
  return std::fabs(loss_m - loss_proxy);
}

RiskSummary empirical_risk(std::span<const double> losses) {
  if (losses.empty()) throw Error("empirical risk of an empty sample");
  RiskSummary s;
  s.count = losses.size();
  s.min = losses.front();
  s.max = losses.front();
  double sum = 0.0;
  for (double l : losses) {
    sum += l;
    s.min = std::min(s.min, l);
    s.max = std::max(s.max, l);
  }
  s.mean = sum / static_cast<double>(losses.size());
  double ss = 0.0;
  for (double l : losses) ss += (l - s.mean) * (l - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(losses.size()));
  return s;
}

}  // namespace ssd
