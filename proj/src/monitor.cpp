#include "ssd/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ssd/common.hpp"

namespace ssd {

std::size_t active_count(std::span<const float> a, double tau_act) {
  std::size_t n = 0;
  for (float v : a) n += static_cast<double>(v) > tau_act ? 1 : 0;
  return n;
}

bool guardrail(std::size_t k, std::size_t k_guard) { return k > k_guard; }

MonitorStats::MonitorStats(std::size_t m, std::size_t k_guard) : m_(m), k_guard_(k_guard), hist_(m + 1, 0) {
  if (k_guard == 0) throw Error("guardrail threshold must be at least 1");
}

bool MonitorStats::update(std::size_t k) {
  if (k > m_) throw Error("active count " + std::to_string(k) + " exceeds m = " + std::to_string(m_));
  ++n_;
  // Welford
  const double x = static_cast<double>(k);
  const double d = x - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (x - mean_);
  max_ = std::max(max_, k);
  ++hist_[k];
  const bool alert = guardrail(k, k_guard_);
  if (alert) ++alerts_;
  return alert;
}

void MonitorStats::merge(const MonitorStats& other) {
  if (other.m_ != m_) throw Error("cannot merge monitors with different m");
  if (other.n_ == 0) return;
  if (n_ == 0) {
    const auto guard = k_guard_;
    *this = other;
    k_guard_ = guard;
    return;
  }
  // Chan et al. pairwise combination
  const double na = static_cast<double>(n_), nb = static_cast<double>(other.n_);
  const double delta = other.mean_ - mean_;
  const double n = na + nb;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  n_ += other.n_;
  max_ = std::max(max_, other.max_);
  alerts_ += other.alerts_;
  for (std::size_t i = 0; i < hist_.size(); ++i) hist_[i] += other.hist_[i];
}

double MonitorStats::stddev() const {
  if (n_ == 0) return 0.0;
  return std::sqrt(std::max(0.0, m2_ / static_cast<double>(n_)));
}

std::string MonitorStats::summarize() const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "count=%llu mean_k=%.2f std=%.2f max_k=%zu alerts=%llu (k > %zu)",
                static_cast<unsigned long long>(n_), mean_, stddev(), max_, static_cast<unsigned long long>(alerts_),
                k_guard_);
  return buf;
}

std::string MonitorStats::render_histogram(std::size_t bins, std::size_t width) const {
  std::ostringstream os;
  if (n_ == 0 || bins == 0) return "(no observations)\n";
  const std::size_t top = max_ + 1;
  const std::size_t span = (top + bins - 1) / bins;
  std::vector<std::uint64_t> bucket((top + span - 1) / span, 0);
  for (std::size_t k = 0; k < top; ++k) bucket[k / span] += hist_[k];
  const std::uint64_t peak = *std::max_element(bucket.begin(), bucket.end());
  for (std::size_t b = 0; b < bucket.size(); ++b) {
    const std::size_t lo = b * span, hi = std::min(top, lo + span) - 1;
    const std::size_t bar = peak ? static_cast<std::size_t>(static_cast<double>(bucket[b]) / static_cast<double>(peak) * static_cast<double>(width) + 0.5) : 0;
    char label[64];
    std::snprintf(label, sizeof label, "[%5zu,%5zu] %10llu ", lo, hi, static_cast<unsigned long long>(bucket[b]));
    os << label << std::string(bar, '#') << "\n";
  }
  return os.str();
}

}  // namespace ssd
