#pragma once

// Runtime feature-density monitoring: per-position active-feature counts
// k(x) = #{ j : a_j > tau_act }, streaming statistics and a guardrail.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ssd {

/// Number of entries strictly above `tau_act`.
std::size_t active_count(std::span<const float> a, double tau_act = 0.0);

class MonitorStats {
 public:
  /// Histogram bins are the integers 0..m.
  MonitorStats(std::size_t m, std::size_t k_guard);

  /// Records one observation; returns true when the guardrail fires.
  bool update(std::size_t k);

  /// Exact parallel merge (counts, moments, histogram, alerts).
  void merge(const MonitorStats& other);

  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Population standard deviation.
  double stddev() const;
  std::size_t max() const { return max_; }
  std::uint64_t alerts() const { return alerts_; }
  std::size_t k_guard() const { return k_guard_; }
  const std::vector<std::uint64_t>& histogram() const { return hist_; }

  /// "count mean std max alerts" row.
  std::string summarize() const;
  /// Fixed-width text histogram with `bins` buckets over [0, max].
  std::string render_histogram(std::size_t bins = 20, std::size_t width = 50) const;

 private:
  std::size_t m_;
  std::size_t k_guard_;
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  std::size_t max_ = 0;
  std::uint64_t alerts_ = 0;
  std::vector<std::uint64_t> hist_;
};

/// Alert iff k > k_guard.
bool guardrail(std::size_t k, std::size_t k_guard);

}  // namespace ssd
