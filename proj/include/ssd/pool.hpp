#pragma once

// Concept pools: frequency-calibrated feature subsets G of the dictionary,
// the support event E_G, pool-restricted coding, and mismatch estimation.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssd/common.hpp"
#include "ssd/sae.hpp"

namespace ssd {

enum class Granularity : std::uint8_t { Token = 0, Sequence = 1 };

const char* to_string(Granularity g);
Granularity parse_granularity(const std::string& s);

class ConceptPool {
 public:
  ConceptPool() = default;
  /// Pool from an explicit member list (sorted and deduplicated here).
  ConceptPool(std::size_t m, std::vector<FeatureId> members);
  /// Pool with calibration metadata; counts may be empty.
  ConceptPool(std::size_t m, std::vector<FeatureId> members, std::vector<std::uint64_t> counts,
              std::uint64_t n_cal, std::uint64_t tau, Granularity granularity = Granularity::Sequence);

  static ConceptPool full(std::size_t m);

  std::size_t dict_size() const { return m_; }
  std::size_t size() const { return members_.size(); }
  const std::vector<FeatureId>& members() const { return members_; }
  bool contains(FeatureId j) const { return j < m_ && mask_[j] != 0; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t n_cal() const { return n_cal_; }
  std::uint64_t tau() const { return tau_; }
  Granularity granularity() const { return granularity_; }

  /// A pool can host the restricted predictor only if it has at least k members.
  bool supports_budget(std::size_t k) const { return size() >= k; }

  /// Sparse semantic dimension P ln(e m / P) (0 for an empty pool).
  double ssd() const;

  /// Text form: header lines "key=value" then one member id per line.
  void save_text(const std::string& path) const;
  static ConceptPool load_text(const std::string& path);
  /// Binary form "SSDP": header plus an m-bit packed mask (LSB first).
  void save_binary(const std::string& path) const;
  static ConceptPool load_binary(const std::string& path);

  bool operator==(const ConceptPool&) const = default;

 private:
  std::size_t m_ = 0;
  std::vector<FeatureId> members_;
  std::vector<std::uint8_t> mask_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t n_cal_ = 0;
  std::uint64_t tau_ = 1;
  Granularity granularity_ = Granularity::Sequence;
};

/// Streaming calibration: count each feature's appearances in per-position
/// TopK supports, then G = { j : count_j >= tau }.
class PoolCalibrator {
 public:
  explicit PoolCalibrator(std::size_t m);

  void add_support(std::span<const FeatureId> support);
  void end_sequence() { ++sequences_; }
  /// Exact merge of another shard's counts.
  void merge(const PoolCalibrator& other);

  std::uint64_t sequences() const { return sequences_; }
  std::uint64_t positions() const { return positions_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  ConceptPool finish(std::uint64_t tau) const;

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t sequences_ = 0;
  std::uint64_t positions_ = 0;
};

/// Features ordered by descending calibration count, ties to smaller index.
std::vector<FeatureId> rank_features(std::span<const std::uint64_t> counts);

/// The P highest-ranked features; nested in P.
ConceptPool nested_pool(const ConceptPool& calibrated, std::size_t P);

/// E_G: every index of topk(a, k) is a pool member.
bool support_event(std::span<const float> a, std::size_t k, const ConceptPool& pool);

/// Mask-then-TopK: topk(a * 1_G, k).
SparseCode restricted_code(std::span<const float> a, std::size_t k, const ConceptPool& pool);

struct MismatchEstimate {
  Granularity granularity = Granularity::Sequence;
  std::uint64_t violations = 0;
  std::uint64_t total = 0;

  double eta() const { return total ? static_cast<double>(violations) / static_cast<double>(total) : 0.0; }
};

/// Accumulates token- and sequence-level support-event failures.
class MismatchCounter {
 public:
  void add_position(bool event_holds);
  void end_sequence();

  MismatchEstimate token_level() const { return {Granularity::Token, token_violations_, tokens_}; }
  MismatchEstimate sequence_level() const { return {Granularity::Sequence, seq_violations_, sequences_}; }
  MismatchEstimate at(Granularity g) const { return g == Granularity::Token ? token_level() : sequence_level(); }

 private:
  std::uint64_t tokens_ = 0, token_violations_ = 0;
  std::uint64_t sequences_ = 0, seq_violations_ = 0;
  bool current_violated_ = false;
};

}  // namespace ssd
