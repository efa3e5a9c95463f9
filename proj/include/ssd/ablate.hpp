#pragma once

// Shuffled-feature ablation: relabel the indices of each sparse code while
// keeping its values (so L0 and L2 are unchanged), decode, resume, and
// compare the reconstruction-gap distributions of real and shuffled codes.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssd/oracle.hpp"
#include "ssd/riskloss.hpp"
#include "ssd/sae.hpp"

namespace ssd {

/// Moves the value at index i to index permutation[i]. `permutation` must
/// be a permutation of [0, m).
SparseCode shuffle_code(const SparseCode& c, std::span<const FeatureId> permutation);

/// Uniform random permutation of [0, m).
std::vector<FeatureId> random_permutation(std::size_t m, Rng& rng);

enum class ShuffleVariant : std::uint8_t {
  PerPosition,    // fresh permutation of [m] at every position
  Global,         // one permutation of [m] for the whole run
  WithinSupport,  // permute values among the active indices only
};

const char* to_string(ShuffleVariant v);
ShuffleVariant parse_shuffle_variant(const std::string& s);

struct AblationResult {
  std::vector<double> gaps_real;
  std::vector<double> gaps_shuffled;
  RiskSummary real;
  RiskSummary shuffled;
  ShuffleVariant variant = ShuffleVariant::PerPosition;
  std::uint64_t seed = 0;

  /// (mean shuffled - mean real) / pooled standard error.
  double separation() const;
};

/// Per sequence: |loss(M) - loss(S o M)| and |loss(M) - loss(shuffled)|.
/// Sequence i draws its permutations from seed ^ i.
AblationResult run_ablation(const Predictor& model, const SaeModel& sae,
                            std::span<const std::vector<TokenId>> sequences, const LossConfig& loss,
                            std::uint64_t seed, ShuffleVariant variant = ShuffleVariant::PerPosition);

/// Fixed-width text histogram of gap values over [lo, hi].
std::string render_gap_histogram(std::span<const double> gaps, double lo, double hi, std::size_t bins = 20,
                                 std::size_t width = 50);

}  // namespace ssd
