#pragma once

// Synthetic corpora for desk-scale experiments.

#include <cstdint>
#include <string>
#include <vector>

#include "ssd/common.hpp"

namespace ssd {

/// Second-order Markov source over `alphabet` symbols. Each two-symbol state
/// has `branching` successors with random weights; the chain is seeded.
class MarkovSource {
 public:
  MarkovSource(std::size_t alphabet, std::size_t branching, std::uint64_t seed);

  std::size_t alphabet() const { return alphabet_; }

  std::vector<TokenId> generate(std::size_t length, std::uint64_t seed) const;

  /// Conditional next-symbol distribution for state (prev2, prev1).
  const std::vector<double>& transition(TokenId prev2, TokenId prev1) const {
    return table_[prev2 * alphabet_ + prev1];
  }

  /// Stationary entropy rate in bits, estimated on a long sample.
  double entropy_rate_bits(std::size_t sample_length = 200000) const;

 private:
  std::size_t alphabet_;
  std::vector<std::vector<double>> table_;
};

/// Uniform i.i.d. tokens in [0, vocab).
std::vector<TokenId> random_tokens(std::size_t length, std::size_t vocab, std::uint64_t seed);

/// The 27-symbol alphabet "abc...z " used for generated text corpora.
std::string lowercase_alphabet();

}  // namespace ssd
