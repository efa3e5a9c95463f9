#include "ssd/markov.hpp"

#include <cmath>

namespace ssd {

MarkovSource::MarkovSource(std::size_t alphabet, std::size_t branching, std::uint64_t seed)
    : alphabet_(alphabet) {
  if (alphabet < 2) throw Error("Markov source needs at least two symbols");
  if (branching == 0 || branching > alphabet) throw Error("branching must lie in [1, alphabet]");
  Rng rng(seed);
  table_.resize(alphabet * alphabet);
  std::vector<TokenId> ids(alphabet);
  for (auto& row : table_) {
    row.assign(alphabet, 0.0);
    for (std::size_t i = 0; i < alphabet; ++i) ids[i] = static_cast<TokenId>(i);
    rng.shuffle(ids);
    double total = 0.0;
    for (std::size_t b = 0; b < branching; ++b) {
      // exponential weights give a Dirichlet(1) draw after normalization
      const double wgt = -std::log(1.0 - rng.uniform());
      row[ids[b]] = wgt;
      total += wgt;
    }
    for (auto& p : row) p /= total;
  }
}

namespace {

TokenId draw(const std::vector<double>& row, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t s = 0; s < row.size(); ++s) {
    if (row[s] <= 0.0) continue;
    acc += row[s];
    last = s;
    if (u < acc) return static_cast<TokenId>(s);
  }
  // rounding left u past the final cumulative value
  return static_cast<TokenId>(last);
}

}  // namespace

std::vector<TokenId> MarkovSource::generate(std::size_t length, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<TokenId> out;
  out.reserve(length);
  TokenId a = static_cast<TokenId>(rng.below(alphabet_));
  TokenId b = static_cast<TokenId>(rng.below(alphabet_));
  constexpr int kBurnIn = 64;
  for (std::size_t i = 0; i < length + kBurnIn; ++i) {
    const TokenId next = draw(transition(a, b), rng);
    if (i >= kBurnIn) out.push_back(next);
    a = b;
    b = next;
  }
  return out;
}

double MarkovSource::entropy_rate_bits(std::size_t sample_length) const {
  const auto sample = generate(sample_length, 0xe17);
  double h = 0.0;
  for (std::size_t i = 2; i < sample.size(); ++i) {
    const auto& row = transition(sample[i - 2], sample[i - 1]);
    for (double p : row) {
      if (p > 0) h -= p * std::log2(p);
    }
  }
  return h / static_cast<double>(sample.size() - 2);
}

std::vector<TokenId> random_tokens(std::size_t length, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenId> out(length);
  for (auto& t : out) t = static_cast<TokenId>(rng.below(vocab));
  return out;
}

std::string lowercase_alphabet() { return "abcdefghijklmnopqrstuvwxyz "; }

}  // namespace ssd
