#pragma once

// Generalization certificate for a frozen predictor M with an SAE proxy and
// a concept pool of size P out of m dictionary features:
//
//   R(M) <= risk + gap + eta*B
//           + B sqrt((P ln(e m / P) + ln(2/delta)) / (2N))     complexity
//           + B sqrt(ln(4/delta) / (2N))                       concentration
//
// holding with probability >= 1 - delta over the N evaluation sequences, with
// delta split evenly between the Occam bound over pools and the Hoeffding
// bound on the reconstruction gap.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssd/riskloss.hpp"

namespace ssd {

struct HypothesisCount {
  double upper = 0.0;                // P ln(e m / P), 0 when P = 0
  double exact = 0.0;                // ln C(m, P)
  bool exact_from_factorials = false;  // true when m <= 64 (integer binomial)
};

/// ln C(m, P) and its upper bound. Exact via 64-bit integer arithmetic when
/// m <= 64, via log-gamma otherwise (m <= 1e6).
HypothesisCount ln_hypothesis_count(std::uint64_t m, std::uint64_t P);

/// Integer binomial C(m, P) for m <= 64.
std::uint64_t binomial_u64(unsigned m, unsigned P);

struct DeviationTerms {
  double complexity = 0.0;     // Omega
  double concentration = 0.0;  // Hoeffding term on the reconstruction gap
};

DeviationTerms deviation_terms(double B, double ln_count, double delta, std::uint64_t N);

enum class CertMode : std::uint8_t { Exact, Conservative };
const char* to_string(CertMode mode);

/// Measured inputs to the certificate.
struct Components {
  double risk = 0.0;  // empirical risk of the pool-restricted predictor (bits)
  double gap = 0.0;   // mean |loss(M) - loss(S o M)| (bits)
  double eta = 0.0;   // mismatch rate
  std::optional<double> mismatch_bits;  // eta*B measured directly; overrides eta
  std::uint64_t P = 0;
  std::uint64_t m = 0;
  std::uint64_t k = 0;
  std::uint64_t n_cal = 0;
  std::uint64_t eta_sample_size = 0;  // sample eta was estimated from (0 = unknown)
  CertMode mode = CertMode::Exact;
};

struct BoundOptions {
  double delta = 0.05;
  bool exact_count = false;      // use ln C(m, P) instead of P ln(e m / P)
  bool union_over_p = false;     // add ln(m) to the count for a data-chosen P
  bool gap_range_width = false;  // Hoeffding range Delta instead of B for the gap term
};

struct BoundReport {
  // inputs
  std::uint64_t m = 0, P = 0, k = 0, N = 0, n_cal = 0;
  double delta = 0.0, alpha = 0.0;
  std::size_t vocab = 0;
  double B = 0.0, width = 0.0;
  CertMode mode = CertMode::Exact;
  double eta = 0.0;
  double ln_count = 0.0;
  double ssd = 0.0;

  // additive terms, bits
  double risk = 0.0;
  double gap = 0.0;
  double mismatch = 0.0;
  double complexity = 0.0;
  double concentration = 0.0;
  double total = 0.0;

  // diagnostics, not part of the total
  double concentration_width_range = 0.0;  // gap term with range Delta
  double concentration_b_range = 0.0;      // gap term with range B
  double omitted_eta_penalty = 0.0;        // B sqrt(ln(2/delta) / (2 n)) for the eta sample
  double baseline = 0.0;                   // log2 V
  bool vacuous = false;

  std::string to_text() const;
  /// One aligned row: Risk Gap Mismatch Comp. Total P.
  std::string table_row(const std::string& label) const;
  static std::string table_header();
  std::string to_json() const;
};

/// Assembles the certificate. Throws on inconsistent P/m or invalid delta/N.
BoundReport assemble(const Components& c, const LossConfig& loss, std::uint64_t N, const BoundOptions& opt = {});

/// One candidate for the bound-vs-P sweep.
struct PoolCandidate {
  std::uint64_t P = 0;
  double eta = 0.0;
  double risk = 0.0;
  double gap = 0.0;
};

struct SweepPResult {
  std::vector<BoundReport> reports;
  std::size_t argmin = 0;
};

/// Recomputes the certificate for each nested pool size; the minimum total
/// wins, ties to the smaller P.
SweepPResult sweep_p(const std::vector<PoolCandidate>& candidates, const Components& base, const LossConfig& loss,
                     std::uint64_t N, const BoundOptions& opt = {});

struct SweepNResult {
  std::vector<std::uint64_t> grid;
  std::vector<double> totals;
  std::optional<std::uint64_t> crossing;  // smallest grid N with total < baseline
};

SweepNResult sweep_n(const Components& c, const LossConfig& loss, const std::vector<std::uint64_t>& grid,
                     const BoundOptions& opt = {});

}  // namespace ssd
