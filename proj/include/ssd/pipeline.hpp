#pragma once

// End-to-end evaluation: the base predictor M, the proxy S o M and the
// pool-restricted predictor h_G on whole sequences, pool calibration and
// mismatch estimation from live runs or SSDA dumps, and the component
// measurements that feed the certificate in exact and conservative mode.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssd/bound.hpp"
#include "ssd/ingest.hpp"
#include "ssd/oracle.hpp"
#include "ssd/pool.hpp"
#include "ssd/riskloss.hpp"
#include "ssd/sae.hpp"

namespace ssd {

struct SequenceEval {
  double loss_m = 0.0;
  double loss_proxy = 0.0;
  std::optional<double> loss_restricted;  // only with a pool
  std::vector<double> position_loss_m;
  std::vector<double> position_loss_proxy;
  std::vector<double> position_loss_restricted;
  std::vector<std::uint8_t> event;        // E_G per position (all 1 without a pool)
  std::vector<std::uint32_t> active;      // active_count(a, tau_act) per position
  std::vector<std::vector<FeatureId>> support;  // topk(a, k) per position, ascending

  bool event_all() const;
};

struct EvalOptions {
  std::size_t k = 0;        // 0: the SAE's own budget
  double tau_act = 0.0;
  bool keep_support = false;
};

/// Evaluates one sequence under M, S o M and (when `pool` is given) h_G.
/// h_G is always recomputed through mask-then-TopK, never copied from S o M.
SequenceEval evaluate_sequence(const Predictor& model, const SaeModel& sae, const ConceptPool* pool,
                               std::span<const TokenId> tokens, const LossConfig& loss, const EvalOptions& opt = {});

struct RestrictedForward {
  std::vector<std::vector<double>> probs;  // unsmoothed, one per position
  double loss = 0.0;
};

/// h_G: mask the dense pre-activation by the pool, TopK, decode, resume.
RestrictedForward restricted_forward(const Predictor& model, const SaeModel& sae, const ConceptPool& pool,
                                     std::span<const TokenId> tokens, const LossConfig& loss, std::size_t k = 0);

/// Checks that the SAE input width matches the predictor's hidden width.
void check_compatible(const Predictor& model, const SaeModel& sae);

// ------------------------------------------------------------- calibration

PoolCalibrator calibration_counts(const Predictor& model, const SaeModel& sae,
                                  std::span<const std::vector<TokenId>> sequences, std::size_t k = 0);

ConceptPool calibrate_pool(const Predictor& model, const SaeModel& sae, std::span<const std::vector<TokenId>> sequences,
                           std::uint64_t tau, std::size_t k = 0);

/// Calibration from a dump: supports are the first min(k, #positive) stored
/// entries of each position.
ConceptPool calibrate_pool_ssda(const std::string& ssda_path, std::size_t k, std::uint64_t tau);

MismatchCounter estimate_eta(const Predictor& model, const SaeModel& sae, const ConceptPool& pool,
                             std::span<const std::vector<TokenId>> sequences, std::size_t k = 0);

// ----------------------------------------------------------- measurements

/// Per-sequence measurements aggregated in fixed order.
struct Measurements {
  std::uint64_t N = 0;
  double risk_m = 0.0;           // mean loss of M
  double risk_proxy = 0.0;       // mean loss of S o M
  double risk_restricted = 0.0;  // mean loss of h_G (exact mode only)
  double gap = 0.0;              // mean |loss(M) - loss(S o M)|
  double pool_gap = 0.0;         // mean |loss(S o M) - loss(h_G)| (exact mode only)
  MismatchEstimate eta_token;
  MismatchEstimate eta_sequence;
  std::uint64_t truncated_positions = 0;  // dump mode only
  std::uint64_t m = 0, P = 0, k = 0;
  CertMode mode = CertMode::Exact;
  bool from_dump = false;  // losses were read back as 32-bit floats
};

/// Exact mode on a live predictor.
Measurements measure_exact(const Predictor& model, const SaeModel& sae, const ConceptPool& pool,
                           std::span<const std::vector<TokenId>> sequences, const LossConfig& loss, std::size_t k = 0);

/// Dump mode. Truncation flags count as pool violations. With `restricted`
/// (per-sequence h_G losses from an SSDL sidecar) the measurement is exact;
/// otherwise it is conservative.
Measurements measure_ssda(const std::string& ssda_path, const ConceptPool& pool, std::size_t k,
                          const std::vector<float>* restricted = nullptr);

/// Relative rounding allowance for losses stored as 32-bit floats.
inline constexpr double kStoredLossSlack = 0x1.0p-23;

/// Certificate inputs from measurements. Conservative mode substitutes
/// risk = R(S o M) + eta B (plus float32 storage slack on risk and gap).
Components to_components(const Measurements& meas, const LossConfig& loss, std::uint64_t n_cal);

// ------------------------------------------------------------------ dumps

struct DumpOptions {
  std::uint32_t J = 256;
  double alpha = 0.5;
};

/// Writes an SSDA dump of `sequences` from the live toy pipeline. When
/// `pool` and `ssdl_path` are given, also writes the per-sequence h_G losses.
void write_toy_dump(const Predictor& model, const SaeModel& sae, std::span<const std::vector<TokenId>> sequences,
                    const std::string& ssda_path, const DumpOptions& opt, const ConceptPool* pool = nullptr,
                    const std::string& ssdl_path = "");

// ------------------------------------------------------- toy experiment

/// Disjoint corpus regions used by every toy run: 50% train, 10%
/// calibration, 15% evaluation, 25% ground truth.
struct CorpusSplits {
  TokenRange train, calibration, evaluation, truth;
  const TokenRange& get(const std::string& name) const;
};
CorpusSplits toy_splits(std::size_t length);

/// A fully trained desk-scale pipeline on a synthetic Markov corpus with
/// disjoint train / calibration / evaluation / ground-truth regions.
struct ToyPipelineConfig {
  std::size_t corpus_length = 400000;
  std::size_t branching = 3;
  std::uint64_t source_seed = 7;
  ToyConfig model;
  SaeTrainConfig sae_train;
  std::size_t sae_m = 0;  // 0: 4 d
  std::size_t sae_k = 0;  // 0: d / 4
  std::size_t calibration_sequences = 1000;
  std::uint64_t tau = 1;
  std::size_t sae_positions = 30000;
  double alpha = 0.5;
  std::uint64_t seed = 42;
};

struct ToyPipeline {
  std::vector<TokenId> corpus;
  Vocabulary vocab;
  TokenRange train, calibration, evaluation, truth;
  std::optional<ToyCharLm> model;
  std::optional<SaeModel> sae;
  ConceptPool pool;
  ToyTrainLog model_log;
  SaeTrainLog sae_log;
  LossConfig loss{0.5, 2};

  std::span<const TokenId> region(const TokenRange& r) const {
    return std::span<const TokenId>(corpus).subspan(r.begin, r.size());
  }
};

/// Generates the synthetic corpus, then trains as below.
ToyPipeline build_toy_pipeline(const ToyPipelineConfig& cfg);
/// Trains the model on the train split of `corpus`, the SAE on its hidden
/// states, and calibrates the pool on the calibration split.
ToyPipeline build_toy_pipeline(const ToyPipelineConfig& cfg, std::vector<TokenId> corpus, Vocabulary vocab);

/// The first `positions` hidden states of randomly sampled sequences, for SAE training.
std::vector<Vec> collect_hidden(const Predictor& model, std::span<const TokenId> corpus, std::size_t positions,
                                std::uint64_t seed);

}  // namespace ssd
