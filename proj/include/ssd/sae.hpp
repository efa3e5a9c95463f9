#pragma once

// TopK sparse autoencoder.
//
//   a     = relu(W_enc (h - b_dec) + b_enc)     encode()
//   c     = TopK(a, k)                          topk()
//   h_hat = b_dec + sum_{j in supp c} c_j D_j   decode()
//
// Dictionary columns D_j have unit L2 norm. TopK keeps the k largest
// magnitudes and breaks ties toward the smaller index.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssd/common.hpp"

namespace ssd {

/// Sparse vector with strictly increasing indices and no stored zeros.
struct SparseCode {
  std::vector<FeatureId> indices;
  std::vector<float> values;
  std::size_t dim = 0;

  std::size_t nnz() const { return indices.size(); }
  std::vector<float> dense() const;
  /// L2 norm summed in ascending-magnitude order, so any relabeling of the
  /// indices yields the same bits.
  double l2_norm() const;

  bool operator==(const SparseCode&) const = default;
};

/// Keeps min(k, nnz(a)) entries: the k largest |a_i|, ties to smaller i.
SparseCode topk(std::span<const float> a, std::size_t k);

/// Support of topk(a, k) in descending-magnitude order (before re-sorting by
/// index). Exposed for the dump writer, which stores entries in this order.
std::vector<FeatureId> topk_order(std::span<const float> a, std::size_t k);

/// Convention flags stored in serialized SAEs and dump headers.
enum ConventionBits : std::uint8_t {
  kPreBias = 1u << 0,    // decoder bias subtracted before encoding
  kRectified = 1u << 1,  // relu applied before TopK
};

class SaeModel {
 public:
  SaeModel(std::size_t d, std::size_t m, std::size_t k);

  std::size_t input_dim() const { return d_; }
  std::size_t dict_size() const { return m_; }
  std::size_t sparsity() const { return k_; }
  std::uint8_t conventions() const { return kPreBias | kRectified; }

  /// Dense rectified pre-activation a(h).
  std::vector<float> encode(std::span<const float> h) const;
  /// b_dec + D c, accumulating active columns in ascending index order.
  Vec decode(const SparseCode& c) const;
  /// decode(topk(encode(h), k)).
  Vec reconstruct(std::span<const float> h) const;

  /// Column j of the dictionary (length d).
  std::span<const float> atom(std::size_t j) const { return {&atoms_[j * d_], d_}; }
  std::span<float> atom(std::size_t j) { return {&atoms_[j * d_], d_}; }

  // Raw parameter storage. encoder: m x d row-major; atoms: m x d, one
  // dictionary column per row.
  std::vector<float>& encoder_weights() { return enc_w_; }
  std::vector<float>& encoder_bias() { return enc_b_; }
  std::vector<float>& atoms() { return atoms_; }
  std::vector<float>& decoder_bias() { return dec_b_; }
  const std::vector<float>& encoder_weights() const { return enc_w_; }
  const std::vector<float>& encoder_bias() const { return enc_b_; }
  const std::vector<float>& atoms() const { return atoms_; }
  const std::vector<float>& decoder_bias() const { return dec_b_; }

  /// Rescales every dictionary column to unit norm.
  void normalize_atoms();
  /// Largest | ||D_j|| - 1 | over columns.
  double max_atom_norm_error() const;

  std::uint64_t digest() const;

  void save(const std::string& path) const;
  static SaeModel load(const std::string& path);

  bool operator==(const SaeModel&) const = default;

 private:
  std::size_t d_, m_, k_;
  std::vector<float> enc_w_, enc_b_, atoms_, dec_b_;
};

struct SaeTrainConfig {
  std::size_t steps = 3000;
  std::size_t batch = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
};

struct SaeTrainLog {
  double initial_mse = 0.0;  // mean ||h - h_hat||^2 on the first batch
  double final_mse = 0.0;    // mean over the last 100 steps
  std::size_t dead_features = 0;  // never selected during training
  bool short_stream_warning = false;
};

/// Seeded initialization: random unit-norm dictionary, encoder = D^T,
/// zero encoder bias, decoder bias = `data_mean`.
SaeModel initialize_sae(std::size_t d, std::size_t m, std::size_t k, std::uint64_t seed,
                        std::span<const float> data_mean);

/// Trains on `activations` (each of length d) with Adam on the mean squared
/// reconstruction error, straight-through on the selected support, and
/// renormalizes atoms after every step. With zero steps the result is
/// exactly initialize_sae(d, m, k, seed, mean(activations)).
SaeModel train_sae(std::span<const Vec> activations, std::size_t d, std::size_t m, std::size_t k,
                   const SaeTrainConfig& cfg, SaeTrainLog* log = nullptr);

/// Analytic gradients of ||h - h_hat||^2 for a fixed active set.
struct SaeGradients {
  std::vector<double> enc_w, enc_b, atoms, dec_b;
};

/// Squared reconstruction error with the support forced to `support`
/// (coefficients still relu(W_enc (h - b_dec) + b_enc)).
double reconstruction_loss_fixed(const SaeModel& sae, std::span<const float> h, std::span<const FeatureId> support);

SaeGradients reconstruction_gradients(const SaeModel& sae, std::span<const float> h,
                                      std::span<const FeatureId> support);

/// 1 - mean squared error / variance over a sample.
double explained_variance(const SaeModel& sae, std::span<const Vec> data);

/// Mean ||h - reconstruct(h)||^2 with TopK budget `k` (overrides the model's).
double mean_squared_error(const SaeModel& sae, std::span<const Vec> data, std::size_t k);

}  // namespace ssd
