#pragma once

// The frozen base predictor. Certification only needs two capabilities: the
// hidden state at the insertion layer, and resuming the forward pass from a
// (possibly reconstructed) hidden state to a next-token distribution.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ssd/common.hpp"

namespace ssd {

/// Hidden state `t` of a sequence conditions on tokens[0, t) and predicts
/// tokens[t]; state 0 is the empty-context state.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::size_t vocab_size() const = 0;
  virtual std::size_t context_length() const = 0;
  virtual std::size_t hidden_dim() const = 0;

  /// One hidden vector per position of `tokens`.
  virtual std::vector<Vec> hidden_states(std::span<const TokenId> tokens) const = 0;

  /// Runs the layers after the insertion point. `position` is metadata for
  /// predictors whose head depends on it.
  virtual std::vector<double> resume(std::span<const float> hidden, std::size_t position) const = 0;

  /// Native next-token distributions, resume(hidden_states(tokens)[t], t).
  std::vector<std::vector<double>> distributions(std::span<const TokenId> tokens) const;
};

/// Character vocabulary: a sorted table of distinct bytes.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::string symbols);

  static Vocabulary from_text(std::string_view text);

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbols() const { return symbols_; }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> tokens) const;

 private:
  std::string symbols_;
  std::vector<int> index_ = std::vector<int>(256, -1);
};

struct ToyConfig {
  std::size_t window = 8;
  std::size_t embed_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t context_length = 32;  // sequence length T used for position sampling
  std::size_t steps = 3000;
  std::size_t batch = 32;
  double learning_rate = 0.01;
  std::uint64_t seed = 42;
};

struct ToyTrainLog {
  double initial_loss = 0.0;  // nats, first batch
  double final_loss = 0.0;    // nats, mean over the last 100 steps
};

/// Fixed-window MLP language model:
///   x = [embed(t-w) ... embed(t-1)]   (padding id V before the sequence start)
///   h = tanh(W1 x + b1)               hidden state, d = hidden_dim
///   p = softmax(W2 h + b2)            resume()
/// Immutable once constructed.
class ToyCharLm final : public Predictor {
 public:
  struct Weights {
    std::size_t vocab = 0, window = 0, embed_dim = 0, hidden_dim = 0;
    std::vector<float> embedding;  // (V + 1) x embed_dim, last row is padding
    std::vector<float> w1;         // hidden_dim x (window * embed_dim)
    std::vector<float> b1;         // hidden_dim
    std::vector<float> w2;         // V x hidden_dim
    std::vector<float> b2;         // V
  };

  ToyCharLm(Weights w, Vocabulary vocab, std::size_t context_length);

  /// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Weights initial_weights(std::size_t vocab, const ToyConfig& cfg);

  std::size_t vocab_size() const override { return w_.vocab; }
  std::size_t context_length() const override { return context_length_; }
  std::size_t hidden_dim() const override { return w_.hidden_dim; }
  std::size_t window() const { return w_.window; }

  std::vector<Vec> hidden_states(std::span<const TokenId> tokens) const override;
  std::vector<double> resume(std::span<const float> hidden, std::size_t position) const override;

  /// Hidden state for a single context window (padding id = V allowed).
  Vec hidden_from_window(std::span<const TokenId> window) const;

  const Weights& weights() const { return w_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  /// Digest of all weight arrays, fixed for the object's lifetime.
  std::uint64_t digest() const { return digest_; }

  void save(const std::string& path) const;
  static ToyCharLm load(const std::string& path);

 private:
  Weights w_;
  Vocabulary vocab_;
  std::size_t context_length_;
  std::uint64_t digest_;
};

/// Trains the toy model on a token stream. Requires at least 10 * T tokens.
ToyCharLm train_toy(std::span<const TokenId> corpus, const Vocabulary& vocab, const ToyConfig& cfg,
                    ToyTrainLog* log = nullptr);

}  // namespace ssd
