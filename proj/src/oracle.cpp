#include "ssd/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "ssd/binio.hpp"

namespace ssd {

namespace {

constexpr std::uint32_t kOracleVersion = 1;

std::uint64_t weights_digest(const ToyCharLm::Weights& w) {
  Fnv1a64 h;
  for (const auto* arr : {&w.embedding, &w.w1, &w.b1, &w.w2, &w.b2}) {
    h.update({reinterpret_cast<const std::uint8_t*>(arr->data()), arr->size() * sizeof(float)});
  }
  return h.value();
}

void fill_uniform(std::vector<float>& v, std::size_t n, double bound, Rng& rng) {
  v.resize(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
}

struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<std::vector<double>> m, v;
  std::size_t t = 0;

  Adam(double rate, const std::vector<std::vector<float>*>& params) : lr(rate) {
    for (auto* p : params) {
      m.emplace_back(p->size(), 0.0);
      v.emplace_back(p->size(), 0.0);
    }
  }

  void step(const std::vector<std::vector<float>*>& params, const std::vector<std::vector<double>>& grads) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grads[k][i];
        m[k][i] = b1 * m[k][i] + (1 - b1) * g;
        v[k][i] = b2 * v[k][i] + (1 - b2) * g * g;
        p[i] -= static_cast<float>(lr * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps));
      }
    }
  }
};

}  // namespace

std::vector<std::vector<double>> Predictor::distributions(std::span<const TokenId> tokens) const {
  const auto hs = hidden_states(tokens);
  std::vector<std::vector<double>> out;
  out.reserve(hs.size());
  for (std::size_t t = 0; t < hs.size(); ++t) out.push_back(resume(hs[t], t));
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary(std::string symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    auto& slot = index_[static_cast<unsigned char>(symbols_[i])];
    if (slot != -1) throw Error("duplicate symbol in vocabulary");
    slot = static_cast<int>(i);
  }
}

Vocabulary Vocabulary::from_text(std::string_view text) {
  std::vector<bool> seen(256, false);
  for (unsigned char c : text) seen[c] = true;
  std::string symbols;
  for (int c = 0; c < 256; ++c) {
    if (seen[c]) symbols.push_back(static_cast<char>(c));
  }
  return Vocabulary(std::move(symbols));
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int id = index_[static_cast<unsigned char>(text[i])];
    if (id < 0) throw Error("character at offset " + std::to_string(i) + " is not in the vocabulary");
    out.push_back(static_cast<TokenId>(id));
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> tokens) const {
  std::string out;
  for (auto t : tokens) {
    if (t >= symbols_.size()) throw Error("token id " + std::to_string(t) + " out of range");
    out.push_back(symbols_[t]);
  }
  return out;
}

// ---------------------------------------------------------------------------

ToyCharLm::ToyCharLm(Weights w, Vocabulary vocab, std::size_t context_length)
    : w_(std::move(w)), vocab_(std::move(vocab)), context_length_(context_length) {
  const std::size_t in = w_.window * w_.embed_dim;
  if (w_.vocab == 0 || w_.window == 0 || w_.embed_dim == 0 || w_.hidden_dim == 0)
    throw DimensionError("toy model dimensions must be positive");
  if (w_.embedding.size() != (w_.vocab + 1) * w_.embed_dim || w_.w1.size() != w_.hidden_dim * in ||
      w_.b1.size() != w_.hidden_dim || w_.w2.size() != w_.vocab * w_.hidden_dim || w_.b2.size() != w_.vocab)
    throw DimensionError("toy model weight arrays do not match the declared dimensions");
  if (vocab_.size() != 0 && vocab_.size() != w_.vocab)
    throw DimensionError("vocabulary has " + std::to_string(vocab_.size()) + " symbols but the model V = " +
                         std::to_string(w_.vocab));
  digest_ = weights_digest(w_);
}

ToyCharLm::Weights ToyCharLm::initial_weights(std::size_t vocab, const ToyConfig& cfg) {
  Rng rng(cfg.seed);
  Weights w;
  w.vocab = vocab;
  w.window = cfg.window;
  w.embed_dim = cfg.embed_dim;
  w.hidden_dim = cfg.hidden_dim;
  const std::size_t in = cfg.window * cfg.embed_dim;
  fill_uniform(w.embedding, (vocab + 1) * cfg.embed_dim, 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)), rng);
  fill_uniform(w.w1, cfg.hidden_dim * in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  fill_uniform(w.b1, cfg.hidden_dim, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  fill_uniform(w.w2, vocab * cfg.hidden_dim, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)), rng);
  fill_uniform(w.b2, vocab, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)), rng);
  return w;
}

Vec ToyCharLm::hidden_from_window(std::span<const TokenId> window) const {
  const std::size_t e = w_.embed_dim, in = w_.window * e;
  if (window.size() != w_.window) throw DimensionError("context window has the wrong width");
  std::vector<float> x(in);
  for (std::size_t j = 0; j < w_.window; ++j) {
    if (window[j] > w_.vocab) throw Error("token id " + std::to_string(window[j]) + " out of range");
    std::copy_n(w_.embedding.begin() + static_cast<std::ptrdiff_t>(window[j] * e), e, x.begin() + static_cast<std::ptrdiff_t>(j * e));
  }
  Vec h(w_.hidden_dim);
  for (std::size_t i = 0; i < w_.hidden_dim; ++i) {
    const float* row = &w_.w1[i * in];
    float z = w_.b1[i];
    for (std::size_t j = 0; j < in; ++j) z += row[j] * x[j];
    h[i] = std::tanh(z);
  }
  return h;
}

std::vector<Vec> ToyCharLm::hidden_states(std::span<const TokenId> tokens) const {
  const auto pad = static_cast<TokenId>(w_.vocab);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= w_.vocab)
      throw Error("token id " + std::to_string(tokens[t]) + " at position " + std::to_string(t) + " out of range");
  }
  std::vector<Vec> out;
  out.reserve(tokens.size());
  std::vector<TokenId> window(w_.window);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    for (std::size_t j = 0; j < w_.window; ++j) {
      // slot j holds the token at t - window + j
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(w_.window - j);
      window[j] = src < 0 ? pad : tokens[static_cast<std::size_t>(src)];
    }
    out.push_back(hidden_from_window(window));
  }
  return out;
}

std::vector<double> ToyCharLm::resume(std::span<const float> hidden, std::size_t /*position*/) const {
  if (hidden.size() != w_.hidden_dim)
    throw DimensionError("hidden vector has " + std::to_string(hidden.size()) + " entries, model d = " +
                         std::to_string(w_.hidden_dim));
  for (float v : hidden) {
    if (!std::isfinite(v)) throw NumericError("non-finite hidden vector passed to resume");
  }
  std::vector<double> logits(w_.vocab);
  for (std::size_t v = 0; v < w_.vocab; ++v) {
    const float* row = &w_.w2[v * w_.hidden_dim];
    double z = w_.b2[v];
    for (std::size_t i = 0; i < w_.hidden_dim; ++i) z += static_cast<double>(row[i]) * hidden[i];
    logits[v] = z;
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - mx);
    sum += z;
  }
  for (auto& z : logits) z /= sum;
  return logits;
}

// ---------------------------------------------------------------------------

void ToyCharLm::save(const std::string& path) const {
  BinaryWriter out(path);
  out.magic("SSDO");
  out.u32(kOracleVersion);
  out.u32(static_cast<std::uint32_t>(w_.vocab));
  out.u32(static_cast<std::uint32_t>(w_.window));
  out.u32(static_cast<std::uint32_t>(w_.embed_dim));
  out.u32(static_cast<std::uint32_t>(w_.hidden_dim));
  out.u32(static_cast<std::uint32_t>(context_length_));
  const std::string& sym = vocab_.symbols();
  out.u32(static_cast<std::uint32_t>(sym.size()));
  out.bytes({reinterpret_cast<const std::uint8_t*>(sym.data()), sym.size()});
  out.f32_array(w_.embedding);
  out.f32_array(w_.w1);
  out.f32_array(w_.b1);
  // head is serialized d x V
  std::vector<float> head(w_.w2.size());
  for (std::size_t v = 0; v < w_.vocab; ++v)
    for (std::size_t i = 0; i < w_.hidden_dim; ++i) head[i * w_.vocab + v] = w_.w2[v * w_.hidden_dim + i];
  out.f32_array(head);
  out.f32_array(w_.b2);
  out.u64(digest_);
  out.finish();
}

ToyCharLm ToyCharLm::load(const std::string& path) {
  BinaryReader in(path);
  in.expect_magic("SSDO");
  if (const auto v = in.u32(); v != kOracleVersion) in.fail("unsupported SSDO version " + std::to_string(v));
  Weights w;
  w.vocab = in.u32();
  w.window = in.u32();
  w.embed_dim = in.u32();
  w.hidden_dim = in.u32();
  const std::size_t ctx = in.u32();
  if (w.vocab == 0 || w.vocab > (1u << 20) || w.window == 0 || w.window > 4096 || w.embed_dim == 0 ||
      w.embed_dim > 65536 || w.hidden_dim == 0 || w.hidden_dim > 65536)
    in.fail("implausible SSDO dimensions");
  const std::uint32_t nsym = in.u32();
  if (nsym != 0 && nsym != w.vocab) in.fail("symbol table size disagrees with V");
  std::string sym(nsym, '\0');
  in.bytes({reinterpret_cast<std::uint8_t*>(sym.data()), sym.size()});
  const std::size_t input = w.window * w.embed_dim;
  w.embedding.resize((w.vocab + 1) * w.embed_dim);
  w.w1.resize(w.hidden_dim * input);
  w.b1.resize(w.hidden_dim);
  w.w2.resize(w.vocab * w.hidden_dim);
  w.b2.resize(w.vocab);
  in.f32_array(w.embedding);
  in.f32_array(w.w1);
  in.f32_array(w.b1);
  std::vector<float> head(w.w2.size());
  in.f32_array(head);
  for (std::size_t v = 0; v < w.vocab; ++v)
    for (std::size_t i = 0; i < w.hidden_dim; ++i) w.w2[v * w.hidden_dim + i] = head[i * w.vocab + v];
  in.f32_array(w.b2);
  const std::uint64_t stored = in.u64();
  in.verify_digest();
  Vocabulary vocab;
  try {
    vocab = Vocabulary(sym);
  } catch (const Error& e) {
    in.fail(e.what());
  }
  ToyCharLm model(std::move(w), std::move(vocab), ctx);
  if (model.digest() != stored) in.fail("weight digest mismatch");
  return model;
}

// ---------------------------------------------------------------------------

ToyCharLm train_toy(std::span<const TokenId> corpus, const Vocabulary& vocab, const ToyConfig& cfg,
                    ToyTrainLog* log) {
  const std::size_t T = cfg.context_length;
  if (T == 0 || corpus.size() < 10 * T)
    throw Error("corpus too short: " + std::to_string(corpus.size()) + " tokens, need at least " +
                std::to_string(10 * T));
  const std::size_t V = vocab.size();
  for (auto t : corpus) {
    if (t >= V) throw Error("corpus token id " + std::to_string(t) + " outside the vocabulary");
  }

  ToyCharLm::Weights w = ToyCharLm::initial_weights(V, cfg);
  const std::size_t e = cfg.embed_dim, win = cfg.window, in = win * e, d = cfg.hidden_dim;
  std::vector<std::vector<float>*> params{&w.embedding, &w.w1, &w.b1, &w.w2, &w.b2};
  std::vector<std::vector<double>> grads;
  for (auto* p : params) grads.emplace_back(p->size(), 0.0);
  Adam opt(cfg.learning_rate, params);
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<TokenId> window(win);
  std::vector<float> x(in), h(d);
  std::vector<double> logits(V), dz(d), dh(d);
  double tail_sum = 0.0;
  std::size_t tail_n = 0;
  const auto pad = static_cast<TokenId>(V);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t s = rng.below(corpus.size() - T + 1);
      const std::size_t t = rng.below(T);
      for (std::size_t j = 0; j < win; ++j) {
        const std::ptrdiff_t rel = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(win - j);
        window[j] = rel < 0 ? pad : corpus[s + static_cast<std::size_t>(rel)];
      }
      const TokenId target = corpus[s + t];
      for (std::size_t j = 0; j < win; ++j)
        std::copy_n(w.embedding.begin() + static_cast<std::ptrdiff_t>(window[j] * e), e, x.begin() + static_cast<std::ptrdiff_t>(j * e));
      for (std::size_t i = 0; i < d; ++i) {
        float z = w.b1[i];
        for (std::size_t j = 0; j < in; ++j) z += w.w1[i * in + j] * x[j];
        h[i] = std::tanh(z);
      }
      double mx = -1e300;
      for (std::size_t v = 0; v < V; ++v) {
        double z = w.b2[v];
        for (std::size_t i = 0; i < d; ++i) z += static_cast<double>(w.w2[v * d + i]) * h[i];
        logits[v] = z;
        mx = std::max(mx, z);
      }
      double sum = 0.0;
      for (auto& z : logits) {
        z = std::exp(z - mx);
        sum += z;
      }
      for (auto& z : logits) z /= sum;
      batch_loss += -std::log(std::max(logits[target], 1e-300));

      // backward, gradients averaged over the batch
      const double scale = 1.0 / static_cast<double>(cfg.batch);
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t v = 0; v < V; ++v) {
        const double g = (logits[v] - (v == target ? 1.0 : 0.0)) * scale;
        grads[4][v] += g;
        for (std::size_t i = 0; i < d; ++i) {
          grads[3][v * d + i] += g * h[i];
          dh[i] += g * w.w2[v * d + i];
        }
      }
      for (std::size_t i = 0; i < d; ++i) dz[i] = dh[i] * (1.0 - static_cast<double>(h[i]) * h[i]);
      for (std::size_t i = 0; i < d; ++i) {
        grads[2][i] += dz[i];
        for (std::size_t j = 0; j < in; ++j) grads[1][i * in + j] += dz[i] * x[j];
      }
      for (std::size_t j = 0; j < in; ++j) {
        double dx = 0.0;
        for (std::size_t i = 0; i < d; ++i) dx += dz[i] * w.w1[i * in + j];
        grads[0][window[j / e] * e + j % e] += dx;
      }
    }
    batch_loss /= static_cast<double>(cfg.batch);
    if (!std::isfinite(batch_loss))
      throw NumericError("non-finite training loss at step " + std::to_string(step));
    if (step == 0 && log) log->initial_loss = batch_loss;
    if (step + 100 >= cfg.steps) {
      tail_sum += batch_loss;
      ++tail_n;
    }
    opt.step(params, grads);
  }
  if (log) log->final_loss = tail_n ? tail_sum / static_cast<double>(tail_n) : log->initial_loss;
  return ToyCharLm(std::move(w), vocab, T);
}

}  // namespace ssd
