#include "ssd/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssd/binio.hpp"

namespace ssd {

namespace {

constexpr std::uint32_t kSaeVersion = 1;

struct Adam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  Adam(double rate, std::size_t n) : lr(rate), m(n, 0.0), v(n, 0.0) {}

  // params and grads are addressed as one concatenated vector
  void step(std::span<std::vector<float>* const> params, std::span<const std::vector<double>> grads) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    std::size_t off = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = *params[k];
      for (std::size_t i = 0; i < p.size(); ++i, ++off) {
        const double g = grads[k][i];
        m[off] = b1 * m[off] + (1 - b1) * g;
        v[off] = b2 * v[off] + (1 - b2) * g * g;
        p[i] -= static_cast<float>(lr * (m[off] / c1) / (std::sqrt(v[off] / c2) + eps));
      }
    }
  }
};

// Pre-rectification encoder output W_enc (h - b_dec) + b_enc.
void encoder_logits(const SaeModel& sae, std::span<const float> h, std::vector<float>& x, std::vector<float>& z) {
  const std::size_t d = sae.input_dim(), m = sae.dict_size();
  x.resize(d);
  z.resize(m);
  const auto& bd = sae.decoder_bias();
  for (std::size_t i = 0; i < d; ++i) x[i] = h[i] - bd[i];
  const auto& w = sae.encoder_weights();
  const auto& be = sae.encoder_bias();
  for (std::size_t j = 0; j < m; ++j) {
    const float* row = &w[j * d];
    float s = be[j];
    for (std::size_t i = 0; i < d; ++i) s += row[i] * x[i];
    z[j] = s;
  }
}

}  // namespace

std::vector<float> SparseCode::dense() const {
  std::vector<float> out(dim, 0.0f);
  for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
  return out;
}

double SparseCode::l2_norm() const {
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) sq[i] = static_cast<double>(values[i]) * values[i];
  std::sort(sq.begin(), sq.end());
  double s = 0.0;
  for (double v : sq) s += v;
  return std::sqrt(s);
}

std::vector<FeatureId> topk_order(std::span<const float> a, std::size_t k) {
  if (k == 0 || k > a.size())
    throw Error("TopK budget k = " + std::to_string(k) + " outside [1, " + std::to_string(a.size()) + "]");
  std::vector<FeatureId> idx;
  idx.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != 0.0f) idx.push_back(static_cast<FeatureId>(i));
  }
  const auto before = [&](FeatureId x, FeatureId y) {
    const float ax = std::fabs(a[x]), ay = std::fabs(a[y]);
    return ax != ay ? ax > ay : x < y;
  };
  const std::size_t keep = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), before);
  idx.resize(keep);
  return idx;
}

SparseCode topk(std::span<const float> a, std::size_t k) {
  auto order = topk_order(a, k);
  std::sort(order.begin(), order.end());
  SparseCode c;
  c.dim = a.size();
  c.indices = std::move(order);
  c.values.reserve(c.indices.size());
  for (auto j : c.indices) c.values.push_back(a[j]);
  return c;
}

// ---------------------------------------------------------------------------

SaeModel::SaeModel(std::size_t d, std::size_t m, std::size_t k)
    : d_(d), m_(m), k_(k), enc_w_(m * d, 0.0f), enc_b_(m, 0.0f), atoms_(m * d, 0.0f), dec_b_(d, 0.0f) {
  if (d == 0) throw DimensionError("SAE input dimension must be positive");
  if (m < d) throw DimensionError("SAE dictionary must be overcomplete (m >= d)");
  if (k == 0 || k > m) throw DimensionError("SAE sparsity k must lie in [1, m]");
}

std::vector<float> SaeModel::encode(std::span<const float> h) const {
  if (h.size() != d_)
    throw DimensionError("encode: input has " + std::to_string(h.size()) + " entries, SAE d = " + std::to_string(d_));
  for (float v : h) {
    if (!std::isfinite(v)) throw NumericError("encode: non-finite input");
  }
  std::vector<float> x, z;
  encoder_logits(*this, h, x, z);
  for (auto& v : z) v = v > 0.0f ? v : 0.0f;
  return z;
}

Vec SaeModel::decode(const SparseCode& c) const {
  Vec out(dec_b_);
  for (std::size_t n = 0; n < c.indices.size(); ++n) {
    const auto j = c.indices[n];
    if (j >= m_) throw Error("decode: feature index " + std::to_string(j) + " out of range (m = " + std::to_string(m_) + ")");
    const float v = c.values[n];
    const float* col = &atoms_[j * d_];
    for (std::size_t i = 0; i < d_; ++i) out[i] += v * col[i];
  }
  return out;
}

Vec SaeModel::reconstruct(std::span<const float> h) const { return decode(topk(encode(h), k_)); }

void SaeModel::normalize_atoms() {
  for (std::size_t j = 0; j < m_; ++j) {
    auto col = atom(j);
    double s = 0.0;
    for (float v : col) s += static_cast<double>(v) * v;
    const double n = std::sqrt(s);
    if (n == 0.0) {
      col[j % d_] = 1.0f;
      continue;
    }
    for (auto& v : col) v = static_cast<float>(v / n);
  }
}

double SaeModel::max_atom_norm_error() const {
  double worst = 0.0;
  for (std::size_t j = 0; j < m_; ++j) {
    double s = 0.0;
    for (float v : atom(j)) s += static_cast<double>(v) * v;
    worst = std::max(worst, std::fabs(std::sqrt(s) - 1.0));
  }
  return worst;
}

std::uint64_t SaeModel::digest() const {
  Fnv1a64 h;
  for (const auto* arr : {&enc_w_, &enc_b_, &atoms_, &dec_b_}) {
    h.update({reinterpret_cast<const std::uint8_t*>(arr->data()), arr->size() * sizeof(float)});
  }
  return h.value();
}

void SaeModel::save(const std::string& path) const {
  BinaryWriter out(path);
  out.magic("SSDS");
  out.u32(kSaeVersion);
  out.u32(static_cast<std::uint32_t>(d_));
  out.u32(static_cast<std::uint32_t>(m_));
  out.u32(static_cast<std::uint32_t>(k_));
  out.u8(conventions());
  out.f32_array(enc_w_);
  out.f32_array(enc_b_);
  // dictionary D is serialized d x m row-major
  std::vector<float> dict(atoms_.size());
  for (std::size_t j = 0; j < m_; ++j)
    for (std::size_t i = 0; i < d_; ++i) dict[i * m_ + j] = atoms_[j * d_ + i];
  out.f32_array(dict);
  out.f32_array(dec_b_);
  out.u64(digest());
  out.finish();
}

SaeModel SaeModel::load(const std::string& path) {
  BinaryReader in(path);
  in.expect_magic("SSDS");
  if (const auto v = in.u32(); v != kSaeVersion) in.fail("unsupported SSDS version " + std::to_string(v));
  const std::size_t d = in.u32(), m = in.u32(), k = in.u32();
  if (d == 0 || d > (1u << 16) || m < d || m > (1u << 22) || k == 0 || k > m) in.fail("implausible SSDS dimensions");
  const std::uint8_t conv = in.u8();
  SaeModel sae(d, m, k);
  if (conv != sae.conventions())
    in.fail("unsupported SAE conventions byte " + std::to_string(conv) + " (expected pre-bias + rectified)");
  in.f32_array(sae.enc_w_);
  in.f32_array(sae.enc_b_);
  std::vector<float> dict(m * d);
  in.f32_array(dict);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < d; ++i) sae.atoms_[j * d + i] = dict[i * m + j];
  in.f32_array(sae.dec_b_);
  const std::uint64_t stored = in.u64();
  in.verify_digest();
  if (stored != sae.digest()) in.fail("weight digest mismatch");
  if (sae.max_atom_norm_error() > 1e-6) in.fail("dictionary columns are not unit norm");
  return sae;
}

// ---------------------------------------------------------------------------

SaeModel initialize_sae(std::size_t d, std::size_t m, std::size_t k, std::uint64_t seed,
                        std::span<const float> data_mean) {
  SaeModel sae(d, m, k);
  if (data_mean.size() != d) throw DimensionError("initialize_sae: mean has the wrong length");
  Rng rng(seed);
  for (auto& v : sae.atoms()) v = static_cast<float>(rng.normal());
  sae.normalize_atoms();
  sae.encoder_weights() = sae.atoms();  // encoder rows = dictionary columns
  std::copy(data_mean.begin(), data_mean.end(), sae.decoder_bias().begin());
  return sae;
}

double reconstruction_loss_fixed(const SaeModel& sae, std::span<const float> h, std::span<const FeatureId> support) {
  std::vector<float> x, z;
  encoder_logits(sae, h, x, z);
  const std::size_t d = sae.input_dim();
  std::vector<double> r(d);
  for (std::size_t i = 0; i < d; ++i) r[i] = static_cast<double>(sae.decoder_bias()[i]) - h[i];
  for (auto j : support) {
    const double c = std::max(0.0f, z[j]);
    const auto col = sae.atom(j);
    for (std::size_t i = 0; i < d; ++i) r[i] += c * col[i];
  }
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

namespace {

// Accumulates the gradient of ||h_hat - h||^2 into g (scaled by `scale`);
// returns the loss. z/x are the encoder intermediates for h.
double accumulate_gradients(const SaeModel& sae, std::span<const float> h, std::span<const FeatureId> support,
                            const std::vector<float>& x, const std::vector<float>& z, double scale,
                            SaeGradients& g, std::vector<double>& r) {
  const std::size_t d = sae.input_dim();
  r.assign(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) r[i] = static_cast<double>(sae.decoder_bias()[i]) - h[i];
  for (auto j : support) {
    const double c = std::max(0.0f, z[j]);
    const auto col = sae.atom(j);
    for (std::size_t i = 0; i < d; ++i) r[i] += c * col[i];
  }
  double loss = 0.0;
  for (double v : r) loss += v * v;

  // d loss / d h_hat = 2 r; h_hat depends on b_dec directly and through x = h - b_dec
  for (std::size_t i = 0; i < d; ++i) g.dec_b[i] += scale * 2.0 * r[i];
  const auto& w = sae.encoder_weights();
  for (auto j : support) {
    const double c = std::max(0.0f, z[j]);
    const auto col = sae.atom(j);
    double dc = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      g.atoms[j * d + i] += scale * 2.0 * r[i] * c;
      dc += 2.0 * r[i] * col[i];
    }
    if (z[j] <= 0.0f) continue;  // relu is flat here
    const double dz = scale * dc;
    g.enc_b[j] += dz;
    for (std::size_t i = 0; i < d; ++i) {
      g.enc_w[j * d + i] += dz * x[i];
      g.dec_b[i] -= dz * w[j * d + i];
    }
  }
  return loss;
}

SaeGradients zero_gradients(const SaeModel& sae) {
  SaeGradients g;
  g.enc_w.assign(sae.encoder_weights().size(), 0.0);
  g.enc_b.assign(sae.encoder_bias().size(), 0.0);
  g.atoms.assign(sae.atoms().size(), 0.0);
  g.dec_b.assign(sae.decoder_bias().size(), 0.0);
  return g;
}

}  // namespace

SaeGradients reconstruction_gradients(const SaeModel& sae, std::span<const float> h,
                                      std::span<const FeatureId> support) {
  std::vector<float> x, z;
  encoder_logits(sae, h, x, z);
  SaeGradients g = zero_gradients(sae);
  std::vector<double> r;
  accumulate_gradients(sae, h, support, x, z, 1.0, g, r);
  return g;
}

SaeModel train_sae(std::span<const Vec> activations, std::size_t d, std::size_t m, std::size_t k,
                   const SaeTrainConfig& cfg, SaeTrainLog* log) {
  if (activations.empty()) throw Error("train_sae: activation stream is empty");
  std::vector<double> mean(d, 0.0);
  for (const auto& h : activations) {
    if (h.size() != d) throw DimensionError("train_sae: activation of length " + std::to_string(h.size()) + ", expected " + std::to_string(d));
    for (std::size_t i = 0; i < d; ++i) mean[i] += h[i];
  }
  std::vector<float> meanf(d);
  for (std::size_t i = 0; i < d; ++i) meanf[i] = static_cast<float>(mean[i] / static_cast<double>(activations.size()));

  SaeModel sae = initialize_sae(d, m, k, cfg.seed, meanf);
  SaeTrainLog local;
  local.short_stream_warning = activations.size() < 100 * m;
  if (cfg.steps == 0) {
    if (log) *log = local;
    return sae;
  }

  std::vector<std::vector<float>*> params{&sae.encoder_weights(), &sae.encoder_bias(), &sae.atoms(),
                                          &sae.decoder_bias()};
  std::size_t total = 0;
  for (auto* p : params) total += p->size();
  Adam opt(cfg.learning_rate, total);
  Rng rng(cfg.seed ^ 0x5ae5ae5ae5ULL);
  std::vector<bool> ever_active(m, false);
  std::vector<float> x, z;
  std::vector<double> r;
  double tail_sum = 0.0;
  std::size_t tail_n = 0;
  const double scale = 1.0 / static_cast<double>(cfg.batch);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    SaeGradients g = zero_gradients(sae);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const auto& h = activations[rng.below(activations.size())];
      encoder_logits(sae, h, x, z);
      std::vector<float> a(z);
      for (auto& v : a) v = v > 0.0f ? v : 0.0f;
      const auto support = topk_order(a, k);
      for (auto j : support) ever_active[j] = true;
      batch_loss += accumulate_gradients(sae, h, support, x, z, scale, g, r);
    }
    batch_loss *= scale;
    if (!std::isfinite(batch_loss)) throw NumericError("train_sae: non-finite loss at step " + std::to_string(step));
    if (step == 0) local.initial_mse = batch_loss;
    if (step + 100 >= cfg.steps) {
      tail_sum += batch_loss;
      ++tail_n;
    }
    const std::vector<std::vector<double>> grads{std::move(g.enc_w), std::move(g.enc_b), std::move(g.atoms),
                                                 std::move(g.dec_b)};
    opt.step(params, grads);
    sae.normalize_atoms();
  }
  local.final_mse = tail_sum / static_cast<double>(tail_n);
  local.dead_features = static_cast<std::size_t>(std::count(ever_active.begin(), ever_active.end(), false));
  if (log) *log = local;
  return sae;
}

double mean_squared_error(const SaeModel& sae, std::span<const Vec> data, std::size_t k) {
  if (data.empty()) throw Error("mean_squared_error: empty sample");
  double total = 0.0;
  for (const auto& h : data) {
    const Vec rec = sae.decode(topk(sae.encode(h), k));
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += static_cast<double>(rec[i] - h[i]) * (rec[i] - h[i]);
    total += s;
  }
  return total / static_cast<double>(data.size());
}

double explained_variance(const SaeModel& sae, std::span<const Vec> data) {
  if (data.empty()) throw Error("explained_variance: empty sample");
  const std::size_t d = data.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& h : data)
    for (std::size_t i = 0; i < d; ++i) mean[i] += h[i];
  for (auto& v : mean) v /= static_cast<double>(data.size());
  double var = 0.0;
  for (const auto& h : data)
    for (std::size_t i = 0; i < d; ++i) var += (h[i] - mean[i]) * (h[i] - mean[i]);
  var /= static_cast<double>(data.size());
  return 1.0 - mean_squared_error(sae, data, sae.sparsity()) / var;
}

}  // namespace ssd
