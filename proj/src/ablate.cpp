#include "ssd/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ssd {

SparseCode shuffle_code(const SparseCode& c, std::span<const FeatureId> permutation) {
  if (permutation.size() != c.dim)
    throw DimensionError("permutation has " + std::to_string(permutation.size()) + " entries, code dimension is " +
                         std::to_string(c.dim));
  std::vector<std::pair<FeatureId, float>> moved;
  moved.reserve(c.nnz());
  for (std::size_t i = 0; i < c.nnz(); ++i) moved.emplace_back(permutation[c.indices[i]], c.values[i]);
  std::sort(moved.begin(), moved.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  SparseCode out;
  out.dim = c.dim;
  for (const auto& [j, v] : moved) {
    if (!out.indices.empty() && out.indices.back() == j) throw Error("shuffle_code: argument is not a permutation");
    out.indices.push_back(j);
    out.values.push_back(v);
  }
  return out;
}

std::vector<FeatureId> random_permutation(std::size_t m, Rng& rng) {
  std::vector<FeatureId> p(m);
  std::iota(p.begin(), p.end(), FeatureId{0});
  rng.shuffle(p);
  return p;
}

const char* to_string(ShuffleVariant v) {
  switch (v) {
    case ShuffleVariant::PerPosition: return "per-position";
    case ShuffleVariant::Global: return "global";
    case ShuffleVariant::WithinSupport: return "within-support";
  }
  return "?";
}

ShuffleVariant parse_shuffle_variant(const std::string& s) {
  if (s == "per-position") return ShuffleVariant::PerPosition;
  if (s == "global") return ShuffleVariant::Global;
  if (s == "within-support") return ShuffleVariant::WithinSupport;
  throw Error("unknown shuffle variant '" + s + "' (expected per-position, global or within-support)");
}

double AblationResult::separation() const {
  const double n1 = static_cast<double>(real.count), n2 = static_cast<double>(shuffled.count);
  if (n1 < 2 || n2 < 2) return 0.0;
  // sample variances from the population ones
  const double v1 = real.std * real.std * n1 / (n1 - 1), v2 = shuffled.std * shuffled.std * n2 / (n2 - 1);
  const double se = std::sqrt(v1 / n1 + v2 / n2);
  const double diff = shuffled.mean - real.mean;
  if (se == 0.0) return diff > 0 ? INFINITY : (diff < 0 ? -INFINITY : 0.0);
  return diff / se;
}

namespace {

SparseCode shuffle_within_support(const SparseCode& c, Rng& rng) {
  std::vector<std::size_t> order(c.nnz());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  SparseCode out = c;
  for (std::size_t i = 0; i < c.nnz(); ++i) out.values[i] = c.values[order[i]];
  return out;
}

}  // namespace

AblationResult run_ablation(const Predictor& model, const SaeModel& sae,
                            std::span<const std::vector<TokenId>> sequences, const LossConfig& loss,
                            std::uint64_t seed, ShuffleVariant variant) {
  if (sequences.empty()) throw Error("ablation dataset is empty");
  if (model.hidden_dim() != sae.input_dim())
    throw DimensionError("SAE input dimension d = " + std::to_string(sae.input_dim()) + " but predictor d = " +
                         std::to_string(model.hidden_dim()));
  AblationResult out;
  out.variant = variant;
  out.seed = seed;
  const std::size_t m = sae.dict_size(), k = sae.sparsity();
  Rng global_rng(seed);
  const auto global_perm = random_permutation(m, global_rng);

  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& seq = sequences[i];
    Rng rng(seed ^ static_cast<std::uint64_t>(i));
    const auto hs = model.hidden_states(seq);
    std::vector<double> pm, pp, ps;
    for (std::size_t t = 0; t < hs.size(); ++t) {
      const TokenId y = seq[t];
      const SparseCode code = topk(sae.encode(hs[t]), k);
      SparseCode shuffled;
      switch (variant) {
        case ShuffleVariant::PerPosition: shuffled = shuffle_code(code, random_permutation(m, rng)); break;
        case ShuffleVariant::Global: shuffled = shuffle_code(code, global_perm); break;
        case ShuffleVariant::WithinSupport: shuffled = shuffle_within_support(code, rng); break;
      }
      pm.push_back(smooth_entry(model.resume(hs[t], t)[y], loss));
      pp.push_back(smooth_entry(model.resume(sae.decode(code), t)[y], loss));
      ps.push_back(smooth_entry(model.resume(sae.decode(shuffled), t)[y], loss));
    }
    const double lm = smoothed_bpd(pm, loss);
    out.gaps_real.push_back(loss_gap(lm, smoothed_bpd(pp, loss), loss));
    out.gaps_shuffled.push_back(loss_gap(lm, smoothed_bpd(ps, loss), loss));
  }
  out.real = empirical_risk(out.gaps_real);
  out.shuffled = empirical_risk(out.gaps_shuffled);
  return out;
}

std::string render_gap_histogram(std::span<const double> gaps, double lo, double hi, std::size_t bins,
                                 std::size_t width) {
  if (bins == 0 || !(hi > lo)) throw Error("histogram needs bins > 0 and hi > lo");
  std::vector<std::uint64_t> count(bins, 0);
  for (double g : gaps) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((g - lo) / (hi - lo) * static_cast<double>(bins)));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    ++count[static_cast<std::size_t>(b)];
  }
  const std::uint64_t peak = *std::max_element(count.begin(), count.end());
  std::ostringstream os;
  for (std::size_t b = 0; b < bins; ++b) {
    const double x0 = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    const double x1 = lo + (hi - lo) * static_cast<double>(b + 1) / static_cast<double>(bins);
    const auto bar = peak ? static_cast<std::size_t>(static_cast<double>(count[b]) / static_cast<double>(peak) *
                                                         static_cast<double>(width) + 0.5)
                          : 0;
    char label[80];
    std::snprintf(label, sizeof label, "[%7.3f,%7.3f) %8llu ", x0, x1, static_cast<unsigned long long>(count[b]));
    os << label << std::string(bar, '#') << "\n";
  }
  return os.str();
}

}  // namespace ssd
