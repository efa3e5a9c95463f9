#pragma once

// Random but valid SSDA records for round-trip and corruption tests.

#include <algorithm>
#include <numeric>
#include <vector>

#include "ssd/ingest.hpp"

namespace ssd::test {

inline SsdaRecord random_record(const SsdaHeader& h, Rng& rng) {
  const LossConfig loss(h.alpha, h.vocab);
  SsdaRecord r;
  for (std::uint32_t t = 0; t < h.T; ++t) r.tokens.push_back(static_cast<TokenId>(rng.below(h.vocab)));
  std::vector<FeatureId> ids(h.m);
  std::iota(ids.begin(), ids.end(), FeatureId{0});
  for (std::uint32_t t = 0; t < h.T; ++t) {
    rng.shuffle(ids);
    std::vector<SsdaEntry> e;
    const std::size_t positive = rng.below(h.J + 1);
    for (std::uint32_t j = 0; j < h.J; ++j)
      e.push_back({ids[j], j < positive ? static_cast<float>(0.01 + rng.uniform() * 5) : 0.0f});
    std::sort(e.begin(), e.end(), [](const SsdaEntry& a, const SsdaEntry& b) {
      return a.value != b.value ? a.value > b.value : a.index < b.index;
    });
    r.entries.insert(r.entries.end(), e.begin(), e.end());
  }
  double sm = 0, sp = 0;
  for (std::uint32_t t = 0; t < h.T; ++t) {
    r.position_loss_m.push_back(static_cast<float>(loss.lower() + rng.uniform() * loss.width()));
    r.position_loss_proxy.push_back(static_cast<float>(loss.lower() + rng.uniform() * loss.width()));
    sm += r.position_loss_m.back();
    sp += r.position_loss_proxy.back();
  }
  r.loss_m = static_cast<float>(sm / h.T);
  r.loss_proxy = static_cast<float>(sp / h.T);
  return r;
}

inline SsdaHeader small_header(std::uint64_t n) {
  SsdaHeader h;
  h.d = 16;
  h.m = 64;
  h.vocab = 27;
  h.T = 8;
  h.J = 12;
  h.n_records = n;
  h.flags = 3;
  h.alpha = 0.5;
  return h;
}

}  // namespace ssd::test
