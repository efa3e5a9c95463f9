#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "ssd/ablate.hpp"
#include "ssd/bound.hpp"
#include "ssd/pipeline.hpp"
#include "support.hpp"

using namespace ssd;

TEST_CASE("shuffle preserves values, L0 and L2") {
  const SparseCode c{{1, 4, 6}, {0.5f, 2.0f, 0.25f}, 8};
  std::vector<FeatureId> id(8);
  std::iota(id.begin(), id.end(), FeatureId{0});
  CHECK(shuffle_code(c, id) == c);

  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto perm = random_permutation(8, rng);
    const auto s = shuffle_code(c, perm);
    CHECK(s.nnz() == c.nnz());
    CHECK(s.l2_norm() == c.l2_norm());
    const auto dc = c.dense(), ds = s.dense();
    for (std::size_t i = 0; i < 8; ++i) CHECK(ds[perm[i]] == dc[i]);
  }
}

TEST_CASE("all permutations of a small dictionary") {
  const SparseCode c{{0, 3, 5}, {1.5f, 0.75f, 3.0f}, 6};
  std::vector<FeatureId> perm(6);
  std::iota(perm.begin(), perm.end(), FeatureId{0});
  int n = 0;
  do {
    const auto s = shuffle_code(c, perm);
    const auto dc = c.dense(), ds = s.dense();
    for (std::size_t i = 0; i < 6; ++i) CHECK(ds[perm[i]] == dc[i]);
    CHECK(s.l2_norm() == c.l2_norm());
    ++n;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(n == 720);
}

TEST_CASE("variant names") {
  for (auto v : {ShuffleVariant::PerPosition, ShuffleVariant::Global, ShuffleVariant::WithinSupport})
    CHECK(parse_shuffle_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_shuffle_variant("sideways"), Error);
}

TEST_CASE("trained SAE separates real and shuffled gaps") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 300, 21, false);
  const auto r = run_ablation(*p.model, *p.sae, seqs, p.loss, 5);
  CHECK(r.gaps_real.size() == 300);
  CHECK(r.gaps_shuffled.size() == 300);
  for (double g : r.gaps_real) CHECK(g >= 0.0);
  INFO("separation ", r.separation());
  CHECK(r.separation() > 5.0);
  const auto again = run_ablation(*p.model, *p.sae, seqs, p.loss, 5);
  CHECK(again.gaps_shuffled == r.gaps_shuffled);

  // The complexity term depends only on (P, m, N, delta, B).
  Components real, shuffled;
  real.risk = r.real.mean;
  shuffled.risk = r.shuffled.mean;
  real.P = shuffled.P = p.pool.size();
  real.m = shuffled.m = p.pool.dict_size();
  const auto a = assemble(real, p.loss, 300), b = assemble(shuffled, p.loss, 300);
  CHECK(a.complexity == b.complexity);

  for (auto v : {ShuffleVariant::Global, ShuffleVariant::WithinSupport}) {
    const auto rv = run_ablation(*p.model, *p.sae, std::span(seqs).first(50), p.loss, 5, v);
    CHECK(rv.variant == v);
    CHECK(rv.gaps_real == std::vector<double>(r.gaps_real.begin(), r.gaps_real.begin() + 50));
  }
  CHECK_THROWS_AS(run_ablation(*p.model, *p.sae, std::vector<std::vector<TokenId>>{}, p.loss, 5), Error);
}

TEST_CASE("untrained SAE: real and shuffled are both noise decoders") {
  const auto& p = test::small_pipeline();
  const std::size_t d = p.model->hidden_dim();
  // Encoder and dictionary drawn independently, so neither code carries meaning.
  SaeModel sae(d, p.sae->dict_size(), p.sae->sparsity());
  Rng rng(77);
  for (auto& v : sae.encoder_weights()) v = static_cast<float>(rng.normal());
  for (auto& v : sae.atoms()) v = static_cast<float>(rng.normal());
  sae.normalize_atoms();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 300, 22, false);
  const auto r = run_ablation(*p.model, sae, seqs, p.loss, 6);
  INFO("real ", r.real.mean, " shuffled ", r.shuffled.mean, " separation ", r.separation());
  CHECK(std::fabs(r.separation()) < 2.0);
}

TEST_CASE("gap histogram") {
  const std::vector<double> g = {0.1, 0.2, 0.2, 0.9};
  const auto h = render_gap_histogram(g, 0.0, 1.0, 5, 10);
  CHECK(std::count(h.begin(), h.end(), '\n') >= 5);
}
