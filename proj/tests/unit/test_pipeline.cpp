#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssd/pipeline.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

// Identity intervention: resume from the untouched hidden state.
double identity_loss(const Predictor& model, std::span<const TokenId> s, const LossConfig& loss) {
  const auto hs = model.hidden_states(s);
  std::vector<double> p;
  for (std::size_t t = 0; t < s.size(); ++t) p.push_back(smooth_entry(model.resume(hs[t], t)[s[t]], loss));
  return smoothed_bpd(p, loss);
}

}  // namespace

TEST_CASE("sequence evaluation") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 30, 1, false);
  for (const auto& s : seqs) {
    const auto ev = evaluate_sequence(*p.model, *p.sae, &p.pool, s, p.loss);
    CHECK(p.loss.in_range(ev.loss_m));
    CHECK(p.loss.in_range(ev.loss_proxy));
    CHECK(p.loss.in_range(*ev.loss_restricted));
    CHECK(loss_gap(identity_loss(*p.model, s, p.loss), ev.loss_m, p.loss) == 0.0);
    double mean = 0;
    for (double v : ev.position_loss_m) mean += v;
    CHECK(mean / 32 == doctest::Approx(ev.loss_m).epsilon(1e-12));
  }
  CHECK_THROWS_AS(evaluate_sequence(*p.model, *p.sae, nullptr, std::vector<TokenId>{}, p.loss), Error);
  CHECK_THROWS_AS(evaluate_sequence(*p.model, *p.sae, nullptr, seqs[0], LossConfig(0.5, 30)), DimensionError);
  const SaeModel wrong(p.model->hidden_dim() + 1, 4 * (p.model->hidden_dim() + 1), 4);
  CHECK_THROWS_AS(evaluate_sequence(*p.model, wrong, nullptr, seqs[0], p.loss), DimensionError);
}

TEST_CASE("exact measurement on the calibrated pool") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 200, 2, false);
  const auto m = measure_exact(*p.model, *p.sae, p.pool, seqs, p.loss);
  CHECK(m.N == 200);
  CHECK(m.pool_gap <= m.eta_sequence.eta() * p.loss.upper() + 1e-9);
  CHECK(m.eta_token.eta() <= m.eta_sequence.eta());

  const auto full = measure_exact(*p.model, *p.sae, ConceptPool::full(p.sae->dict_size()), seqs, p.loss);
  CHECK(full.eta_sequence.eta() == 0.0);
  CHECK(full.risk_restricted == full.risk_proxy);
  CHECK(full.pool_gap == 0.0);
  const auto c = to_components(full, p.loss, 300);
  CHECK(c.risk == full.risk_restricted);
  CHECK(c.eta == 0.0);
}

TEST_CASE("dump paths: exact sidecar and conservative surrogate") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 100, 3, false);
  const auto ssda = test::scratch("pipeline.ssda"), ssdl = test::scratch("pipeline.ssdl");
  write_toy_dump(*p.model, *p.sae, seqs, ssda, {}, &p.pool, ssdl);
  const auto sidecar = read_ssdl(ssdl);
  const std::size_t k = p.sae->sparsity();

  const auto live = measure_exact(*p.model, *p.sae, p.pool, seqs, p.loss);
  const auto exact = measure_ssda(ssda, p.pool, k, &sidecar);
  const auto cons = measure_ssda(ssda, p.pool, k);
  CHECK(exact.mode == CertMode::Exact);
  CHECK(cons.mode == CertMode::Conservative);
  CHECK(exact.eta_sequence.violations >= live.eta_sequence.violations);
  CHECK(exact.risk_restricted == doctest::Approx(live.risk_restricted).epsilon(1e-6));
  CHECK(exact.risk_m == doctest::Approx(live.risk_m).epsilon(1e-6));

  const auto re = assemble(to_components(exact, p.loss, 300), p.loss, 100);
  const auto rc = assemble(to_components(cons, p.loss, 300), p.loss, 100);
  CHECK(rc.total >= re.total);

  // Pool built from the dump itself covers every dumped support.
  const auto dump_pool = calibrate_pool_ssda(ssda, k, 1);
  CHECK(measure_ssda(ssda, dump_pool, k).eta_sequence.eta() == 0.0);

  CHECK_THROWS_AS(measure_ssda(ssda, ConceptPool::full(p.sae->dict_size() + 1), k), DimensionError);
  CHECK_THROWS_AS(measure_ssda(ssda, p.pool, 10000), DimensionError);
  const std::vector<float> short_sidecar(3, 1.0f);
  CHECK_THROWS_AS(measure_ssda(ssda, p.pool, k, &short_sidecar), DimensionError);
}

TEST_CASE("toy pipeline is reproducible and respects splits") {
  const auto& p = test::small_pipeline();
  CHECK(p.train.end <= p.calibration.begin);
  CHECK(p.calibration.end <= p.evaluation.begin);
  CHECK(p.evaluation.end <= p.truth.begin);
  CHECK(p.model_log.final_loss < p.model_log.initial_loss);
  CHECK(p.sae_log.final_mse < p.sae_log.initial_mse);

  const auto splits = toy_splits(p.corpus.size());
  CHECK(splits.get("truth").end == p.corpus.size());
  CHECK_THROWS_AS(splits.get("holdout"), Error);

  const auto again = build_toy_pipeline(test::small_config());
  CHECK(again.model->digest() == p.model->digest());
  CHECK(again.sae->digest() == p.sae->digest());
  CHECK(again.pool == p.pool);
}
