#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "planted.hpp"
#include "ssd/sae.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

SaeModel random_sae(std::size_t d, std::size_t m, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  SaeModel s(d, m, k);
  for (auto& v : s.encoder_weights()) v = static_cast<float>(rng.normal() * 0.3);
  for (auto& v : s.encoder_bias()) v = static_cast<float>(rng.normal() * 0.1);
  for (auto& v : s.atoms()) v = static_cast<float>(rng.normal());
  for (auto& v : s.decoder_bias()) v = static_cast<float>(rng.normal() * 0.1);
  s.normalize_atoms();
  return s;
}

Vec random_vec(std::size_t d, Rng& rng) {
  Vec h(d);
  for (auto& v : h) v = static_cast<float>(rng.normal());
  return h;
}

}  // namespace

TEST_CASE("topk magnitude order and tie-breaking") {
  const std::vector<float> a = {3, -5, 1, 0};
  const auto c = topk(a, 2);
  CHECK(c.indices == std::vector<FeatureId>{0, 1});
  CHECK(c.values == std::vector<float>{3, -5});

  const std::vector<float> tie = {2, 2, 1};
  CHECK(topk(tie, 1).indices == std::vector<FeatureId>{0});

  const std::vector<float> sparse = {0, 4, 0, -1, 2};
  const auto all = topk(sparse, 5);
  CHECK(all.indices == std::vector<FeatureId>{1, 3, 4});
  CHECK(all.nnz() == 3);
}

TEST_CASE("topk is idempotent and a later duplicate never displaces a tie") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> a(40);
    for (auto& v : a) v = static_cast<float>(std::round(rng.normal() * 3));  // frequent ties
    const std::size_t k = 1 + rng.below(40);
    const auto c = topk(a, k);
    CHECK(topk(c.dense(), k) == c);
    CHECK(std::is_sorted(c.indices.begin(), c.indices.end()));
    for (float v : c.values) CHECK(v != 0.0f);

    if (c.nnz() == k) {
      float weakest = c.values.front();
      for (float v : c.values)
        if (std::fabs(v) < std::fabs(weakest)) weakest = v;
      auto extended = a;
      extended.push_back(weakest);
      CHECK(topk(extended, k).indices == c.indices);
    }
  }
}

TEST_CASE("encode") {
  SaeModel s(4, 8, 2);
  for (auto& v : s.encoder_weights()) v = 0.5f;
  const Vec zero(4, 0.0f);
  for (float v : s.encode(zero)) CHECK(v == 0.0f);

  auto r = random_sae(6, 12, 3, 1);
  r.encoder_bias().assign(12, 0.0f);
  r.decoder_bias().assign(6, 0.0f);
  Rng rng(2);
  const Vec h = random_vec(6, rng);
  Vec h2(h);
  for (auto& v : h2) v *= 2;
  const auto a = r.encode(h), b = r.encode(h2);
  for (std::size_t j = 0; j < 12; ++j) {
    CHECK(a[j] >= 0.0f);
    CHECK(b[j] == doctest::Approx(2 * a[j]).epsilon(1e-5));
  }
  CHECK_THROWS_AS(r.encode(Vec(5, 0.0f)), DimensionError);
  Vec bad(6, 0.0f);
  bad[0] = std::nanf("");
  CHECK_THROWS_AS(r.encode(bad), NumericError);
}

TEST_CASE("decode against a dense reference product") {
  const auto s = random_sae(16, 64, 8, 3);
  SparseCode empty;
  empty.dim = 64;
  CHECK(s.decode(empty) == s.decoder_bias());

  auto nb = s;
  nb.decoder_bias().assign(16, 0.0f);
  SparseCode unit{{5}, {1.0f}, 64};
  const auto col = nb.decode(unit);
  double n = 0;
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(col[i] == s.atom(5)[i]);
    n += col[i] * col[i];
  }
  CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> dense(64, 0.0f);
    for (int i = 0; i < 8; ++i) dense[rng.below(64)] = static_cast<float>(rng.normal());
    const auto c = topk(dense, 64);
    const auto fast = s.decode(c);
    for (std::size_t i = 0; i < 16; ++i) {
      double ref = s.decoder_bias()[i];
      for (std::size_t j = 0; j < 64; ++j) ref += static_cast<double>(s.atoms()[j * 16 + i]) * dense[j];
      CHECK(fast[i] == doctest::Approx(ref).epsilon(1e-5).scale(1.0));
    }
  }
  SparseCode out_of_range{{64}, {1.0f}, 65};
  CHECK_THROWS_AS(s.decode(out_of_range), Error);
}

TEST_CASE("shape invariants") {
  CHECK_THROWS_AS(SaeModel(8, 4, 2), DimensionError);
  CHECK_THROWS_AS(SaeModel(4, 8, 0), DimensionError);
  CHECK_THROWS_AS(SaeModel(4, 8, 9), DimensionError);
  CHECK(random_sae(8, 32, 4, 5).max_atom_norm_error() <= 1e-6);
}

TEST_CASE("analytic gradients match central differences on a fixed support") {
  auto s = random_sae(8, 24, 4, 6);
  Rng rng(8);
  const Vec h = random_vec(8, rng);
  auto support = topk_order(s.encode(h), 4);
  std::sort(support.begin(), support.end());
  const auto g = reconstruction_gradients(s, h, support);

  // Double-precision probe: perturb a float parameter by `eps` and difference
  // the loss; parameters stay float, so use a step large enough to be exact.
  const double eps = 1e-2;
  auto check = [&](std::vector<float>& param, const std::vector<double>& grad, const char* name) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const float keep = param[i];
      param[i] = keep + static_cast<float>(eps);
      const double up = reconstruction_loss_fixed(s, h, support);
      param[i] = keep - static_cast<float>(eps);
      const double down = reconstruction_loss_fixed(s, h, support);
      param[i] = keep;
      const double fd = (up - down) / (2 * eps);
      const double err = std::fabs(fd - grad[i]) / std::max(1.0, std::fabs(grad[i]));
      worst = std::max(worst, err);
    }
    INFO(name);
    CHECK(worst <= 1e-3);
  };
  check(s.encoder_weights(), g.enc_w, "encoder weights");
  check(s.encoder_bias(), g.enc_b, "encoder bias");
  check(s.atoms(), g.atoms, "atoms");
  check(s.decoder_bias(), g.dec_b, "decoder bias");
}

TEST_CASE("training") {
  Rng rng(11);
  const auto p = test::planted_dictionary(16, 48, rng);
  const auto data = test::planted_samples(p, 3, 6000, rng);

  SUBCASE("zero steps equals the initialization bit-exactly") {
    SaeTrainConfig cfg;
    cfg.steps = 0;
    const auto trained = train_sae(data, 16, 48, 3, cfg);
    std::vector<float> mean(16, 0.0f);
    std::vector<double> acc(16, 0.0);
    for (const auto& h : data)
      for (std::size_t i = 0; i < 16; ++i) acc[i] += h[i];
    for (std::size_t i = 0; i < 16; ++i) mean[i] = static_cast<float>(acc[i] / data.size());
    CHECK(trained == initialize_sae(16, 48, 3, cfg.seed, mean));
  }
  SUBCASE("training lowers the error and keeps unit atoms") {
    SaeTrainConfig cfg;
    cfg.steps = 1500;
    SaeTrainLog log;
    const auto trained = train_sae(data, 16, 48, 3, cfg, &log);
    CHECK(log.final_mse < log.initial_mse);
    CHECK(trained.max_atom_norm_error() <= 1e-6);
    CHECK(explained_variance(trained, data) > 0.5);
  }
  SUBCASE("full budget nearly reconstructs planted data") {
    SaeTrainConfig cfg;
    cfg.steps = 2000;
    const auto trained = train_sae(data, 16, 48, 48, cfg);
    CHECK(explained_variance(trained, data) >= 0.99);
  }
  SUBCASE("doubling k does not raise the error") {
    SaeTrainConfig cfg;
    cfg.steps = 1500;
    const auto trained = train_sae(data, 16, 48, 3, cfg);
    const auto held = test::planted_samples(p, 3, 1000, rng);
    CHECK(mean_squared_error(trained, held, 6) <= mean_squared_error(trained, held, 3) + 1e-6);
  }
  SUBCASE("short streams are flagged") {
    SaeTrainConfig cfg;
    cfg.steps = 5;
    SaeTrainLog log;
    train_sae(std::span<const Vec>(data).first(100), 16, 48, 3, cfg, &log);
    CHECK(log.short_stream_warning);
  }
  SUBCASE("wrong input width") {
    SaeTrainConfig cfg;
    CHECK_THROWS_AS(train_sae(data, 15, 48, 3, cfg), DimensionError);
  }
}

TEST_CASE("trained toy SAE keeps at least k active features in distribution") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 20, 1, false);
  std::size_t below = 0, total = 0;
  for (const auto& s : seqs)
    for (const auto& h : p.model->hidden_states(s)) {
      const auto a = p.sae->encode(h);
      below += static_cast<std::size_t>(std::count_if(a.begin(), a.end(), [](float v) { return v > 0; })) <
               p.sae->sparsity();
      ++total;
    }
  CHECK(below == 0);
  CHECK(total == 640);
}

TEST_CASE("serialization round trip and corruption") {
  const auto s = random_sae(8, 32, 4, 12);
  const auto path = test::scratch("sae_roundtrip.ssds");
  s.save(path);
  const auto back = SaeModel::load(path);
  CHECK(back == s);
  CHECK(back.digest() == s.digest());

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary);
    out << b;
  };
  write(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(SaeModel::load(path), FormatError);
  auto flipped = bytes;
  flipped[40] ^= 0x10;
  write(flipped);
  CHECK_THROWS_AS(SaeModel::load(path), FormatError);
  write("SSDX" + bytes.substr(4));
  CHECK_THROWS_AS(SaeModel::load(path), FormatError);
}
