#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <iterator>

#include "ssd/markov.hpp"
#include "ssd/oracle.hpp"
#include "ssd/riskloss.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

double held_out_bpd(const ToyCharLm& model, std::span<const TokenId> text, const LossConfig& loss) {
  const auto seqs = sample_sequences(text, model.context_length(), 200, 99, false);
  double total = 0.0;
  for (const auto& s : seqs) {
    std::vector<double> p;
    const auto dist = model.distributions(s);
    for (std::size_t t = 0; t < s.size(); ++t) p.push_back(smooth_entry(dist[t][s[t]], loss));
    total += smoothed_bpd(p, loss);
  }
  return total / static_cast<double>(seqs.size());
}

bool same_weights(const ToyCharLm::Weights& a, const ToyCharLm::Weights& b) {
  return a.vocab == b.vocab && a.window == b.window && a.embed_dim == b.embed_dim && a.hidden_dim == b.hidden_dim &&
         a.embedding == b.embedding && a.w1 == b.w1 && a.b1 == b.b1 && a.w2 == b.w2 && a.b2 == b.b2;
}

}  // namespace

TEST_CASE("vocabulary") {
  const auto v = Vocabulary::from_text("hello world");
  CHECK(v.size() == 8);
  const auto ids = v.encode("hello");
  CHECK(v.decode(ids) == "hello");
  CHECK_THROWS_AS(v.encode("xyz"), Error);
  CHECK(Vocabulary(lowercase_alphabet()).size() == 27);
}

TEST_CASE("trained toy model beats the uniform baseline on held-out Markov text") {
  const std::string alphabet = lowercase_alphabet();
  const MarkovSource src(alphabet.size(), 3, 7);
  const auto corpus = src.generate(100000, 8);
  const auto held = src.generate(20000, 9);
  ToyConfig cfg;
  cfg.steps = 2000;
  ToyTrainLog log;
  const auto model = train_toy(corpus, Vocabulary(alphabet), cfg, &log);
  const LossConfig loss(0.5, 27);
  CHECK(log.final_loss < log.initial_loss);
  CHECK(held_out_bpd(model, held, loss) < std::log2(27.0));
}

TEST_CASE("degenerate corpus: single repeated character") {
  const Vocabulary vocab("ab");
  const std::vector<TokenId> corpus(5000, 0);
  ToyConfig cfg;
  cfg.steps = 300;
  cfg.hidden_dim = 16;
  const auto model = train_toy(corpus, vocab, cfg);
  const std::vector<TokenId> probe(32, 0);
  const auto dist = model.distributions(probe);
  for (std::size_t t = 1; t < dist.size(); ++t) CHECK(dist[t][0] > 0.9);
}

TEST_CASE("zero training steps keep the initialization") {
  const std::string alphabet = lowercase_alphabet();
  const auto corpus = MarkovSource(27, 3, 7).generate(20000, 8);
  ToyConfig cfg;
  cfg.steps = 0;
  const auto model = train_toy(corpus, Vocabulary(alphabet), cfg);
  CHECK(same_weights(model.weights(), ToyCharLm::initial_weights(27, cfg)));
  const LossConfig loss(0.5, 27);
  CHECK(std::fabs(held_out_bpd(model, corpus, loss) - std::log2(27.0)) < 1.0);
}

TEST_CASE("corpus shorter than ten sequences is rejected") {
  ToyConfig cfg;
  const std::vector<TokenId> tiny(10 * cfg.context_length - 1, 0);
  CHECK_THROWS_AS(train_toy(tiny, Vocabulary("ab"), cfg), Error);
}

TEST_CASE("hidden states: causality and determinism") {
  const auto& p = test::small_pipeline();
  const auto& m = *p.model;
  Rng rng(1);
  std::vector<TokenId> a(32), b;
  for (auto& t : a) t = static_cast<TokenId>(rng.below(27));
  b = a;
  for (std::size_t t = 20; t < 32; ++t) b[t] = static_cast<TokenId>(rng.below(27));
  const auto ha = m.hidden_states(a), hb = m.hidden_states(b);
  CHECK(ha.size() == 32);
  CHECK(ha[0].size() == m.hidden_dim());
  for (std::size_t t = 0; t <= 20; ++t) CHECK(ha[t] == hb[t]);
  CHECK(m.hidden_states(a) == ha);

  std::vector<TokenId> c(32);
  for (auto& t : c) t = static_cast<TokenId>(rng.below(27));
  CHECK(m.hidden_states(c)[31] != ha[31]);

  std::vector<TokenId> bad(a);
  bad[3] = 27;
  CHECK_THROWS_AS(m.hidden_states(bad), Error);
}

TEST_CASE("resume") {
  const auto& p = test::small_pipeline();
  const auto& m = *p.model;
  const auto seq = sample_sequences(p.region(p.evaluation), 32, 1, 3, false).front();
  const auto hs = m.hidden_states(seq);
  const auto native = m.distributions(seq);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const auto r = m.resume(hs[t], t);
    CHECK(r == native[t]);
    double s = 0;
    for (double x : r) {
      CHECK(x >= 0.0);
      s += x;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  const Vec zero(m.hidden_dim(), 0.0f);
  CHECK(m.resume(zero, 0) == m.resume(zero, 17));
  Vec bad(zero);
  bad[0] = std::nanf("");
  CHECK_THROWS_AS(m.resume(bad, 0), NumericError);
  CHECK_THROWS_AS(m.resume(Vec(m.hidden_dim() + 1, 0.0f), 0), DimensionError);
}

TEST_CASE("SAE reconstruction stays close in total variation") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 50, 5, false);
  std::size_t close = 0, total = 0;
  for (const auto& s : seqs) {
    const auto hs = p.model->hidden_states(s);
    for (std::size_t t = 0; t < s.size(); ++t) {
      const auto a = p.model->resume(hs[t], t);
      const auto b = p.model->resume(p.sae->reconstruct(hs[t]), t);
      double tv = 0;
      for (std::size_t i = 0; i < a.size(); ++i) tv += std::fabs(a[i] - b[i]);
      close += tv / 2 <= 0.5;
      ++total;
    }
  }
  CHECK(static_cast<double>(close) >= 0.9 * static_cast<double>(total));
}

TEST_CASE("serialization round trip, digest and corruption") {
  const auto& p = test::small_pipeline();
  const auto path = test::scratch("oracle_roundtrip.ssdo");
  p.model->save(path);
  const auto back = ToyCharLm::load(path);
  CHECK(same_weights(back.weights(), p.model->weights()));
  CHECK(back.digest() == p.model->digest());
  CHECK(back.vocabulary().symbols() == p.model->vocabulary().symbols());
  CHECK(back.context_length() == p.model->context_length());

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& b) {
    std::ofstream out(path, std::ios::binary);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(ToyCharLm::load(path), FormatError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  write(flipped);
  CHECK_THROWS_AS(ToyCharLm::load(path), FormatError);
}
