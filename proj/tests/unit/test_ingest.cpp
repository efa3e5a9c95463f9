#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <numeric>
#include <fstream>
#include <iterator>
#include <set>

#include "records.hpp"
#include "ssd/ingest.hpp"
#include "ssd/monitor.hpp"
#include "ssd/pipeline.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void dump(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

std::string error_of(const std::string& path) {
  try {
    read_ssda(path);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

constexpr std::size_t kHeaderBytes = 48;

}  // namespace

TEST_CASE("sampling: shapes, determinism and disjointness") {
  std::vector<TokenId> corpus(1000);
  std::iota(corpus.begin(), corpus.end(), TokenId{0});
  const auto a = sample_sequences(corpus, 32, 20, 1, false);
  CHECK(a == sample_sequences(corpus, 32, 20, 1, false));
  for (const auto& s : a) {
    REQUIRE(s.size() == 32);
    for (std::size_t t = 1; t < 32; ++t) CHECK(s[t] == s[t - 1] + 1);
  }
  const auto b = sample_sequences(corpus, 32, 29, 2, true);
  std::set<TokenId> seen;
  for (const auto& s : b)
    for (auto t : s) CHECK(seen.insert(t).second);

  const std::vector<TokenId> exact(32, 5);
  for (const auto& s : sample_sequences(exact, 32, 10, 3, false)) CHECK(s == exact);
  CHECK_THROWS_AS(sample_sequences(exact, 33, 1, 3, false), Error);
  CHECK_THROWS_AS(sample_sequences(corpus, 32, 32, 3, true), Error);
}

TEST_CASE("sampling: start offsets are uniform (chi-square, 99 dof)") {
  // corpus 131, T 32: offsets 0..99; expected 1000 per bin over 1e5 draws.
  const auto offs = sample_offsets(131, 32, 100000, 17, false);
  std::vector<double> counts(100, 0.0);
  for (auto o : offs) {
    REQUIRE(o < 100);
    counts[o] += 1;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  INFO("chi2 = ", chi2);
  CHECK(chi2 < 134.6416);  // upper 1% point of chi-square with 99 dof
}

TEST_CASE("splits are disjoint and cover the corpus") {
  const double w[] = {0.5, 0.1, 0.15, 0.25};
  const auto r = split_ranges(400000, w);
  REQUIRE(r.size() == 4);
  CHECK(r[0].begin == 0);
  for (std::size_t i = 1; i < 4; ++i) CHECK(r[i].begin == r[i - 1].end);
  CHECK(r[3].end == 400000);
  CHECK(r[0].size() == 200000);
}

TEST_CASE("SSDA round trip of 1000 random records") {
  Rng rng(1);
  const auto h = test::small_header(1000);
  std::vector<SsdaRecord> recs;
  for (int i = 0; i < 1000; ++i) recs.push_back(test::random_record(h, rng));
  const auto path = test::scratch("roundtrip.ssda");
  write_ssda(path, h, recs);
  SsdaHeader back;
  const auto got = read_ssda(path, &back);
  CHECK(back == h);
  CHECK(got == recs);
}

TEST_CASE("SSDA corruption is located") {
  Rng rng(2);
  const auto h = test::small_header(5);
  std::vector<SsdaRecord> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(test::random_record(h, rng));
  const auto path = test::scratch("corrupt.ssda");
  write_ssda(path, h, recs);
  const std::string good = slurp(path);
  const std::size_t record_bytes = h.T * 4 + h.T * h.J * 8 + h.T * 8 + 8;
  REQUIRE(good.size() == kHeaderBytes + 5 * record_bytes + 8);

  SUBCASE("truncated mid-record names the record") {
    dump(path, good.substr(0, kHeaderBytes + 2 * record_bytes + record_bytes / 2));
    const auto msg = error_of(path);
    CHECK(msg.find("record 2") != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    dump(path, b);
    CHECK(error_of(path).find("magic") != std::string::npos);
  }
  SUBCASE("bad version") {
    auto b = good;
    b[4] = 9;
    dump(path, b);
    CHECK(error_of(path).find("version") != std::string::npos);
  }
  SUBCASE("flipped loss byte breaks the digest") {
    auto b = good;
    b[kHeaderBytes + 3 * record_bytes - 5] ^= 0x01;
    dump(path, b);
    CHECK_FALSE(error_of(path).empty());
  }
  SUBCASE("non-monotone entries") {
    auto b = good;
    // swap the first two entries of position 0 in record 1
    const std::size_t at = kHeaderBytes + record_bytes + h.T * 4;
    std::string first = b.substr(at, 8), second = b.substr(at + 8, 8);
    b.replace(at, 8, second);
    b.replace(at + 8, 8, first);
    dump(path, b);
    const auto msg = error_of(path);
    const bool positive_pair = recs[1].entries[0].value != recs[1].entries[1].value;
    if (positive_pair) {
      CHECK(msg.find("non-monotone") != std::string::npos);
      CHECK(msg.find("record 1") != std::string::npos);
    }
  }
  SUBCASE("trailing garbage") {
    dump(path, good + "x");
    CHECK_FALSE(error_of(path).empty());
  }
}

TEST_CASE("SSDL round trip and corruption") {
  const std::vector<float> l = {1.5f, 2.25f, 4.0f};
  const auto path = test::scratch("losses.ssdl");
  write_ssdl(path, l);
  CHECK(read_ssdl(path) == l);
  dump(path, slurp(path).substr(0, 20));
  CHECK_THROWS_AS(read_ssdl(path), FormatError);
}

TEST_CASE("writer rejects shape mismatches") {
  Rng rng(3);
  const auto h = test::small_header(1);
  auto rec = test::random_record(h, rng);
  rec.tokens.pop_back();
  SsdaWriter w(test::scratch("bad_shape.ssda"), h);
  CHECK_THROWS_AS(w.write(rec), Error);
  CHECK_THROWS_AS(w.finish(), Error);
}

TEST_CASE("truncation check") {
  const std::vector<SsdaEntry> e = {{3, 2.0f}, {7, 1.0f}, {1, 0.5f}};
  CHECK_FALSE(truncation_check(e, ConceptPool::full(10), 3));
  CHECK(truncation_check(e, ConceptPool(10, {3, 1}), 3));
  const std::vector<SsdaEntry> tail_zero = {{3, 2.0f}, {7, 1.0f}, {1, 0.0f}};
  CHECK_FALSE(truncation_check(tail_zero, ConceptPool(10, {3}), 3));
  CHECK(dumped_support(e, 2) == std::vector<FeatureId>{3, 7});
  CHECK(dumped_support(tail_zero, 3) == std::vector<FeatureId>{3, 7});
}

TEST_CASE("dump replay reproduces live TopK supports") {
  const auto& p = test::small_pipeline();
  const auto seqs = sample_sequences(p.region(p.evaluation), 32, 40, 4, false);
  const std::size_t J = std::min<std::size_t>(64, p.sae->dict_size());
  DumpOptions opt;
  opt.J = static_cast<std::uint32_t>(J);
  const auto path = test::scratch("replay.ssda");
  write_toy_dump(*p.model, *p.sae, seqs, path, opt);
  const auto recs = read_ssda(path);
  REQUIRE(recs.size() == seqs.size());
  std::size_t compared = 0;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto hs = p.model->hidden_states(seqs[i]);
    for (std::size_t t = 0; t < hs.size(); ++t) {
      const auto a = p.sae->encode(hs[t]);
      for (std::size_t k : {std::size_t{1}, p.sae->sparsity(), J}) {
        if (active_count(a) < k) continue;
        auto live = topk(a, k).indices;
        auto replay = dumped_support(recs[i].position(t, J), k);
        std::sort(replay.begin(), replay.end());
        CHECK(live == replay);
        ++compared;
      }
    }
  }
  CHECK(compared > 0);
}
