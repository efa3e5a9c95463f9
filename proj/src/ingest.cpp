#include "ssd/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ssd {

namespace {
constexpr std::uint32_t kSsdaVersion = 1;
constexpr std::uint32_t kSsdlVersion = 1;
}  // namespace

std::vector<std::size_t> sample_offsets(std::size_t corpus_size, std::size_t T, std::size_t N, std::uint64_t seed,
                                        bool non_overlap) {
  if (T == 0) throw Error("sequence length T must be positive");
  if (corpus_size < T)
    throw Error("corpus too short: " + std::to_string(corpus_size) + " tokens for sequences of length " +
                std::to_string(T));
  Rng rng(seed);
  std::vector<std::size_t> out;
  out.reserve(N);
  if (!non_overlap) {
    const std::size_t starts = corpus_size - T + 1;
    for (std::size_t i = 0; i < N; ++i) out.push_back(rng.below(starts));
    return out;
  }
  if (corpus_size / T < N)
    throw Error("corpus too short: " + std::to_string(corpus_size) + " tokens cannot hold " + std::to_string(N) +
                " disjoint sequences of length " + std::to_string(T));
  const std::size_t shift = rng.below(corpus_size % T + 1);
  const std::size_t tiles = (corpus_size - shift) / T;
  // partial Fisher-Yates over tile ids
  std::vector<std::size_t> ids(tiles);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t j = i + rng.below(tiles - i);
    std::swap(ids[i], ids[j]);
    out.push_back(shift + ids[i] * T);
  }
  return out;
}

std::vector<std::vector<TokenId>> sample_sequences(std::span<const TokenId> corpus, std::size_t T, std::size_t N,
                                                   std::uint64_t seed, bool non_overlap) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(N);
  for (auto off : sample_offsets(corpus.size(), T, N, seed, non_overlap))
    out.emplace_back(corpus.begin() + static_cast<std::ptrdiff_t>(off), corpus.begin() + static_cast<std::ptrdiff_t>(off + T));
  return out;
}

std::vector<TokenRange> split_ranges(std::size_t length, std::span<const double> weights) {
  if (weights.empty()) throw Error("split_ranges needs at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("split weights must be nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw Error("split weights sum to zero");
  std::vector<TokenRange> out;
  double acc = 0.0;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    const std::size_t end = i + 1 == weights.size()
                                ? length
                                : static_cast<std::size_t>(std::floor(static_cast<double>(length) * acc / total));
    out.push_back({begin, std::max(begin, end)});
    begin = out.back().end;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<SsdaEntry> top_entries(std::span<const float> a, std::size_t J) {
  if (J == 0 || J > a.size()) throw Error("dump width J must lie in [1, m]");
  std::vector<FeatureId> idx(a.size());
  std::iota(idx.begin(), idx.end(), FeatureId{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(J), idx.end(),
                    [&](FeatureId x, FeatureId y) { return a[x] != a[y] ? a[x] > a[y] : x < y; });
  std::vector<SsdaEntry> out(J);
  for (std::size_t i = 0; i < J; ++i) out[i] = {idx[i], a[idx[i]]};
  return out;
}

SsdaWriter::SsdaWriter(const std::string& path, const SsdaHeader& header) : header_(header), out_(path) {
  if (header.J == 0 || header.J > header.m) throw Error("SSDA header: J must lie in [1, m]");
  if (header.T == 0 || header.vocab == 0) throw Error("SSDA header: T and V must be positive");
  out_.magic("SSDA");
  out_.u32(kSsdaVersion);
  out_.u32(header.d);
  out_.u32(header.m);
  out_.u32(header.vocab);
  out_.u32(header.T);
  out_.u32(header.J);
  out_.u64(header.n_records);
  out_.u32(header.flags);
  out_.f64(header.alpha);
}

void SsdaWriter::write(const SsdaRecord& rec) {
  const std::size_t T = header_.T, J = header_.J;
  if (rec.tokens.size() != T || rec.entries.size() != T * J || rec.position_loss_m.size() != T ||
      rec.position_loss_proxy.size() != T)
    throw Error("SSDA record " + std::to_string(written_) + " does not match the header shape");
  if (written_ >= header_.n_records) throw Error("SSDA writer: more records than declared in the header");
  for (auto t : rec.tokens) out_.u32(t);
  for (const auto& e : rec.entries) {
    out_.u32(e.index);
    out_.f32(e.value);
  }
  out_.f32_array(rec.position_loss_m);
  out_.f32_array(rec.position_loss_proxy);
  out_.f32(rec.loss_m);
  out_.f32(rec.loss_proxy);
  ++written_;
}

void SsdaWriter::finish() {
  if (written_ != header_.n_records)
    throw Error("SSDA writer: header declares " + std::to_string(header_.n_records) + " records, " +
                std::to_string(written_) + " written");
  out_.finish();
}

SsdaReader::SsdaReader(const std::string& path) : in_(path) {
  in_.set_context("header");
  in_.expect_magic("SSDA");
  header_.version = in_.u32();
  if (header_.version != kSsdaVersion) in_.fail("unsupported SSDA version " + std::to_string(header_.version));
  header_.d = in_.u32();
  header_.m = in_.u32();
  header_.vocab = in_.u32();
  header_.T = in_.u32();
  header_.J = in_.u32();
  header_.n_records = in_.u64();
  header_.flags = in_.u32();
  header_.alpha = in_.f64();
  if (header_.m == 0 || header_.J == 0 || header_.J > header_.m) in_.fail("J must lie in [1, m]");
  if (header_.T == 0 || header_.vocab == 0) in_.fail("T and V must be positive");
  if (!(header_.alpha > 0.0 && header_.alpha < 1.0)) in_.fail("alpha outside (0, 1)");
  loss_.emplace(header_.alpha, header_.vocab);
  stamp_.assign(header_.m, 0);
}

bool SsdaReader::next(SsdaRecord& rec) {
  if (done_) return false;
  if (read_ == header_.n_records) {
    in_.set_context("after record " + std::to_string(read_ == 0 ? 0 : read_ - 1));
    in_.verify_digest();
    done_ = true;
    return false;
  }
  const std::size_t T = header_.T, J = header_.J;
  in_.set_context("record " + std::to_string(read_));
  rec.tokens.resize(T);
  for (auto& t : rec.tokens) {
    t = in_.u32();
    if (t >= header_.vocab) in_.fail("token id " + std::to_string(t) + " >= V");
  }
  rec.entries.resize(T * J);
  for (std::size_t t = 0; t < T; ++t) {
    ++stamp_counter_;
    for (std::size_t j = 0; j < J; ++j) {
      auto& e = rec.entries[t * J + j];
      e.index = in_.u32();
      e.value = in_.f32();
      if (e.index >= header_.m) in_.fail("feature index " + std::to_string(e.index) + " >= m");
      if (!std::isfinite(e.value)) in_.fail("non-finite activation value");
      if (j > 0) {
        const auto& p = rec.entries[t * J + j - 1];
        if (!(p.value > e.value || (p.value == e.value && p.index < e.index)))
          in_.fail("non-monotone entry order at position " + std::to_string(t));
      }
      if (stamp_[e.index] == stamp_counter_) in_.fail("duplicate feature index at position " + std::to_string(t));
      stamp_[e.index] = stamp_counter_;
    }
  }
  rec.position_loss_m.resize(T);
  rec.position_loss_proxy.resize(T);
  in_.f32_array(rec.position_loss_m);
  in_.f32_array(rec.position_loss_proxy);
  rec.loss_m = in_.f32();
  rec.loss_proxy = in_.f32();

  const LossConfig& lc = *loss_;
  const auto check_mean = [&](const std::vector<float>& pos, float seq, const char* which) {
    double s = 0.0;
    for (float v : pos) {
      if (!lc.in_range(v, 1e-5)) in_.fail(std::string("per-position loss of ") + which + " outside [B - Delta, B]");
      s += v;
    }
    if (std::fabs(s / static_cast<double>(T) - seq) > 1e-5)
      in_.fail(std::string("sequence loss of ") + which + " is not the mean of its position losses");
  };
  check_mean(rec.position_loss_m, rec.loss_m, "M");
  check_mean(rec.position_loss_proxy, rec.loss_proxy, "S o M");
  ++read_;
  return true;
}

void write_ssda(const std::string& path, const SsdaHeader& header, std::span<const SsdaRecord> records) {
  SsdaHeader h = header;
  h.n_records = records.size();
  SsdaWriter w(path, h);
  for (const auto& r : records) w.write(r);
  w.finish();
}

std::vector<SsdaRecord> read_ssda(const std::string& path, SsdaHeader* header) {
  SsdaReader r(path);
  std::vector<SsdaRecord> out;
  SsdaRecord rec;
  while (r.next(rec)) out.push_back(rec);
  if (header) *header = r.header();
  return out;
}

// ---------------------------------------------------------------------------

void write_ssdl(const std::string& path, std::span<const float> losses) {
  BinaryWriter out(path);
  out.magic("SSDL");
  out.u32(kSsdlVersion);
  out.u64(losses.size());
  out.f32_array(losses);
  out.finish();
}

std::vector<float> read_ssdl(const std::string& path) {
  BinaryReader in(path);
  in.expect_magic("SSDL");
  if (const auto v = in.u32(); v != kSsdlVersion) in.fail("unsupported SSDL version " + std::to_string(v));
  const std::uint64_t n = in.u64();
  if (n > (1ULL << 32)) in.fail("implausible SSDL record count");
  std::vector<float> out(n);
  in.f32_array(out);
  in.verify_digest();
  return out;
}

// ---------------------------------------------------------------------------

std::vector<FeatureId> dumped_support(std::span<const SsdaEntry> entries, std::size_t k) {
  std::vector<FeatureId> out;
  for (const auto& e : entries) {
    if (out.size() == k || !(e.value > 0.0f)) break;
    out.push_back(e.index);
  }
  return out;
}

bool truncation_check(std::span<const SsdaEntry> entries, const ConceptPool& pool, std::size_t k) {
  if (entries.empty() || !(entries.back().value > 0.0f)) return false;
  std::size_t in_pool = 0;
  for (const auto& e : entries) {
    if (e.value > 0.0f && pool.contains(e.index)) ++in_pool;
  }
  return in_pool < k;
}

}  // namespace ssd
