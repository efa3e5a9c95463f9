#pragma once

// Data plumbing: i.i.d. sequence sampling, disjoint corpus splits, and the
// SSDA activation-dump format exchanged with external exporters.
//
// SSDA layout (little-endian):
//   "SSDA" u32 version
//   u32 d, u32 m, u32 V, u32 T, u32 J, u64 N, u32 flags, f64 alpha
//   N records of
//     T   x u32           token ids
//     T*J x (u32, f32)    top-J (index, value) per position, value desc then index asc
//     T   x f32           per-position loss contribution of M
//     T   x f32           per-position loss contribution of S o M
//     f32, f32            per-sequence losses of M and S o M
//   u64 FNV-1a digest of all preceding bytes
//
// SSDL sidecar (per-sequence losses of the pool-restricted predictor):
//   "SSDL" u32 version u64 N, N x f32, u64 digest

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssd/binio.hpp"
#include "ssd/common.hpp"
#include "ssd/pool.hpp"
#include "ssd/riskloss.hpp"

namespace ssd {

// ----------------------------------------------------------------- sampling

/// Start offsets of N blocks of T tokens from a corpus of `corpus_size`.
/// Overlapping mode draws offsets uniformly with replacement; non-overlapping
/// mode picks a random shift of the T-tiling and N distinct tiles from it.
std::vector<std::size_t> sample_offsets(std::size_t corpus_size, std::size_t T, std::size_t N, std::uint64_t seed,
                                        bool non_overlap);

std::vector<std::vector<TokenId>> sample_sequences(std::span<const TokenId> corpus, std::size_t T, std::size_t N,
                                                   std::uint64_t seed, bool non_overlap);

struct TokenRange {
  std::size_t begin = 0, end = 0;
  std::size_t size() const { return end - begin; }
};

/// Partitions [0, length) into consecutive disjoint ranges with the given
/// relative weights.
std::vector<TokenRange> split_ranges(std::size_t length, std::span<const double> weights);

// --------------------------------------------------------------------- SSDA

struct SsdaHeader {
  std::uint32_t version = 1;
  std::uint32_t d = 0;
  std::uint32_t m = 0;
  std::uint32_t vocab = 0;
  std::uint32_t T = 0;
  std::uint32_t J = 0;
  std::uint64_t n_records = 0;
  std::uint32_t flags = 0;  // low byte: SAE conventions
  double alpha = 0.5;

  bool operator==(const SsdaHeader&) const = default;
};

struct SsdaEntry {
  FeatureId index = 0;
  float value = 0.0f;
  bool operator==(const SsdaEntry&) const = default;
};

struct SsdaRecord {
  std::vector<TokenId> tokens;           // T
  std::vector<SsdaEntry> entries;        // T * J
  std::vector<float> position_loss_m;    // T
  std::vector<float> position_loss_proxy;  // T
  float loss_m = 0.0f;
  float loss_proxy = 0.0f;

  std::span<const SsdaEntry> position(std::size_t t, std::size_t J) const { return {&entries[t * J], J}; }
  bool operator==(const SsdaRecord&) const = default;
};

/// Top-J entries of a dense pre-activation in dump order.
std::vector<SsdaEntry> top_entries(std::span<const float> a, std::size_t J);

class SsdaWriter {
 public:
  SsdaWriter(const std::string& path, const SsdaHeader& header);
  void write(const SsdaRecord& rec);
  /// Checks the record count against the header and appends the digest.
  void finish();

 private:
  SsdaHeader header_;
  BinaryWriter out_;
  std::uint64_t written_ = 0;
};

/// Streaming reader; validates the header, every record and the digest.
class SsdaReader {
 public:
  explicit SsdaReader(const std::string& path);

  const SsdaHeader& header() const { return header_; }
  const LossConfig& loss_config() const { return *loss_; }

  /// Reads the next record; returns false after the last one (the digest is
  /// verified at that point).
  bool next(SsdaRecord& rec);
  std::uint64_t records_read() const { return read_; }

 private:
  BinaryReader in_;
  SsdaHeader header_;
  std::optional<LossConfig> loss_;
  std::uint64_t read_ = 0;
  bool done_ = false;
  std::vector<std::uint64_t> stamp_;
  std::uint64_t stamp_counter_ = 0;
};

void write_ssda(const std::string& path, const SsdaHeader& header, std::span<const SsdaRecord> records);
std::vector<SsdaRecord> read_ssda(const std::string& path, SsdaHeader* header = nullptr);

// --------------------------------------------------------------------- SSDL

void write_ssdl(const std::string& path, std::span<const float> losses);
std::vector<float> read_ssdl(const std::string& path);

// --------------------------------------------------------------- truncation

/// TopK support at one dumped position: the first min(k, #positive) entries.
std::vector<FeatureId> dumped_support(std::span<const SsdaEntry> entries, std::size_t k);

/// True when masking by the pool leaves fewer than k stored in-pool positive
/// entries while the J-th stored value is positive, i.e. features beyond the
/// dump could have entered the masked TopK.
bool truncation_check(std::span<const SsdaEntry> entries, const ConceptPool& pool, std::size_t k);

}  // namespace ssd
