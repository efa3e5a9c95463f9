#include "ssd/pool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "ssd/binio.hpp"

namespace ssd {

namespace {
constexpr std::uint32_t kPoolVersion = 1;
}

const char* to_string(Granularity g) { return g == Granularity::Token ? "token" : "sequence"; }

Granularity parse_granularity(const std::string& s) {
  if (s == "token") return Granularity::Token;
  if (s == "sequence") return Granularity::Sequence;
  throw Error("unknown granularity '" + s + "' (expected token or sequence)");
}

ConceptPool::ConceptPool(std::size_t m, std::vector<FeatureId> members)
    : ConceptPool(m, std::move(members), {}, 0, 1) {}

ConceptPool::ConceptPool(std::size_t m, std::vector<FeatureId> members, std::vector<std::uint64_t> counts,
                         std::uint64_t n_cal, std::uint64_t tau, Granularity granularity)
    : m_(m), members_(std::move(members)), mask_(m, 0), counts_(std::move(counts)), n_cal_(n_cal), tau_(tau),
      granularity_(granularity) {
  std::sort(members_.begin(), members_.end());
  members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
  for (auto j : members_) {
    if (j >= m) throw DimensionError("pool member " + std::to_string(j) + " outside [0, " + std::to_string(m) + ")");
    mask_[j] = 1;
  }
  if (!counts_.empty() && counts_.size() != m) throw DimensionError("pool counts must have length m");
}

ConceptPool ConceptPool::full(std::size_t m) {
  std::vector<FeatureId> all(m);
  for (std::size_t j = 0; j < m; ++j) all[j] = static_cast<FeatureId>(j);
  return ConceptPool(m, std::move(all));
}

double ConceptPool::ssd() const {
  if (members_.empty()) return 0.0;
  const double p = static_cast<double>(members_.size());
  return p * std::log(std::numbers::e * static_cast<double>(m_) / p);
}

void ConceptPool::save_text(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# ssd concept pool\n";
  out << "m=" << m_ << "\nP=" << members_.size() << "\ntau=" << tau_ << "\nn_cal=" << n_cal_
      << "\ngranularity=" << to_string(granularity_) << "\n";
  for (auto j : members_) out << j << "\n";
  if (!out) throw Error("write failed on '" + path + "'");
}

ConceptPool ConceptPool::load_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::map<std::string, std::string> header;
  std::vector<FeatureId> members;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      header[line.substr(0, eq)] = line.substr(eq + 1);
      continue;
    }
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(line, &used);
      if (used != line.size()) throw std::invalid_argument("trailing characters");
      if (!members.empty() && v <= members.back())
        throw Error(path + ":" + std::to_string(lineno) + ": member ids must be strictly increasing");
      members.push_back(static_cast<FeatureId>(v));
    } catch (const std::logic_error&) {
      throw Error(path + ":" + std::to_string(lineno) + ": malformed member id '" + line + "'");
    }
  }
  const auto get = [&](const char* key) -> std::uint64_t {
    auto it = header.find(key);
    if (it == header.end()) throw Error(path + ": missing header field '" + key + "'");
    return std::stoull(it->second);
  };
  const std::size_t m = get("m");
  if (get("P") != members.size())
    throw Error(path + ": header P = " + std::to_string(get("P")) + " but " + std::to_string(members.size()) +
                " members listed");
  const Granularity g = header.count("granularity") ? parse_granularity(header["granularity"]) : Granularity::Sequence;
  return ConceptPool(m, std::move(members), {}, get("n_cal"), get("tau"), g);
}

void ConceptPool::save_binary(const std::string& path) const {
  BinaryWriter out(path);
  out.magic("SSDP");
  out.u32(kPoolVersion);
  out.u32(static_cast<std::uint32_t>(m_));
  out.u32(static_cast<std::uint32_t>(members_.size()));
  out.u64(tau_);
  out.u64(n_cal_);
  out.u8(static_cast<std::uint8_t>(granularity_));
  std::vector<std::uint8_t> packed((m_ + 7) / 8, 0);
  for (auto j : members_) packed[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
  out.bytes(packed);
  out.finish();
}

ConceptPool ConceptPool::load_binary(const std::string& path) {
  BinaryReader in(path);
  in.expect_magic("SSDP");
  if (const auto v = in.u32(); v != kPoolVersion) in.fail("unsupported SSDP version " + std::to_string(v));
  const std::size_t m = in.u32();
  const std::size_t p = in.u32();
  if (m == 0 || m > (1u << 24) || p > m) in.fail("implausible SSDP dimensions");
  const std::uint64_t tau = in.u64();
  const std::uint64_t n_cal = in.u64();
  const std::uint8_t g = in.u8();
  if (g > 1) in.fail("unknown granularity tag " + std::to_string(g));
  std::vector<std::uint8_t> packed((m + 7) / 8);
  in.bytes(packed);
  in.verify_digest();
  std::vector<FeatureId> members;
  for (std::size_t j = 0; j < packed.size() * 8; ++j) {
    if (packed[j / 8] & (1u << (j % 8))) {
      if (j >= m) throw FormatError(path + ": mask bit set beyond m", 0);
      members.push_back(static_cast<FeatureId>(j));
    }
  }
  if (members.size() != p)
    throw FormatError(path + ": header P = " + std::to_string(p) + " but mask has " + std::to_string(members.size()) +
                          " bits set",
                      0);
  return ConceptPool(m, std::move(members), {}, n_cal, tau, static_cast<Granularity>(g));
}

// ---------------------------------------------------------------------------

PoolCalibrator::PoolCalibrator(std::size_t m) : counts_(m, 0) {}

void PoolCalibrator::add_support(std::span<const FeatureId> support) {
  for (auto j : support) {
    if (j >= counts_.size()) throw DimensionError("support index " + std::to_string(j) + " outside the dictionary");
    ++counts_[j];
  }
  ++positions_;
}

void PoolCalibrator::merge(const PoolCalibrator& other) {
  if (other.counts_.size() != counts_.size()) throw DimensionError("cannot merge calibrators of different m");
  for (std::size_t j = 0; j < counts_.size(); ++j) counts_[j] += other.counts_[j];
  sequences_ += other.sequences_;
  positions_ += other.positions_;
}

ConceptPool PoolCalibrator::finish(std::uint64_t tau) const {
  if (positions_ == 0) throw Error("calibrate_pool: empty activation stream");
  if (tau == 0) throw Error("calibrate_pool: tau must be at least 1");
  std::vector<FeatureId> members;
  for (std::size_t j = 0; j < counts_.size(); ++j) {
    if (counts_[j] >= tau) members.push_back(static_cast<FeatureId>(j));
  }
  return ConceptPool(counts_.size(), std::move(members), counts_, sequences_, tau);
}

std::vector<FeatureId> rank_features(std::span<const std::uint64_t> counts) {
  std::vector<FeatureId> order(counts.size());
  for (std::size_t j = 0; j < order.size(); ++j) order[j] = static_cast<FeatureId>(j);
  std::stable_sort(order.begin(), order.end(), [&](FeatureId a, FeatureId b) { return counts[a] > counts[b]; });
  return order;
}

ConceptPool nested_pool(const ConceptPool& calibrated, std::size_t P) {
  if (calibrated.counts().empty()) throw Error("nested_pool needs a pool with calibration counts");
  if (P > calibrated.dict_size()) throw Error("nested pool size exceeds m");
  const auto order = rank_features(calibrated.counts());
  std::vector<FeatureId> members(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(P));
  return ConceptPool(calibrated.dict_size(), std::move(members), calibrated.counts(), calibrated.n_cal(), 0,
                     calibrated.granularity());
}

bool support_event(std::span<const float> a, std::size_t k, const ConceptPool& pool) {
  if (a.size() != pool.dict_size())
    throw DimensionError("support_event: activation length " + std::to_string(a.size()) + " != pool m " +
                         std::to_string(pool.dict_size()));
  for (auto j : topk_order(a, k)) {
    if (!pool.contains(j)) return false;
  }
  return true;
}

SparseCode restricted_code(std::span<const float> a, std::size_t k, const ConceptPool& pool) {
  if (a.size() != pool.dict_size()) throw DimensionError("restricted_code: activation length != pool m");
  std::vector<float> masked(a.size(), 0.0f);
  for (auto j : pool.members()) masked[j] = a[j];
  return topk(masked, k);
}

void MismatchCounter::add_position(bool event_holds) {
  ++tokens_;
  if (!event_holds) {
    ++token_violations_;
    current_violated_ = true;
  }
}

void MismatchCounter::end_sequence() {
  ++sequences_;
  if (current_violated_) ++seq_violations_;
  current_violated_ = false;
}

}  // namespace ssd
