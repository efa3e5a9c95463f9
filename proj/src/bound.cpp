#include "ssd/bound.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace ssd {

namespace {
__extension__ using u128 = unsigned __int128;
}  // namespace

std::uint64_t binomial_u64(unsigned m, unsigned P) {
  if (m > 64) throw Error("binomial_u64 supports m <= 64");
  if (P > m) return 0;
  if (P > m - P) P = m - P;
  u128 r = 1;
  for (unsigned i = 0; i < P; ++i) r = r * (m - i) / (i + 1);  // exact at every step
  return static_cast<std::uint64_t>(r);
}

HypothesisCount ln_hypothesis_count(std::uint64_t m, std::uint64_t P) {
  if (P > m) throw Error("pool size P = " + std::to_string(P) + " exceeds dictionary size m = " + std::to_string(m));
  HypothesisCount h;
  if (P > 0) {
    const double p = static_cast<double>(P);
    h.upper = p * std::log(std::numbers::e * static_cast<double>(m) / p);
  }
  if (m <= 64) {
    h.exact = std::log(static_cast<double>(binomial_u64(static_cast<unsigned>(m), static_cast<unsigned>(P))));
    h.exact_from_factorials = true;
  } else {
    const double md = static_cast<double>(m), pd = static_cast<double>(P);
    h.exact = std::lgamma(md + 1.0) - std::lgamma(pd + 1.0) - std::lgamma(md - pd + 1.0);
    if (h.exact < 0.0) h.exact = 0.0;
  }
  return h;
}

DeviationTerms deviation_terms(double B, double ln_count, double delta, std::uint64_t N) {
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1), got " + std::to_string(delta));
  if (N == 0) throw Error("sample size N must be at least 1");
  if (ln_count < 0.0) throw Error("log hypothesis count must be nonnegative");
  const double n2 = 2.0 * static_cast<double>(N);
  DeviationTerms t;
  t.complexity = B * std::sqrt((ln_count + std::log(2.0 / delta)) / n2);
  t.concentration = B * std::sqrt(std::log(4.0 / delta) / n2);
  return t;
}

const char* to_string(CertMode mode) { return mode == CertMode::Exact ? "exact" : "conservative"; }

BoundReport assemble(const Components& c, const LossConfig& loss, std::uint64_t N, const BoundOptions& opt) {
  if (c.m == 0) throw DimensionError("dictionary size m must be positive");
  if (c.P > c.m)
    throw DimensionError("pool size P = " + std::to_string(c.P) + " exceeds dictionary size m = " + std::to_string(c.m));
  if (c.k > 0 && c.P < c.k)
    throw DimensionError("pool size P = " + std::to_string(c.P) + " is smaller than the TopK budget k = " +
                         std::to_string(c.k));
  if (!(c.eta >= 0.0 && c.eta <= 1.0)) throw Error("mismatch rate eta must lie in [0, 1]");
  if (!(c.risk >= 0.0) || !(c.gap >= 0.0)) throw Error("risk and gap must be nonnegative");

  BoundReport r;
  r.m = c.m;
  r.P = c.P;
  r.k = c.k;
  r.N = N;
  r.n_cal = c.n_cal;
  r.delta = opt.delta;
  r.alpha = loss.alpha();
  r.vocab = loss.vocab_size();
  r.B = loss.upper();
  r.width = loss.width();
  r.mode = c.mode;

  const HypothesisCount count = ln_hypothesis_count(c.m, c.P);
  r.ln_count = opt.exact_count ? count.exact : count.upper;
  if (opt.union_over_p) r.ln_count += std::log(static_cast<double>(c.m));
  r.ssd = count.upper;

  const DeviationTerms dev = deviation_terms(r.B, r.ln_count, opt.delta, N);
  r.risk = c.risk;
  r.gap = c.gap;
  if (c.mismatch_bits) {
    if (!(*c.mismatch_bits >= 0.0)) throw Error("mismatch term must be nonnegative");
    r.mismatch = *c.mismatch_bits;
    r.eta = r.mismatch / r.B;
  } else {
    r.eta = c.eta;
    r.mismatch = c.eta * r.B;
  }
  r.complexity = dev.complexity;
  r.concentration_b_range = dev.concentration;
  r.concentration_width_range = dev.concentration * r.width / r.B;
  r.concentration = opt.gap_range_width ? r.concentration_width_range : r.concentration_b_range;
  r.total = r.risk + r.gap + r.mismatch + r.complexity + r.concentration;

  const double n_eta = static_cast<double>(c.n_cal > 0 ? c.n_cal : N);
  r.omitted_eta_penalty = r.B * std::sqrt(std::log(2.0 / opt.delta) / (2.0 * n_eta));
  r.baseline = loss.baseline();
  r.vacuous = r.total >= r.baseline;
  return r;
}

namespace {

std::string fmt4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string BoundReport::to_text() const {
  std::ostringstream os;
  os << "mode: " << to_string(mode) << "\n"
     << "vocab: " << vocab << "\n"
     << "alpha: " << fmt4(alpha) << "\n"
     << "delta: " << fmt4(delta) << "\n"
     << "N: " << N << "\n"
     << "N_cal: " << n_cal << "\n"
     << "m: " << m << "\n"
     << "P: " << P << "\n"
     << "k: " << k << "\n"
     << "B: " << fmt4(B) << "\n"
     << "Delta: " << fmt4(width) << "\n"
     << "eta: " << fmt4(eta) << "\n"
     << "ssd: " << fmt4(ssd) << "\n"
     << "ln_count: " << fmt4(ln_count) << "\n"
     << "risk: " << fmt4(risk) << "\n"
     << "gap: " << fmt4(gap) << "\n"
     << "mismatch: " << fmt4(mismatch) << "\n"
     << "complexity: " << fmt4(complexity) << "\n"
     << "concentration: " << fmt4(concentration) << "\n"
     << "total: " << fmt4(total) << "\n"
     << "baseline: " << fmt4(baseline) << "\n"
     << "status: " << (vacuous ? "Vacuous" : "Non-Vacuous") << "\n"
     << "concentration_delta_range: " << fmt4(concentration_width_range) << "\n"
     << "omitted_eta_penalty: " << fmt4(omitted_eta_penalty) << "\n";
  return os.str();
}

std::string BoundReport::table_header() {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %8s %8s %9s %8s %8s %8s  %s", "condition", "Risk", "Gap", "Mismatch",
                "Comp.", "Total", "P", "Status");
  return buf;
}

std::string BoundReport::table_row(const std::string& label) const {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%-24s %8.2f %8.2f %9.2f %8.2f %8.2f %8llu  %s", label.c_str(), risk, gap, mismatch,
                complexity, total, static_cast<unsigned long long>(P), vacuous ? "Vacuous" : "Non-Vacuous");
  return buf;
}

std::string BoundReport::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = to_string(mode);
  j["inputs"] = {{"vocab", vocab}, {"alpha", alpha}, {"delta", delta}, {"N", N},         {"N_cal", n_cal},
                 {"m", m},         {"P", P},         {"k", k},         {"B", B},         {"Delta", width},
                 {"eta", eta},     {"ssd", ssd},     {"ln_count", ln_count}};
  j["terms"] = {{"risk", risk},
                {"gap", gap},
                {"mismatch", mismatch},
                {"complexity", complexity},
                {"concentration", concentration}};
  j["total"] = total;
  j["baseline"] = baseline;
  j["vacuous"] = vacuous;
  j["diagnostics"] = {{"concentration_delta_range", concentration_width_range},
                      {"concentration_b_range", concentration_b_range},
                      {"omitted_eta_penalty", omitted_eta_penalty}};
  return j.dump(2);
}

SweepPResult sweep_p(const std::vector<PoolCandidate>& candidates, const Components& base, const LossConfig& loss,
                     std::uint64_t N, const BoundOptions& opt) {
  if (candidates.size() < 2) throw Error("bound-vs-P sweep needs at least two candidates");
  SweepPResult out;
  for (const auto& cand : candidates) {
    Components c = base;
    c.P = cand.P;
    c.eta = cand.eta;
    c.mismatch_bits.reset();
    c.risk = cand.risk;
    c.gap = cand.gap;
    out.reports.push_back(assemble(c, loss, N, opt));
  }
  for (std::size_t i = 1; i < out.reports.size(); ++i) {
    const auto& best = out.reports[out.argmin];
    const auto& cur = out.reports[i];
    if (cur.total < best.total || (cur.total == best.total && cur.P < best.P)) out.argmin = i;
  }
  return out;
}

SweepNResult sweep_n(const Components& c, const LossConfig& loss, const std::vector<std::uint64_t>& grid,
                     const BoundOptions& opt) {
  if (grid.empty()) throw Error("bound-vs-N sweep needs a nonempty grid");
  SweepNResult out;
  out.grid = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (i > 0 && grid[i] <= grid[i - 1]) throw Error("N grid must be strictly increasing");
    const BoundReport r = assemble(c, loss, grid[i], opt);
    out.totals.push_back(r.total);
    if (!out.crossing && !r.vacuous) out.crossing = grid[i];
  }
  return out;
}

}  // namespace ssd
