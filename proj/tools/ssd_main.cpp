// ssd: command-line front end for training the toy pipeline, dumping and
// calibrating, certifying, sweeping, monitoring and ablating.
//
// Exit codes: 0 success (certificate non-vacuous), 2 certificate vacuous,
// 1 usage or runtime error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssd/ablate.hpp"
#include "ssd/binio.hpp"
#include "ssd/bound.hpp"
#include "ssd/config.hpp"
#include "ssd/ingest.hpp"
#include "ssd/markov.hpp"
#include "ssd/monitor.hpp"
#include "ssd/oracle.hpp"
#include "ssd/pipeline.hpp"
#include "ssd/pool.hpp"
#include "ssd/sae.hpp"

namespace fs = std::filesystem;
using namespace ssd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitVacuous = 2;

struct Options {
  std::string oracle, sae, pool, ssda, ssdl, components, corpus, config;
  std::string out_dir = ".";
  std::uint64_t n = 0;
  std::uint64_t n_cal = 1000;
  double delta = 0.05;
  bool delta_set = false;
  double alpha = 0.5;
  std::size_t topk = 0;
  std::uint64_t tau = 1;
  double tau_act = 0.0;
  std::size_t k_guard = 500;
  std::string mode = "exact";
  std::uint64_t seed = 42;
  std::string split;
  std::uint32_t J = 256;
  std::string n_grid, p_grid;
  std::string variant = "per-position";
  bool random_tokens = false;
  bool exact_count = false, union_over_p = false, delta_range = false;
  bool quiet = false;
  // toy-train
  std::size_t corpus_length = 400000;
  std::size_t steps = 3000, sae_steps = 3000;
  std::size_t hidden = 64, sae_m = 0, sae_k = 0;
  std::vector<std::string> files;
};

/// Collects the manifest of one command invocation.
class Run {
 public:
  Run(std::string command, const Options& opt) : opt_(opt), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.version = version();
    manifest_.config.set("seed", std::to_string(opt.seed));
  }

  void setting(const std::string& key, const std::string& value) { manifest_.config.set(key, value); }
  template <class T>
  void setting(const std::string& key, T value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    manifest_.config.set(key, os.str());
  }

  void input(const std::string& role, const std::string& path) {
    if (!path.empty()) manifest_.inputs.push_back({role, path, file_digest(path)});
  }

  std::string output_path(const std::string& name) const { return (fs::path(opt_.out_dir) / name).string(); }

  std::string write_text(const std::string& name, const std::string& text) {
    const auto path = output_path(name);
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << text;
    output(path);
    return path;
  }

  void output(const std::string& path) { manifest_.outputs.push_back(path); }

  void finish() {
    const auto cfg_path = output_path(manifest_.command + "_config.txt");
    manifest_.config.save(cfg_path);
    manifest_.outputs.push_back(cfg_path);
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.save(output_path(manifest_.command + "_manifest.json"));
  }

 private:
  const Options& opt_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

void require(const std::string& value, const char* flag, const char* command) {
  if (value.empty()) throw CLI::ValidationError(std::string(command) + " requires " + flag);
}

std::vector<std::uint64_t> parse_grid(const std::string& text, const char* flag) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item.find_first_not_of("0123456789") != std::string::npos)
      throw CLI::ValidationError(std::string(flag) + ": '" + item + "' is not a positive integer");
    out.push_back(std::stoull(item));
  }
  if (out.empty()) throw CLI::ValidationError(std::string(flag) + " is empty");
  return out;
}

ConceptPool load_pool(const std::string& path) {
  return peek_magic(path) == "SSDP" ? ConceptPool::load_binary(path) : ConceptPool::load_text(path);
}

std::vector<TokenId> load_corpus(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return vocab.encode(ss.str());
}

std::span<const TokenId> split_of(const std::vector<TokenId>& corpus, const std::string& split) {
  const TokenRange r = toy_splits(corpus.size()).get(split);
  return std::span<const TokenId>(corpus).subspan(r.begin, r.size());
}

CertMode parse_mode(const std::string& s) {
  if (s == "exact") return CertMode::Exact;
  if (s == "conservative") return CertMode::Conservative;
  throw CLI::ValidationError("--mode must be exact or conservative");
}

BoundOptions bound_options(const Options& o) {
  BoundOptions b;
  b.delta = o.delta;
  b.exact_count = o.exact_count;
  b.union_over_p = o.union_over_p;
  b.gap_range_width = o.delta_range;
  return b;
}

/// Components fixture: risk, gap, eta | mismatch, P, m, V [, alpha, k, n_cal, N, delta, label].
struct Fixture {
  Components c;
  LossConfig loss{0.5, 2};
  std::uint64_t N = 0;
  std::optional<double> delta;
  std::string label;
};

Fixture load_fixture(const std::string& path) {
  const RunConfig cfg = RunConfig::load(path);
  Fixture f;
  for (const char* key : {"risk", "gap", "P", "m", "V"}) {
    if (!cfg.has(key)) throw Error(path + ": components file lacks '" + key + "'");
  }
  if (cfg.has("eta") == cfg.has("mismatch")) throw Error(path + ": give exactly one of 'eta' and 'mismatch'");
  f.c.risk = cfg.get_double("risk", 0.0);
  f.c.gap = cfg.get_double("gap", 0.0);
  if (cfg.has("eta")) f.c.eta = cfg.get_double("eta", 0.0);
  else f.c.mismatch_bits = cfg.get_double("mismatch", 0.0);
  f.c.P = cfg.get_u64("P", 0);
  f.c.m = cfg.get_u64("m", 0);
  f.c.k = cfg.get_u64("k", 0);
  f.c.n_cal = cfg.get_u64("n_cal", 0);
  f.c.mode = parse_mode(cfg.get_or("mode", "exact"));
  f.loss = LossConfig(cfg.get_double("alpha", 0.5), cfg.get_u64("V", 0));
  f.N = cfg.get_u64("N", 0);
  if (cfg.has("delta")) f.delta = cfg.get_double("delta", 0.05);
  f.label = cfg.get_or("label", fs::path(path).stem().string());
  return f;
}

void print_measurements(const Measurements& m, double B) {
  std::printf("measured: N=%llu risk(M)=%.4f risk(SoM)=%.4f gap=%.4f eta_seq=%.4f (%llu/%llu) eta_tok=%.4f (%llu/%llu)\n",
              static_cast<unsigned long long>(m.N), m.risk_m, m.risk_proxy, m.gap, m.eta_sequence.eta(),
              static_cast<unsigned long long>(m.eta_sequence.violations),
              static_cast<unsigned long long>(m.eta_sequence.total), m.eta_token.eta(),
              static_cast<unsigned long long>(m.eta_token.violations),
              static_cast<unsigned long long>(m.eta_token.total));
  if (m.mode == CertMode::Exact)
    std::printf("measured: risk(h_G)=%.4f pool_gap=%.4f (<= eta_seq*B = %.4f)\n", m.risk_restricted, m.pool_gap,
                m.eta_sequence.eta() * B);
  if (m.from_dump) std::printf("measured: truncated positions=%llu\n", static_cast<unsigned long long>(m.truncated_positions));
}

int finish_report(Run& run, const BoundReport& r, const std::string& label, const Options& o) {
  const std::string text = r.to_text();
  if (!o.quiet) std::cout << text;
  std::cout << BoundReport::table_header() << "\n" << r.table_row(label) << "\n";
  run.write_text("certify_report.txt", text);
  run.write_text("certify_report.json", r.to_json() + "\n");
  run.write_text("certify_row.txt", BoundReport::table_header() + "\n" + r.table_row(label) + "\n");
  run.finish();
  return r.vacuous ? kExitVacuous : kExitOk;
}

struct LiveArtifacts {
  std::optional<ToyCharLm> model;
  std::optional<SaeModel> sae;
  std::vector<TokenId> corpus;
};

LiveArtifacts load_live(const Options& o, Run& run, const char* command, bool need_corpus = true) {
  require(o.oracle, "--oracle", command);
  require(o.sae, "--sae", command);
  LiveArtifacts a;
  a.model.emplace(ToyCharLm::load(o.oracle));
  a.sae.emplace(SaeModel::load(o.sae));
  check_compatible(*a.model, *a.sae);
  run.input("oracle", o.oracle);
  run.input("sae", o.sae);
  if (need_corpus) {
    require(o.corpus, "--corpus", command);
    a.corpus = load_corpus(o.corpus, a.model->vocabulary());
    run.input("corpus", o.corpus);
  }
  return a;
}

std::vector<std::vector<TokenId>> sample_split(const Options& o, const LiveArtifacts& a, const std::string& fallback,
                                               std::uint64_t n, Run& run) {
  const std::string split = o.split.empty() ? fallback : o.split;
  run.setting("split", split);
  run.setting("n", n);
  return sample_sequences(split_of(a.corpus, split), a.model->context_length(), n, o.seed, false);
}

// ------------------------------------------------------------------ commands

int cmd_toy_train(const Options& o) {
  Run run("toy-train", o);
  ToyPipelineConfig cfg;
  cfg.seed = o.seed;
  cfg.corpus_length = o.corpus_length;
  cfg.model.steps = o.steps;
  cfg.model.hidden_dim = o.hidden;
  cfg.sae_train.steps = o.sae_steps;
  cfg.sae_m = o.sae_m;
  cfg.sae_k = o.sae_k;
  cfg.calibration_sequences = 1;
  run.setting("steps", o.steps);
  run.setting("sae_steps", o.sae_steps);
  run.setting("hidden", o.hidden);
  run.setting("sae_m", o.sae_m);
  run.setting("sae_k", o.sae_k);

  ToyPipeline p;
  if (o.corpus.empty()) {
    run.setting("corpus_length", o.corpus_length);
    p = build_toy_pipeline(cfg);
    const auto corpus_path = run.write_text("corpus.txt", p.vocab.decode(p.corpus));
    std::printf("generated corpus: %s (%zu tokens)\n", corpus_path.c_str(), p.corpus.size());
  } else {
    std::ifstream in(o.corpus, std::ios::binary);
    if (!in) throw Error("cannot open corpus " + o.corpus);
    std::ostringstream ss;
    ss << in.rdbuf();
    Vocabulary vocab = Vocabulary::from_text(ss.str());
    auto tokens = vocab.encode(ss.str());
    run.input("corpus", o.corpus);
    p = build_toy_pipeline(cfg, std::move(tokens), std::move(vocab));
  }
  const auto oracle_path = run.output_path("oracle.ssdo");
  const auto sae_path = run.output_path("sae.ssds");
  p.model->save(oracle_path);
  p.sae->save(sae_path);
  run.output(oracle_path);
  run.output(sae_path);
  std::printf("oracle: V=%zu d=%zu window=%zu loss %.4f -> %.4f nats digest %s\n", p.model->vocab_size(),
              p.model->hidden_dim(), p.model->window(), p.model_log.initial_loss, p.model_log.final_loss,
              hex_digest(p.model->digest()).c_str());
  std::printf("sae: d=%zu m=%zu k=%zu mse %.4f -> %.4f dead=%zu%s digest %s\n", p.sae->input_dim(), p.sae->dict_size(),
              p.sae->sparsity(), p.sae_log.initial_mse, p.sae_log.final_mse, p.sae_log.dead_features,
              p.sae_log.short_stream_warning ? " (short activation stream)" : "", hex_digest(p.sae->digest()).c_str());
  run.finish();
  return kExitOk;
}

int cmd_toy_dump(const Options& o) {
  Run run("toy-dump", o);
  const auto a = load_live(o, run, "toy-dump");
  std::optional<ConceptPool> pool;
  if (!o.pool.empty()) {
    pool.emplace(load_pool(o.pool));
    run.input("pool", o.pool);
  }
  const auto seqs = sample_split(o, a, "evaluation", o.n ? o.n : 2000, run);
  DumpOptions d;
  d.J = o.J;
  d.alpha = o.alpha;
  run.setting("J", o.J);
  run.setting("alpha", o.alpha);
  const auto ssda = run.output_path("dump.ssda");
  const auto ssdl = pool ? run.output_path("restricted.ssdl") : std::string();
  write_toy_dump(*a.model, *a.sae, seqs, ssda, d, pool ? &*pool : nullptr, ssdl);
  run.output(ssda);
  if (pool) run.output(ssdl);
  std::printf("wrote %s (%zu records, J=%u)%s\n", ssda.c_str(), seqs.size(), std::min<std::uint32_t>(o.J, a.sae->dict_size()),
              pool ? (" and " + ssdl).c_str() : "");
  run.finish();
  return kExitOk;
}

int cmd_calibrate(const Options& o) {
  Run run("calibrate", o);
  run.setting("tau", o.tau);
  ConceptPool pool;
  std::size_t k = o.topk;
  if (!o.ssda.empty()) {
    if (k == 0) throw CLI::ValidationError("calibrate --ssda requires --topk");
    run.input("ssda", o.ssda);
    pool = calibrate_pool_ssda(o.ssda, k, o.tau);
  } else {
    const auto a = load_live(o, run, "calibrate");
    k = k ? k : a.sae->sparsity();
    Options oo = o;
    const auto seqs = sample_split(oo, a, "calibration", o.n_cal, run);
    pool = calibrate_pool(*a.model, *a.sae, seqs, o.tau, k);
  }
  run.setting("topk", k);
  const auto txt = run.output_path("pool.txt");
  const auto bin = run.output_path("pool.ssdp");
  pool.save_text(txt);
  pool.save_binary(bin);
  run.output(txt);
  run.output(bin);
  std::printf("pool: m=%zu P=%zu tau=%llu n_cal=%llu ssd=%.4f%s\n", pool.dict_size(), pool.size(),
              static_cast<unsigned long long>(o.tau), static_cast<unsigned long long>(pool.n_cal()), pool.ssd(),
              pool.supports_budget(k) ? "" : " (invalid: P < k)");
  run.finish();
  return pool.supports_budget(k) ? kExitOk : kExitError;
}

int cmd_certify(const Options& o) {
  Run run("certify", o);
  run.setting("delta", o.delta);
  run.setting("mode", o.mode);
  BoundOptions bo = bound_options(o);
  const CertMode mode = parse_mode(o.mode);

  if (!o.components.empty()) {
    Fixture f = load_fixture(o.components);
    run.input("components", o.components);
    if (f.delta && !o.delta_set) bo.delta = *f.delta;
    const std::uint64_t N = o.n ? o.n : f.N;
    if (N == 0) throw CLI::ValidationError("certify --components needs N (flag --n or key N)");
    run.setting("n", N);
    return finish_report(run, assemble(f.c, f.loss, N, bo), f.label, o);
  }

  require(o.pool, "--pool", "certify");
  const ConceptPool pool = load_pool(o.pool);
  run.input("pool", o.pool);
  Measurements meas;
  std::optional<LossConfig> loss;

  if (!o.ssda.empty()) {
    run.input("ssda", o.ssda);
    if (o.topk == 0) throw CLI::ValidationError("certify --ssda requires --topk");
    std::vector<float> restricted;
    if (mode == CertMode::Exact) {
      if (o.ssdl.empty()) throw CLI::ValidationError("exact mode on a dump requires --ssdl (restricted losses)");
      restricted = read_ssdl(o.ssdl);
      run.input("ssdl", o.ssdl);
    }
    meas = measure_ssda(o.ssda, pool, o.topk, mode == CertMode::Exact ? &restricted : nullptr);
    SsdaReader header_only(o.ssda);
    loss.emplace(header_only.loss_config());
    if (o.n && o.n != meas.N)
      throw DimensionError("--n " + std::to_string(o.n) + " disagrees with the dump's N = " + std::to_string(meas.N));
  } else {
    const auto a = load_live(o, run, "certify");
    loss.emplace(o.alpha, a.model->vocab_size());
    const auto seqs = sample_split(o, a, "evaluation", o.n ? o.n : 2000, run);
    const std::uint64_t before = a.model->digest();
    meas = measure_exact(*a.model, *a.sae, pool, seqs, *loss, o.topk);
    meas.mode = mode;
    if (a.model->digest() != before) throw Error("oracle weights changed during certification");
  }
  run.setting("alpha", loss->alpha());
  run.setting("topk", meas.k);
  if (!o.quiet) print_measurements(meas, loss->upper());
  const Components c = to_components(meas, *loss, pool.n_cal());
  const BoundReport r = assemble(c, *loss, meas.N, bo);
  return finish_report(run, r, to_string(mode), o);
}

int cmd_sweep(const Options& o) {
  Run run("sweep", o);
  BoundOptions bo = bound_options(o);
  const bool has_n = !o.n_grid.empty(), has_p = !o.p_grid.empty();
  if (has_n == has_p) throw CLI::ValidationError("sweep needs exactly one of --n-grid and --p-grid");
  std::ostringstream table;

  if (has_n) {
    const auto grid = parse_grid(o.n_grid, "--n-grid");
    require(o.components, "--components", "sweep --n-grid");
    Fixture f = load_fixture(o.components);
    run.input("components", o.components);
    if (f.delta && !o.delta_set) bo.delta = *f.delta;
    run.setting("n_grid", o.n_grid);
    const SweepNResult res = sweep_n(f.c, f.loss, grid, bo);
    table << "# N total_bits (baseline " << std::fixed << std::setprecision(4) << f.loss.baseline() << ")\n";
    for (std::size_t i = 0; i < grid.size(); ++i) table << grid[i] << " " << res.totals[i] << "\n";
    table << "# crossing: " << (res.crossing ? std::to_string(*res.crossing) : std::string("never on grid")) << "\n";
  } else {
    const auto grid = parse_grid(o.p_grid, "--p-grid");
    run.setting("p_grid", o.p_grid);
    std::vector<PoolCandidate> cands;
    Components base;
    std::optional<LossConfig> loss;
    std::uint64_t N = 0;
    std::optional<LiveArtifacts> live;
    std::vector<std::vector<TokenId>> seqs;
    ConceptPool calibrated;
    if (o.ssda.empty()) {
      live.emplace(load_live(o, run, "sweep"));
      loss.emplace(o.alpha, live->model->vocab_size());
      // ranking from the calibration split, evaluation on the evaluation split
      const auto cal = sample_sequences(split_of(live->corpus, "calibration"), live->model->context_length(), o.n_cal,
                                        o.seed, false);
      run.setting("n_cal", o.n_cal);
      calibrated = calibrate_pool(*live->model, *live->sae, cal, 1, o.topk);
      seqs = sample_split(o, *live, "evaluation", o.n ? o.n : 2000, run);
    } else {
      if (o.topk == 0) throw CLI::ValidationError("sweep --ssda requires --topk");
      run.input("ssda", o.ssda);
      loss.emplace(SsdaReader(o.ssda).loss_config());
      // ranking from the dump itself: P is selected on the evaluation sample
      calibrated = calibrate_pool_ssda(o.ssda, o.topk, 1);
    }
    for (auto P : grid) {
      const ConceptPool pool = nested_pool(calibrated, P);
      Measurements meas = live ? measure_exact(*live->model, *live->sae, pool, seqs, *loss, o.topk)
                               : measure_ssda(o.ssda, pool, o.topk);
      const Components c = to_components(meas, *loss, calibrated.n_cal());
      base = c;
      N = meas.N;
      cands.push_back({P, c.eta, c.risk, c.gap});
    }
    const SweepPResult res = sweep_p(cands, base, *loss, N, bo);
    table << "# P total_bits (N " << N << ", baseline " << std::fixed << std::setprecision(4) << loss->baseline()
          << ")\n";
    for (const auto& r : res.reports) table << r.P << " " << r.total << "\n";
    table << "# argmin P: " << res.reports[res.argmin].P << "\n";
  }
  std::cout << table.str();
  run.write_text("sweep_table.txt", table.str());
  run.finish();
  return kExitOk;
}

int cmd_monitor(const Options& o) {
  Run run("monitor", o);
  run.setting("tau_act", o.tau_act);
  run.setting("k_guard", o.k_guard);
  std::optional<MonitorStats> stats;
  std::uint64_t alert_lines = 0;
  const auto alert = [&](std::size_t seq, std::size_t pos, std::size_t k) {
    if (alert_lines++ < 100) std::fprintf(stderr, "alert: sequence %zu position %zu k=%zu > %zu\n", seq, pos, k, o.k_guard);
  };
  if (!o.ssda.empty()) {
    run.input("ssda", o.ssda);
    SsdaReader reader(o.ssda);
    const auto& h = reader.header();
    stats.emplace(h.m, o.k_guard);
    SsdaRecord rec;
    std::size_t i = 0;
    bool capped = false;
    while (reader.next(rec)) {
      for (std::size_t t = 0; t < h.T; ++t) {
        std::size_t k = 0;
        for (const auto& e : rec.position(t, h.J)) k += e.value > o.tau_act ? 1 : 0;
        capped = capped || k == h.J;
        if (stats->update(k)) alert(i, t, k);
      }
      ++i;
    }
    if (capped) std::printf("note: some positions have all J stored entries active; their counts are lower bounds\n");
  } else {
    const auto a = load_live(o, run, "monitor", !o.random_tokens);
    stats.emplace(a.sae->dict_size(), o.k_guard);
    const std::uint64_t n = o.n ? o.n : 500;
    std::vector<std::vector<TokenId>> seqs;
    if (o.random_tokens) {
      run.setting("input", "random-tokens");
      run.setting("n", n);
      for (std::uint64_t i = 0; i < n; ++i)
        seqs.push_back(random_tokens(a.model->context_length(), a.model->vocab_size(), o.seed + i));
    } else {
      seqs = sample_split(o, a, "evaluation", n, run);
    }
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto hs = a.model->hidden_states(seqs[i]);
      for (std::size_t t = 0; t < hs.size(); ++t) {
        const std::size_t k = active_count(a.sae->encode(hs[t]), o.tau_act);
        if (stats->update(k)) alert(i, t, k);
      }
    }
  }
  std::ostringstream os;
  os << stats->summarize() << "\n" << stats->render_histogram();
  std::cout << os.str();
  run.write_text("monitor_report.txt", os.str());
  run.finish();
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  Run run("ablate", o);
  const auto a = load_live(o, run, "ablate");
  const LossConfig loss(o.alpha, a.model->vocab_size());
  const auto seqs = sample_split(o, a, "evaluation", o.n ? o.n : 500, run);
  const ShuffleVariant variant = parse_shuffle_variant(o.variant);
  run.setting("variant", o.variant);
  const AblationResult res = run_ablation(*a.model, *a.sae, seqs, loss, o.seed, variant);

  // both conditions share P, m and N, so the complexity term is the same
  Components c;
  c.m = a.sae->dict_size();
  c.P = c.m;
  c.risk = res.real.mean;
  BoundReport real_r = assemble(c, loss, seqs.size(), bound_options(o));
  c.risk = res.shuffled.mean;
  BoundReport shuf_r = assemble(c, loss, seqs.size(), bound_options(o));

  const double hi = std::max(res.real.max, res.shuffled.max) * 1.0001 + 1e-9;
  std::ostringstream os;
  os << "real (" << to_string(variant) << ", seed " << o.seed << ")\n" << render_gap_histogram(res.gaps_real, 0.0, hi);
  os << "shuffled\n" << render_gap_histogram(res.gaps_shuffled, 0.0, hi);
  char row[256];
  std::snprintf(row, sizeof row,
                "real mean=%.4f std=%.4f | shuffled mean=%.4f std=%.4f | shift=%.4f bits | separation=%.2f SE | "
                "complexity real=%.6f shuffled=%.6f\n",
                res.real.mean, res.real.std, res.shuffled.mean, res.shuffled.std, res.shuffled.mean - res.real.mean,
                res.separation(), real_r.complexity, shuf_r.complexity);
  os << row;
  std::cout << os.str();
  run.write_text("ablate_report.txt", os.str());
  run.finish();
  return kExitOk;
}

std::string describe(const std::string& path) {
  std::ostringstream os;
  os << path << "\n  file digest: " << file_digest(path) << "\n";
  const std::string magic = peek_magic(path);
  if (magic == "SSDO") {
    const auto m = ToyCharLm::load(path);
    os << "  type: toy oracle (SSDO)\n  V: " << m.vocab_size() << "\n  window: " << m.window()
       << "\n  embed: " << m.weights().embed_dim << "\n  d: " << m.hidden_dim() << "\n  T: " << m.context_length()
       << "\n  weight digest: " << hex_digest(m.digest()) << "\n";
  } else if (magic == "SSDS") {
    const auto s = SaeModel::load(path);
    os << "  type: sparse autoencoder (SSDS)\n  d: " << s.input_dim() << "\n  m: " << s.dict_size()
       << "\n  k: " << s.sparsity() << "\n  conventions: " << static_cast<int>(s.conventions())
       << "\n  weight digest: " << hex_digest(s.digest()) << "\n";
  } else if (magic == "SSDP") {
    const auto p = ConceptPool::load_binary(path);
    os << "  type: concept pool (SSDP)\n  m: " << p.dict_size() << "\n  P: " << p.size() << "\n  tau: " << p.tau()
       << "\n  n_cal: " << p.n_cal() << "\n  granularity: " << to_string(p.granularity()) << "\n";
  } else if (magic == "SSDA") {
    SsdaReader r(path);
    const auto h = r.header();
    SsdaRecord rec;
    while (r.next(rec)) {
    }
    os << "  type: activation dump (SSDA)\n  version: " << h.version << "\n  d: " << h.d << "\n  m: " << h.m
       << "\n  V: " << h.vocab << "\n  T: " << h.T << "\n  J: " << h.J << "\n  N: " << h.n_records
       << "\n  flags: " << h.flags << "\n  alpha: " << h.alpha << "\n  records validated: " << r.records_read() << "\n";
  } else if (magic == "SSDL") {
    const auto l = read_ssdl(path);
    double s = 0.0;
    for (float v : l) s += v;
    os << "  type: restricted-loss sidecar (SSDL)\n  N: " << l.size() << "\n  mean: " << (l.empty() ? 0.0 : s / l.size())
       << "\n";
  } else {
    try {
      const auto p = ConceptPool::load_text(path);
      os << "  type: concept pool (text)\n  m: " << p.dict_size() << "\n  P: " << p.size() << "\n  tau: " << p.tau()
         << "\n  n_cal: " << p.n_cal() << "\n";
    } catch (const Error&) {
      const auto cfg = RunConfig::load(path);
      os << "  type: key=value file (schema " << kConfigSchema << ")\n";
      for (const auto& [k, v] : cfg.values()) os << "  " << k << ": " << v << "\n";
    }
  }
  return os.str();
}

int cmd_inspect(const Options& o) {
  if (o.files.empty()) throw CLI::ValidationError("inspect needs at least one file");
  for (const auto& f : o.files) std::cout << describe(f);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-semantic-dimension certification toolkit"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* s) {
    s->add_option("--oracle", o.oracle, "toy oracle file (SSDO)");
    s->add_option("--sae", o.sae, "sparse autoencoder file (SSDS)");
    s->add_option("--pool", o.pool, "concept pool (text or SSDP)");
    s->add_option("--ssda", o.ssda, "activation dump (SSDA)");
    s->add_option("--corpus", o.corpus, "text corpus");
    s->add_option("--split", o.split, "corpus split: train, calibration, evaluation, truth");
    s->add_option("--n", o.n, "number of evaluation sequences");
    s->add_option("--alpha", o.alpha, "smoothing factor")->capture_default_str();
    s->add_option("--topk", o.topk, "TopK budget (default: the SAE's k)");
    s->add_option("--seed", o.seed, "random seed")->capture_default_str();
    s->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
  };
  const auto bound_flags = [&](CLI::App* s) {
    s->add_option("--delta", o.delta, "confidence parameter")->capture_default_str()->each([&](const std::string&) {
      o.delta_set = true;
    });
    s->add_flag("--exact-count", o.exact_count, "use ln C(m, P) instead of P ln(e m / P)");
    s->add_flag("--union-over-p", o.union_over_p, "add ln m for a data-chosen P");
    s->add_flag("--delta-range", o.delta_range, "Hoeffding gap term with range Delta instead of B");
  };

  auto* toy_train = app.add_subcommand("toy-train", "train the toy oracle and its SAE");
  common(toy_train);
  toy_train->add_option("--corpus-length", o.corpus_length, "synthetic corpus length")->capture_default_str();
  toy_train->add_option("--steps", o.steps, "oracle training steps")->capture_default_str();
  toy_train->add_option("--sae-steps", o.sae_steps, "SAE training steps")->capture_default_str();
  toy_train->add_option("--hidden", o.hidden, "hidden width d")->capture_default_str();
  toy_train->add_option("--sae-m", o.sae_m, "dictionary size (default 4 d)");
  toy_train->add_option("--sae-k", o.sae_k, "TopK budget (default d / 4)");

  auto* toy_dump = app.add_subcommand("toy-dump", "write an SSDA dump from the toy pipeline");
  common(toy_dump);
  toy_dump->add_option("--J", o.J, "stored entries per position")->capture_default_str();

  auto* calibrate = app.add_subcommand("calibrate", "calibrate a concept pool");
  common(calibrate);
  calibrate->add_option("--n-cal", o.n_cal, "calibration sequences")->capture_default_str();
  calibrate->add_option("--tau", o.tau, "minimum support count")->capture_default_str();

  auto* certify = app.add_subcommand("certify", "assemble the generalization certificate");
  common(certify);
  bound_flags(certify);
  certify->add_option("--components", o.components, "pre-measured components file");
  certify->add_option("--ssdl", o.ssdl, "restricted-loss sidecar (SSDL) for exact mode on a dump");
  certify->add_option("--mode", o.mode, "exact or conservative")->capture_default_str();
  certify->add_option("--n-cal", o.n_cal, "calibration sequences (informational)");
  certify->add_flag("--quiet", o.quiet, "print only the table row");

  auto* sweep = app.add_subcommand("sweep", "bound versus N or P");
  common(sweep);
  bound_flags(sweep);
  sweep->add_option("--components", o.components, "pre-measured components file");
  sweep->add_option("--n-grid", o.n_grid, "comma-separated increasing N values");
  sweep->add_option("--p-grid", o.p_grid, "comma-separated pool sizes");
  sweep->add_option("--n-cal", o.n_cal, "calibration sequences for the feature ranking")->capture_default_str();

  auto* monitor = app.add_subcommand("monitor", "active-feature statistics and guardrail");
  common(monitor);
  monitor->add_option("--tau-act", o.tau_act, "activation threshold")->capture_default_str();
  monitor->add_option("--k-guard", o.k_guard, "guardrail threshold")->capture_default_str();
  monitor->add_flag("--random", o.random_tokens, "feed uniformly random tokens instead of the corpus");

  auto* ablate = app.add_subcommand("ablate", "shuffled-feature ablation");
  common(ablate);
  ablate->add_option("--variant", o.variant, "per-position, global or within-support")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect", "print artifact headers and digests");
  inspect->add_option("files", o.files, "artifact files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (!o.out_dir.empty()) fs::create_directories(o.out_dir);
    if (*toy_train) return cmd_toy_train(o);
    if (*toy_dump) return cmd_toy_dump(o);
    if (*calibrate) return cmd_calibrate(o);
    if (*certify) return cmd_certify(o);
    if (*sweep) return cmd_sweep(o);
    if (*monitor) return cmd_monitor(o);
    if (*ablate) return cmd_ablate(o);
    if (*inspect) return cmd_inspect(o);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
