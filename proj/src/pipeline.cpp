#include "ssd/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "ssd/markov.hpp"
#include "ssd/monitor.hpp"

namespace ssd {

namespace {

std::size_t budget(const SaeModel& sae, std::size_t k) { return k ? k : sae.sparsity(); }

void check_pool(const SaeModel& sae, const ConceptPool& pool, std::size_t k) {
  if (pool.dict_size() != sae.dict_size())
    throw DimensionError("pool dictionary size m = " + std::to_string(pool.dict_size()) + " but SAE m = " +
                         std::to_string(sae.dict_size()));
  if (!pool.supports_budget(k))
    throw DimensionError("pool size P = " + std::to_string(pool.size()) + " is smaller than the TopK budget k = " +
                         std::to_string(k));
}

void check_loss(const Predictor& model, const LossConfig& loss) {
  if (loss.vocab_size() != model.vocab_size())
    throw DimensionError("loss vocabulary V = " + std::to_string(loss.vocab_size()) + " but predictor V = " +
                         std::to_string(model.vocab_size()));
}

}  // namespace

bool SequenceEval::event_all() const {
  return std::all_of(event.begin(), event.end(), [](std::uint8_t e) { return e != 0; });
}

void check_compatible(const Predictor& model, const SaeModel& sae) {
  if (model.hidden_dim() != sae.input_dim())
    throw DimensionError("SAE input dimension d = " + std::to_string(sae.input_dim()) + " but predictor d = " +
                         std::to_string(model.hidden_dim()));
}

SequenceEval evaluate_sequence(const Predictor& model, const SaeModel& sae, const ConceptPool* pool,
                               std::span<const TokenId> tokens, const LossConfig& loss, const EvalOptions& opt) {
  check_compatible(model, sae);
  check_loss(model, loss);
  const std::size_t k = budget(sae, opt.k);
  if (pool) check_pool(sae, *pool, k);
  if (tokens.empty()) throw Error("cannot evaluate an empty sequence");

  const auto hs = model.hidden_states(tokens);
  const std::size_t T = tokens.size();
  SequenceEval ev;
  ev.position_loss_m.resize(T);
  ev.position_loss_proxy.resize(T);
  ev.event.assign(T, 1);
  ev.active.resize(T);
  std::vector<double> pm(T), pp(T), pg;
  if (pool) {
    pg.resize(T);
    ev.position_loss_restricted.resize(T);
  }

  for (std::size_t t = 0; t < T; ++t) {
    const TokenId y = tokens[t];
    pm[t] = smooth_entry(model.resume(hs[t], t)[y], loss);

    const auto a = sae.encode(hs[t]);
    const SparseCode code = topk(a, k);
    pp[t] = smooth_entry(model.resume(sae.decode(code), t)[y], loss);
    ev.active[t] = static_cast<std::uint32_t>(active_count(a, opt.tau_act));
    if (opt.keep_support) ev.support.push_back(code.indices);

    if (pool) {
      ev.event[t] = support_event(a, k, *pool) ? 1 : 0;
      const SparseCode restricted = restricted_code(a, k, *pool);
      pg[t] = smooth_entry(model.resume(sae.decode(restricted), t)[y], loss);
      ev.position_loss_restricted[t] = token_loss(pg[t], loss);
    }
    ev.position_loss_m[t] = token_loss(pm[t], loss);
    ev.position_loss_proxy[t] = token_loss(pp[t], loss);
  }
  ev.loss_m = smoothed_bpd(pm, loss);
  ev.loss_proxy = smoothed_bpd(pp, loss);
  if (pool) ev.loss_restricted = smoothed_bpd(pg, loss);
  return ev;
}

RestrictedForward restricted_forward(const Predictor& model, const SaeModel& sae, const ConceptPool& pool,
                                     std::span<const TokenId> tokens, const LossConfig& loss, std::size_t k) {
  check_compatible(model, sae);
  check_loss(model, loss);
  k = budget(sae, k);
  check_pool(sae, pool, k);
  const auto hs = model.hidden_states(tokens);
  RestrictedForward out;
  std::vector<double> smoothed;
  for (std::size_t t = 0; t < hs.size(); ++t) {
    const auto a = sae.encode(hs[t]);
    out.probs.push_back(model.resume(sae.decode(restricted_code(a, k, pool)), t));
    smoothed.push_back(smooth_entry(out.probs.back()[tokens[t]], loss));
  }
  out.loss = smoothed_bpd(smoothed, loss);
  return out;
}

// ---------------------------------------------------------------------------

PoolCalibrator calibration_counts(const Predictor& model, const SaeModel& sae,
                                  std::span<const std::vector<TokenId>> sequences, std::size_t k) {
  check_compatible(model, sae);
  k = budget(sae, k);
  PoolCalibrator cal(sae.dict_size());
  for (const auto& seq : sequences) {
    for (const auto& h : model.hidden_states(seq)) cal.add_support(topk(sae.encode(h), k).indices);
    cal.end_sequence();
  }
  return cal;
}

ConceptPool calibrate_pool(const Predictor& model, const SaeModel& sae, std::span<const std::vector<TokenId>> sequences,
                           std::uint64_t tau, std::size_t k) {
  return calibration_counts(model, sae, sequences, k).finish(tau);
}

ConceptPool calibrate_pool_ssda(const std::string& ssda_path, std::size_t k, std::uint64_t tau) {
  SsdaReader reader(ssda_path);
  const auto& h = reader.header();
  if (k == 0 || k > h.J)
    throw DimensionError("TopK budget k = " + std::to_string(k) + " must lie in [1, J = " + std::to_string(h.J) + "]");
  PoolCalibrator cal(h.m);
  SsdaRecord rec;
  while (reader.next(rec)) {
    for (std::size_t t = 0; t < h.T; ++t) {
      auto support = dumped_support(rec.position(t, h.J), k);
      std::sort(support.begin(), support.end());
      cal.add_support(support);
    }
    cal.end_sequence();
  }
  return cal.finish(tau);
}

MismatchCounter estimate_eta(const Predictor& model, const SaeModel& sae, const ConceptPool& pool,
                             std::span<const std::vector<TokenId>> sequences, std::size_t k) {
  check_compatible(model, sae);
  k = budget(sae, k);
  if (pool.dict_size() != sae.dict_size()) throw DimensionError("pool and SAE disagree on m");
  if (sequences.empty()) throw Error("mismatch estimation needs a nonempty stream");
  MismatchCounter counter;
  for (const auto& seq : sequences) {
    for (const auto& h : model.hidden_states(seq)) counter.add_position(support_event(sae.encode(h), k, pool));
    counter.end_sequence();
  }
  return counter;
}

// ---------------------------------------------------------------------------

Measurements measure_exact(const Predictor& model, const SaeModel& sae, const ConceptPool& pool,
                           std::span<const std::vector<TokenId>> sequences, const LossConfig& loss, std::size_t k) {
  if (sequences.empty()) throw Error("evaluation sample is empty");
  k = budget(sae, k);
  Measurements out;
  out.mode = CertMode::Exact;
  out.m = sae.dict_size();
  out.P = pool.size();
  out.k = k;
  MismatchCounter counter;
  double sm = 0.0, sp = 0.0, sg = 0.0, gap = 0.0, pool_gap = 0.0;
  EvalOptions opt;
  opt.k = k;
  for (const auto& seq : sequences) {
    const SequenceEval ev = evaluate_sequence(model, sae, &pool, seq, loss, opt);
    for (auto e : ev.event) counter.add_position(e != 0);
    counter.end_sequence();
    sm += ev.loss_m;
    sp += ev.loss_proxy;
    sg += *ev.loss_restricted;
    gap += loss_gap(ev.loss_m, ev.loss_proxy, loss);
    pool_gap += std::fabs(ev.loss_proxy - *ev.loss_restricted);
  }
  const double n = static_cast<double>(sequences.size());
  out.N = sequences.size();
  out.risk_m = sm / n;
  out.risk_proxy = sp / n;
  out.risk_restricted = sg / n;
  out.gap = gap / n;
  out.pool_gap = pool_gap / n;
  out.eta_token = counter.token_level();
  out.eta_sequence = counter.sequence_level();
  return out;
}

Measurements measure_ssda(const std::string& ssda_path, const ConceptPool& pool, std::size_t k,
                          const std::vector<float>* restricted) {
  SsdaReader reader(ssda_path);
  const auto& h = reader.header();
  if (pool.dict_size() != h.m)
    throw DimensionError("pool dictionary size m = " + std::to_string(pool.dict_size()) + " but dump m = " +
                         std::to_string(h.m));
  if (k == 0 || k > h.J)
    throw DimensionError("TopK budget k = " + std::to_string(k) + " must lie in [1, J = " + std::to_string(h.J) + "]");
  if (!pool.supports_budget(k))
    throw DimensionError("pool size P = " + std::to_string(pool.size()) + " is smaller than the TopK budget k = " +
                         std::to_string(k));
  if (restricted && restricted->size() != h.n_records)
    throw DimensionError("restricted-loss sidecar has " + std::to_string(restricted->size()) + " entries, dump has N = " +
                         std::to_string(h.n_records));

  const LossConfig& loss = reader.loss_config();
  Measurements out;
  out.mode = restricted ? CertMode::Exact : CertMode::Conservative;
  out.m = h.m;
  out.P = pool.size();
  out.k = k;
  MismatchCounter counter;
  double sm = 0.0, sp = 0.0, sg = 0.0, gap = 0.0, pool_gap = 0.0;
  SsdaRecord rec;
  std::uint64_t i = 0;
  while (reader.next(rec)) {
    for (std::size_t t = 0; t < h.T; ++t) {
      const auto entries = rec.position(t, h.J);
      const auto support = dumped_support(entries, k);
      const bool in_pool =
          std::all_of(support.begin(), support.end(), [&](FeatureId j) { return pool.contains(j); });
      const bool truncated = truncation_check(entries, pool, k);
      if (truncated) ++out.truncated_positions;
      counter.add_position(in_pool && !truncated);
    }
    counter.end_sequence();
    sm += rec.loss_m;
    sp += rec.loss_proxy;
    gap += std::fabs(static_cast<double>(rec.loss_m) - rec.loss_proxy);
    if (restricted) {
      const float lg = (*restricted)[i];
      if (!loss.in_range(lg, 1e-5))
        throw Error("restricted loss of sequence " + std::to_string(i) + " outside [B - Delta, B]");
      sg += lg;
      pool_gap += std::fabs(static_cast<double>(rec.loss_proxy) - lg);
    }
    ++i;
  }
  if (i == 0) throw Error("dump contains no records");
  const double n = static_cast<double>(i);
  out.N = i;
  out.risk_m = sm / n;
  out.risk_proxy = sp / n;
  out.risk_restricted = restricted ? sg / n : 0.0;
  out.gap = gap / n;
  out.pool_gap = restricted ? pool_gap / n : 0.0;
  out.eta_token = counter.token_level();
  out.eta_sequence = counter.sequence_level();
  out.from_dump = true;
  return out;
}

Components to_components(const Measurements& meas, const LossConfig& loss, std::uint64_t n_cal) {
  Components c;
  c.P = meas.P;
  c.m = meas.m;
  c.k = meas.k;
  c.n_cal = n_cal;
  c.eta = meas.eta_sequence.eta();
  c.eta_sample_size = meas.eta_sequence.total;
  c.mode = meas.mode;
  const double slack = meas.from_dump ? kStoredLossSlack * loss.upper() : 0.0;
  c.gap = meas.gap + slack;
  if (meas.mode == CertMode::Exact) {
    c.risk = meas.risk_restricted + slack;
  } else {
    c.risk = meas.risk_proxy + c.eta * loss.upper() + slack;
  }
  return c;
}

// ---------------------------------------------------------------------------

void write_toy_dump(const Predictor& model, const SaeModel& sae, std::span<const std::vector<TokenId>> sequences,
                    const std::string& ssda_path, const DumpOptions& opt, const ConceptPool* pool,
                    const std::string& ssdl_path) {
  if (sequences.empty()) throw Error("nothing to dump");
  check_compatible(model, sae);
  const LossConfig loss(opt.alpha, model.vocab_size());
  SsdaHeader header;
  header.d = static_cast<std::uint32_t>(sae.input_dim());
  header.m = static_cast<std::uint32_t>(sae.dict_size());
  header.vocab = static_cast<std::uint32_t>(model.vocab_size());
  header.T = static_cast<std::uint32_t>(sequences.front().size());
  header.J = std::min<std::uint32_t>(opt.J, header.m);
  header.n_records = sequences.size();
  header.flags = sae.conventions();
  header.alpha = opt.alpha;

  SsdaWriter writer(ssda_path, header);
  std::vector<float> restricted;
  SsdaRecord rec;
  for (const auto& seq : sequences) {
    if (seq.size() != header.T) throw DimensionError("all dumped sequences must share one length T");
    const SequenceEval ev = evaluate_sequence(model, sae, pool, seq, loss);
    rec.tokens = seq;
    rec.entries.clear();
    for (const auto& h : model.hidden_states(seq)) {
      const auto top = top_entries(sae.encode(h), header.J);
      rec.entries.insert(rec.entries.end(), top.begin(), top.end());
    }
    rec.position_loss_m.assign(ev.position_loss_m.begin(), ev.position_loss_m.end());
    rec.position_loss_proxy.assign(ev.position_loss_proxy.begin(), ev.position_loss_proxy.end());
    rec.loss_m = static_cast<float>(ev.loss_m);
    rec.loss_proxy = static_cast<float>(ev.loss_proxy);
    writer.write(rec);
    if (pool) restricted.push_back(static_cast<float>(*ev.loss_restricted));
  }
  writer.finish();
  if (pool && !ssdl_path.empty()) write_ssdl(ssdl_path, restricted);
}

// ---------------------------------------------------------------------------

std::vector<Vec> collect_hidden(const Predictor& model, std::span<const TokenId> corpus, std::size_t positions,
                                std::uint64_t seed) {
  const std::size_t T = model.context_length();
  const std::size_t n = (positions + T - 1) / T;
  std::vector<Vec> out;
  out.reserve(n * T);
  for (const auto& seq : sample_sequences(corpus, T, n, seed, false)) {
    for (auto& h : model.hidden_states(seq)) out.push_back(std::move(h));
  }
  out.resize(std::min(out.size(), positions));
  return out;
}

const TokenRange& CorpusSplits::get(const std::string& name) const {
  if (name == "train") return train;
  if (name == "calibration") return calibration;
  if (name == "evaluation") return evaluation;
  if (name == "truth") return truth;
  throw Error("unknown split '" + name + "' (expected train, calibration, evaluation or truth)");
}

CorpusSplits toy_splits(std::size_t length) {
  const double weights[] = {0.5, 0.1, 0.15, 0.25};
  const auto r = split_ranges(length, weights);
  return {r[0], r[1], r[2], r[3]};
}

ToyPipeline build_toy_pipeline(const ToyPipelineConfig& cfg) {
  const std::string alphabet = lowercase_alphabet();
  const MarkovSource source(alphabet.size(), cfg.branching, cfg.source_seed);
  return build_toy_pipeline(cfg, source.generate(cfg.corpus_length, cfg.source_seed + 1), Vocabulary(alphabet));
}

ToyPipeline build_toy_pipeline(const ToyPipelineConfig& cfg, std::vector<TokenId> corpus, Vocabulary vocab) {
  ToyPipeline p;
  p.corpus = std::move(corpus);
  p.vocab = std::move(vocab);
  const CorpusSplits splits = toy_splits(p.corpus.size());
  p.train = splits.train;
  p.calibration = splits.calibration;
  p.evaluation = splits.evaluation;
  p.truth = splits.truth;
  p.loss = LossConfig(cfg.alpha, p.vocab.size());

  ToyConfig mc = cfg.model;
  mc.seed = cfg.seed;
  p.model.emplace(train_toy(p.region(p.train), p.vocab, mc, &p.model_log));

  const std::size_t d = p.model->hidden_dim();
  const std::size_t m = cfg.sae_m ? cfg.sae_m : 4 * d;
  const std::size_t k = cfg.sae_k ? cfg.sae_k : std::max<std::size_t>(1, d / 4);
  const auto hidden = collect_hidden(*p.model, p.region(p.train), cfg.sae_positions, cfg.seed + 1);
  SaeTrainConfig sc = cfg.sae_train;
  sc.seed = cfg.seed + 2;
  p.sae.emplace(train_sae(hidden, d, m, k, sc, &p.sae_log));

  const auto cal = sample_sequences(p.region(p.calibration), mc.context_length, cfg.calibration_sequences,
                                    cfg.seed + 3, false);
  p.pool = calibrate_pool(*p.model, *p.sae, cal, cfg.tau);
  return p;
}

}  // namespace ssd
