// Python bindings: certificate assembly, hypothesis counting and the
// SSDA / SSDL / SSDP file interfaces shared with external exporters.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>
#include <string>

#include "ssd/bound.hpp"
#include "ssd/config.hpp"
#include "ssd/ingest.hpp"
#include "ssd/pool.hpp"

namespace py = pybind11;
using namespace ssd;

namespace {

py::dict report_dict(const BoundReport& r) {
  py::dict d;
  d["m"] = r.m;
  d["P"] = r.P;
  d["k"] = r.k;
  d["N"] = r.N;
  d["n_cal"] = r.n_cal;
  d["delta"] = r.delta;
  d["alpha"] = r.alpha;
  d["vocab"] = r.vocab;
  d["B"] = r.B;
  d["width"] = r.width;
  d["mode"] = r.mode == CertMode::Exact ? "exact" : "conservative";
  d["eta"] = r.eta;
  d["ln_count"] = r.ln_count;
  d["ssd"] = r.ssd;
  d["risk"] = r.risk;
  d["gap"] = r.gap;
  d["mismatch"] = r.mismatch;
  d["complexity"] = r.complexity;
  d["concentration"] = r.concentration;
  d["total"] = r.total;
  d["baseline"] = r.baseline;
  d["vacuous"] = r.vacuous;
  d["text"] = r.to_text();
  d["json"] = r.to_json();
  return d;
}

py::dict certify(double risk, double gap, std::uint64_t P, std::uint64_t m, std::size_t vocab, std::uint64_t N,
                 std::optional<double> eta, std::optional<double> mismatch, double alpha, double delta,
                 std::uint64_t k, std::uint64_t n_cal, const std::string& mode, bool exact_count, bool union_over_p,
                 bool gap_range_width) {
  if (eta.has_value() == mismatch.has_value()) throw py::value_error("give exactly one of eta and mismatch");
  Components c;
  c.risk = risk;
  c.gap = gap;
  c.eta = eta.value_or(0.0);
  c.mismatch_bits = mismatch;
  c.P = P;
  c.m = m;
  c.k = k;
  c.n_cal = n_cal;
  if (mode == "exact") c.mode = CertMode::Exact;
  else if (mode == "conservative") c.mode = CertMode::Conservative;
  else throw py::value_error("mode must be 'exact' or 'conservative'");
  BoundOptions opt;
  opt.delta = delta;
  opt.exact_count = exact_count;
  opt.union_over_p = union_over_p;
  opt.gap_range_width = gap_range_width;
  return report_dict(assemble(c, LossConfig(alpha, vocab), N, opt));
}

template <class T>
py::array_t<T> array(std::vector<std::size_t> shape) {
  return py::array_t<T>(std::vector<py::ssize_t>(shape.begin(), shape.end()));
}

py::dict read_ssda_arrays(const std::string& path) {
  SsdaReader reader(path);
  const auto h = reader.header();
  const std::size_t N = h.n_records, T = h.T, J = h.J;
  auto tokens = array<std::uint32_t>({N, T});
  auto index = array<std::uint32_t>({N, T, J});
  auto value = array<float>({N, T, J});
  auto pos_m = array<float>({N, T}), pos_proxy = array<float>({N, T});
  auto loss_m = array<float>({N}), loss_proxy = array<float>({N});
  SsdaRecord rec;
  for (std::size_t n = 0; reader.next(rec); ++n) {
    std::memcpy(tokens.mutable_data(n), rec.tokens.data(), T * 4);
    for (std::size_t e = 0; e < T * J; ++e) {
      index.mutable_data(n)[e] = rec.entries[e].index;
      value.mutable_data(n)[e] = rec.entries[e].value;
    }
    std::memcpy(pos_m.mutable_data(n), rec.position_loss_m.data(), T * 4);
    std::memcpy(pos_proxy.mutable_data(n), rec.position_loss_proxy.data(), T * 4);
    loss_m.mutable_at(n) = rec.loss_m;
    loss_proxy.mutable_at(n) = rec.loss_proxy;
  }
  py::dict header;
  header["version"] = h.version;
  header["d"] = h.d;
  header["m"] = h.m;
  header["V"] = h.vocab;
  header["T"] = h.T;
  header["J"] = h.J;
  header["N"] = h.n_records;
  header["flags"] = h.flags;
  header["alpha"] = h.alpha;
  py::dict d;
  d["header"] = header;
  d["tokens"] = tokens;
  d["index"] = index;
  d["value"] = value;
  d["position_loss_m"] = pos_m;
  d["position_loss_proxy"] = pos_proxy;
  d["loss_m"] = loss_m;
  d["loss_proxy"] = loss_proxy;
  return d;
}

using U32 = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

void write_ssda_arrays(const std::string& path, std::uint32_t d, std::uint32_t m, std::uint32_t vocab,
                       std::uint32_t flags, double alpha, U32 tokens, U32 index, F32 value, F32 pos_m, F32 pos_proxy,
                       F32 loss_m, F32 loss_proxy) {
  if (tokens.ndim() != 2 || index.ndim() != 3) throw py::value_error("tokens must be (N, T), index (N, T, J)");
  const std::size_t N = tokens.shape(0), T = tokens.shape(1), J = index.shape(2);
  auto same = [](const py::array& a, std::vector<std::size_t> s) {
    if (static_cast<std::size_t>(a.ndim()) != s.size()) return false;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<std::size_t>(a.shape(i)) != s[i]) return false;
    return true;
  };
  if (!same(index, {N, T, J}) || !same(value, {N, T, J}) || !same(pos_m, {N, T}) || !same(pos_proxy, {N, T}) ||
      !same(loss_m, {N}) || !same(loss_proxy, {N}))
    throw py::value_error("array shapes disagree");
  SsdaHeader h;
  h.d = d;
  h.m = m;
  h.vocab = vocab;
  h.T = static_cast<std::uint32_t>(T);
  h.J = static_cast<std::uint32_t>(J);
  h.n_records = N;
  h.flags = flags;
  h.alpha = alpha;
  SsdaWriter w(path, h);
  SsdaRecord rec;
  for (std::size_t n = 0; n < N; ++n) {
    rec.tokens.assign(tokens.data(n), tokens.data(n) + T);
    rec.entries.resize(T * J);
    for (std::size_t e = 0; e < T * J; ++e) rec.entries[e] = {index.data(n)[e], value.data(n)[e]};
    rec.position_loss_m.assign(pos_m.data(n), pos_m.data(n) + T);
    rec.position_loss_proxy.assign(pos_proxy.data(n), pos_proxy.data(n) + T);
    rec.loss_m = loss_m.at(n);
    rec.loss_proxy = loss_proxy.at(n);
    w.write(rec);
  }
  w.finish();
}

}  // namespace

PYBIND11_MODULE(_ssd, mod) {
  mod.doc() = "Sparse semantic dimension certificates";

  // Translators are tried newest first, so the base class goes first.
  py::register_exception<Error>(mod, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(mod, "FormatError", PyExc_ValueError);
  py::register_exception<DimensionError>(mod, "DimensionError", PyExc_ValueError);

  mod.def("version", &version);
  mod.def("certify", &certify, py::kw_only(), py::arg("risk"), py::arg("gap"), py::arg("P"), py::arg("m"),
          py::arg("V"), py::arg("N"), py::arg("eta") = py::none(), py::arg("mismatch") = py::none(),
          py::arg("alpha") = 0.5, py::arg("delta") = 0.05, py::arg("k") = 0, py::arg("n_cal") = 0,
          py::arg("mode") = "exact", py::arg("exact_count") = false, py::arg("union_over_p") = false,
          py::arg("gap_range_width") = false, "Assembles the certificate from measured components.");
  mod.def(
      "ln_hypothesis_count",
      [](std::uint64_t m, std::uint64_t P) {
        const auto c = ln_hypothesis_count(m, P);
        return py::make_tuple(c.upper, c.exact);
      },
      py::arg("m"), py::arg("P"), "(P ln(e m / P), ln C(m, P)) in nats.");
  mod.def(
      "fnv1a64", [](py::bytes b) {
        const std::string s = b;
        return fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
      },
      py::arg("data"));

  mod.def("read_ssda", &read_ssda_arrays, py::arg("path"), "Reads and validates an SSDA dump into arrays.");
  mod.def("write_ssda", &write_ssda_arrays, py::arg("path"), py::kw_only(), py::arg("d"), py::arg("m"),
          py::arg("V"), py::arg("flags"), py::arg("alpha"), py::arg("tokens"), py::arg("index"), py::arg("value"),
          py::arg("position_loss_m"), py::arg("position_loss_proxy"), py::arg("loss_m"), py::arg("loss_proxy"));
  mod.def(
      "read_ssdl", [](const std::string& p) { return py::array_t<float>(py::cast(read_ssdl(p))); }, py::arg("path"));
  mod.def(
      "write_ssdl", [](const std::string& p, F32 losses) {
        write_ssdl(p, std::span<const float>(losses.data(), static_cast<std::size_t>(losses.size())));
      },
      py::arg("path"), py::arg("losses"));
  mod.def(
      "read_pool",
      [](const std::string& p) {
        const auto pool = peek_magic(p) == "SSDP" ? ConceptPool::load_binary(p) : ConceptPool::load_text(p);
        py::dict d;
        d["m"] = pool.dict_size();
        d["members"] = pool.members();
        d["tau"] = pool.tau();
        d["n_cal"] = pool.n_cal();
        d["granularity"] = to_string(pool.granularity());
        return d;
      },
      py::arg("path"));
  mod.def(
      "write_pool",
      [](const std::string& p, std::size_t m, std::vector<FeatureId> members, std::uint64_t n_cal, std::uint64_t tau,
         bool binary) {
        const ConceptPool pool(m, std::move(members), {}, n_cal, tau, Granularity::Sequence);
        if (binary) pool.save_binary(p);
        else pool.save_text(p);
      },
      py::arg("path"), py::arg("m"), py::arg("members"), py::arg("n_cal") = 0, py::arg("tau") = 1,
      py::arg("binary") = true);
}
