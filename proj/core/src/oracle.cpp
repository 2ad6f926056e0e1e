#include "lpa/oracle.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

#include "lpa/error.hpp"
#include "lpa/transfer_matrix.hpp"

namespace lpa {

LabeledSample Oracle::label(const ParamVector& p, FrequencyId f, bool record_time) const {
  check_bounds(p, spec_);
  const auto start = std::chrono::steady_clock::now();
  LabeledSample s;
  s.params = p;
  s.frequency = f;
  s.t = evaluate(p, f);
  ++calls_;
  if (!std::isfinite(s.t.real()) || !std::isfinite(s.t.imag()))
    throw NumericError(kind() + " oracle returned a non-finite label");
  if (record_time)
    s.solver_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

AnalyticConstants AnalyticConstants::defaults(int layer_count) {
  // Per-frequency phase slopes and amplitude-modulation directions. Shorter
  // wavelengths get faster variation.
  static const double base_c[10] = {0.42, -0.31, 0.27, -0.36, 0.18, 0.33, -0.22, 0.29, -0.15, 0.24};
  static const double base_a[10] = {0.21, 0.17, -0.26, 0.12, -0.19, 0.24, 0.14, -0.11, 0.23, -0.16};
  static const double scale[kFrequencyCount] = {2.0, 1.0, 0.5};
  AnalyticConstants k;
  for (std::size_t f = 0; f < kFrequencyCount; ++f) {
    k.c[f].resize(layer_count);
    k.a[f].resize(layer_count);
    for (int i = 0; i < layer_count; ++i) {
      k.c[f][i] = scale[f] * base_c[i % 10];
      k.a[f][i] = scale[f] * base_a[(i + 3 * static_cast<int>(f)) % 10];
    }
  }
  return k;
}

AnalyticOracle::AnalyticOracle(UnitCellSpec spec, AnalyticConstants constants)
    : Oracle(std::move(spec)), k_(std::move(constants)) {
  for (std::size_t f = 0; f < kFrequencyCount; ++f)
    if (k_.c[f].size() != static_cast<std::size_t>(this->spec().layer_count) ||
        k_.a[f].size() != static_cast<std::size_t>(this->spec().layer_count))
      throw ConfigError("analytic_synthetic: constants do not match the layer count");
}

std::complex<double> AnalyticOracle::value(std::span<const double> x, FrequencyId f) const {
  const auto& c = k_.c[index_of(f)];
  const auto& a = k_.a[index_of(f)];
  double phase = 0.0, proj = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    phase += c[i] * x[i];
    proj += a[i] * x[i];
  }
  const double amp = 0.6 + 0.4 * std::cos(std::numbers::pi * proj);
  return std::polar(amp, std::numbers::pi * phase);
}

std::complex<double> AnalyticOracle::evaluate(const ParamVector& p, FrequencyId f) const {
  return value(normalize(p, spec()), f);
}

nlohmann::json AnalyticOracle::describe() const {
  return {{"kind", kind()}, {"synthetic", true}, {"constants", k_}};
}

std::complex<double> TransferMatrixOracle::evaluate(const ParamVector& p, FrequencyId f) const {
  const auto layers = averaged_stack(spec(), p);
  return relative_transmission(layers, wavelength_nm(f), spec().n_substrate,
                               spec().n_background);
}

FdfdOracle::FdfdOracle(UnitCellSpec spec, GridOptions opts)
    : Oracle(spec), labeler_(std::move(spec), opts) {}

std::complex<double> FdfdOracle::evaluate(const ParamVector& p, FrequencyId f) const {
  return labeler_.label(p, f).t;
}

nlohmann::json FdfdOracle::describe() const {
  return {{"kind", kind()}, {"grid", labeler_.options()}};
}

LookupOracle::LookupOracle(UnitCellSpec spec, LabeledSet table)
    : Oracle(std::move(spec)), table_(std::move(table)) {}

std::complex<double> LookupOracle::evaluate(const ParamVector& p, FrequencyId f) const {
  if (const auto* row = table_.find(p, f)) return row->t;
  throw ValidationError("lookup oracle: point not in table");
}

CachingOracle::CachingOracle(const Oracle& inner) : Oracle(inner.spec()), inner_(inner) {}

std::size_t CachingOracle::cached() const {
  std::lock_guard lock(mu_);
  return cache_.size();
}

std::complex<double> CachingOracle::evaluate(const ParamVector& p, FrequencyId f) const {
  {
    std::lock_guard lock(mu_);
    if (const auto* row = cache_.find(p, f)) return row->t;
  }
  LabeledSample s = inner_.label(p, f, false);
  std::lock_guard lock(mu_);
  if (!cache_.contains(p, f)) cache_.add(s);
  return s.t;
}

std::unique_ptr<Oracle> make_oracle(const OracleSpec& s, const UnitCellSpec& cell,
                                    const GridOptions& grid) {
  if (s.kind == "analytic_synthetic") {
    AnalyticConstants k = s.settings.contains("constants")
                              ? s.settings.at("constants").get<AnalyticConstants>()
                              : AnalyticConstants::defaults(cell.layer_count);
    return std::make_unique<AnalyticOracle>(cell, std::move(k));
  }
  if (s.kind == "transfer_matrix_synthetic") return std::make_unique<TransferMatrixOracle>(cell);
  if (s.kind == "fdfd") return std::make_unique<FdfdOracle>(cell, grid);
  if (s.kind == "lookup") {
    if (!s.settings.contains("table")) throw ConfigError("lookup oracle needs settings.table");
    return std::make_unique<LookupOracle>(
        cell, read_csv(std::filesystem::path(s.settings.at("table").get<std::string>())));
  }
  throw ConfigError("unknown oracle kind '" + s.kind + "'");
}

std::vector<LabeledSample> label_batch(const Oracle& oracle, std::span<const Query> queries,
                                       int jobs, bool record_time, CsvAppender* sink) {
  const std::size_t n = queries.size();
  std::vector<LabeledSample> out(n);
  std::vector<char> done(n, 0);
  std::size_t flushed = 0;
  std::size_t next = 0;
  std::exception_ptr failure;
  std::mutex mu;

  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (failure || next >= n) return;
        i = next++;
      }
      try {
        LabeledSample s = oracle.label(queries[i].params, queries[i].frequency, record_time);
        std::lock_guard lock(mu);
        out[i] = std::move(s);
        done[i] = 1;
        while (flushed < n && done[flushed]) {
          if (sink) sink->append(out[flushed]);
          ++flushed;
        }
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<Query> sample_uniform(Rng& rng, const UnitCellSpec& spec, std::size_t n) {
  std::vector<Query> q(n);
  for (auto& item : q) {
    item.params.widths.resize(spec.layer_count);
    for (double& w : item.params.widths) w = uniform(rng, spec.width_min, spec.width_max);
    item.frequency = kAllFrequencies[uniform_index(rng, kFrequencyCount)];
  }
  return q;
}

void to_json(nlohmann::json& j, const OracleSpec& s) {
  j = nlohmann::json{{"kind", s.kind}, {"settings", s.settings}};
}

void from_json(const nlohmann::json& j, OracleSpec& s) {
  s = OracleSpec{};
  if (j.is_string()) {
    s.kind = j.get<std::string>();
    return;
  }
  if (j.contains("kind")) j.at("kind").get_to(s.kind);
  if (j.contains("settings")) s.settings = j.at("settings");
}

void to_json(nlohmann::json& j, const AnalyticConstants& c) {
  j = nlohmann::json::object();
  for (auto f : kAllFrequencies)
    j[std::string(frequency_name(f))] = {{"c", c.c[index_of(f)]}, {"a", c.a[index_of(f)]}};
}

void from_json(const nlohmann::json& j, AnalyticConstants& c) {
  for (auto f : kAllFrequencies) {
    const auto& e = j.at(std::string(frequency_name(f)));
    e.at("c").get_to(c.c[index_of(f)]);
    e.at("a").get_to(c.a[index_of(f)]);
  }
}

}  // namespace lpa
