#pragma once

#include <array>
#include <atomic>
#include <complex>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpa/dataset.hpp"
#include "lpa/fdfd.hpp"
#include "lpa/geometry.hpp"
#include "lpa/random.hpp"

namespace lpa {

// Expensive labeler contract: a pure function of (params, frequency).
// label() counts calls and optionally measures wall time. Thread-safe.
class Oracle {
 public:
  explicit Oracle(UnitCellSpec spec) : spec_(std::move(spec)) {}
  virtual ~Oracle() = default;

  virtual std::string kind() const = 0;
  virtual nlohmann::json describe() const { return {{"kind", kind()}}; }

  LabeledSample label(const ParamVector& p, FrequencyId f, bool record_time = true) const;

  const UnitCellSpec& spec() const { return spec_; }
  std::uint64_t calls() const { return calls_.load(); }
  void reset_calls() const { calls_ = 0; }

 protected:
  virtual std::complex<double> evaluate(const ParamVector& p, FrequencyId f) const = 0;

 private:
  UnitCellSpec spec_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

// t = exp(i pi sum c_k x_k) * (0.6 + 0.4 cos(pi <a, x>)) on normalized widths x.
struct AnalyticConstants {
  std::array<std::vector<double>, kFrequencyCount> c;
  std::array<std::vector<double>, kFrequencyCount> a;

  // The constants shipped with the repository (config/analytic_synthetic.json).
  static AnalyticConstants defaults(int layer_count = 10);
};

class AnalyticOracle : public Oracle {
 public:
  AnalyticOracle(UnitCellSpec spec, AnalyticConstants constants);
  std::string kind() const override { return "analytic_synthetic"; }
  nlohmann::json describe() const override;
  const AnalyticConstants& constants() const { return k_; }

  // Closed form on normalized coordinates.
  std::complex<double> value(std::span<const double> x, FrequencyId f) const;

 protected:
  std::complex<double> evaluate(const ParamVector& p, FrequencyId f) const override;

 private:
  AnalyticConstants k_;
};

// Transfer-matrix response of the laterally averaged stack, normalized like
// the FDFD labels.
class TransferMatrixOracle : public Oracle {
 public:
  using Oracle::Oracle;
  std::string kind() const override { return "transfer_matrix_synthetic"; }

 protected:
  std::complex<double> evaluate(const ParamVector& p, FrequencyId f) const override;
};

class FdfdOracle : public Oracle {
 public:
  FdfdOracle(UnitCellSpec spec, GridOptions opts);
  std::string kind() const override { return "fdfd"; }
  nlohmann::json describe() const override;
  const FdfdLabeler& labeler() const { return labeler_; }

 protected:
  std::complex<double> evaluate(const ParamVector& p, FrequencyId f) const override;

 private:
  FdfdLabeler labeler_;
};

// Exact-match table of previously computed labels.
class LookupOracle : public Oracle {
 public:
  LookupOracle(UnitCellSpec spec, LabeledSet table);
  std::string kind() const override { return "lookup"; }

 protected:
  std::complex<double> evaluate(const ParamVector& p, FrequencyId f) const override;

 private:
  LabeledSet table_;
};

// Memoizes another oracle so repeated points are solved once. Thread-safe.
class CachingOracle : public Oracle {
 public:
  explicit CachingOracle(const Oracle& inner);
  std::string kind() const override { return inner_.kind(); }
  nlohmann::json describe() const override { return inner_.describe(); }
  std::size_t cached() const;

 protected:
  std::complex<double> evaluate(const ParamVector& p, FrequencyId f) const override;

 private:
  const Oracle& inner_;
  mutable std::mutex mu_;
  mutable LabeledSet cache_;
};

struct OracleSpec {
  std::string kind = "analytic_synthetic";
  nlohmann::json settings = nlohmann::json::object();
};

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec, const UnitCellSpec& cell,
                                    const GridOptions& grid);

struct Query {
  ParamVector params;
  FrequencyId frequency = FrequencyId::Blue;
};

// Labels every query, running up to `jobs` concurrently; results are in query
// order regardless of completion order. If `sink` is given, completed rows
// are appended in query order as they become available.
std::vector<LabeledSample> label_batch(const Oracle& oracle, std::span<const Query> queries,
                                       int jobs = 1, bool record_time = true,
                                       CsvAppender* sink = nullptr);

// Uniform random in-bounds points with uniformly drawn frequency.
std::vector<Query> sample_uniform(Rng& rng, const UnitCellSpec& spec, std::size_t n);

void to_json(nlohmann::json& j, const OracleSpec& s);
void from_json(const nlohmann::json& j, OracleSpec& s);
void to_json(nlohmann::json& j, const AnalyticConstants& c);
void from_json(const nlohmann::json& j, AnalyticConstants& c);

}  // namespace lpa
