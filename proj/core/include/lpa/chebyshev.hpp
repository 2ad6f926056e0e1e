#pragma once

#include <complex>
#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "json.hpp"
#include "lpa/geometry.hpp"
#include "lpa/oracle.hpp"

namespace lpa {

inline constexpr std::size_t kDefaultChebCapacity = 1u << 20;  // 4^10 nodes

// Chebyshev-Gauss points cos(pi (k + 1/2) / n), k = 0..n-1.
std::vector<double> chebyshev_nodes(int n);

// Full tensor product in lexicographic order (axis 0 varies slowest).
// Throws CapacityError if n^d exceeds `capacity`.
std::vector<std::vector<double>> tensor_nodes(int n, int d,
                                              std::size_t capacity = kDefaultChebCapacity);
std::size_t tensor_size(int n, int d, std::size_t capacity = kDefaultChebCapacity);

struct ChebCoeffs {
  int n = 0;
  int d = 0;
  std::vector<double> c;  // n^d, same ordering as tensor_nodes

  // Throws DomainError outside [-1, 1]^d.
  double eval(std::span<const double> x) const;
  bool operator==(const ChebCoeffs&) const = default;
};

// Values listed in tensor_nodes order.
ChebCoeffs cheb_fit(int n, int d, std::span<const double> values,
                    std::size_t capacity = kDefaultChebCapacity);

// Complex-valued interpolant over the first `d` normalized widths, the other
// widths held at the midpoint; one interpolant per fitted frequency with Re
// and Im fitted separately.
class ChebSurrogate {
 public:
  ChebSurrogate() = default;
  ChebSurrogate(UnitCellSpec spec, int n, int d);

  const UnitCellSpec& spec() const { return spec_; }
  int points_per_dim() const { return n_; }
  int free_dims() const { return d_; }
  std::size_t node_count() const;  // per frequency

  // Unit-cell parameters of every node for one frequency, in node order.
  std::vector<ParamVector> node_params() const;
  void set(FrequencyId f, ChebCoeffs re, ChebCoeffs im);
  bool has(FrequencyId f) const { return parts_.count(f) > 0; }

  // Throws DomainError if the frequency was not fitted or any held width is
  // off its midpoint.
  std::complex<double> predict(const ParamVector& p, FrequencyId f) const;

  // Labels every node with the oracle and fits the listed frequencies.
  static ChebSurrogate fit(const Oracle& oracle, int n, int d,
                           std::span<const FrequencyId> frequencies, int jobs = 1,
                           LabeledSet* labels = nullptr);

  nlohmann::json to_json() const;
  static ChebSurrogate from_json(const nlohmann::json& j);

 private:
  UnitCellSpec spec_;
  int n_ = 0;
  int d_ = 0;
  std::map<FrequencyId, std::pair<ChebCoeffs, ChebCoeffs>> parts_;
};

// Uniform random points in the interpolant's subspace (held widths at the
// midpoint).
std::vector<Query> sample_subspace(Rng& rng, const UnitCellSpec& spec, int d, std::size_t n,
                                   std::span<const FrequencyId> frequencies);

void to_json(nlohmann::json& j, const ChebCoeffs& c);
void from_json(const nlohmann::json& j, ChebCoeffs& c);

}  // namespace lpa
