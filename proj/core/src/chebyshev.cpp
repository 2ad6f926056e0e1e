#include "lpa/chebyshev.hpp"

#include <cmath>
#include <numbers>

#include "lpa/error.hpp"

namespace lpa {

std::vector<double> chebyshev_nodes(int n) {
  if (n < 1) throw ConfigError("chebyshev: n must be >= 1");
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    x[static_cast<std::size_t>(k)] = std::cos(std::numbers::pi * (k + 0.5) / n);
    if (std::abs(x[static_cast<std::size_t>(k)]) < 1e-15) x[static_cast<std::size_t>(k)] = 0.0;
  }
  return x;
}

std::size_t tensor_size(int n, int d, std::size_t capacity) {
  if (n < 1 || d < 1) throw ConfigError("chebyshev: n and d must be >= 1");
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) {
    if (total > capacity / static_cast<std::size_t>(n))
      throw CapacityError("chebyshev: " + std::to_string(n) + "^" + std::to_string(d) +
                          " nodes exceed the capacity of " + std::to_string(capacity));
    total *= static_cast<std::size_t>(n);
  }
  return total;
}

std::vector<std::vector<double>> tensor_nodes(int n, int d, std::size_t capacity) {
  const std::size_t total = tensor_size(n, d, capacity);
  const auto x = chebyshev_nodes(n);
  std::vector<std::vector<double>> pts(total, std::vector<double>(static_cast<std::size_t>(d)));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t r = idx;
    for (int a = d - 1; a >= 0; --a) {
      pts[idx][static_cast<std::size_t>(a)] = x[r % static_cast<std::size_t>(n)];
      r /= static_cast<std::size_t>(n);
    }
  }
  return pts;
}

ChebCoeffs cheb_fit(int n, int d, std::span<const double> values, std::size_t capacity) {
  const std::size_t total = tensor_size(n, d, capacity);
  if (values.size() != total)
    throw ConfigError("chebyshev fit: expected " + std::to_string(total) + " values, got " +
                      std::to_string(values.size()));
  // DCT-II matrix: c_j = (2 - [j == 0]) / n * sum_k f_k cos(pi j (k + 1/2) / n)
  std::vector<double> m(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      m[static_cast<std::size_t>(j) * n + k] =
          (j == 0 ? 1.0 : 2.0) / n * std::cos(std::numbers::pi * j * (k + 0.5) / n);
  ChebCoeffs out{n, d, std::vector<double>(values.begin(), values.end())};
  std::vector<double> buf(static_cast<std::size_t>(n));
  std::size_t inner = total;
  for (int a = 0; a < d; ++a) {
    inner /= static_cast<std::size_t>(n);
    const std::size_t outer = total / (inner * n);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int k = 0; k < n; ++k)
            acc += m[static_cast<std::size_t>(j) * n + k] * out.c[base + static_cast<std::size_t>(k) * inner];
          buf[static_cast<std::size_t>(j)] = acc;
        }
        for (int j = 0; j < n; ++j) out.c[base + static_cast<std::size_t>(j) * inner] = buf[static_cast<std::size_t>(j)];
      }
  }
  return out;
}

double ChebCoeffs::eval(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(d)) throw ConfigError("chebyshev eval: wrong dimension");
  for (double v : x)
    if (!(v >= -1.0 && v <= 1.0)) throw DomainError("chebyshev eval: point outside [-1, 1]^d");
  // Contract the last axis first with Clenshaw's recurrence.
  std::vector<double> cur = c;
  for (int a = d - 1; a >= 0; --a) {
    const double xa = x[static_cast<std::size_t>(a)];
    const std::size_t outer = cur.size() / static_cast<std::size_t>(n);
    std::vector<double> next(outer);
    for (std::size_t o = 0; o < outer; ++o) {
      const double* coef = cur.data() + o * n;
      double b1 = 0.0, b2 = 0.0;
      for (int k = n - 1; k >= 1; --k) {
        const double b0 = coef[k] + 2.0 * xa * b1 - b2;
        b2 = b1;
        b1 = b0;
      }
      next[o] = coef[0] + xa * b1 - b2;
    }
    cur = std::move(next);
  }
  return cur[0];
}

ChebSurrogate::ChebSurrogate(UnitCellSpec spec, int n, int d)
    : spec_(std::move(spec)), n_(n), d_(d) {
  spec_.validate();
  if (d < 1 || d > spec_.layer_count)
    throw ConfigError("chebyshev: free dimensions must be in 1..layer_count");
  tensor_size(n, d);
}

std::size_t ChebSurrogate::node_count() const { return tensor_size(n_, d_); }

std::vector<ParamVector> ChebSurrogate::node_params() const {
  const auto nodes = tensor_nodes(n_, d_);
  std::vector<ParamVector> out;
  out.reserve(nodes.size());
  std::vector<double> x(static_cast<std::size_t>(spec_.layer_count), 0.0);
  for (const auto& node : nodes) {
    std::copy(node.begin(), node.end(), x.begin());
    out.push_back(denormalize(x, spec_));
  }
  return out;
}

void ChebSurrogate::set(FrequencyId f, ChebCoeffs re, ChebCoeffs im) {
  if (re.n != n_ || re.d != d_ || im.n != n_ || im.d != d_)
    throw ConfigError("chebyshev: coefficient shape mismatch");
  parts_[f] = {std::move(re), std::move(im)};
}

std::complex<double> ChebSurrogate::predict(const ParamVector& p, FrequencyId f) const {
  const auto it = parts_.find(f);
  if (it == parts_.end())
    throw DomainError("chebyshev: frequency " + std::string(frequency_name(f)) + " not fitted");
  const auto x = normalize(p, spec_);
  for (std::size_t k = static_cast<std::size_t>(d_); k < x.size(); ++k)
    if (std::abs(x[k]) > 1e-12) throw DomainError("chebyshev: held width off its midpoint");
  const std::span<const double> head(x.data(), static_cast<std::size_t>(d_));
  return {it->second.first.eval(head), it->second.second.eval(head)};
}

ChebSurrogate ChebSurrogate::fit(const Oracle& oracle, int n, int d,
                                 std::span<const FrequencyId> frequencies, int jobs,
                                 LabeledSet* labels) {
  ChebSurrogate s(oracle.spec(), n, d);
  const auto params = s.node_params();
  for (FrequencyId f : frequencies) {
    std::vector<Query> q;
    q.reserve(params.size());
    for (const auto& p : params) q.push_back({p, f});
    const auto rows = label_batch(oracle, q, jobs, false);
    std::vector<double> re, im;
    re.reserve(rows.size());
    im.reserve(rows.size());
    for (const auto& r : rows) {
      re.push_back(r.t.real());
      im.push_back(r.t.imag());
      if (labels) {
        LabeledSample row = r;
        row.source = Provenance::Node;
        labels->add(std::move(row));
      }
    }
    s.set(f, cheb_fit(n, d, re), cheb_fit(n, d, im));
  }
  return s;
}

nlohmann::json ChebSurrogate::to_json() const {
  nlohmann::json parts = nlohmann::json::object();
  for (const auto& [f, c] : parts_)
    parts[std::string(frequency_name(f))] = {{"re", c.first}, {"im", c.second}};
  return {{"format", "lpa-chebyshev"}, {"version", 1}, {"unit_cell", spec_},
          {"points_per_dim", n_},      {"free_dims", d_}, {"parts", parts}};
}

ChebSurrogate ChebSurrogate::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lpa-chebyshev") throw ConfigError("not an lpa-chebyshev file");
  ChebSurrogate s(j.at("unit_cell").get<UnitCellSpec>(), j.at("points_per_dim").get<int>(),
                  j.at("free_dims").get<int>());
  for (const auto& [name, c] : j.at("parts").items())
    s.set(frequency_from_name(name), c.at("re").get<ChebCoeffs>(), c.at("im").get<ChebCoeffs>());
  return s;
}

std::vector<Query> sample_subspace(Rng& rng, const UnitCellSpec& spec, int d, std::size_t n,
                                   std::span<const FrequencyId> frequencies) {
  if (frequencies.empty()) throw ConfigError("sample_subspace: no frequencies");
  std::vector<Query> out(n);
  std::vector<double> x(static_cast<std::size_t>(spec.layer_count), 0.0);
  for (auto& q : out) {
    for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(k)] = uniform(rng, -1.0, 1.0);
    q.params = denormalize(x, spec);
    q.frequency = frequencies[uniform_index(rng, frequencies.size())];
  }
  return out;
}

void to_json(nlohmann::json& j, const ChebCoeffs& c) {
  j = nlohmann::json{{"n", c.n}, {"d", c.d}, {"shape", std::vector<int>(static_cast<std::size_t>(c.d), c.n)},
                     {"coefficients", c.c}};
}

void from_json(const nlohmann::json& j, ChebCoeffs& c) {
  j.at("n").get_to(c.n);
  j.at("d").get_to(c.d);
  j.at("coefficients").get_to(c.c);
  if (c.c.size() != tensor_size(c.n, c.d)) throw ConfigError("chebyshev: coefficient count mismatch");
}

}  // namespace lpa
