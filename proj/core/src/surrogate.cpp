#include "lpa/surrogate.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <mutex>
#include <fstream>
#include <thread>

#include "lpa/error.hpp"
#include "lpa/random.hpp"

namespace lpa {

PooledPrediction pool(std::span<const MemberPrediction> members) {
  if (members.empty()) throw ConfigError("pool: no members");
  const std::size_t n = members.size();
  const double inv = 1.0 / static_cast<double>(n);
  // Sums run in sorted order so that the result is exactly permutation invariant.
  std::array<double, 32> buf_mu, buf_s2;
  std::vector<double> heap_mu, heap_s2;
  std::span<double> mus, s2s;
  if (n <= buf_mu.size()) {
    mus = {buf_mu.data(), n};
    s2s = {buf_s2.data(), n};
  } else {
    heap_mu.resize(n);
    heap_s2.resize(n);
    mus = heap_mu;
    s2s = heap_s2;
  }
  for (std::size_t i = 0; i < n; ++i) {
    mus[i] = members[i].mu;
    s2s[i] = members[i].sigma * members[i].sigma;
  }
  std::sort(mus.begin(), mus.end());
  std::sort(s2s.begin(), s2s.end());
  double mu = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += mus[i];
    s2 += s2s[i];
  }
  mu *= inv;
  double spread = 0.0;
  for (double m : mus) spread += (m - mu) * (m - mu);
  // Same value as mean(sigma^2 + mu^2) - mu^2 without the cancellation.
  return {mu, s2 * inv + spread * inv};
}

void EnsembleConfig::validate() const {
  if (members < 2) throw ConfigError("ensemble: at least 2 members per part are required");
  train.validate();
}

double acquisition_score(const SurrogatePrediction& p) { return p.var_re + p.var_im; }

double fractional_error(std::span<const std::complex<double>> u,
                        std::span<const std::complex<double>> v) {
  if (u.size() != v.size() || v.empty())
    throw ConfigError("fractional_error: vectors must have equal nonzero length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    num += std::norm(u[i] - v[i]);
    den += std::norm(v[i]);
  }
  if (den == 0.0) throw NumericError("fractional_error: truth vector has zero norm");
  return std::sqrt(num / den);
}

double fractional_error(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size() || v.empty())
    throw ConfigError("fractional_error: vectors must have equal nonzero length");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    num += (u[i] - v[i]) * (u[i] - v[i]);
    den += v[i] * v[i];
  }
  if (den == 0.0) throw NumericError("fractional_error: truth vector has zero norm");
  return std::sqrt(num / den);
}

Ensemble::Ensemble(UnitCellSpec spec, EnsembleConfig cfg) : spec_(std::move(spec)), cfg_(std::move(cfg)) {
  spec_.validate();
  cfg_.architecture.input_dim = static_cast<int>(input_dimension(spec_));
  cfg_.validate();
  auto make = [&](std::string_view part, std::vector<EnsembleMember>& out) {
    for (int i = 0; i < cfg_.members; ++i) {
      EnsembleMember m;
      m.seed = derive_seed(cfg_.seed, part, static_cast<std::uint64_t>(i));
      m.net = Mlp::initialized(cfg_.architecture, derive_seed(m.seed, "init"));
      out.push_back(std::move(m));
    }
  };
  make("re", re_);
  make("im", im_);
}

Eigen::MatrixXd encode_batch(std::span<const ParamVector> p, std::span<const FrequencyId> f,
                             const UnitCellSpec& spec) {
  if (p.size() != f.size()) throw ConfigError("encode_batch: size mismatch");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(input_dimension(spec)),
                    static_cast<Eigen::Index>(p.size()));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const auto v = encode_input(p[k], f[k], spec);
    x.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(v.data(), x.rows());
  }
  return x;
}

void Ensemble::fit(const LabeledSet& data, int jobs) {
  if (data.empty()) throw ConfigError("ensemble fit: empty training set");
  std::vector<ParamVector> p;
  std::vector<FrequencyId> f;
  Eigen::VectorXd y_re(static_cast<Eigen::Index>(data.size()));
  Eigen::VectorXd y_im(y_re.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    p.push_back(data[k].params);
    f.push_back(data[k].frequency);
    y_re[static_cast<Eigen::Index>(k)] = data[k].t.real();
    y_im[static_cast<Eigen::Index>(k)] = data[k].t.imag();
  }
  const Eigen::MatrixXd x = encode_batch(p, f, spec_);

  std::vector<std::pair<EnsembleMember*, const Eigen::VectorXd*>> work;
  for (auto& m : re_) work.push_back({&m, &y_re});
  for (auto& m : im_) work.push_back({&m, &y_im});
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i; (i = next++) < work.size();) {
      EnsembleMember& m = *work[i].first;
      TrainConfig tc = cfg_.train;
      tc.seed = derive_seed(m.seed, "shuffle", static_cast<std::uint64_t>(m.rounds));
      m.net = train(std::move(m.net), x, *work[i].second, tc);
      ++m.rounds;
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(work.size()));
  if (threads == 1) {
    run();
  } else {
    // Errors inside workers terminate; training only throws on non-finite
    // gradients, which we surface by checking afterwards.
    std::vector<std::jthread> pool;
    std::atomic<bool> failed{false};
    std::string message;
    std::mutex mu;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        try {
          run();
        } catch (const std::exception& e) {
          std::lock_guard lock(mu);
          if (!failed.exchange(true)) message = e.what();
          next = work.size();
        }
      });
    pool.clear();
    if (failed) throw NumericError(message);
  }
}

std::vector<SurrogatePrediction> Ensemble::predict_encoded(const Eigen::MatrixXd& x,
                                                           PredictionGradient* grad) const {
  const Eigen::Index n = x.cols();
  const int J = cfg_.members;
  const bool want_grad = grad != nullptr;
  const int L = spec_.layer_count;
  std::vector<SurrogatePrediction> out(static_cast<std::size_t>(n));

  auto part = [&](const std::vector<EnsembleMember>& members, bool re, Eigen::MatrixXd* gmu,
                  Eigen::MatrixXd* gvar) {
    std::vector<BatchOutput> outs;
    outs.reserve(members.size());
    for (const auto& m : members) outs.push_back(m.net.forward_batch(x, want_grad));
    std::vector<MemberPrediction> mp(static_cast<std::size_t>(J));
    if (want_grad) {
      gmu->setZero(L, n);
      gvar->setZero(L, n);
    }
    for (Eigen::Index k = 0; k < n; ++k) {
      for (int i = 0; i < J; ++i) mp[static_cast<std::size_t>(i)] = {outs[i].mu[k], outs[i].sigma[k]};
      const PooledPrediction pp = pool(mp);
      SurrogatePrediction& s = out[static_cast<std::size_t>(k)];
      (re ? s.mu_re : s.mu_im) = pp.mu;
      (re ? s.var_re : s.var_im) = pp.var;
      if (want_grad) {
        // d var* = mean(2 sigma_i d sigma_i + 2 mu_i d mu_i) - 2 mu* d mu*
        for (int i = 0; i < J; ++i) {
          const auto dmu = outs[i].dmu.col(k).head(L);
          const auto dsig = outs[i].dsigma.col(k).head(L);
          gmu->col(k) += dmu / J;
          gvar->col(k) += (2.0 / J) * (outs[i].sigma[k] * dsig + outs[i].mu[k] * dmu);
        }
        gvar->col(k) -= 2.0 * pp.mu * gmu->col(k);
      }
    }
  };
  part(re_, true, want_grad ? &grad->mu_re : nullptr, want_grad ? &grad->var_re : nullptr);
  part(im_, false, want_grad ? &grad->mu_im : nullptr, want_grad ? &grad->var_im : nullptr);
  return out;
}

SurrogatePrediction Ensemble::predict(const ParamVector& p, FrequencyId f) const {
  return predict(std::span<const ParamVector>(&p, 1), std::span<const FrequencyId>(&f, 1))[0];
}

std::vector<SurrogatePrediction> Ensemble::predict(std::span<const ParamVector> p,
                                                   std::span<const FrequencyId> f) const {
  return predict_encoded(encode_batch(p, f, spec_));
}

bool Ensemble::operator==(const Ensemble& o) const {
  auto same = [](const std::vector<EnsembleMember>& a, const std::vector<EnsembleMember>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!(a[i].net == b[i].net) || a[i].seed != b[i].seed || a[i].rounds != b[i].rounds)
        return false;
    return true;
  };
  return spec_ == o.spec_ && cfg_ == o.cfg_ && same(re_, o.re_) && same(im_, o.im_) &&
         dataset_fingerprint == o.dataset_fingerprint;
}

namespace {

// Central-difference stencil points around x (first column is x itself).
Eigen::MatrixXd hessian_stencil(std::span<const double> x, double h) {
  const auto d = static_cast<Eigen::Index>(x.size());
  const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(x.data(), d);
  Eigen::MatrixXd pts(d, 1 + 2 * d + 2 * d * (d - 1));
  Eigen::Index c = 0;
  pts.col(c++) = x0;
  for (Eigen::Index i = 0; i < d; ++i) {
    pts.col(c) = x0;
    pts(i, c++) += h;
    pts.col(c) = x0;
    pts(i, c++) -= h;
  }
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j)
      for (int si : {1, -1})
        for (int sj : {1, -1}) {
          pts.col(c) = x0;
          pts(i, c) += si * h;
          pts(j, c++) += sj * h;
        }
  return pts;
}

std::vector<double> spectrum_from_values(const Eigen::VectorXd& v, Eigen::Index d, double h) {
  Eigen::MatrixXd hess(d, d);
  const double f0 = v[0];
  for (Eigen::Index i = 0; i < d; ++i)
    hess(i, i) = (v[1 + 2 * i] - 2.0 * f0 + v[2 + 2 * i]) / (h * h);
  Eigen::Index c = 1 + 2 * d;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const double pp = v[c], pm = v[c + 1], mp = v[c + 2], mm = v[c + 3];
      c += 4;
      hess(i, j) = hess(j, i) = (pp - pm - mp + mm) / (4.0 * h * h);
    }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess, Eigen::EigenvaluesOnly);
  std::vector<double> s(es.eigenvalues().data(), es.eigenvalues().data() + d);
  for (double& e : s) e = std::abs(e);
  std::sort(s.begin(), s.end(), std::greater<>());
  return s;
}

}  // namespace

std::vector<double> hessian_spectrum(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("hessian_spectrum: step must be positive");
  const Eigen::MatrixXd pts = hessian_stencil(x, h);
  Eigen::VectorXd v(pts.cols());
  for (Eigen::Index c = 0; c < pts.cols(); ++c)
    v[c] = fn(std::span<const double>(pts.col(c).data(), static_cast<std::size_t>(pts.rows())));
  return spectrum_from_values(v, pts.rows(), h);
}

HessianSpectra hessian_spectrum(const Ensemble& e, const ParamVector& p, FrequencyId f,
                                double h) {
  if (!(h > 0.0)) throw ConfigError("hessian_spectrum: step must be positive");
  const auto x = normalize(p, e.spec());
  for (double v : x)
    if (v - h < -1.0 || v + h > 1.0)
      throw BoundsError("hessian_spectrum: point within one step of the parameter bounds");
  const Eigen::MatrixXd pts = hessian_stencil(x, h);
  const auto oh = one_hot(f);
  Eigen::MatrixXd enc(pts.rows() + static_cast<Eigen::Index>(kFrequencyCount), pts.cols());
  enc.topRows(pts.rows()) = pts;
  for (std::size_t k = 0; k < kFrequencyCount; ++k)
    enc.row(pts.rows() + static_cast<Eigen::Index>(k)).setConstant(oh[k]);
  const auto pred = e.predict_encoded(enc);
  Eigen::VectorXd vre(pts.cols()), vim(pts.cols());
  for (Eigen::Index c = 0; c < pts.cols(); ++c) {
    vre[c] = pred[static_cast<std::size_t>(c)].mu_re;
    vim[c] = pred[static_cast<std::size_t>(c)].mu_im;
  }
  return {spectrum_from_values(vre, pts.rows(), h), spectrum_from_values(vim, pts.rows(), h)};
}

nlohmann::json to_checkpoint(const Ensemble& e) {
  auto members = [&](const std::vector<EnsembleMember>& ms) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : ms) {
      nlohmann::json j = to_checkpoint(m.net, m.seed, e.config().train);
      j["rounds"] = m.rounds;
      arr.push_back(std::move(j));
    }
    return arr;
  };
  return {{"format", "lpa-ensemble"},
          {"version", 1},
          {"unit_cell", e.spec()},
          {"config", e.config()},
          {"dataset_fingerprint", e.dataset_fingerprint},
          {"re", members(e.re_members())},
          {"im", members(e.im_members())}};
}

Ensemble ensemble_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "lpa-ensemble") throw ConfigError("not an lpa-ensemble checkpoint");
  Ensemble e(j.at("unit_cell").get<UnitCellSpec>(), j.at("config").get<EnsembleConfig>());
  auto load = [](const nlohmann::json& arr, std::vector<EnsembleMember>& out) {
    if (arr.size() != out.size()) throw ConfigError("ensemble checkpoint: member count mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i].net = from_checkpoint(arr[i]);
      out[i].seed = arr[i].at("seed").get<std::uint64_t>();
      out[i].rounds = arr[i].value("rounds", 0);
    }
  };
  load(j.at("re"), e.re_members());
  load(j.at("im"), e.im_members());
  e.dataset_fingerprint = j.value("dataset_fingerprint", "");
  return e;
}

void save_ensemble(const std::filesystem::path& path, const Ensemble& e) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_checkpoint(e).dump() << '\n';
}

Ensemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read ensemble checkpoint " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("malformed ensemble checkpoint: " + std::string(ex.what()));
  }
  return ensemble_from_checkpoint(j);
}

void to_json(nlohmann::json& j, const EnsembleConfig& c) {
  j = nlohmann::json{{"members", c.members},
                     {"seed", c.seed},
                     {"architecture", c.architecture},
                     {"train", c.train}};
}

void from_json(const nlohmann::json& j, EnsembleConfig& c) {
  c = EnsembleConfig{};
  if (j.contains("members")) j.at("members").get_to(c.members);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("architecture")) j.at("architecture").get_to(c.architecture);
  if (j.contains("train")) j.at("train").get_to(c.train);
  c.validate();
}

}  // namespace lpa
