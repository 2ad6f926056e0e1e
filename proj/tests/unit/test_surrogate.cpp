#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lpa/error.hpp"
#include "lpa/oracle.hpp"
#include "lpa/random.hpp"
#include "lpa/surrogate.hpp"

namespace lpa {
namespace {

EnsembleConfig small_config(int members = 3) {
  EnsembleConfig c;
  c.members = members;
  c.seed = 5;
  c.architecture.hidden = {16, 16};
  c.train.epochs = 5;
  c.train.batch_size = 32;
  return c;
}

LabeledSet analytic_set(const UnitCellSpec& spec, std::size_t n, std::uint64_t seed) {
  const AnalyticOracle o(spec, AnalyticConstants::defaults(spec.layer_count));
  Rng rng(seed);
  LabeledSet s;
  for (const auto& q : sample_uniform(rng, spec, n)) s.add(o.label(q.params, q.frequency, false));
  return s;
}

// Direct definition, used as the oracle for pool().
PooledPrediction pool_by_definition(std::span<const MemberPrediction> m) {
  double mu = 0.0, second = 0.0;
  for (const auto& p : m) {
    mu += p.mu;
    second += p.sigma * p.sigma + p.mu * p.mu;
  }
  mu /= static_cast<double>(m.size());
  return {mu, second / static_cast<double>(m.size()) - mu * mu};
}

TEST(Surrogate, PoolExamples) {
  const std::vector<MemberPrediction> same = {{0.5, 0.1}, {0.5, 0.1}};
  const auto a = pool(same);
  EXPECT_DOUBLE_EQ(a.mu, 0.5);
  EXPECT_DOUBLE_EQ(a.var, 0.01);
  const std::vector<MemberPrediction> split = {{0.0, 1e-6}, {1.0, 1e-6}};
  const auto b = pool(split);
  EXPECT_DOUBLE_EQ(b.mu, 0.5);
  EXPECT_NEAR(b.var, 0.25 + 1e-12, 1e-15);
  EXPECT_THROW(pool(std::span<const MemberPrediction>{}), ConfigError);
}

TEST(SurrogateProperty, PoolingIdentity) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t J = 1 + uniform_index(rng, 7);
    std::vector<MemberPrediction> m(J);
    for (auto& p : m) p = {uniform(rng, -2.0, 2.0), uniform(rng, 1e-6, 1.0)};
    const auto pooled = pool(m);
    const auto ref = pool_by_definition(m);
    EXPECT_NEAR(pooled.mu, ref.mu, 1e-14);
    EXPECT_NEAR(pooled.var, ref.var, 1e-12);
    double mean_s2 = 0.0, mean_mu = 0.0;
    for (const auto& p : m) {
      mean_s2 += p.sigma * p.sigma / static_cast<double>(J);
      mean_mu += p.mu / static_cast<double>(J);
    }
    double pop_var = 0.0;
    for (const auto& p : m) pop_var += (p.mu - mean_mu) * (p.mu - mean_mu) / static_cast<double>(J);
    EXPECT_NEAR(pooled.var - mean_s2, pop_var, 1e-12);
    EXPECT_GE(pooled.var, mean_s2 - 1e-15);
    // Permutation invariance.
    auto shuffled = m;
    const auto perm = permutation(rng, J);
    for (std::size_t i = 0; i < J; ++i) shuffled[i] = m[perm[i]];
    const auto ps = pool(shuffled);
    EXPECT_NEAR(ps.mu, pooled.mu, 1e-15);
    EXPECT_NEAR(ps.var, pooled.var, 1e-15);
  }
}

TEST(Surrogate, PooledVarianceEqualsMeanVarianceOnlyWhenMeansAgree) {
  std::vector<MemberPrediction> m = {{0.3, 0.2}, {0.3, 0.4}, {0.3, 0.1}};
  const double mean_s2 = (0.04 + 0.16 + 0.01) / 3.0;
  EXPECT_NEAR(pool(m).var, mean_s2, 1e-16);
  m[1].mu = 0.3000001;
  EXPECT_GT(pool(m).var, mean_s2);
}

TEST(Surrogate, AcquisitionScore) {
  EXPECT_EQ(acquisition_score({0.1, 0.2, 0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(acquisition_score({0.0, 0.0, 0.01, 0.03}), 0.04);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    SurrogatePrediction p{0.0, 0.0, uniform01(rng), uniform01(rng)};
    auto q = p;
    q.var_re += 1e-3;
    EXPECT_GT(acquisition_score(q), acquisition_score(p));
    q = p;
    q.var_im += 1e-3;
    EXPECT_GT(acquisition_score(q), acquisition_score(p));
  }
}

TEST(Surrogate, FractionalErrorExamples) {
  const std::vector<std::complex<double>> v = {{1.0, 2.0}, {-0.5, 0.1}, {0.0, 3.0}};
  std::vector<std::complex<double>> zero(3), twice;
  for (auto z : v) twice.push_back(2.0 * z);
  EXPECT_EQ(fractional_error(std::span<const std::complex<double>>(v), v), 0.0);
  EXPECT_DOUBLE_EQ(fractional_error(std::span<const std::complex<double>>(zero), v), 1.0);
  EXPECT_DOUBLE_EQ(fractional_error(std::span<const std::complex<double>>(twice), v), 1.0);
  EXPECT_THROW(fractional_error(std::span<const std::complex<double>>(v), zero), NumericError);
  EXPECT_THROW(fractional_error(std::span<const std::complex<double>>(v),
                                std::span<const std::complex<double>>(v).first(2)),
               ConfigError);
}

TEST(SurrogateProperty, FractionalErrorIsScaleInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 20);
    std::vector<std::complex<double>> u(n), v(n), au(n), av(n);
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = {standard_normal(rng), standard_normal(rng)};
      v[i] = {standard_normal(rng), standard_normal(rng)};
    }
    double alpha = uniform(rng, 0.01, 100.0) * (uniform01(rng) < 0.5 ? -1.0 : 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      au[i] = alpha * u[i];
      av[i] = alpha * v[i];
    }
    const double fe = fractional_error(std::span<const std::complex<double>>(u), v);
    EXPECT_NEAR(fractional_error(std::span<const std::complex<double>>(au), av), fe, 1e-12 * fe);
    // Independent evaluation.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num += std::pow(std::abs(u[i] - v[i]), 2);
      den += std::pow(std::abs(v[i]), 2);
    }
    EXPECT_NEAR(fe, std::sqrt(num / den), 1e-12 * fe);
  }
}

TEST(Surrogate, ZeroMembersPredictFloorVariance) {
  const auto spec = UnitCellSpec::normal();
  Ensemble e(spec, small_config());
  for (auto* part : {&e.re_members(), &e.im_members()})
    for (auto& m : *part) m.net.parameters().setZero();
  Rng rng(4);
  const auto q = sample_uniform(rng, spec, 1)[0];
  const auto p = e.predict(q.params, q.frequency);
  EXPECT_EQ(p.mu_re, 0.0);
  EXPECT_EQ(p.mu_im, 0.0);
  const double s = std::log(2.0) + 1e-6;
  EXPECT_NEAR(p.var_re, s * s, 1e-15);
  EXPECT_NEAR(p.var_im, s * s, 1e-15);
  EXPECT_EQ(p, e.predict(q.params, q.frequency));
}

TEST(Surrogate, ConfigValidation) {
  auto c = small_config();
  c.members = 1;
  EXPECT_THROW(Ensemble(UnitCellSpec::normal(), c), ConfigError);
  Ensemble e(UnitCellSpec::normal(), small_config());
  EXPECT_EQ(e.config().architecture.input_dim, 13);
  EXPECT_EQ(e.re_members().size(), 3u);
  EXPECT_EQ(e.im_members().size(), 3u);
  ParamVector bad{std::vector<double>(10, 30.0)};
  EXPECT_THROW(e.predict(bad, FrequencyId::Red), BoundsError);
  EXPECT_THROW(e.fit(LabeledSet{}), ConfigError);
}

TEST(Surrogate, MembersDifferBySeed) {
  const Ensemble e(UnitCellSpec::normal(), small_config());
  EXPECT_FALSE(e.re_members()[0].net == e.re_members()[1].net);
  EXPECT_FALSE(e.re_members()[0].net == e.im_members()[0].net);
  EXPECT_NE(e.re_members()[0].seed, e.re_members()[1].seed);
}

TEST(Surrogate, BatchPredictMatchesSingle) {
  const auto spec = UnitCellSpec::normal();
  const Ensemble e(spec, small_config());
  Rng rng(6);
  const auto q = sample_uniform(rng, spec, 9);
  std::vector<ParamVector> p;
  std::vector<FrequencyId> f;
  for (const auto& x : q) {
    p.push_back(x.params);
    f.push_back(x.frequency);
  }
  const auto batch = e.predict(p, f);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto s = e.predict(p[i], f[i]);
    EXPECT_NEAR(batch[i].mu_re, s.mu_re, 1e-14);
    EXPECT_NEAR(batch[i].var_im, s.var_im, 1e-14);
  }
}

TEST(SurrogateProperty, PredictionGradientMatchesFiniteDifferences) {
  const auto spec = UnitCellSpec::normal();
  auto cfg = small_config();
  Ensemble e(spec, cfg);
  e.fit(analytic_set(spec, 80, 7));
  Rng rng(8);
  const auto q = sample_uniform(rng, spec, 6);
  std::vector<ParamVector> p;
  std::vector<FrequencyId> f;
  for (const auto& x : q) {
    p.push_back(x.params);
    f.push_back(x.frequency);
  }
  const Eigen::MatrixXd x = encode_batch(p, f, spec);
  PredictionGradient g;
  const auto base = e.predict_encoded(x, &g);
  ASSERT_EQ(g.mu_re.rows(), 10);
  ASSERT_EQ(g.mu_re.cols(), 6);
  const double h = 1e-6;
  auto close = [](double a, double b) {
    return std::abs(a - b) <= 1e-4 * std::max(std::abs(a), std::abs(b)) + 1e-7;
  };
  for (int d = 0; d < 10; ++d) {
    Eigen::MatrixXd xp = x, xm = x;
    xp.row(d).array() += h;
    xm.row(d).array() -= h;
    const auto pp = e.predict_encoded(xp);
    const auto pm = e.predict_encoded(xm);
    for (std::size_t k = 0; k < base.size(); ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      EXPECT_TRUE(close(g.mu_re(d, c), (pp[k].mu_re - pm[k].mu_re) / (2 * h)));
      EXPECT_TRUE(close(g.mu_im(d, c), (pp[k].mu_im - pm[k].mu_im) / (2 * h)));
      EXPECT_TRUE(close(g.var_re(d, c), (pp[k].var_re - pm[k].var_re) / (2 * h)));
      EXPECT_TRUE(close(g.var_im(d, c), (pp[k].var_im - pm[k].var_im) / (2 * h)));
    }
  }
}

TEST(Surrogate, FitIsDeterministicAcrossJobCounts) {
  const auto spec = UnitCellSpec::normal();
  const auto data = analytic_set(spec, 100, 9);
  Ensemble a(spec, small_config()), b(spec, small_config());
  a.fit(data, 1);
  b.fit(data, 4);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.re_members()[0].rounds, 1);
  a.fit(data, 1);
  EXPECT_EQ(a.re_members()[0].rounds, 2);
  EXPECT_FALSE(a == b);
}

TEST(Surrogate, CheckpointRoundTripIsBitExact) {
  const auto spec = UnitCellSpec::small();
  Ensemble e(spec, small_config());
  const auto data = analytic_set(spec, 60, 10);
  e.fit(data);
  e.dataset_fingerprint = fingerprint(to_csv(data, spec.layer_count));
  const auto path = std::filesystem::temp_directory_path() / "lpa_test_ensemble.json";
  save_ensemble(path, e);
  const Ensemble back = load_ensemble(path);
  std::filesystem::remove(path);
  EXPECT_TRUE(back == e);
  EXPECT_EQ(back.spec(), spec);
  Rng rng(11);
  for (const auto& q : sample_uniform(rng, spec, 20))
    EXPECT_EQ(back.predict(q.params, q.frequency), e.predict(q.params, q.frequency));
  auto j = to_checkpoint(e);
  j["format"] = "something-else";
  EXPECT_THROW(ensemble_from_checkpoint(j), ConfigError);
}

TEST(Surrogate, CalibrationOnTrainingPoints) {
  const auto spec = UnitCellSpec::normal();
  EnsembleConfig cfg;
  cfg.members = 5;
  cfg.seed = 12;
  cfg.architecture.hidden = {64, 64};
  cfg.train.epochs = 60;
  cfg.train.batch_size = 32;
  Ensemble e(spec, cfg);
  const auto data = analytic_set(spec, 300, 13);
  e.fit(data);
  int inside = 0;
  for (const auto& r : data) {
    const auto p = e.predict(r.params, r.frequency);
    inside += std::abs(p.mu_re - r.t.real()) <= 3.0 * std::sqrt(p.var_re) &&
              std::abs(p.mu_im - r.t.imag()) <= 3.0 * std::sqrt(p.var_im);
  }
  EXPECT_GE(inside, 0.95 * static_cast<double>(data.size()));
}

TEST(Surrogate, HessianSpectrumOfQuadratic) {
  Rng rng(14);
  Eigen::MatrixXd B(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) B(i, j) = standard_normal(rng);
  const Eigen::MatrixXd A = 0.5 * (B + B.transpose());
  auto fn = [&](std::span<const double> x) {
    const Eigen::Map<const Eigen::VectorXd> v(x.data(), 10);
    return 0.5 * v.dot(A * v) + v.sum();
  };
  std::vector<double> x0(10);
  for (double& v : x0) v = uniform(rng, -0.5, 0.5);
  const auto s = hessian_spectrum(fn, x0, 1e-3);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  std::vector<double> ref(es.eigenvalues().data(), es.eigenvalues().data() + 10);
  for (double& v : ref) v = std::abs(v);
  std::sort(ref.begin(), ref.end(), std::greater<>());
  ASSERT_EQ(s.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(s[i], ref[i], 1e-6);
  EXPECT_THROW(hessian_spectrum(fn, x0, 0.0), ConfigError);
}

TEST(Surrogate, HessianSpectrumOfSymmetricPair) {
  auto fn = [](std::span<const double> x) { return 3.0 * x[0] * x[1]; };
  const std::vector<double> x0 = {0.2, -0.4, 0.1, 0.0, 0.3};
  const auto s = hessian_spectrum(fn, x0, 1e-3);
  EXPECT_NEAR(s[0], 3.0, 1e-6);
  EXPECT_NEAR(s[1], 3.0, 1e-6);
  for (std::size_t i = 2; i < s.size(); ++i) EXPECT_NEAR(s[i], 0.0, 1e-6);
}

TEST(Surrogate, EnsembleHessianRejectsBoundaryPoints) {
  const auto spec = UnitCellSpec::normal();
  const Ensemble e(spec, small_config());
  ParamVector p{std::vector<double>(10, spec.width_mid())};
  const auto s = hessian_spectrum(e, p, FrequencyId::Green, 1e-2);
  EXPECT_EQ(s.re.size(), 10u);
  EXPECT_TRUE(std::is_sorted(s.im.begin(), s.im.end(), std::greater<>()));
  p.widths[3] = spec.width_max;
  EXPECT_THROW(hessian_spectrum(e, p, FrequencyId::Green, 1e-2), BoundsError);
}

}  // namespace
}  // namespace lpa
