#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpa/dataset.hpp"
#include "lpa/geometry.hpp"
#include "lpa/nnet.hpp"

namespace lpa {

struct PooledPrediction {
  double mu = 0.0;
  double var = 0.0;
};

// mu* = mean(mu_i); var* = mean(sigma_i^2 + mu_i^2) - mu*^2.
PooledPrediction pool(std::span<const MemberPrediction> members);

struct EnsembleConfig {
  int members = 5;  // per part
  std::uint64_t seed = 0;
  MlpArchitecture architecture;
  TrainConfig train;

  void validate() const;
  bool operator==(const EnsembleConfig&) const = default;
};

struct SurrogatePrediction {
  double mu_re = 0.0, mu_im = 0.0;
  double var_re = 0.0, var_im = 0.0;

  std::complex<double> mean() const { return {mu_re, mu_im}; }
  bool operator==(const SurrogatePrediction&) const = default;
};

double acquisition_score(const SurrogatePrediction& p);

// |u - v|_2 / |v|_2 over complex vectors.
double fractional_error(std::span<const std::complex<double>> estimates,
                        std::span<const std::complex<double>> truths);
double fractional_error(std::span<const double> estimates, std::span<const double> truths);

struct EnsembleMember {
  Mlp net;
  std::uint64_t seed = 0;
  int rounds = 0;  // completed training rounds (selects the shuffle stream)
};

// Per-row derivatives of the pooled quantities with respect to the
// normalized widths (layer_count x n each).
struct PredictionGradient {
  Eigen::MatrixXd mu_re, mu_im, var_re, var_im;
};

class Ensemble {
 public:
  Ensemble() = default;
  Ensemble(UnitCellSpec spec, EnsembleConfig cfg);

  const UnitCellSpec& spec() const { return spec_; }
  const EnsembleConfig& config() const { return cfg_; }
  const std::vector<EnsembleMember>& re_members() const { return re_; }
  const std::vector<EnsembleMember>& im_members() const { return im_; }
  std::vector<EnsembleMember>& re_members() { return re_; }
  std::vector<EnsembleMember>& im_members() { return im_; }

  // One training round on the whole set, continuing from the current weights
  // with fresh optimizer state. Members train concurrently up to `jobs`.
  void fit(const LabeledSet& data, int jobs = 1);

  SurrogatePrediction predict(const ParamVector& p, FrequencyId f) const;
  // Columns are encoded inputs (input_dim x n).
  std::vector<SurrogatePrediction> predict_encoded(const Eigen::MatrixXd& x,
                                                   PredictionGradient* grad = nullptr) const;
  std::vector<SurrogatePrediction> predict(std::span<const ParamVector> p,
                                           std::span<const FrequencyId> f) const;

  std::string dataset_fingerprint;

  bool operator==(const Ensemble& o) const;

 private:
  UnitCellSpec spec_;
  EnsembleConfig cfg_;
  std::vector<EnsembleMember> re_, im_;
};

Eigen::MatrixXd encode_batch(std::span<const ParamVector> p, std::span<const FrequencyId> f,
                             const UnitCellSpec& spec);

// Singular values (descending) of the central-difference Hessian of a scalar
// function at x with step h.
std::vector<double> hessian_spectrum(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> x, double h);

struct HessianSpectra {
  std::vector<double> re, im;
};
// Hessian of the pooled means in normalized width coordinates. Throws
// BoundsError if x is within h of the cube boundary.
HessianSpectra hessian_spectrum(const Ensemble& e, const ParamVector& p, FrequencyId f,
                                double h);

nlohmann::json to_checkpoint(const Ensemble& e);
Ensemble ensemble_from_checkpoint(const nlohmann::json& j);
void save_ensemble(const std::filesystem::path& path, const Ensemble& e);
Ensemble load_ensemble(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const EnsembleConfig& c);
void from_json(const nlohmann::json& j, EnsembleConfig& c);

}  // namespace lpa
