#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace lpa {

// Fixed-topology MLP: input -> ReLU hidden layers -> (mu, sigma) head with
// mu = tanh_scale * tanh(a) and sigma = softplus(b) + sigma_floor.
struct MlpArchitecture {
  int input_dim = 13;
  std::vector<int> hidden = {256, 256, 256};
  double tanh_scale = 2.0;
  double sigma_floor = 1e-6;

  bool operator==(const MlpArchitecture&) const = default;
  std::size_t parameter_count() const;
};

struct MemberPrediction {
  double mu = 0.0;
  double sigma = 1.0;
};

// Gaussian negative log-likelihood of one observation (constant term dropped).
inline double nll(const MemberPrediction& pred, double y) {
  const double r = y - pred.mu;
  return std::log(pred.sigma) + r * r / (2.0 * pred.sigma * pred.sigma);
}

struct InputGradient {
  std::vector<double> dmu;     // d mu / d x
  std::vector<double> dsigma;  // d sigma / d x
};

// Batched forward results; columns of `dmu` / `dsigma` are per-sample input
// gradients when requested.
struct BatchOutput {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd dmu;
  Eigen::MatrixXd dsigma;
};

class Mlp {
 public:
  Mlp() = default;
  // All-zero weights and biases.
  explicit Mlp(MlpArchitecture arch);
  // He-style uniform fan-in initialization, zero biases.
  static Mlp initialized(const MlpArchitecture& arch, std::uint64_t seed);

  const MlpArchitecture& architecture() const { return arch_; }
  std::size_t layer_count() const { return shapes_.size(); }
  // (rows = fan_out, cols = fan_in) of layer l.
  std::pair<int, int> layer_shape(std::size_t l) const { return shapes_[l]; }

  // Flat parameter vector; per layer a column-major weight block followed by
  // the bias.
  const Eigen::VectorXd& parameters() const { return theta_; }
  Eigen::VectorXd& parameters() { return theta_; }

  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const;
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t l);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t l);

  // Throws NumericError on non-finite input, ConfigError on wrong size.
  MemberPrediction forward(std::span<const double> x) const;
  // x: input_dim x batch.
  BatchOutput forward_batch(const Eigen::MatrixXd& x, bool with_input_gradient = false) const;

  // Mean NLL over the batch and its exact parameter gradient (same layout as
  // parameters()).
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           Eigen::VectorXd& grad) const;
  double mean_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const;

  InputGradient input_gradient(std::span<const double> x) const;

  bool operator==(const Mlp& o) const { return arch_ == o.arch_ && theta_ == o.theta_; }

 private:
  void layout();

  MlpArchitecture arch_;
  std::vector<std::pair<int, int>> shapes_;
  std::vector<std::size_t> w_offset_, b_offset_;
  Eigen::VectorXd theta_;
};

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

// In-place Adam update (bias-corrected).
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  double lr0 = 1e-3;
  double decay = 0.99;
  int decay_start_epoch = 10;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// lr0 * decay^max(0, epoch - decay_start_epoch), epochs counted from 0.
double learning_rate(const TrainConfig& cfg, int epoch);

struct TrainLog {
  std::vector<double> epoch_loss;  // mean mini-batch loss per epoch
};

// Mini-batch Adam on the mean NLL. Rows are put in a canonical order before
// the seeded per-epoch shuffles, so the result does not depend on the order
// in which the dataset rows were supplied. x: input_dim x n.
Mlp train(Mlp start, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& cfg,
          TrainLog* log = nullptr);

// Self-describing checkpoint: architecture, per-layer row-major weights and
// biases, the member seed and the training configuration. Doubles round-trip
// exactly.
nlohmann::json to_checkpoint(const Mlp& net, std::uint64_t seed = 0,
                             const TrainConfig& cfg = {});
Mlp from_checkpoint(const nlohmann::json& j);

void to_json(nlohmann::json& j, const MlpArchitecture& a);
void from_json(const nlohmann::json& j, MlpArchitecture& a);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace lpa
