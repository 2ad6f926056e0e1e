#include "lpa/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lpa/error.hpp"
#include "lpa/random.hpp"

namespace lpa {

namespace {

double softplus(double b) { return std::max(b, 0.0) + std::log1p(std::exp(-std::abs(b))); }
double sigmoid(double b) {
  if (b >= 0.0) return 1.0 / (1.0 + std::exp(-b));
  const double e = std::exp(b);
  return e / (1.0 + e);
}

}  // namespace

std::size_t MlpArchitecture::parameter_count() const {
  std::size_t n = 0;
  int fan_in = input_dim;
  for (int h : hidden) {
    n += static_cast<std::size_t>(h) * fan_in + h;
    fan_in = h;
  }
  return n + 2 * static_cast<std::size_t>(fan_in) + 2;
}

Mlp::Mlp(MlpArchitecture arch) : arch_(std::move(arch)) {
  if (arch_.input_dim < 1) throw ConfigError("mlp: input_dim must be >= 1");
  for (int h : arch_.hidden)
    if (h < 1) throw ConfigError("mlp: hidden widths must be >= 1");
  if (!(arch_.tanh_scale > 0.0)) throw ConfigError("mlp: tanh_scale must be > 0");
  if (!(arch_.sigma_floor > 0.0)) throw ConfigError("mlp: sigma_floor must be > 0");
  layout();
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(arch_.parameter_count()));
}

void Mlp::layout() {
  shapes_.clear();
  w_offset_.clear();
  b_offset_.clear();
  int fan_in = arch_.input_dim;
  std::size_t off = 0;
  auto add = [&](int out) {
    shapes_.push_back({out, fan_in});
    w_offset_.push_back(off);
    off += static_cast<std::size_t>(out) * fan_in;
    b_offset_.push_back(off);
    off += out;
    fan_in = out;
  };
  for (int h : arch_.hidden) add(h);
  add(2);
}

Mlp Mlp::initialized(const MlpArchitecture& arch, std::uint64_t seed) {
  Mlp net(arch);
  Rng rng(seed);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    auto w = net.weight(l);
    // The output head starts 10x smaller: at full He scale the first Adam
    // steps can push the tanh head into saturation, where it stays.
    const double gain = l + 1 == net.layer_count() ? 0.1 : 1.0;
    const double limit = gain * std::sqrt(6.0 / w.cols());
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = uniform(rng, -limit, limit);
  }
  return net;
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t l) const {
  return {theta_.data() + w_offset_[l], shapes_[l].first, shapes_[l].second};
}
Eigen::Map<Eigen::MatrixXd> Mlp::weight(std::size_t l) {
  return {theta_.data() + w_offset_[l], shapes_[l].first, shapes_[l].second};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t l) const {
  return {theta_.data() + b_offset_[l], shapes_[l].first};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t l) {
  return {theta_.data() + b_offset_[l], shapes_[l].first};
}

MemberPrediction Mlp::forward(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(arch_.input_dim))
    throw ConfigError("mlp: input has " + std::to_string(x.size()) + " entries, expected " +
                      std::to_string(arch_.input_dim));
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError("mlp: non-finite input");
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), arch_.input_dim);
  const std::size_t last = layer_count() - 1;
  for (std::size_t l = 0; l < last; ++l)
    h = (weight(l) * h + bias(l)).cwiseMax(0.0);
  const Eigen::Vector2d o = weight(last) * h + bias(last);
  return {arch_.tanh_scale * std::tanh(o[0]), softplus(o[1]) + arch_.sigma_floor};
}

BatchOutput Mlp::forward_batch(const Eigen::MatrixXd& x, bool with_input_gradient) const {
  if (x.rows() != arch_.input_dim) throw ConfigError("mlp: batch has wrong input dimension");
  if (!x.allFinite()) throw NumericError("mlp: non-finite input");
  const std::size_t last = layer_count() - 1;
  std::vector<Eigen::MatrixXd> act;  // post-activation per hidden layer
  act.reserve(last);
  const Eigen::MatrixXd* h = &x;
  for (std::size_t l = 0; l < last; ++l) {
    Eigen::MatrixXd z = weight(l) * *h;
    z.colwise() += bias(l);
    act.push_back(z.cwiseMax(0.0));
    h = &act.back();
  }
  Eigen::MatrixXd o = weight(last) * *h;
  o.colwise() += bias(last);
  const Eigen::Index n = x.cols();
  BatchOutput out;
  out.mu.resize(n);
  out.sigma.resize(n);
  Eigen::MatrixXd seed_mu, seed_sigma;
  if (with_input_gradient) {
    seed_mu.resize(2, n);
    seed_sigma.resize(2, n);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double th = std::tanh(o(0, k));
    out.mu[k] = arch_.tanh_scale * th;
    out.sigma[k] = softplus(o(1, k)) + arch_.sigma_floor;
    if (with_input_gradient) {
      seed_mu(0, k) = arch_.tanh_scale * (1.0 - th * th);
      seed_mu(1, k) = 0.0;
      seed_sigma(0, k) = 0.0;
      seed_sigma(1, k) = sigmoid(o(1, k));
    }
  }
  if (with_input_gradient) {
    auto back = [&](Eigen::MatrixXd g) {
      for (std::size_t l = last + 1; l-- > 0;) {
        g = weight(l).transpose() * g;
        if (l > 0) g = g.cwiseProduct((act[l - 1].array() > 0.0).cast<double>().matrix());
      }
      return g;
    };
    out.dmu = back(seed_mu);
    out.dsigma = back(seed_sigma);
  }
  return out;
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                              Eigen::VectorXd& grad) const {
  const Eigen::Index n = x.cols();
  if (n == 0 || y.size() != n) throw ConfigError("mlp: empty batch or label size mismatch");
  const std::size_t last = layer_count() - 1;
  std::vector<Eigen::MatrixXd> act;
  act.reserve(last);
  const Eigen::MatrixXd* h = &x;
  for (std::size_t l = 0; l < last; ++l) {
    Eigen::MatrixXd z = weight(l) * *h;
    z.colwise() += bias(l);
    act.push_back(z.cwiseMax(0.0));
    h = &act.back();
  }
  Eigen::MatrixXd o = weight(last) * *h;
  o.colwise() += bias(last);

  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  Eigen::MatrixXd delta(2, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double th = std::tanh(o(0, k));
    const double mu = arch_.tanh_scale * th;
    const double sigma = softplus(o(1, k)) + arch_.sigma_floor;
    const double r = y[k] - mu;
    const double inv_s2 = 1.0 / (sigma * sigma);
    loss += std::log(sigma) + 0.5 * r * r * inv_s2;
    const double dl_dmu = -r * inv_s2;
    const double dl_dsigma = 1.0 / sigma - r * r * inv_s2 / sigma;
    delta(0, k) = inv_n * dl_dmu * arch_.tanh_scale * (1.0 - th * th);
    delta(1, k) = inv_n * dl_dsigma * sigmoid(o(1, k));
  }
  grad.resize(theta_.size());
  for (std::size_t l = last + 1; l-- > 0;) {
    const Eigen::MatrixXd& input = l == 0 ? x : act[l - 1];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + w_offset_[l], shapes_[l].first, shapes_[l].second)
        .noalias() = delta * input.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + b_offset_[l], shapes_[l].first) =
        delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd prev = weight(l).transpose() * delta;
      delta = prev.cwiseProduct((act[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return loss * inv_n;
}

double Mlp::mean_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) const {
  const BatchOutput out = forward_batch(x);
  double loss = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) loss += nll({out.mu[k], out.sigma[k]}, y[k]);
  return loss / static_cast<double>(x.cols());
}

InputGradient Mlp::input_gradient(std::span<const double> x) const {
  forward(x);  // validates the input
  const Eigen::MatrixXd col = Eigen::Map<const Eigen::VectorXd>(x.data(), arch_.input_dim);
  const BatchOutput out = forward_batch(col, true);
  InputGradient g;
  g.dmu.assign(out.dmu.data(), out.dmu.data() + arch_.input_dim);
  g.dsigma.assign(out.dsigma.data(), out.dsigma.data() + arch_.input_dim);
  return g;
}

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamState& state, double lr) {
  if (grad.size() != theta.size()) throw ConfigError("adam_step: gradient size mismatch");
  if (state.m.size() != theta.size()) state = AdamState(static_cast<std::size_t>(theta.size()));
  ++state.step;
  const double b1 = AdamState::beta1, b2 = AdamState::beta2;
  state.m = b1 * state.m + (1.0 - b1) * grad;
  state.v = b2 * state.v + (1.0 - b2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  theta.array() -= lr * (state.m.array() / c1) /
                   ((state.v.array() / c2).sqrt() + AdamState::epsilon);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("train: decay must be in (0, 1]");
  if (!(lr0 >= 0.0)) throw ConfigError("train: lr0 must be >= 0");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(cfg.decay, std::max(0, epoch - cfg.decay_start_epoch));
}

Mlp train(Mlp net, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& cfg,
          TrainLog* log) {
  cfg.validate();
  const Eigen::Index n = x.cols();
  if (n == 0) throw ConfigError("train: empty dataset");
  if (y.size() != n) throw ConfigError("train: label count mismatch");

  // Canonical row order: lexicographic on (inputs, label).
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      if (x(r, a) != x(r, b)) return x(r, a) < x(r, b);
    return y[a] < y[b];
  });

  Rng rng(cfg.seed);
  AdamState state(static_cast<std::size_t>(net.parameters().size()));
  Eigen::VectorXd grad;
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);
  Eigen::MatrixXd bx(x.rows(), bs);
  Eigen::VectorXd by(bs);
  for (int e = 0; e < cfg.epochs; ++e) {
    const double lr = learning_rate(cfg, e);
    const auto perm = permutation(rng, static_cast<std::size_t>(n));
    double epoch_loss = 0.0;
    int batches = 0;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index len = std::min(bs, n - start);
      if (bx.cols() != len) {
        bx.resize(x.rows(), len);
        by.resize(len);
      }
      for (Eigen::Index k = 0; k < len; ++k) {
        const Eigen::Index row = order[perm[static_cast<std::size_t>(start + k)]];
        bx.col(k) = x.col(row);
        by[k] = y[row];
      }
      epoch_loss += net.loss_and_gradient(bx, by, grad);
      ++batches;
      if (!grad.allFinite()) throw NumericError("train: non-finite gradient");
      adam_step(net.parameters(), grad, state, lr);
    }
    if (log) log->epoch_loss.push_back(epoch_loss / batches);
  }
  return net;
}

nlohmann::json to_checkpoint(const Mlp& net, std::uint64_t seed, const TrainConfig& cfg) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto w = net.weight(l);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    const auto b = net.bias(l);
    layers.push_back({{"shape", {w.rows(), w.cols()}},
                      {"weights", std::move(flat)},
                      {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  const auto& a = net.architecture();
  return {{"format", "lpa-mlp"},      {"version", 1},
          {"architecture", a},        {"tanh_scale", a.tanh_scale},
          {"sigma_floor", a.sigma_floor}, {"seed", seed},
          {"train", cfg},             {"layers", std::move(layers)}};
}

Mlp from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "lpa-mlp") throw ConfigError("not an lpa-mlp checkpoint");
  Mlp net(j.at("architecture").get<MlpArchitecture>());
  const auto& layers = j.at("layers");
  if (layers.size() != net.layer_count()) throw ConfigError("checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const auto& lj = layers[l];
    const auto shape = lj.at("shape").get<std::vector<int>>();
    auto w = net.weight(l);
    if (shape.size() != 2 || shape[0] != w.rows() || shape[1] != w.cols())
      throw ConfigError("checkpoint: layer shape mismatch");
    const auto flat = lj.at("weights").get<std::vector<double>>();
    const auto bias = lj.at("bias").get<std::vector<double>>();
    if (flat.size() != static_cast<std::size_t>(w.size()) ||
        bias.size() != static_cast<std::size_t>(w.rows()))
      throw ConfigError("checkpoint: parameter count mismatch");
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat[k++];
    auto b = net.bias(l);
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = bias[static_cast<std::size_t>(r)];
  }
  return net;
}

void to_json(nlohmann::json& j, const MlpArchitecture& a) {
  j = nlohmann::json{{"input_dim", a.input_dim},
                     {"hidden", a.hidden},
                     {"tanh_scale", a.tanh_scale},
                     {"sigma_floor", a.sigma_floor}};
}

void from_json(const nlohmann::json& j, MlpArchitecture& a) {
  a = MlpArchitecture{};
  if (j.contains("input_dim")) j.at("input_dim").get_to(a.input_dim);
  if (j.contains("hidden")) j.at("hidden").get_to(a.hidden);
  if (j.contains("tanh_scale")) j.at("tanh_scale").get_to(a.tanh_scale);
  if (j.contains("sigma_floor")) j.at("sigma_floor").get_to(a.sigma_floor);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr0", c.lr0},
                     {"decay", c.decay},
                     {"decay_start_epoch", c.decay_start_epoch},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
  if (j.contains("batch_size")) j.at("batch_size").get_to(c.batch_size);
  if (j.contains("lr0")) j.at("lr0").get_to(c.lr0);
  if (j.contains("decay")) j.at("decay").get_to(c.decay);
  if (j.contains("decay_start_epoch")) j.at("decay_start_epoch").get_to(c.decay_start_epoch);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  c.validate();
}

}  // namespace lpa
