#include "lpa/metaopt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "lpa/error.hpp"
#include "lpa/random.hpp"

namespace lpa {

using cplx = std::complex<double>;

void FocalSpec::validate() const {
  for (const auto& p : focus_um)
    if (!(p.y > 0.0)) throw ConfigError("focal spec: focal height must be > 0");
}

Point2 FocalSpec::focus_nm(FrequencyId f) const {
  const Point2& p = focus_um[index_of(f)];
  return {p.x * 1000.0, p.y * 1000.0};
}

double MetasurfaceDesign::cell_x(std::size_t i) const {
  return (static_cast<double>(i) - 0.5 * (static_cast<double>(cells.size()) - 1.0)) * spec.period;
}

void MetasurfaceDesign::validate() const {
  if (cells.empty()) throw ConfigError("design: at least one cell is required");
  for (const auto& c : cells) check_bounds(c, spec);
  focal.validate();
}

cplx greens_row(Point2 obs, double source_x, double wavelength) {
  if (!(wavelength > 0.0)) throw DomainError("greens_row: wavelength must be positive");
  if (!(obs.y > 0.0)) throw DomainError("greens_row: observation point below the surface");
  const double dx = obs.x - source_x;
  const double rho = std::hypot(dx, obs.y);
  if (rho < wavelength) throw DomainError("greens_row: observation within one wavelength");
  const double k = 2.0 * std::numbers::pi / wavelength;
  const double amp = std::sqrt(k / (2.0 * std::numbers::pi * rho)) * (obs.y / rho);
  return amp * std::polar(1.0, k * rho - 0.25 * std::numbers::pi);
}

namespace {

// Kernel weights G(r, x_c) dx / sqrt(I_ref) for each point and cell.
Eigen::MatrixXcd kernel(std::span<const Point2> points, const MetasurfaceDesign& d,
                        FrequencyId f) {
  const double lambda = wavelength_nm(f);
  const double scale = d.spec.period / std::sqrt(reference_intensity(d, f));
  Eigen::MatrixXcd w(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(d.size()));
  for (std::size_t p = 0; p < points.size(); ++p)
    for (std::size_t c = 0; c < d.size(); ++c)
      w(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c)) =
          greens_row(points[p], d.cell_x(c), lambda) * scale;
  return w;
}

Eigen::VectorXcd as_vector(std::span<const cplx> v) {
  return Eigen::Map<const Eigen::VectorXcd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

double reference_intensity(const MetasurfaceDesign& d, FrequencyId f) {
  const Point2 axis{0.0, d.focal.focus_nm(f).y};
  const double lambda = wavelength_nm(f);
  cplx acc = 0.0;
  for (std::size_t c = 0; c < d.size(); ++c) acc += greens_row(axis, d.cell_x(c), lambda);
  return std::norm(acc * d.spec.period);
}

CellAmplitudes EnsembleAmplitudes::amplitudes(const MetasurfaceDesign& d, FrequencyId f,
                                              bool with_gradient) const {
  const std::vector<FrequencyId> fs(d.size(), f);
  const Eigen::MatrixXd x = encode_batch(d.cells, fs, d.spec);
  PredictionGradient g;
  const auto pred = e_.predict_encoded(x, with_gradient ? &g : nullptr);
  CellAmplitudes a;
  const auto n = static_cast<Eigen::Index>(d.size());
  a.mu.resize(d.size());
  a.sigma.resize(d.size());
  if (with_gradient) {
    a.dmu.resize(g.mu_re.rows(), n);
    a.dsigma.resize(g.mu_re.rows(), n);
  }
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& p = pred[static_cast<std::size_t>(c)];
    const double sr = std::sqrt(p.var_re), si = std::sqrt(p.var_im);
    a.mu[static_cast<std::size_t>(c)] = {p.mu_re, p.mu_im};
    a.sigma[static_cast<std::size_t>(c)] = {sr, si};
    if (with_gradient) {
      for (Eigen::Index k = 0; k < g.mu_re.rows(); ++k) {
        a.dmu(k, c) = {g.mu_re(k, c), g.mu_im(k, c)};
        a.dsigma(k, c) = {g.var_re(k, c) / (2.0 * sr), g.var_im(k, c) / (2.0 * si)};
      }
    }
  }
  return a;
}

CellAmplitudes OracleAmplitudes::amplitudes(const MetasurfaceDesign& d, FrequencyId f,
                                            bool with_gradient) const {
  if (with_gradient) throw ConfigError("oracle amplitudes provide no gradient");
  std::vector<Query> q;
  for (const auto& c : d.cells) q.push_back({c, f});
  const auto rows = label_batch(o_, q, jobs_, false);
  CellAmplitudes a;
  for (const auto& r : rows) {
    a.mu.push_back(r.t);
    a.sigma.push_back(0.0);
  }
  return a;
}

std::vector<cplx> field_at(std::span<const Point2> points, const MetasurfaceDesign& d,
                           std::span<const cplx> t, FrequencyId f) {
  if (t.size() != d.size()) throw ConfigError("field_at: one amplitude per cell is required");
  const Eigen::VectorXcd e = kernel(points, d, f) * (-as_vector(t));
  return {e.data(), e.data() + e.size()};
}

std::vector<double> expected_intensity(std::span<const Point2> points, const MetasurfaceDesign& d,
                                       const CellAmplitudes& a, FrequencyId f) {
  if (a.mu.size() != d.size() || a.sigma.size() != d.size())
    throw ConfigError("expected_intensity: one amplitude per cell is required");
  const Eigen::MatrixXcd w = kernel(points, d, f);
  const Eigen::VectorXcd mean = w * (-as_vector(a.mu));
  const Eigen::VectorXcd spread = w * as_vector(a.sigma);
  std::vector<double> out(points.size());
  for (std::size_t p = 0; p < points.size(); ++p)
    out[p] = std::norm(mean[static_cast<Eigen::Index>(p)]) +
             std::norm(spread[static_cast<Eigen::Index>(p)]);
  return out;
}

std::vector<double> expected_intensity(std::span<const Point2> points, const MetasurfaceDesign& d,
                                       const AmplitudeModel& m, FrequencyId f) {
  return expected_intensity(points, d, m.amplitudes(d, f, false), f);
}

ObjectiveValue objective(const MetasurfaceDesign& d, const AmplitudeModel& m) {
  ObjectiveValue v;
  for (auto f : kAllFrequencies) {
    const Point2 focus = d.focal.focus_nm(f);
    v.per_wavelength[index_of(f)] =
        expected_intensity(std::span<const Point2>(&focus, 1), d, m, f)[0];
  }
  v.worst_case = *std::min_element(v.per_wavelength.begin(), v.per_wavelength.end());
  return v;
}

double softmin(std::span<const double> values, double beta) {
  if (values.empty()) throw ConfigError("softmin: no values");
  const double lo = *std::min_element(values.begin(), values.end());
  double acc = 0.0;
  for (double v : values) acc += std::exp(-beta * (v - lo));
  return lo - std::log(acc) / beta;
}

ObjectiveGradient gradient(const MetasurfaceDesign& d, const AmplitudeModel& m, double beta) {
  if (!(beta > 0.0)) throw ConfigError("gradient: beta must be positive");
  ObjectiveGradient out;
  const auto L = static_cast<Eigen::Index>(d.spec.layer_count);
  const auto N = static_cast<Eigen::Index>(d.size());
  std::array<Eigen::MatrixXd, kFrequencyCount> dI;
  for (auto f : kAllFrequencies) {
    const Point2 focus = d.focal.focus_nm(f);
    const CellAmplitudes a = m.amplitudes(d, f, true);
    const Eigen::RowVectorXcd w = kernel(std::span<const Point2>(&focus, 1), d, f).row(0);
    const cplx A = -(w * as_vector(a.mu))(0);
    const cplx B = (w * as_vector(a.sigma))(0);
    out.value.per_wavelength[index_of(f)] = std::norm(A) + std::norm(B);
    Eigen::MatrixXd g(L, N);
    for (Eigen::Index c = 0; c < N; ++c)
      for (Eigen::Index k = 0; k < L; ++k)
        g(k, c) = 2.0 * (std::conj(A) * w[c] * (-a.dmu(k, c))).real() +
                  2.0 * (std::conj(B) * w[c] * a.dsigma(k, c)).real();
    dI[index_of(f)] = std::move(g);
  }
  const auto& I = out.value.per_wavelength;
  out.value.worst_case = *std::min_element(I.begin(), I.end());
  out.soft = softmin(I, beta);
  // d softmin / d I_f = softmax(-beta I)_f
  std::array<double, kFrequencyCount> s{};
  double z = 0.0;
  for (std::size_t f = 0; f < kFrequencyCount; ++f) {
    s[f] = std::exp(-beta * (I[f] - out.value.worst_case));
    z += s[f];
  }
  out.grad = Eigen::MatrixXd::Zero(L, N);
  for (std::size_t f = 0; f < kFrequencyCount; ++f) out.grad += (s[f] / z) * dI[f];
  return out;
}

void DesignOptConfig::validate() const {
  if (iterations < 0) throw ConfigError("design: iterations must be >= 0");
  if (!(step > 0.0)) throw ConfigError("design: step must be > 0");
  if (!(beta_start > 0.0 && beta_end > 0.0)) throw ConfigError("design: beta must be > 0");
  if (projection != "clip") throw ConfigError("design: unknown projection '" + projection + "'");
}

double DesignOptConfig::beta_at(int iter) const {
  if (iterations <= 0) return beta_start;
  const double s = static_cast<double>(iter) / iterations;
  return beta_start * std::pow(beta_end / beta_start, s);
}

OptimizeResult optimize(const MetasurfaceDesign& design0, const AmplitudeModel& m,
                        const DesignOptConfig& cfg) {
  cfg.validate();
  design0.validate();
  const auto L = static_cast<Eigen::Index>(design0.spec.layer_count);
  const auto N = static_cast<Eigen::Index>(design0.size());
  Eigen::MatrixXd x(L, N);
  for (Eigen::Index c = 0; c < N; ++c) {
    const auto v = normalize(design0.cells[static_cast<std::size_t>(c)], design0.spec);
    for (Eigen::Index k = 0; k < L; ++k) x(k, c) = v[static_cast<std::size_t>(k)];
  }
  MetasurfaceDesign cur = design0;
  OptimizeResult res;
  res.design = design0;
  double best = -1.0;
  Eigen::MatrixXd mom = Eigen::MatrixXd::Zero(L, N), vel = Eigen::MatrixXd::Zero(L, N);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 0; t <= cfg.iterations; ++t) {
    const double beta = cfg.beta_at(t);
    const ObjectiveGradient g = gradient(cur, m, beta);
    if (!std::isfinite(g.soft) || !g.grad.allFinite())
      throw NumericError("design: non-finite objective at iteration " + std::to_string(t));
    res.trace.push_back({t, g.value.worst_case, g.value.per_wavelength, beta});
    if (g.value.worst_case > best) {
      best = g.value.worst_case;
      res.design = cur;
    }
    if (t == cfg.iterations) break;
    mom = b1 * mom + (1.0 - b1) * g.grad;
    vel = b2 * vel + (1.0 - b2) * g.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t + 1), c2 = 1.0 - std::pow(b2, t + 1);
    x.array() += cfg.step * (mom.array() / c1) / ((vel.array() / c2).sqrt() + eps);
    x = x.cwiseMax(-1.0).cwiseMin(1.0);
    for (Eigen::Index c = 0; c < N; ++c) {
      std::vector<double> v(x.col(c).data(), x.col(c).data() + L);
      cur.cells[static_cast<std::size_t>(c)] = denormalize(v, cur.spec);
    }
  }
  return res;
}

MetasurfaceDesign random_design(const UnitCellSpec& spec, std::size_t n, const FocalSpec& focal,
                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, "design-init"));
  MetasurfaceDesign d{spec, {}, focal};
  for (std::size_t c = 0; c < n; ++c) {
    ParamVector p;
    p.widths.resize(static_cast<std::size_t>(spec.layer_count));
    for (double& w : p.widths) w = uniform(rng, spec.width_min, spec.width_max);
    d.cells.push_back(std::move(p));
  }
  return d;
}

namespace {

std::vector<Point2> line_points(const MetasurfaceDesign& d, FrequencyId f,
                                const std::vector<double>& x_um) {
  const double y = d.focal.focus_nm(f).y;
  std::vector<Point2> pts;
  for (double x : x_um) pts.push_back({x * 1000.0, y});
  return pts;
}

std::vector<double> line_x(const FocalLineSpec& line) {
  if (line.samples < 2 || !(line.half_width_um > 0.0))
    throw ConfigError("focal line: need >= 2 samples and a positive half width");
  std::vector<double> x(static_cast<std::size_t>(line.samples));
  for (int i = 0; i < line.samples; ++i)
    x[static_cast<std::size_t>(i)] =
        -line.half_width_um + 2.0 * line.half_width_um * i / (line.samples - 1);
  return x;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

FocalLines focal_lines(const MetasurfaceDesign& d, const AmplitudeModel& m,
                       const FocalLineSpec& line) {
  FocalLines out;
  out.x_um = line_x(line);
  for (auto f : kAllFrequencies)
    out.intensity[index_of(f)] = expected_intensity(line_points(d, f, out.x_um), d, m, f);
  return out;
}

ValidationReport validate(const MetasurfaceDesign& d, const AmplitudeModel& model,
                          const Oracle& truth, const FocalLineSpec& line, int jobs) {
  d.validate();
  ValidationReport r;
  r.predicted = focal_lines(d, model, line);
  r.validated.x_um = r.predicted.x_um;
  std::vector<Query> q;
  for (auto f : kAllFrequencies)
    for (const auto& c : d.cells) q.push_back({c, f});
  const auto rows = label_batch(truth, q, jobs, true);
  for (const auto& row : rows)
    if (!r.labels.contains(row.params, row.frequency)) r.labels.add(row);
  std::vector<double> all_pred, all_val;
  for (auto f : kAllFrequencies) {
    const std::size_t fi = index_of(f);
    std::vector<cplx> t(d.size());
    for (std::size_t c = 0; c < d.size(); ++c) t[c] = rows[fi * d.size() + c].t;
    const auto e = field_at(line_points(d, f, r.validated.x_um), d, t, f);
    auto& val = r.validated.intensity[fi];
    val.resize(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) val[i] = std::norm(e[i]);
    r.discrepancy[fi] = rel_l2(r.predicted.intensity[fi], val);
    all_pred.insert(all_pred.end(), r.predicted.intensity[fi].begin(), r.predicted.intensity[fi].end());
    all_val.insert(all_val.end(), val.begin(), val.end());
    const auto peak = std::max_element(val.begin(), val.end()) - val.begin();
    r.validated_peak_x_um[fi] = r.validated.x_um[static_cast<std::size_t>(peak)];
    const Point2 focus = d.focal.focus_nm(f);
    r.predicted_focus.per_wavelength[fi] =
        expected_intensity(std::span<const Point2>(&focus, 1), d, model, f)[0];
    r.validated_focus.per_wavelength[fi] =
        std::norm(field_at(std::span<const Point2>(&focus, 1), d, t, f)[0]);
  }
  r.discrepancy_all = rel_l2(all_pred, all_val);
  auto worst = [](const ObjectiveValue& v) {
    return *std::min_element(v.per_wavelength.begin(), v.per_wavelength.end());
  };
  r.predicted_focus.worst_case = worst(r.predicted_focus);
  r.validated_focus.worst_case = worst(r.validated_focus);
  return r;
}

nlohmann::json to_json(const MetasurfaceDesign& d) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : d.cells) cells.push_back(c.widths);
  return {{"format", "lpa-design"}, {"version", 1}, {"unit_cell", d.spec},
          {"N", d.size()},          {"cells", cells}, {"focal", d.focal}};
}

MetasurfaceDesign design_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "lpa-design") throw ConfigError("not an lpa-design file");
  MetasurfaceDesign d;
  d.spec = j.at("unit_cell").get<UnitCellSpec>();
  for (const auto& c : j.at("cells")) d.cells.push_back({c.get<std::vector<double>>()});
  if (j.contains("N") && j.at("N").get<std::size_t>() != d.cells.size())
    throw ConfigError("design: N does not match the number of cells");
  if (j.contains("focal")) d.focal = j.at("focal").get<FocalSpec>();
  d.validate();
  return d;
}

void save_design(const std::filesystem::path& path, const MetasurfaceDesign& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_json(d).dump(2) << '\n';
}

MetasurfaceDesign load_design(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read design " + path.string());
  try {
    return design_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed design file: " + std::string(e.what()));
  }
}

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "iter,worst_case,i_blue,i_green,i_red,beta\n";
  for (const auto& r : trace)
    out << r.iter << ',' << format_double(r.worst_case) << ',' << format_double(r.intensity[0])
        << ',' << format_double(r.intensity[1]) << ',' << format_double(r.intensity[2]) << ','
        << format_double(r.beta) << '\n';
}

void write_focal_csv(const std::filesystem::path& path, const FocalLines& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "x_um,intensity_blue,intensity_green,intensity_red\n";
  for (std::size_t i = 0; i < lines.x_um.size(); ++i)
    out << format_double(lines.x_um[i]) << ',' << format_double(lines.intensity[0][i]) << ','
        << format_double(lines.intensity[1][i]) << ',' << format_double(lines.intensity[2][i])
        << '\n';
}

nlohmann::json report_json(const ValidationReport& r) {
  auto per = [](const std::array<double, kFrequencyCount>& v) {
    nlohmann::json j;
    for (auto f : kAllFrequencies) j[std::string(frequency_name(f))] = v[index_of(f)];
    return j;
  };
  return {{"discrepancy", per(r.discrepancy)},
          {"discrepancy_all", r.discrepancy_all},
          {"predicted_focus", per(r.predicted_focus.per_wavelength)},
          {"validated_focus", per(r.validated_focus.per_wavelength)},
          {"predicted_worst_case", r.predicted_focus.worst_case},
          {"validated_worst_case", r.validated_focus.worst_case},
          {"validated_peak_x_um", per(r.validated_peak_x_um)},
          {"intensity_unit", "uniform unit-amplitude aperture, on axis at the focal height"}};
}

void to_json(nlohmann::json& j, const FocalSpec& f) {
  j = nlohmann::json::object();
  for (auto id : kAllFrequencies) {
    const auto& p = f.focus_um[index_of(id)];
    j[std::string(frequency_name(id))] = {p.x, p.y};
  }
}

void from_json(const nlohmann::json& j, FocalSpec& f) {
  f = FocalSpec{};
  for (auto id : kAllFrequencies) {
    const std::string key(frequency_name(id));
    if (!j.contains(key)) continue;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw ConfigError("focal spec: each focus is [x_um, y_um]");
    f.focus_um[index_of(id)] = {v[0], v[1]};
  }
  f.validate();
}

void to_json(nlohmann::json& j, const DesignOptConfig& c) {
  j = nlohmann::json{{"iterations", c.iterations}, {"step", c.step},
                     {"beta_start", c.beta_start}, {"beta_end", c.beta_end},
                     {"seed", c.seed},             {"projection", c.projection}};
}

void from_json(const nlohmann::json& j, DesignOptConfig& c) {
  c = DesignOptConfig{};
  if (j.contains("iterations")) j.at("iterations").get_to(c.iterations);
  if (j.contains("step")) j.at("step").get_to(c.step);
  if (j.contains("beta_start")) j.at("beta_start").get_to(c.beta_start);
  if (j.contains("beta_end")) j.at("beta_end").get_to(c.beta_end);
  if (j.contains("seed")) j.at("seed").get_to(c.seed);
  if (j.contains("projection")) j.at("projection").get_to(c.projection);
  c.validate();
}

void to_json(nlohmann::json& j, const FocalLineSpec& c) {
  j = nlohmann::json{{"half_width_um", c.half_width_um}, {"samples", c.samples}};
}

void from_json(const nlohmann::json& j, FocalLineSpec& c) {
  c = FocalLineSpec{};
  if (j.contains("half_width_um")) j.at("half_width_um").get_to(c.half_width_um);
  if (j.contains("samples")) j.at("samples").get_to(c.samples);
}

}  // namespace lpa
