#pragma once

#include <array>
#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpa/geometry.hpp"
#include "lpa/oracle.hpp"
#include "lpa/surrogate.hpp"

namespace lpa {

struct Point2 {
  double x = 0.0;  // nm
  double y = 0.0;  // nm, height above the surface
  bool operator==(const Point2&) const = default;
};

// Focal point per wavelength, in micrometres.
struct FocalSpec {
  std::array<Point2, kFrequencyCount> focus_um = {
      Point2{-10.0, 60.0}, Point2{0.0, 60.0}, Point2{10.0, 60.0}};

  void validate() const;
  Point2 focus_nm(FrequencyId f) const;
  bool operator==(const FocalSpec&) const = default;
};

struct MetasurfaceDesign {
  UnitCellSpec spec;
  std::vector<ParamVector> cells;
  FocalSpec focal;

  std::size_t size() const { return cells.size(); }
  // Centre of cell i (nm); cells are contiguous and centred on x = 0.
  double cell_x(std::size_t i) const;
  void validate() const;
  bool operator==(const MetasurfaceDesign&) const = default;
};

// Large-argument outgoing 2D kernel with obliquity:
//   sqrt(k / 2 pi) e^{-i pi/4} e^{i k rho} / sqrt(rho) * (y / rho).
// Throws DomainError below the surface or within one wavelength.
std::complex<double> greens_row(Point2 obs, double source_x, double wavelength);

// Intensity of a uniform unit-amplitude aperture of the design's size on axis
// at the focal height: the unit of every reported intensity.
double reference_intensity(const MetasurfaceDesign& d, FrequencyId f);

// Per-cell amplitude providers.
struct CellAmplitudes {
  std::vector<std::complex<double>> mu;     // mean transmission
  std::vector<std::complex<double>> sigma;  // sqrt(var_re) + i sqrt(var_im)
  // d/dx of mu and sigma for each cell (layer_count x N), normalized widths.
  Eigen::MatrixXcd dmu, dsigma;
};

class AmplitudeModel {
 public:
  virtual ~AmplitudeModel() = default;
  virtual CellAmplitudes amplitudes(const MetasurfaceDesign& d, FrequencyId f,
                                    bool with_gradient) const = 0;
};

class EnsembleAmplitudes : public AmplitudeModel {
 public:
  explicit EnsembleAmplitudes(const Ensemble& e) : e_(e) {}
  CellAmplitudes amplitudes(const MetasurfaceDesign& d, FrequencyId f,
                            bool with_gradient) const override;

 private:
  const Ensemble& e_;
};

// Exact labels from an oracle (zero uncertainty, no gradient).
class OracleAmplitudes : public AmplitudeModel {
 public:
  explicit OracleAmplitudes(const Oracle& o, int jobs = 1) : o_(o), jobs_(jobs) {}
  CellAmplitudes amplitudes(const MetasurfaceDesign& d, FrequencyId f,
                            bool with_gradient) const override;

 private:
  const Oracle& o_;
  int jobs_;
};

// E(r) = sum_cells G(r, x_c) (-t_c) dx, normalized by sqrt(reference_intensity).
std::vector<std::complex<double>> field_at(std::span<const Point2> points,
                                           const MetasurfaceDesign& d,
                                           std::span<const std::complex<double>> t,
                                           FrequencyId f);
// |sum G (-mu) dx|^2 + |sum G sigma dx|^2, normalized.
std::vector<double> expected_intensity(std::span<const Point2> points, const MetasurfaceDesign& d,
                                       const CellAmplitudes& a, FrequencyId f);
std::vector<double> expected_intensity(std::span<const Point2> points, const MetasurfaceDesign& d,
                                       const AmplitudeModel& m, FrequencyId f);

struct ObjectiveValue {
  double worst_case = 0.0;
  std::array<double, kFrequencyCount> per_wavelength{};
};
ObjectiveValue objective(const MetasurfaceDesign& d, const AmplitudeModel& m);

// -(1/beta) log sum_f exp(-beta I_f), evaluated stably.
double softmin(std::span<const double> values, double beta);

struct ObjectiveGradient {
  double soft = 0.0;
  ObjectiveValue value;
  Eigen::MatrixXd grad;  // layer_count x N, normalized widths
};
ObjectiveGradient gradient(const MetasurfaceDesign& d, const AmplitudeModel& m, double beta);

struct DesignOptConfig {
  int iterations = 200;
  double step = 0.05;  // Adam step in normalized coordinates
  double beta_start = 10.0;
  double beta_end = 1000.0;
  std::uint64_t seed = 0;
  std::string projection = "clip";

  void validate() const;
  double beta_at(int iter) const;
  bool operator==(const DesignOptConfig&) const = default;
};

struct TraceRow {
  int iter = 0;
  double worst_case = 0.0;
  std::array<double, kFrequencyCount> intensity{};
  double beta = 0.0;
};

struct OptimizeResult {
  MetasurfaceDesign design;  // best worst case seen
  std::vector<TraceRow> trace;
};

OptimizeResult optimize(const MetasurfaceDesign& design0, const AmplitudeModel& m,
                        const DesignOptConfig& cfg);

// Cells drawn uniformly in bounds.
MetasurfaceDesign random_design(const UnitCellSpec& spec, std::size_t n, const FocalSpec& focal,
                                std::uint64_t seed);

struct FocalLineSpec {
  double half_width_um = 20.0;
  int samples = 401;
};

struct FocalLines {
  std::vector<double> x_um;
  std::array<std::vector<double>, kFrequencyCount> intensity;
};

FocalLines focal_lines(const MetasurfaceDesign& d, const AmplitudeModel& m,
                       const FocalLineSpec& line);

struct ValidationReport {
  FocalLines predicted;
  FocalLines validated;
  std::array<double, kFrequencyCount> discrepancy{};  // relative L2 per wavelength
  double discrepancy_all = 0.0;                       // over all three lines
  ObjectiveValue predicted_focus;
  ObjectiveValue validated_focus;
  std::array<double, kFrequencyCount> validated_peak_x_um{};
  LabeledSet labels;
};

// Labels every cell with `truth` and compares focal lines against `model`.
ValidationReport validate(const MetasurfaceDesign& d, const AmplitudeModel& model,
                          const Oracle& truth, const FocalLineSpec& line, int jobs = 1);

nlohmann::json to_json(const MetasurfaceDesign& d);
MetasurfaceDesign design_from_json(const nlohmann::json& j);
void save_design(const std::filesystem::path& path, const MetasurfaceDesign& d);
MetasurfaceDesign load_design(const std::filesystem::path& path);

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRow> trace);
void write_focal_csv(const std::filesystem::path& path, const FocalLines& lines);
nlohmann::json report_json(const ValidationReport& r);

void to_json(nlohmann::json& j, const FocalSpec& f);
void from_json(const nlohmann::json& j, FocalSpec& f);
void to_json(nlohmann::json& j, const DesignOptConfig& c);
void from_json(const nlohmann::json& j, DesignOptConfig& c);
void to_json(nlohmann::json& j, const FocalLineSpec& c);
void from_json(const nlohmann::json& j, FocalLineSpec& c);

}  // namespace lpa
