#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <complex>
#include <mutex>
#include <optional>
#include <vector>

#include "lpa/geometry.hpp"
#include "lpa/transfer_matrix.hpp"

namespace lpa {

// Frequency-domain scalar Helmholtz solver for a 2D unit cell:
//   d2u/dx2 + d2u/dy2 + k0^2 eps(x, y) u = source
// periodic in x (one period), complex-stretched absorbing layers at both ends
// of y, and a unit normally incident planewave injected from the substrate side
// through a total-field / scattered-field row. Out-of-plane polarization.

struct GridOptions {
  double dx = 0.0;                 // target pixel size (nm), snapped to period / nx;
                                   // 0 selects min(405 nm, period) / 40
  double substrate_pad = 1.0;      // substrate below the slab, in vacuum wavelengths
  double air_pad = 1.25;           // air above the slab, in vacuum wavelengths
  double monitor_offset = 1.0;     // transmission monitor height above the slab top
  double pml_thickness = 0.5;      // absorber thickness, in vacuum wavelengths
  double pml_reflection = 1e-10;   // normal-incidence design reflection
  int pml_order = 3;               // polynomial grading of the stretch
  bool subpixel_averaging = true;  // area-averaged permittivity per pixel
  bool dispersion_correction = true;  // exact normal-incidence phase velocity per pixel
  int lateral_order = 2;            // accuracy order of the periodic x-derivative (2 or 4)
  double residual_tolerance = 1e-8;

  bool operator==(const GridOptions&) const = default;
};

// Row indices run bottom (substrate side) to top (air side).
struct Grid2D {
  double dx = 0.0;  // nm
  int nx = 0;
  int ny = 0;
  int pml_thickness = 0;     // rows per absorbing region
  int structure_begin = 0;   // first row intersecting the slab
  int structure_rows = 0;    // rows intersecting the slab
  int source_row = 0;        // first total-field row
  int reflection_row = 0;    // scattered-field monitor (below the source)
  int monitor_row = 0;       // transmission monitor (in the air)
  double wavelength = 0.0;   // nm
  double slab_bottom = 0.0;  // y of the slab bottom (nm)
  double slab_height = 0.0;  // nm
  double n_bottom = 1.45;    // medium filling the bottom absorber
  double n_top = 1.0;        // medium filling the top absorber

  double period() const { return nx * dx; }
  double row_center(int j) const { return (j + 0.5) * dx; }
  bool in_absorber(int row) const {
    return row < pml_thickness || row >= ny - pml_thickness;
  }
};

// Pixel size requested by `opts` for a cell of the given period.
double resolved_dx(const GridOptions& opts, double period);

Grid2D make_grid(const UnitCellSpec& spec, double wavelength_nm,
                 const GridOptions& opts = {});
// Grid for a laterally uniform stack of total height `slab_height`.
Grid2D make_stack_grid(double period, double slab_height, double wavelength_nm,
                       double n_bottom, double n_top, const GridOptions& opts = {});

// Laterally periodic permittivity map, row-major: value(i, j) with i the
// column (x) and j the row (y).
struct PermittivityMap {
  int nx = 0;
  int ny = 0;
  std::vector<double> values;

  PermittivityMap() = default;
  PermittivityMap(int nx_, int ny_, double fill)
      : nx(nx_), ny(ny_), values(static_cast<std::size_t>(nx_) * ny_, fill) {}

  double& at(int i, int j) { return values[static_cast<std::size_t>(j) * nx + i]; }
  double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }
  bool row_uniform(int j) const;
};

// Substrate slab with `layer_count` centered air holes stacked upward from the
// slab bottom; substrate below, background above.
PermittivityMap rasterize(const UnitCellSpec& spec, const ParamVector& p,
                          const Grid2D& grid, const GridOptions& opts = {});
// Same layout with no holes: the normalization reference.
PermittivityMap rasterize_empty(const UnitCellSpec& spec, const Grid2D& grid);
// Laterally uniform layered stack on top of the substrate, slab region only.
// Layers listed bottom to top starting at the slab bottom; must fit in the
// allocated slab rows plus air padding.
PermittivityMap rasterize_stack(std::span<const Layer> layers, double n_substrate,
                                double n_top, const Grid2D& grid,
                                const GridOptions& opts = {});

struct Field {
  Grid2D grid;
  // Total field for non-absorber rows; raw (scattered) values inside the
  // bottom absorber. Row-major ny x nx.
  std::vector<std::complex<double>> values;
  std::complex<double> incident_beta;  // discrete wavenumber of the source medium
  double relative_residual = 0.0;
  bool used_fallback = false;

  std::complex<double> at(int i, int j) const {
    return values[static_cast<std::size_t>(j) * grid.nx + i];
  }
  // Zeroth-order (lateral mean) amplitude of row j.
  std::complex<double> row_mean(int j) const;
};

Field solve_cell(const PermittivityMap& map, double wavelength_nm, const Grid2D& grid,
                 const GridOptions& opts = {});

// Assembled system matrix and right-hand side (for verification and the
// fallback path). Unknown ordering: row-major (j * nx + i).
struct AssembledSystem {
  Eigen::SparseMatrix<std::complex<double>> matrix;
  Eigen::VectorXcd rhs;
};
AssembledSystem assemble(const PermittivityMap& map, double wavelength_nm,
                         const Grid2D& grid, const GridOptions& opts = {});

// Zeroth-order overlap on the monitor row relative to the reference solve.
std::complex<double> extract_transmission(const Field& field, const Field& reference);

struct PowerBalance {
  double transmittance;
  double reflectance;
};
// Zeroth-order power balance of a solve (meaningful when only the zeroth
// order propagates on both sides).
PowerBalance power_balance(const Field& field);

struct SolveRecord {
  ParamVector params;
  FrequencyId frequency = FrequencyId::Blue;
  std::complex<double> t;
  double wall_time = 0.0;  // seconds
};

// One labeling call including its reference solve.
SolveRecord label(const ParamVector& p, FrequencyId f, const UnitCellSpec& spec,
                  const GridOptions& opts = {});

// Labeler that caches the grids and reference solves per wavelength.
// Thread-safe: the cache is filled at construction.
class FdfdLabeler {
 public:
  FdfdLabeler(UnitCellSpec spec, GridOptions opts = {});

  SolveRecord label(const ParamVector& p, FrequencyId f) const;
  const Grid2D& grid(FrequencyId f) const { return grids_[index_of(f)]; }
  const UnitCellSpec& spec() const { return spec_; }
  const GridOptions& options() const { return opts_; }

 private:
  UnitCellSpec spec_;
  GridOptions opts_;
  std::array<Grid2D, kFrequencyCount> grids_;
  std::array<std::complex<double>, kFrequencyCount> reference_mean_;
};

void to_json(nlohmann::json& j, const GridOptions& o);
void from_json(const nlohmann::json& j, GridOptions& o);

}  // namespace lpa
