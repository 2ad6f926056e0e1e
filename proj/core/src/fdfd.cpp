#include "lpa/fdfd.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "lpa/error.hpp"

namespace lpa {

using cplx = std::complex<double>;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double overlap(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

void check_pitch(const Grid2D& grid, double period) {
  if (std::abs(grid.nx * grid.dx - period) > 1e-9 * period)
    throw ConfigError("grid period " + std::to_string(grid.nx * grid.dx) +
                      " nm does not match unit-cell period " + std::to_string(period));
}

}  // namespace

double resolved_dx(const GridOptions& opts, double period) {
  if (opts.dx != 0.0) return opts.dx;
  return std::min(wavelength_nm(FrequencyId::Blue), period) / 40.0;
}

namespace {

Grid2D make_layout(double period, double slab_height, double wavelength, double n_bottom,
                   double n_top, const GridOptions& opts) {
  if (!(wavelength > 0.0)) throw DomainError("wavelength must be positive");
  const double dx = resolved_dx(opts, period);
  if (!(dx > 0.0) || !std::isfinite(dx)) throw ConfigError("grid: dx must be positive");
  Grid2D g;
  g.nx = std::max(1, static_cast<int>(std::lround(period / dx)));
  g.dx = period / g.nx;
  g.wavelength = wavelength;
  g.n_bottom = n_bottom;
  g.n_top = n_top;
  const auto rows = [&](double len) {
    return static_cast<int>(std::ceil(len / g.dx - 1e-9));
  };
  g.pml_thickness = std::max(4, rows(opts.pml_thickness * wavelength));
  const int sub_rows = std::max(8, rows(opts.substrate_pad * wavelength));
  g.structure_begin = g.pml_thickness + sub_rows;
  g.structure_rows = std::max(1, rows(slab_height));
  const int air_rows = std::max(4, rows(opts.air_pad * wavelength));
  g.ny = g.structure_begin + g.structure_rows + air_rows + g.pml_thickness;
  g.slab_bottom = g.structure_begin * g.dx;
  g.slab_height = slab_height;
  g.source_row = g.pml_thickness + sub_rows / 2;
  g.reflection_row = g.pml_thickness + sub_rows / 4;
  const double y_mon = g.slab_bottom + slab_height + opts.monitor_offset * wavelength;
  g.monitor_row = static_cast<int>(std::floor(y_mon / g.dx));
  return g;
}

// Complex coordinate stretch factor at height y.
cplx stretch(const Grid2D& g, const GridOptions& opts, double y) {
  const double depth = g.pml_thickness * g.dx;
  const double top_start = (g.ny - g.pml_thickness) * g.dx;
  double frac = 0.0;
  double n = 1.0;
  if (y < depth) {
    frac = (depth - y) / depth;
    n = g.n_bottom;
  } else if (y > top_start) {
    frac = (y - top_start) / depth;
    n = g.n_top;
  } else {
    return 1.0;
  }
  const double k = kTwoPi / g.wavelength * n;
  const double sigma_max =
      -(opts.pml_order + 1) * std::log(opts.pml_reflection) / (2.0 * k * depth);
  return cplx(1.0, sigma_max * std::pow(frac, opts.pml_order));
}

// Effective k0^2 eps of one pixel.
double k2_eff(double eps, double k0, double h, bool corrected) {
  if (!corrected) return k0 * k0 * eps;
  const double half = 0.5 * k0 * std::sqrt(eps) * h;
  if (half >= 0.5 * std::numbers::pi)
    throw ResolutionError("grid too coarse: fewer than two pixels per wavelength");
  const double s = std::sin(half);
  return 4.0 / (h * h) * s * s;
}

cplx discrete_beta(double n, double k0, double h, bool corrected) {
  if (corrected) return k0 * n;
  const double arg = 0.5 * k0 * n * h;
  if (arg >= 1.0) throw ResolutionError("grid too coarse for the source medium");
  return 2.0 / h * std::asin(arg);
}

// Lateral second-difference weights for offsets 0, 1, 2 (times 1/h^2).
std::array<double, 3> lateral_weights(int order) {
  if (order == 2) return {-2.0, 1.0, 0.0};
  if (order == 4) return {-30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};
  throw ConfigError("grid: lateral_order must be 2 or 4");
}

struct RowCoeffs {
  cplx lo, up;           // couplings to rows j-1 and j+1
  Eigen::VectorXcd diag; // k0^2 eps_eff - lo - up (transverse part excluded)
  bool uniform = false;
};

struct System {
  std::vector<RowCoeffs> rows;
  Eigen::VectorXcd rhs;  // length ny * nx
  std::array<double, 3> lateral;  // lateral stencil weights, already / h^2
  cplx beta;             // incident discrete wavenumber
  double n_source = 1.0;
  std::vector<cplx> incident;  // incident planewave per row
};

System build_system(const PermittivityMap& map, double wavelength, const Grid2D& g,
                    const GridOptions& opts) {
  if (map.nx != g.nx || map.ny != g.ny)
    throw ConfigError("permittivity map does not match the grid");
  if (!(wavelength > 0.0)) throw DomainError("wavelength must be positive");
  for (double e : map.values)
    if (!std::isfinite(e)) throw NumericError("permittivity map has non-finite entries");
  const double h = g.dx;
  const double k0 = kTwoPi / wavelength;
  System sys;
  sys.lateral = lateral_weights(opts.lateral_order);
  if (g.nx < 5 && sys.lateral[2] != 0.0) sys.lateral = lateral_weights(2);
  for (double& w : sys.lateral) w /= h * h;
  sys.rows.resize(g.ny);
  for (int j = 0; j < g.ny; ++j) {
    RowCoeffs& r = sys.rows[j];
    const cplx sc = stretch(g, opts, g.row_center(j));
    const cplx sl = stretch(g, opts, j * h);
    const cplx su = stretch(g, opts, (j + 1) * h);
    r.lo = 1.0 / (sc * sl * h * h);
    r.up = 1.0 / (sc * su * h * h);
    r.diag.resize(g.nx);
    for (int i = 0; i < g.nx; ++i)
      r.diag[i] = k2_eff(map.at(i, j), k0, h, opts.dispersion_correction) - r.lo - r.up;
    r.uniform = map.row_uniform(j);
  }
  const int js = g.source_row;
  if (js < 1 || js >= g.ny || g.in_absorber(js) || g.in_absorber(js - 1))
    throw ConfigError("source row must lie outside the absorbers");
  if (!map.row_uniform(js) || !map.row_uniform(js - 1) ||
      map.at(0, js) != map.at(0, js - 1))
    throw ConfigError("source rows must be laterally uniform and homogeneous");
  sys.n_source = std::sqrt(map.at(0, js));
  sys.beta = discrete_beta(sys.n_source, k0, h, opts.dispersion_correction);
  sys.incident.resize(g.ny);
  for (int j = 0; j < g.ny; ++j)
    sys.incident[j] = std::exp(cplx(0.0, 1.0) * sys.beta * (g.row_center(j) - g.slab_bottom));
  sys.rhs = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(g.ny) * g.nx);
  sys.rhs.segment((js - 1) * g.nx, g.nx).setConstant(sys.rows[js - 1].up * sys.incident[js]);
  sys.rhs.segment(js * g.nx, g.nx).setConstant(-sys.rows[js].lo * sys.incident[js - 1]);
  return sys;
}

// Block-tridiagonal direct solver. Laterally uniform rows whose Schur
// complements are still circulant are kept diagonal in the discrete Fourier
// basis; all other blocks are dense. Elimination runs from both ends toward a
// meeting row just above the last structured row.
class StructuredSolver {
 public:
  StructuredSolver(const std::vector<RowCoeffs>& rows, int nx, std::array<double, 3> lateral)
      : rows_(rows), nx_(nx), ny_(static_cast<int>(rows.size())), w_(lateral) {
    mu_.resize(nx);
    for (int m = 0; m < nx; ++m) {
      const double th = kTwoPi * m / nx;
      mu_[m] = w_[0] + 2.0 * w_[1] * std::cos(th) + 2.0 * w_[2] * std::cos(2.0 * th);
    }
    F_.resize(nx, nx);
    for (int m = 0; m < nx; ++m)
      for (int a = 0; a < nx; ++a)
        F_(m, a) = std::polar(1.0, -kTwoPi * static_cast<double>((m * a) % nx) / nx);
    Finv_ = F_.adjoint() / static_cast<double>(nx);
    int last_structured = -1;
    for (int j = 0; j < ny_; ++j)
      if (!rows_[j].uniform) last_structured = j;
    meet_ = last_structured < 0 ? ny_ / 2 : last_structured + 1;
    meet_ = std::clamp(meet_, 1, ny_ - 2);
  }

  void factorize() {
    blocks_.assign(ny_, Block{});
    for (int j = 0; j < meet_; ++j) {
      const Block* prev = j > 0 ? &blocks_[j - 1] : nullptr;
      const cplx c = j > 0 ? rows_[j].lo * rows_[j - 1].up : cplx(0.0);
      blocks_[j] = make_block(j, prev, c);
    }
    for (int j = ny_ - 1; j > meet_; --j) {
      const Block* prev = j < ny_ - 1 ? &blocks_[j + 1] : nullptr;
      const cplx c = j < ny_ - 1 ? rows_[j].up * rows_[j + 1].lo : cplx(0.0);
      blocks_[j] = make_block(j, prev, c);
    }
    Eigen::MatrixXcd m = dense_row(meet_);
    m -= rows_[meet_].lo * rows_[meet_ - 1].up * dense_inverse(blocks_[meet_ - 1]);
    m -= rows_[meet_].up * rows_[meet_ + 1].lo * dense_inverse(blocks_[meet_ + 1]);
    meet_lu_.compute(m);
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const {
    std::vector<Eigen::VectorXcd> y(ny_);
    for (int j = 0; j < meet_; ++j) {
      Eigen::VectorXcd g = to_repr(blocks_[j], b.segment(j * nx_, nx_));
      if (j > 0) g -= rows_[j].lo * convert(blocks_[j - 1], blocks_[j], y[j - 1]);
      y[j] = apply(blocks_[j], g);
    }
    for (int j = ny_ - 1; j > meet_; --j) {
      Eigen::VectorXcd g = to_repr(blocks_[j], b.segment(j * nx_, nx_));
      if (j < ny_ - 1) g -= rows_[j].up * convert(blocks_[j + 1], blocks_[j], y[j + 1]);
      y[j] = apply(blocks_[j], g);
    }
    Eigen::VectorXcd rhs = b.segment(meet_ * nx_, nx_);
    rhs -= rows_[meet_].lo * to_real(blocks_[meet_ - 1], y[meet_ - 1]);
    rhs -= rows_[meet_].up * to_real(blocks_[meet_ + 1], y[meet_ + 1]);
    Eigen::VectorXcd um = meet_lu_.solve(rhs);

    Eigen::VectorXcd u(static_cast<Eigen::Index>(ny_) * nx_);
    u.segment(meet_ * nx_, nx_) = um;
    // Sweep down: u_j = y_j - up_j S_j^{-1} u_{j+1}, carried in block representation.
    Block real_block;  // a dense marker for the meeting row representation
    real_block.spectral = false;
    Eigen::VectorXcd carry = um;
    const Block* carry_repr = &real_block;
    for (int j = meet_ - 1; j >= 0; --j) {
      Eigen::VectorXcd v = convert(*carry_repr, blocks_[j], carry);
      Eigen::VectorXcd uj = y[j] - rows_[j].up * apply(blocks_[j], v);
      u.segment(j * nx_, nx_) = to_real(blocks_[j], uj);
      carry = std::move(uj);
      carry_repr = &blocks_[j];
    }
    carry = um;
    carry_repr = &real_block;
    for (int j = meet_ + 1; j < ny_; ++j) {
      Eigen::VectorXcd v = convert(*carry_repr, blocks_[j], carry);
      Eigen::VectorXcd uj = y[j] - rows_[j].lo * apply(blocks_[j], v);
      u.segment(j * nx_, nx_) = to_real(blocks_[j], uj);
      carry = std::move(uj);
      carry_repr = &blocks_[j];
    }
    return u;
  }

  Eigen::VectorXcd apply_operator(const Eigen::VectorXcd& u) const {
    Eigen::VectorXcd out(u.size());
    for (int j = 0; j < ny_; ++j) {
      for (int i = 0; i < nx_; ++i) {
        const Eigen::Index k = static_cast<Eigen::Index>(j) * nx_ + i;
        const Eigen::Index base = static_cast<Eigen::Index>(j) * nx_;
        cplx v = (rows_[j].diag[i] + w_[0]) * u[k];
        for (int o = 1; o <= 2; ++o)
          if (w_[o] != 0.0)
            v += w_[o] * (u[base + (i + o) % nx_] + u[base + (i + nx_ - o) % nx_]);
        if (j > 0) v += rows_[j].lo * u[k - nx_];
        if (j < ny_ - 1) v += rows_[j].up * u[k + nx_];
        out[k] = v;
      }
    }
    return out;
  }

 private:
  struct Block {
    bool spectral = false;
    Eigen::VectorXcd eig_inv;  // spectral: inverse eigenvalues per Fourier mode
    Eigen::MatrixXcd inv;      // dense: explicit inverse
  };

  Eigen::MatrixXcd dense_row(int j) const {
    Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(nx_, nx_);
    for (int i = 0; i < nx_; ++i) {
      d(i, i) += rows_[j].diag[i] + w_[0];
      for (int o = 1; o <= 2; ++o) {
        d(i, (i + o) % nx_) += w_[o];
        d(i, (i + nx_ - o) % nx_) += w_[o];
      }
    }
    return d;
  }

  Eigen::MatrixXcd dense_inverse(const Block& b) const {
    if (!b.spectral) return b.inv;
    return Finv_ * b.eig_inv.asDiagonal() * F_;
  }

  Block make_block(int j, const Block* prev, cplx c) const {
    Block out;
    if (rows_[j].uniform && (prev == nullptr || prev->spectral)) {
      out.spectral = true;
      out.eig_inv.resize(nx_);
      for (int m = 0; m < nx_; ++m) {
        cplx s = rows_[j].diag[0] + mu_[m];
        if (prev) s -= c * prev->eig_inv[m];
        if (s == cplx(0.0)) throw SolverError("singular spectral pivot in row " + std::to_string(j));
        out.eig_inv[m] = 1.0 / s;
      }
      return out;
    }
    Eigen::MatrixXcd s = dense_row(j);
    if (prev) s -= c * dense_inverse(*prev);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(s);
    out.inv = lu.inverse();
    return out;
  }

  Eigen::VectorXcd to_repr(const Block& b, const Eigen::VectorXcd& real) const {
    return b.spectral ? Eigen::VectorXcd(F_ * real) : real;
  }
  Eigen::VectorXcd to_real(const Block& b, const Eigen::VectorXcd& v) const {
    return b.spectral ? Eigen::VectorXcd(Finv_ * v) : v;
  }
  Eigen::VectorXcd convert(const Block& from, const Block& to, const Eigen::VectorXcd& v) const {
    if (from.spectral == to.spectral) return v;
    return from.spectral ? Eigen::VectorXcd(Finv_ * v) : Eigen::VectorXcd(F_ * v);
  }
  Eigen::VectorXcd apply(const Block& b, const Eigen::VectorXcd& v) const {
    if (b.spectral) return b.eig_inv.cwiseProduct(v);
    return b.inv * v;
  }

  const std::vector<RowCoeffs>& rows_;
  int nx_;
  int ny_;
  std::array<double, 3> w_;
  int meet_ = 0;
  std::vector<double> mu_;
  Eigen::MatrixXcd F_, Finv_;
  std::vector<Block> blocks_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> meet_lu_;
};

double relative_norm(const Eigen::VectorXcd& r, const Eigen::VectorXcd& b) {
  const double nb = b.norm();
  return nb > 0.0 ? r.norm() / nb : r.norm();
}

Eigen::SparseMatrix<cplx> assemble_matrix(const System& sys, const Grid2D& g) {
  const int nx = g.nx, ny = g.ny;
  const auto& w = sys.lateral;
  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<std::size_t>(nx) * ny * 7);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int k = j * nx + i;
      trip.emplace_back(k, k, sys.rows[j].diag[i] + w[0]);
      for (int o = 1; o <= 2; ++o) {
        if (w[o] == 0.0) continue;
        trip.emplace_back(k, j * nx + (i + o) % nx, w[o]);
        trip.emplace_back(k, j * nx + (i + nx - o) % nx, w[o]);
      }
      if (j > 0) trip.emplace_back(k, k - nx, sys.rows[j].lo);
      if (j < ny - 1) trip.emplace_back(k, k + nx, sys.rows[j].up);
    }
  }
  Eigen::SparseMatrix<cplx> a(static_cast<Eigen::Index>(nx) * ny,
                              static_cast<Eigen::Index>(nx) * ny);
  a.setFromTriplets(trip.begin(), trip.end());  // duplicates are summed
  a.makeCompressed();
  return a;
}

}  // namespace

bool PermittivityMap::row_uniform(int j) const {
  const double* row = values.data() + static_cast<std::size_t>(j) * nx;
  for (int i = 1; i < nx; ++i)
    if (row[i] != row[0]) return false;
  return true;
}

Grid2D make_grid(const UnitCellSpec& spec, double wavelength_nm, const GridOptions& opts) {
  spec.validate();
  return make_layout(spec.period, spec.structure_height(), wavelength_nm, spec.n_substrate,
                     spec.n_background, opts);
}

Grid2D make_stack_grid(double period, double slab_height, double wavelength_nm,
                       double n_bottom, double n_top, const GridOptions& opts) {
  return make_layout(period, slab_height, wavelength_nm, n_bottom, n_top, opts);
}

PermittivityMap rasterize(const UnitCellSpec& spec, const ParamVector& p, const Grid2D& g,
                          const GridOptions& opts) {
  spec.validate();
  check_bounds(p, spec);
  check_pitch(g, spec.period);
  if (spec.width_min / g.dx < 2.0)
    throw ResolutionError("grid too coarse: narrowest hole (" + std::to_string(spec.width_min) +
                          " nm) spans fewer than 2 pixels at dx = " + std::to_string(g.dx) +
                          " nm");
  const double eps_sub = spec.n_substrate * spec.n_substrate;
  const double eps_hole = spec.n_hole * spec.n_hole;
  const double eps_bg = spec.n_background * spec.n_background;
  const double h = g.dx;
  const double y_top = g.slab_bottom + spec.structure_height();
  PermittivityMap map(g.nx, g.ny, eps_sub);
  const int L = spec.layer_count;
  std::vector<double> hole_lo(L), hole_hi(L), x_lo(L), x_hi(L);
  for (int k = 0; k < L; ++k) {
    hole_lo[k] = g.slab_bottom + k * (spec.hole_height + spec.spacer_height);
    hole_hi[k] = hole_lo[k] + spec.hole_height;
    x_lo[k] = 0.5 * (spec.period - p.widths[k]);
    x_hi[k] = 0.5 * (spec.period + p.widths[k]);
  }
  for (int j = 0; j < g.ny; ++j) {
    const double y0 = j * h, y1 = (j + 1) * h;
    const double yc = 0.5 * (y0 + y1);
    for (int i = 0; i < g.nx; ++i) {
      const double x0 = i * h, x1 = (i + 1) * h;
      const double xc = 0.5 * (x0 + x1);
      double f_bg, f_hole = 0.0;
      if (opts.subpixel_averaging) {
        f_bg = overlap(y0, y1, y_top, 1e300) / h;
        for (int k = 0; k < L; ++k)
          f_hole += overlap(y0, y1, hole_lo[k], hole_hi[k]) * overlap(x0, x1, x_lo[k], x_hi[k]) /
                    (h * h);
      } else {
        f_bg = yc >= y_top ? 1.0 : 0.0;
        for (int k = 0; k < L; ++k)
          if (yc >= hole_lo[k] && yc < hole_hi[k] && xc >= x_lo[k] && xc < x_hi[k]) f_hole = 1.0;
      }
      map.at(i, j) = eps_bg * f_bg + eps_hole * f_hole + eps_sub * (1.0 - f_bg - f_hole);
    }
  }
  return map;
}

PermittivityMap rasterize_empty(const UnitCellSpec& spec, const Grid2D& g) {
  check_pitch(g, spec.period);
  const Layer bare{g.slab_height, spec.n_substrate};
  return rasterize_stack(std::span<const Layer>(&bare, 1), spec.n_substrate, spec.n_background,
                         g);
}

PermittivityMap rasterize_stack(std::span<const Layer> layers, double n_substrate, double n_top,
                                const Grid2D& g, const GridOptions& opts) {
  const double h = g.dx;
  std::vector<double> lo, hi, eps;
  double y = g.slab_bottom;
  for (const Layer& l : layers) {
    if (l.thickness < 0.0 || l.index < 1.0) throw DomainError("rasterize_stack: invalid layer");
    lo.push_back(y);
    y += l.thickness;
    hi.push_back(y);
    eps.push_back(l.index * l.index);
  }
  const double y_top = y;
  if (y_top >= g.monitor_row * h)
    throw ConfigError("rasterize_stack: stack extends past the transmission monitor");
  const double eps_sub = n_substrate * n_substrate, eps_top = n_top * n_top;
  PermittivityMap map(g.nx, g.ny, eps_sub);
  for (int j = 0; j < g.ny; ++j) {
    const double y0 = j * h, y1 = (j + 1) * h, yc = 0.5 * (y0 + y1);
    double v;
    if (opts.subpixel_averaging) {
      double f_top = overlap(y0, y1, y_top, 1e300) / h;
      double acc = eps_top * f_top, used = f_top;
      for (std::size_t k = 0; k < eps.size(); ++k) {
        const double f = overlap(y0, y1, lo[k], hi[k]) / h;
        acc += eps[k] * f;
        used += f;
      }
      v = acc + eps_sub * (1.0 - used);
    } else {
      v = yc >= y_top ? eps_top : eps_sub;
      for (std::size_t k = 0; k < eps.size(); ++k)
        if (yc >= lo[k] && yc < hi[k]) v = eps[k];
    }
    for (int i = 0; i < g.nx; ++i) map.at(i, j) = v;
  }
  return map;
}

std::complex<double> Field::row_mean(int j) const {
  cplx acc = 0.0;
  for (int i = 0; i < grid.nx; ++i) acc += at(i, j);
  return acc / static_cast<double>(grid.nx);
}

AssembledSystem assemble(const PermittivityMap& map, double wavelength_nm, const Grid2D& grid,
                         const GridOptions& opts) {
  System sys = build_system(map, wavelength_nm, grid, opts);
  return AssembledSystem{assemble_matrix(sys, grid), sys.rhs};
}

Field solve_cell(const PermittivityMap& map, double wavelength_nm, const Grid2D& grid,
                 const GridOptions& opts) {
  System sys = build_system(map, wavelength_nm, grid, opts);
  Field field;
  field.grid = grid;
  field.incident_beta = sys.beta;

  Eigen::VectorXcd u;
  double rel = std::numeric_limits<double>::infinity();
  try {
    StructuredSolver solver(sys.rows, grid.nx, sys.lateral);
    solver.factorize();
    u = solver.solve(sys.rhs);
    rel = relative_norm(solver.apply_operator(u) - sys.rhs, sys.rhs);
    for (int iter = 0; iter < 3 && !(rel <= opts.residual_tolerance) && std::isfinite(rel); ++iter) {
      u += solver.solve(sys.rhs - solver.apply_operator(u));
      rel = relative_norm(solver.apply_operator(u) - sys.rhs, sys.rhs);
    }
  } catch (const SolverError&) {
    rel = std::numeric_limits<double>::infinity();
  }
  if (!(rel <= opts.residual_tolerance)) {
    const auto a = assemble_matrix(sys, grid);
    Eigen::SparseLU<Eigen::SparseMatrix<cplx>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
      throw SolverError("sparse LU factorization failed: " + lu.lastErrorMessage());
    u = lu.solve(sys.rhs);
    rel = relative_norm(a * u - sys.rhs, sys.rhs);
    field.used_fallback = true;
    if (!(rel <= opts.residual_tolerance)) {
      std::ostringstream msg;
      msg << "linear solve failed: relative residual " << rel << " > "
          << opts.residual_tolerance << " (grid " << grid.nx << "x" << grid.ny
          << ", wavelength " << wavelength_nm << " nm)";
      throw SolverError(msg.str());
    }
  }
  field.relative_residual = rel;
  field.values.resize(u.size());
  for (Eigen::Index k = 0; k < u.size(); ++k) field.values[k] = u[k];
  // Scattered-field rows outside the absorber carry the incident wave too.
  for (int j = grid.pml_thickness; j < grid.source_row; ++j)
    for (int i = 0; i < grid.nx; ++i)
      field.values[static_cast<std::size_t>(j) * grid.nx + i] += sys.incident[j];
  return field;
}

std::complex<double> extract_transmission(const Field& field, const Field& reference) {
  const Grid2D& g = field.grid;
  if (g.nx != reference.grid.nx || g.ny != reference.grid.ny ||
      g.monitor_row != reference.grid.monitor_row || g.wavelength != reference.grid.wavelength)
    throw ConfigError("extract_transmission: field and reference grids differ");
  if (g.monitor_row < 0 || g.monitor_row >= g.ny || g.in_absorber(g.monitor_row))
    throw ConfigError("extract_transmission: monitor row lies inside the absorber");
  if (g.monitor_row < g.structure_begin + g.structure_rows)
    throw ConfigError("extract_transmission: monitor row lies inside the structure");
  const cplx ref = reference.row_mean(g.monitor_row);
  if (std::abs(ref) == 0.0) throw NumericError("extract_transmission: reference overlap is zero");
  return field.row_mean(g.monitor_row) / ref;
}

PowerBalance power_balance(const Field& field) {
  const Grid2D& g = field.grid;
  const double h = g.dx;
  const double k0 = kTwoPi / g.wavelength;
  const cplx beta_in = field.incident_beta;
  // Discrete beta of the transmitted medium, consistent with the source one.
  const bool corrected = std::abs(beta_in - k0 * g.n_bottom) < 1e-12 * k0;
  const cplx beta_out = discrete_beta(g.n_top, k0, h, corrected);
  const cplx tau = field.row_mean(g.monitor_row);
  const int jr = g.reflection_row;
  const cplx inc = std::exp(cplx(0.0, 1.0) * beta_in * (g.row_center(jr) - g.slab_bottom));
  const cplx r = field.row_mean(jr) - inc;
  PowerBalance pb;
  pb.transmittance = std::norm(tau) * std::sin(beta_out.real() * h) / std::sin(beta_in.real() * h);
  pb.reflectance = std::norm(r);
  return pb;
}

SolveRecord label(const ParamVector& p, FrequencyId f, const UnitCellSpec& spec,
                  const GridOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const double lambda = wavelength_nm(f);
  const Grid2D g = make_grid(spec, lambda, opts);
  const Field field = solve_cell(rasterize(spec, p, g, opts), lambda, g, opts);
  const Field ref = solve_cell(rasterize_empty(spec, g), lambda, g, opts);
  SolveRecord rec{p, f, extract_transmission(field, ref), 0.0};
  rec.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

FdfdLabeler::FdfdLabeler(UnitCellSpec spec, GridOptions opts)
    : spec_(std::move(spec)), opts_(opts) {
  spec_.validate();
  for (auto f : kAllFrequencies) {
    const double lambda = wavelength_nm(f);
    grids_[index_of(f)] = make_grid(spec_, lambda, opts_);
    const Grid2D& g = grids_[index_of(f)];
    if (g.in_absorber(g.monitor_row))
      throw ConfigError("transmission monitor lies inside the absorber; increase air_pad");
    const Field ref = solve_cell(rasterize_empty(spec_, g), lambda, g, opts_);
    reference_mean_[index_of(f)] = ref.row_mean(g.monitor_row);
  }
}

SolveRecord FdfdLabeler::label(const ParamVector& p, FrequencyId f) const {
  const auto start = std::chrono::steady_clock::now();
  const Grid2D& g = grids_[index_of(f)];
  const Field field = solve_cell(rasterize(spec_, p, g, opts_), wavelength_nm(f), g, opts_);
  SolveRecord rec{p, f, field.row_mean(g.monitor_row) / reference_mean_[index_of(f)], 0.0};
  rec.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

void to_json(nlohmann::json& j, const GridOptions& o) {
  j = nlohmann::json{{"dx", o.dx},
                     {"substrate_pad", o.substrate_pad},
                     {"air_pad", o.air_pad},
                     {"monitor_offset", o.monitor_offset},
                     {"pml_thickness", o.pml_thickness},
                     {"pml_reflection", o.pml_reflection},
                     {"pml_order", o.pml_order},
                     {"subpixel_averaging", o.subpixel_averaging},
                     {"dispersion_correction", o.dispersion_correction},
                     {"lateral_order", o.lateral_order},
                     {"residual_tolerance", o.residual_tolerance}};
}

void from_json(const nlohmann::json& j, GridOptions& o) {
  o = GridOptions{};
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  take("dx", o.dx);
  take("substrate_pad", o.substrate_pad);
  take("air_pad", o.air_pad);
  take("monitor_offset", o.monitor_offset);
  take("pml_thickness", o.pml_thickness);
  take("pml_reflection", o.pml_reflection);
  take("pml_order", o.pml_order);
  take("subpixel_averaging", o.subpixel_averaging);
  take("dispersion_correction", o.dispersion_correction);
  take("lateral_order", o.lateral_order);
  take("residual_tolerance", o.residual_tolerance);
  if (o.dx < 0.0) throw ConfigError("grid.dx must be positive (or 0 for the default)");
  if (o.monitor_offset >= o.air_pad)
    throw ConfigError("grid.monitor_offset must be smaller than grid.air_pad");
}

}  // namespace lpa
