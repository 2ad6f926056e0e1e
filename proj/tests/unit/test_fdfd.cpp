#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "lpa/error.hpp"
#include "lpa/fdfd.hpp"
#include "lpa/random.hpp"
#include "lpa/transfer_matrix.hpp"

namespace lpa {
namespace {

ParamVector random_widths(Rng& rng, const UnitCellSpec& s) {
  ParamVector p;
  for (int i = 0; i < s.layer_count; ++i) p.widths.push_back(uniform(rng, s.width_min, s.width_max));
  return p;
}

double fe(std::complex<double> u, std::complex<double> v) { return std::abs(u - v) / std::abs(v); }

TEST(Fdfd, DefaultResolutionFollowsThePeriod) {
  GridOptions o;
  EXPECT_DOUBLE_EQ(resolved_dx(o, 400.0), 10.0);
  EXPECT_DOUBLE_EQ(resolved_dx(o, 800.0), 405.0 / 40.0);
  EXPECT_DOUBLE_EQ(resolved_dx(o, 40.0), 1.0);
  EXPECT_DOUBLE_EQ(make_grid(UnitCellSpec::normal(), 405.0).dx, 10.0);
  EXPECT_DOUBLE_EQ(make_grid(UnitCellSpec::smallest(), 405.0).dx, 1.0);
  o.dx = 5.0;
  EXPECT_DOUBLE_EQ(make_grid(UnitCellSpec::normal(), 405.0, o).dx, 5.0);
}

TEST(Fdfd, ResolutionThreshold) {
  const auto s = UnitCellSpec::smallest();
  const ParamVector p{std::vector<double>(10, s.width_min)};
  GridOptions o;
  o.dx = 2.0;
  EXPECT_NO_THROW(rasterize(s, p, make_grid(s, 405.0, o), o));
  o.dx = 4.0;
  EXPECT_THROW(rasterize(s, p, make_grid(s, 405.0, o), o), ResolutionError);
}

TEST(Fdfd, RasterizedPermittivities) {
  Rng rng(5);
  const auto s = UnitCellSpec::normal();
  GridOptions o;
  o.subpixel_averaging = false;
  const auto g = make_grid(s, 540.0, o);
  const auto map = rasterize(s, random_widths(rng, s), g, o);
  for (double e : map.values) EXPECT_TRUE(e == 1.0 || e == 1.45 * 1.45) << e;

  o.subpixel_averaging = true;
  const auto avg = rasterize(s, random_widths(rng, s), g, o);
  for (double e : avg.values) {
    EXPECT_GE(e, 1.0);
    EXPECT_LE(e, 2.1025 + 1e-15);
  }
}

TEST(Fdfd, WidthMaxLeavesSubstrateWebs) {
  const auto s = UnitCellSpec::normal();
  GridOptions o;
  o.subpixel_averaging = false;
  const auto g = make_grid(s, 540.0, o);
  const auto map = rasterize(s, {std::vector<double>(10, s.width_max)}, g, o);
  const int row = g.structure_begin + 2;  // inside the first hole
  int substrate = 0;
  for (int i = 0; i < g.nx; ++i) substrate += map.at(i, row) > 2.0;
  EXPECT_EQ(substrate * g.dx, s.period - s.width_max);
}

TEST(Fdfd, HolesAreCentered) {
  Rng rng(6);
  const auto s = UnitCellSpec::normal();
  const auto g = make_grid(s, 405.0);
  const auto map = rasterize(s, random_widths(rng, s), g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) EXPECT_NEAR(map.at(i, j), map.at(g.nx - 1 - i, j), 1e-12);
}

TEST(Fdfd, VacuumPlanewave) {
  GridOptions o;
  const auto g = make_stack_grid(400.0, 300.0, 540.0, 1.0, 1.0, o);
  const PermittivityMap map(g.nx, g.ny, 1.0);
  const Field field = solve_cell(map, 540.0, g, o);
  EXPECT_LE(field.relative_residual, 1e-8);
  for (int j = g.source_row; j < g.ny - g.pml_thickness; ++j)
    for (int i = 0; i < g.nx; ++i) EXPECT_NEAR(std::abs(field.at(i, j)), 1.0, 1e-3);
}

TEST(Fdfd, SilicaPlanewaveWavevector) {
  GridOptions o;
  const auto g = make_stack_grid(400.0, 300.0, 540.0, 1.45, 1.45, o);
  const PermittivityMap map(g.nx, g.ny, 1.45 * 1.45);
  const Field field = solve_cell(map, 540.0, g, o);
  const double k = 2.0 * std::numbers::pi / 540.0 * 1.45;
  for (int j = g.source_row; j + 1 < g.ny - g.pml_thickness; ++j) {
    const auto ratio = field.row_mean(j + 1) / field.row_mean(j);
    EXPECT_NEAR(std::arg(ratio), k * g.dx, 1e-6);
    EXPECT_NEAR(std::abs(ratio), 1.0, 1e-6);
  }
}

TEST(Fdfd, ExtractTransmissionNormalization) {
  const auto s = UnitCellSpec::normal();
  const auto g = make_grid(s, 540.0);
  const Field ref = solve_cell(rasterize_empty(s, g), 540.0, g);
  EXPECT_EQ(extract_transmission(ref, ref), std::complex<double>(1.0, 0.0));
  Field zero = ref;
  std::fill(zero.values.begin(), zero.values.end(), std::complex<double>(0.0));
  EXPECT_EQ(extract_transmission(zero, ref), std::complex<double>(0.0, 0.0));
  Field bad = ref;
  bad.grid.monitor_row = g.ny - 1;
  Field bad_ref = ref;
  bad_ref.grid.monitor_row = g.ny - 1;
  EXPECT_THROW(extract_transmission(bad, bad_ref), ConfigError);
}

TEST(Fdfd, AirHalfSpaceMatchesTransferMatrix) {
  // Silica below the slab replaced by air up to the slab top: the Fresnel
  // interface moves, and the relative transmission follows the oracle.
  for (double lambda : {405.0, 540.0, 810.0}) {
    const Layer air{400.0, 1.0};
    const auto g = make_stack_grid(400.0, air.thickness, lambda, 1.45, 1.0);
    const auto field = solve_cell(rasterize_stack(std::span<const Layer>(&air, 1), 1.45, 1.0, g), lambda, g);
    const Layer bare{air.thickness, 1.45};
    const auto ref = solve_cell(rasterize_stack(std::span<const Layer>(&bare, 1), 1.45, 1.0, g), lambda, g);
    const auto oracle = relative_transmission(std::span<const Layer>(&air, 1), lambda, 1.45, 1.0);
    EXPECT_LT(std::abs(std::abs(extract_transmission(field, ref)) - std::abs(oracle)), 1e-2);
  }
}

TEST(FdfdProperty, UniformStacksMatchTransferMatrix) {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    std::vector<Layer> layers;
    double total = 0.0;
    const int n = 1 + static_cast<int>(uniform_index(rng, 4));
    for (int k = 0; k < n; ++k) {
      layers.push_back({uniform(rng, 30.0, 600.0), uniform(rng, 1.0, 2.2)});
      total += layers.back().thickness;
    }
    const double lambda = wavelength_nm(kAllFrequencies[trial % 3]);
    const auto g = make_stack_grid(400.0, total, lambda, 1.45, 1.0);
    const Layer bare{total, 1.45};
    const auto t = extract_transmission(
        solve_cell(rasterize_stack(layers, 1.45, 1.0, g), lambda, g),
        solve_cell(rasterize_stack(std::span<const Layer>(&bare, 1), 1.45, 1.0, g), lambda, g));
    EXPECT_LT(fe(t, relative_transmission(layers, lambda, 1.45, 1.0)), 1e-2) << "trial " << trial;
  }
}

TEST(Fdfd, FullWidthHolesReduceToTheLayeredStack) {
  // Relaxed bounds: holes may span the whole period, so the cell is a stack.
  auto s = UnitCellSpec::normal();
  s.width_max = s.period;
  const ParamVector p{std::vector<double>(10, s.period)};
  for (auto f : kAllFrequencies) {
    const auto t = label(p, f, s).t;
    const auto oracle = relative_transmission(averaged_stack(s, p), wavelength_nm(f), 1.45, 1.0);
    EXPECT_LT(fe(t, oracle), 1e-2) << frequency_name(f);
  }
}

TEST(Fdfd, LabelIsDeterministicAndCached) {
  Rng rng(8);
  const auto s = UnitCellSpec::normal();
  const auto p = random_widths(rng, s);
  const FdfdLabeler lab(s);
  const auto a = lab.label(p, FrequencyId::Green);
  const auto b = lab.label(p, FrequencyId::Green);
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.t, label(p, FrequencyId::Green, s).t);
  EXPECT_GT(a.wall_time, 0.0);
}

TEST(FdfdProperty, NormalCellPowerBalanceAndBound) {
  Rng rng(9);
  const auto s = UnitCellSpec::normal();
  // Bound on the normalized transmission implied by |t_abs|^2 n_out / n_in <= 1.
  const double bound = (1.0 + 1.45) / (2.0 * std::sqrt(1.45));
  for (int trial = 0; trial < 3; ++trial) {
    const auto p = random_widths(rng, s);
    for (auto f : kAllFrequencies) {
      const auto g = make_grid(s, wavelength_nm(f));
      const Field field = solve_cell(rasterize(s, p, g), wavelength_nm(f), g);
      EXPECT_LE(field.relative_residual, 1e-8);
      const auto pb = power_balance(field);
      // Higher diffracted orders in the substrate and absorption only remove power.
      EXPECT_GE(pb.transmittance, 0.0);
      EXPECT_LE(pb.transmittance + pb.reflectance, 1.0 + 1e-2);
      const Field ref = solve_cell(rasterize_empty(s, g), wavelength_nm(f), g);
      EXPECT_LE(std::abs(extract_transmission(field, ref)), bound + 1e-2);
    }
  }
}

TEST(FdfdProperty, PowerIsConservedWithASinglePropagatingOrder) {
  Rng rng(14);
  int checked = 0;
  for (auto name : {"normal", "small", "smallest"}) {
    const auto s = UnitCellSpec::preset(name);
    for (auto f : kAllFrequencies) {
      // Only the zeroth order propagates on both sides when period < lambda / n_substrate.
      if (s.period >= wavelength_nm(f) / s.n_substrate) continue;
      const auto p = random_widths(rng, s);
      const auto g = make_grid(s, wavelength_nm(f));
      const auto pb = power_balance(solve_cell(rasterize(s, p, g), wavelength_nm(f), g));
      EXPECT_NEAR(pb.transmittance + pb.reflectance, 1.0, 1e-2) << name << " " << frequency_name(f);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 5);
}

TEST(Fdfd, NormalCellAtGreenIsNearlyLossless) {
  Rng rng(10);
  const auto s = UnitCellSpec::normal();
  const auto t = label(random_widths(rng, s), FrequencyId::Green, s).t;
  EXPECT_TRUE(std::isfinite(t.real()) && std::isfinite(t.imag()));
  EXPECT_LE(std::abs(t), 1.0 + 1e-2);
}

TEST(Fdfd, SmallestCellIsNearlyTransparentAtBlue) {
  Rng rng(11);
  const auto s = UnitCellSpec::smallest();
  const auto p = random_widths(rng, s);
  const auto t = label(p, FrequencyId::Blue, s).t;
  EXPECT_NEAR(std::abs(t), 1.0, 5e-2);
  const auto oracle = relative_transmission(averaged_stack(s, p), 405.0, 1.45, 1.0);
  EXPECT_LT(fe(t, oracle), 5e-2);
}

TEST(Fdfd, EqualWidthsTrackTheAveragedStack) {
  const auto s = UnitCellSpec::normal();
  for (double w : {s.width_min, 200.0, s.width_max}) {
    const ParamVector p{std::vector<double>(10, w)};
    for (auto f : kAllFrequencies) {
      const auto t = label(p, f, s).t;
      const auto oracle = relative_transmission(averaged_stack(s, p), wavelength_nm(f), 1.45, 1.0);
      // Qualitative agreement only: the 2D cell scatters laterally.
      EXPECT_LT(std::abs(std::abs(t) - std::abs(oracle)), 0.5) << w << " " << frequency_name(f);
    }
  }
}

TEST(FdfdProperty, SmallCellGridRefinement) {
  Rng rng(12);
  const auto s = UnitCellSpec::small();
  for (int trial = 0; trial < 2; ++trial) {
    const auto p = random_widths(rng, s);
    for (auto f : kAllFrequencies) {
      GridOptions fine;
      fine.dx = 5.0;
      const auto t0 = label(p, f, s).t;
      const auto t1 = label(p, f, s, fine).t;
      EXPECT_LT(fe(t0, t1), 1e-2) << frequency_name(f);
    }
  }
}

TEST(Fdfd, SecondOrderConvergence) {
  Rng rng(13);
  const auto s = UnitCellSpec::small();
  const auto p = random_widths(rng, s);
  std::vector<std::complex<double>> t;
  for (double dx : {10.0, 5.0, 2.5}) {
    GridOptions o;
    o.dx = dx;
    t.push_back(label(p, FrequencyId::Blue, s, o).t);
  }
  const double ratio = std::abs(t[0] - t[1]) / std::abs(t[1] - t[2]);
  EXPECT_GT(ratio, 3.0);
  EXPECT_LT(ratio, 5.5);
}

TEST(Fdfd, GridOptionsJson) {
  GridOptions o;
  o.dx = 7.5;
  o.lateral_order = 4;
  nlohmann::json j = o;
  EXPECT_EQ(j.get<GridOptions>(), o);
  j["monitor_offset"] = 2.0;
  EXPECT_THROW(j.get<GridOptions>(), ConfigError);
}

TEST(Fdfd, FourthOrderLateralStencilConverges) {
  Rng rng(14);
  const auto s = UnitCellSpec::small();
  const auto p = random_widths(rng, s);
  GridOptions a, b;
  a.lateral_order = b.lateral_order = 4;
  b.dx = 5.0;
  EXPECT_LT(fe(label(p, FrequencyId::Red, s, a).t, label(p, FrequencyId::Red, s, b).t), 1e-2);
}

}  // namespace
}  // namespace lpa
