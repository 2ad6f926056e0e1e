#include "lpa/transfer_matrix.hpp"

#include <cmath>
#include <numbers>

#include "lpa/error.hpp"

namespace lpa {

StackResponse stack_response(std::span<const Layer> layers, double wavelength_nm,
                             double n_in, double n_out) {
  if (!(wavelength_nm > 0.0)) throw DomainError("stack_response: wavelength must be > 0");
  using C = std::complex<double>;
  const double k0 = 2.0 * std::numbers::pi / wavelength_nm;
  // Characteristic matrix relating (u, u'/(i k0)) at the bottom face to the
  // top face; multiplied bottom to top.
  C m00 = 1.0, m01 = 0.0, m10 = 0.0, m11 = 1.0;
  for (const Layer& l : layers) {
    if (l.thickness < 0.0 || l.index < 1.0)
      throw DomainError("stack_response: invalid layer");
    const double phase = k0 * l.index * l.thickness;
    const double c = std::cos(phase), s = std::sin(phase);
    const C a00 = c, a01 = C(0.0, -s / l.index), a10 = C(0.0, -l.index * s), a11 = c;
    const C n00 = m00 * a00 + m01 * a10;
    const C n01 = m00 * a01 + m01 * a11;
    const C n10 = m10 * a00 + m11 * a10;
    const C n11 = m10 * a01 + m11 * a11;
    m00 = n00; m01 = n01; m10 = n10; m11 = n11;
  }
  const C denom = n_in * m00 + n_in * n_out * m01 + m10 + n_out * m11;
  StackResponse out;
  out.t = 2.0 * n_in / denom;
  out.r = (n_in * m00 + n_in * n_out * m01 - m10 - n_out * m11) / denom;
  return out;
}

std::complex<double> relative_transmission(std::span<const Layer> layers,
                                           double wavelength_nm, double n_in,
                                           double n_out) {
  double total = 0.0;
  for (const Layer& l : layers) total += l.thickness;
  const Layer bare{total, n_in};
  const auto t_ref = stack_response(std::span<const Layer>(&bare, 1), wavelength_nm, n_in, n_out).t;
  return stack_response(layers, wavelength_nm, n_in, n_out).t / t_ref;
}

std::vector<Layer> averaged_stack(const UnitCellSpec& spec, const ParamVector& p) {
  check_bounds(p, spec);
  std::vector<Layer> out;
  const double eps_sub = spec.n_substrate * spec.n_substrate;
  const double eps_hole = spec.n_hole * spec.n_hole;
  for (int i = 0; i < spec.layer_count; ++i) {
    const double fill = p.widths[i] / spec.period;
    const double eps = fill * eps_hole + (1.0 - fill) * eps_sub;
    out.push_back({spec.hole_height, std::sqrt(eps)});
    if (i + 1 < spec.layer_count && spec.spacer_height > 0.0)
      out.push_back({spec.spacer_height, spec.n_substrate});
  }
  return out;
}

}  // namespace lpa
