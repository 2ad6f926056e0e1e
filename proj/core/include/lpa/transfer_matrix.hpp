#pragma once

#include <complex>
#include <span>
#include <vector>

#include "lpa/geometry.hpp"

namespace lpa {

struct Layer {
  double thickness;  // nm
  double index;
};

struct StackResponse {
  std::complex<double> t;  // field amplitude, top of stack / incident at bottom
  std::complex<double> r;  // field amplitude at bottom of stack
  // Power transmittance and reflectance.
  double transmittance(double n_in, double n_out) const {
    return (n_out / n_in) * std::norm(t);
  }
  double reflectance() const { return std::norm(r); }
};

// Exact normal-incidence response of a layered stack (listed bottom to top)
// between a semi-infinite medium n_in (incidence side) and n_out. Time
// convention exp(-i omega t); phase reference planes at the stack faces.
StackResponse stack_response(std::span<const Layer> layers, double wavelength_nm,
                             double n_in, double n_out);

inline std::complex<double> transfer_matrix_stack(std::span<const Layer> layers,
                                                  double wavelength_nm,
                                                  double n_in = 1.45,
                                                  double n_out = 1.0) {
  return stack_response(layers, wavelength_nm, n_in, n_out).t;
}

// Transmission normalized the way the FDFD extraction normalizes: relative to
// the same total thickness filled with the incidence medium (the bare
// n_in / n_out interface at the top of the stack).
std::complex<double> relative_transmission(std::span<const Layer> layers,
                                           double wavelength_nm, double n_in,
                                           double n_out);

// Laterally averaged (arithmetic permittivity mean) stack of a unit cell,
// bottom to top.
std::vector<Layer> averaged_stack(const UnitCellSpec& spec, const ParamVector& p);

}  // namespace lpa
