#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace lpa {

// The three design wavelengths, one-hot encoded in this order.
enum class FrequencyId { Blue = 0, Green = 1, Red = 2 };

inline constexpr std::array<FrequencyId, 3> kAllFrequencies = {
    FrequencyId::Blue, FrequencyId::Green, FrequencyId::Red};
inline constexpr std::size_t kFrequencyCount = 3;

double wavelength_nm(FrequencyId f);
std::string_view frequency_name(FrequencyId f);
FrequencyId frequency_from_name(std::string_view name);
// Exact match against 405 / 540 / 810 (tolerance 1e-6 nm).
FrequencyId frequency_from_wavelength(double nm);
inline std::size_t index_of(FrequencyId f) { return static_cast<std::size_t>(f); }

// Multilayer unit cell: `layer_count` air holes of independent widths etched
// into a substrate slab, separated vertically by `spacer_height` of substrate.
// Lengths in nm.
struct UnitCellSpec {
  std::string variant_name = "normal";
  double period = 400.0;
  int layer_count = 10;
  double hole_height = 304.0;
  double spacer_height = 140.0;
  double width_min = 60.0;
  double width_max = 340.0;
  double n_substrate = 1.45;
  double n_hole = 1.0;
  double n_background = 1.0;

  // Total slab height from its bottom (continuous with the substrate) to the
  // air interface at its top.
  double structure_height() const;
  double width_mid() const { return 0.5 * (width_min + width_max); }

  // Throws ConfigError when the invariants do not hold.
  void validate() const;

  bool operator==(const UnitCellSpec&) const = default;

  static UnitCellSpec normal();
  static UnitCellSpec small();
  static UnitCellSpec smallest();
  // "normal" | "small" | "smallest"
  static UnitCellSpec preset(std::string_view name);
};

// Multiplies every length by `factor`; indices are unchanged.
UnitCellSpec scale_variant(const UnitCellSpec& spec, double factor);

struct ParamVector {
  std::vector<double> widths;  // nm

  std::size_t size() const { return widths.size(); }
  bool operator==(const ParamVector&) const = default;
};

// Throws BoundsError if p has the wrong length or a width is out of bounds.
void check_bounds(const ParamVector& p, const UnitCellSpec& spec);

// Affine per-dimension map of [width_min, width_max] onto [-1, 1].
std::vector<double> normalize(const ParamVector& p, const UnitCellSpec& spec);
ParamVector denormalize(std::span<const double> x, const UnitCellSpec& spec);

std::array<double, kFrequencyCount> one_hot(FrequencyId f);

// Normalized widths followed by the one-hot frequency code.
std::vector<double> encode_input(const ParamVector& p, FrequencyId f,
                                 const UnitCellSpec& spec);
inline std::size_t input_dimension(const UnitCellSpec& spec) {
  return static_cast<std::size_t>(spec.layer_count) + kFrequencyCount;
}

void to_json(nlohmann::json& j, const UnitCellSpec& s);
void from_json(const nlohmann::json& j, UnitCellSpec& s);

}  // namespace lpa
