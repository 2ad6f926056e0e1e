#include "lpa/geometry.hpp"

#include <cmath>

#include "lpa/error.hpp"

namespace lpa {

double wavelength_nm(FrequencyId f) {
  switch (f) {
    case FrequencyId::Blue: return 405.0;
    case FrequencyId::Green: return 540.0;
    case FrequencyId::Red: return 810.0;
  }
  throw ConfigError("invalid FrequencyId");
}

std::string_view frequency_name(FrequencyId f) {
  switch (f) {
    case FrequencyId::Blue: return "blue";
    case FrequencyId::Green: return "green";
    case FrequencyId::Red: return "red";
  }
  throw ConfigError("invalid FrequencyId");
}

FrequencyId frequency_from_name(std::string_view name) {
  for (auto f : kAllFrequencies)
    if (frequency_name(f) == name) return f;
  throw ConfigError("unknown frequency name '" + std::string(name) + "'");
}

FrequencyId frequency_from_wavelength(double nm) {
  for (auto f : kAllFrequencies)
    if (std::abs(wavelength_nm(f) - nm) < 1e-6) return f;
  throw ConfigError("wavelength " + std::to_string(nm) +
                    " nm is not one of the design wavelengths");
}

double UnitCellSpec::structure_height() const {
  return layer_count * hole_height + (layer_count - 1) * spacer_height;
}

void UnitCellSpec::validate() const {
  if (layer_count < 1) throw ConfigError("unit cell: layer_count must be >= 1");
  if (!(period > 0.0)) throw ConfigError("unit cell: period must be positive");
  if (!(hole_height > 0.0)) throw ConfigError("unit cell: hole_height must be positive");
  if (spacer_height < 0.0) throw ConfigError("unit cell: spacer_height must be >= 0");
  if (!(width_min > 0.0 && width_min < width_max && width_max <= period))
    throw ConfigError("unit cell: require 0 < width_min < width_max <= period");
  if (n_substrate < 1.0 || n_hole < 1.0 || n_background < 1.0)
    throw ConfigError("unit cell: refractive indices must be >= 1");
}

UnitCellSpec UnitCellSpec::normal() { return UnitCellSpec{}; }

UnitCellSpec UnitCellSpec::small() {
  UnitCellSpec s;
  s.variant_name = "small";
  s.hole_height = 61.0;
  s.spacer_height = 0.0;
  return s;
}

UnitCellSpec UnitCellSpec::smallest() {
  UnitCellSpec s = scale_variant(small(), 0.1);
  s.variant_name = "smallest";
  return s;
}

UnitCellSpec UnitCellSpec::preset(std::string_view name) {
  if (name == "normal") return normal();
  if (name == "small") return small();
  if (name == "smallest") return smallest();
  throw ConfigError("unknown unit-cell preset '" + std::string(name) + "'");
}

UnitCellSpec scale_variant(const UnitCellSpec& spec, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor))
    throw ConfigError("scale_variant: factor must be positive");
  UnitCellSpec s = spec;
  s.period *= factor;
  s.hole_height *= factor;
  s.spacer_height *= factor;
  s.width_min *= factor;
  s.width_max *= factor;
  return s;
}

void check_bounds(const ParamVector& p, const UnitCellSpec& spec) {
  if (p.widths.size() != static_cast<std::size_t>(spec.layer_count))
    throw BoundsError("parameter vector has " + std::to_string(p.widths.size()) +
                      " widths, unit cell has " + std::to_string(spec.layer_count) +
                      " layers");
  for (std::size_t i = 0; i < p.widths.size(); ++i) {
    const double w = p.widths[i];
    if (!(w >= spec.width_min && w <= spec.width_max))
      throw BoundsError("width[" + std::to_string(i) + "] = " + std::to_string(w) +
                        " nm outside [" + std::to_string(spec.width_min) + ", " +
                        std::to_string(spec.width_max) + "]");
  }
}

std::vector<double> normalize(const ParamVector& p, const UnitCellSpec& spec) {
  check_bounds(p, spec);
  const double span = spec.width_max - spec.width_min;
  std::vector<double> x(p.widths.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = 2.0 * (p.widths[i] - spec.width_min) / span - 1.0;
  return x;
}

ParamVector denormalize(std::span<const double> x, const UnitCellSpec& spec) {
  if (x.size() != static_cast<std::size_t>(spec.layer_count))
    throw BoundsError("denormalize: wrong dimension");
  const double span = spec.width_max - spec.width_min;
  ParamVector p;
  p.widths.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= -1.0 && x[i] <= 1.0))
      throw BoundsError("denormalize: coordinate outside [-1, 1]");
    // Clamp so round-off at the endpoints never leaves the box.
    const double w = spec.width_min + 0.5 * (x[i] + 1.0) * span;
    p.widths[i] = std::min(std::max(w, spec.width_min), spec.width_max);
  }
  return p;
}

std::array<double, kFrequencyCount> one_hot(FrequencyId f) {
  std::array<double, kFrequencyCount> v{0.0, 0.0, 0.0};
  v[index_of(f)] = 1.0;
  return v;
}

std::vector<double> encode_input(const ParamVector& p, FrequencyId f,
                                 const UnitCellSpec& spec) {
  std::vector<double> x = normalize(p, spec);
  const auto h = one_hot(f);
  x.insert(x.end(), h.begin(), h.end());
  return x;
}

void to_json(nlohmann::json& j, const UnitCellSpec& s) {
  j = nlohmann::json{{"variant_name", s.variant_name}, {"period", s.period},
                     {"layer_count", s.layer_count},   {"hole_height", s.hole_height},
                     {"spacer_height", s.spacer_height}, {"width_min", s.width_min},
                     {"width_max", s.width_max},       {"n_substrate", s.n_substrate},
                     {"n_hole", s.n_hole},             {"n_background", s.n_background}};
}

void from_json(const nlohmann::json& j, UnitCellSpec& s) {
  // A bare preset name, or a preset plus field overrides.
  if (j.is_string()) {
    s = UnitCellSpec::preset(j.get<std::string>());
    return;
  }
  if (!j.is_object()) throw ConfigError("unit_cell must be an object or preset name");
  s = j.contains("preset") ? UnitCellSpec::preset(j.at("preset").get<std::string>())
                           : UnitCellSpec{};
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  take("variant_name", s.variant_name);
  take("period", s.period);
  take("layer_count", s.layer_count);
  take("hole_height", s.hole_height);
  take("spacer_height", s.spacer_height);
  take("width_min", s.width_min);
  take("width_max", s.width_max);
  take("n_substrate", s.n_substrate);
  take("n_hole", s.n_hole);
  take("n_background", s.n_background);
  s.validate();
}

}  // namespace lpa
