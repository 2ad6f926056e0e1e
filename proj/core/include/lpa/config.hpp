#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpa/active_learning.hpp"
#include "lpa/chebyshev.hpp"
#include "lpa/fdfd.hpp"
#include "lpa/geometry.hpp"
#include "lpa/metaopt.hpp"
#include "lpa/oracle.hpp"
#include "lpa/surrogate.hpp"

namespace lpa {

inline constexpr int kSchemaVersion = 1;

struct ChebyshevConfig {
  int n = 3;
  int d = 4;
  std::vector<FrequencyId> frequencies = {FrequencyId::Blue};
  std::size_t capacity = kDefaultChebCapacity;
  int test_size = 2000;
  bool operator==(const ChebyshevConfig&) const = default;
};

struct DesignConfig {
  int N = 10;
  FocalSpec focal;
  DesignOptConfig opt;
  FocalLineSpec focal_line;
};

// Every field has a default; the resolved form is echoed into run directories.
struct RunConfig {
  int schema_version = kSchemaVersion;
  UnitCellSpec unit_cell = UnitCellSpec::normal();
  GridOptions grid;
  OracleSpec oracle;
  EnsembleConfig ensemble;  // `ensemble` and `train` sections
  ALConfig al;
  ChebyshevConfig chebyshev;
  DesignConfig design;
  std::string output_dir = "runs";
  std::uint64_t master_seed = 0;
  bool record_timings = false;

  // Applies a seed to every seeded section.
  void set_seed(std::uint64_t seed);
  void validate() const;
};

// `unit_cell` may be a preset name or an object (optionally with "preset" as
// the starting point). oracle.settings.constants_file is resolved against
// `base_dir` and inlined.
RunConfig config_from_json(const nlohmann::json& j,
                           const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

void to_json(nlohmann::json& j, const ChebyshevConfig& c);
void from_json(const nlohmann::json& j, ChebyshevConfig& c);

}  // namespace lpa
