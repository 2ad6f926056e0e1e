#include "lpa/config.hpp"

#include <fstream>
#include <set>

#include "lpa/error.hpp"

namespace lpa {

void RunConfig::set_seed(std::uint64_t seed) {
  master_seed = seed;
  al.master_seed = seed;
  ensemble.seed = seed;
  ensemble.train.seed = seed;
  design.opt.seed = seed;
}

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
  unit_cell.validate();
  ensemble.validate();
  al.validate();
  design.opt.validate();
  design.focal.validate();
  if (design.N < 1) throw ConfigError("design.N must be >= 1");
  if (chebyshev.n < 1 || chebyshev.d < 1 || chebyshev.d > unit_cell.layer_count)
    throw ConfigError("chebyshev: need n >= 1 and 1 <= d <= layer_count");
  if (chebyshev.frequencies.empty()) throw ConfigError("chebyshev.frequencies is empty");
}

void to_json(nlohmann::json& j, const ChebyshevConfig& c) {
  std::vector<std::string> names;
  for (auto f : c.frequencies) names.emplace_back(frequency_name(f));
  j = nlohmann::json{{"n", c.n}, {"d", c.d}, {"frequencies", names},
                     {"capacity", c.capacity}, {"test_size", c.test_size}};
}

void from_json(const nlohmann::json& j, ChebyshevConfig& c) {
  c = ChebyshevConfig{};
  if (j.contains("n")) j.at("n").get_to(c.n);
  if (j.contains("d")) j.at("d").get_to(c.d);
  if (j.contains("capacity")) j.at("capacity").get_to(c.capacity);
  if (j.contains("test_size")) j.at("test_size").get_to(c.test_size);
  if (j.contains("frequencies")) {
    c.frequencies.clear();
    for (const auto& s : j.at("frequencies"))
      c.frequencies.push_back(frequency_from_name(s.get<std::string>()));
  }
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

UnitCellSpec unit_cell_from(const nlohmann::json& j) {
  if (j.is_string()) return UnitCellSpec::preset(j.get<std::string>());
  nlohmann::json base = UnitCellSpec::normal();
  if (j.contains("preset")) base = UnitCellSpec::preset(j.at("preset").get<std::string>());
  for (const auto& [k, v] : j.items())
    if (k != "preset") base[k] = v;
  return base.get<UnitCellSpec>();
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"schema_version", "unit_cell", "grid", "oracle", "ensemble", "train", "al",
                  "chebyshev", "design", "output_dir", "master_seed", "record_timings"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("schema_version")) j.at("schema_version").get_to(c.schema_version);
    if (j.contains("unit_cell")) c.unit_cell = unit_cell_from(j.at("unit_cell"));
    if (j.contains("grid")) j.at("grid").get_to(c.grid);
    if (j.contains("oracle")) j.at("oracle").get_to(c.oracle);
    if (c.oracle.settings.contains("constants_file")) {
      std::filesystem::path p = c.oracle.settings.at("constants_file").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      std::ifstream in(p);
      if (!in) throw ConfigError("cannot read constants file " + p.string());
      nlohmann::json k = nlohmann::json::parse(in);
      c.oracle.settings.erase("constants_file");
      c.oracle.settings["constants"] = k.contains("constants") ? k.at("constants") : k;
    }
    nlohmann::json ens = j.value("ensemble", nlohmann::json::object());
    if (j.contains("train")) ens["train"] = j.at("train");
    c.ensemble = ens.get<EnsembleConfig>();
    if (j.contains("al")) j.at("al").get_to(c.al);
    if (j.contains("chebyshev")) j.at("chebyshev").get_to(c.chebyshev);
    if (j.contains("design")) {
      const auto& d = j.at("design");
      reject_unknown(d, {"N", "focal", "optimizer", "focal_line"}, "design");
      if (d.contains("N")) d.at("N").get_to(c.design.N);
      if (d.contains("focal")) d.at("focal").get_to(c.design.focal);
      if (d.contains("optimizer")) d.at("optimizer").get_to(c.design.opt);
      if (d.contains("focal_line")) d.at("focal_line").get_to(c.design.focal_line);
    }
    if (j.contains("output_dir")) j.at("output_dir").get_to(c.output_dir);
    if (j.contains("record_timings")) j.at("record_timings").get_to(c.record_timings);
    // An explicit master_seed seeds every section; section seeds given
    // alongside it are kept.
    if (j.contains("master_seed")) {
      const auto seed = j.at("master_seed").get<std::uint64_t>();
      c.master_seed = seed;
      if (!j.contains("al") || !j.at("al").contains("master_seed")) c.al.master_seed = seed;
      if (!ens.contains("seed")) c.ensemble.seed = seed;
      if (!ens.contains("train") || !ens.at("train").contains("seed")) c.ensemble.train.seed = seed;
      if (!j.contains("design") || !j.at("design").contains("optimizer") ||
          !j.at("design").at("optimizer").contains("seed"))
        c.design.opt.seed = seed;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (c.ensemble.architecture.input_dim != static_cast<int>(input_dimension(c.unit_cell)))
    c.ensemble.architecture.input_dim = static_cast<int>(input_dimension(c.unit_cell));
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json ens = c.ensemble;
  nlohmann::json train = ens.at("train");
  ens.erase("train");
  return {{"schema_version", c.schema_version},
          {"unit_cell", c.unit_cell},
          {"grid", c.grid},
          {"oracle", c.oracle},
          {"ensemble", ens},
          {"train", train},
          {"al", c.al},
          {"chebyshev", c.chebyshev},
          {"design",
           {{"N", c.design.N},
            {"focal", c.design.focal},
            {"optimizer", c.design.opt},
            {"focal_line", c.design.focal_line}}},
          {"output_dir", c.output_dir},
          {"master_seed", c.master_seed},
          {"record_timings", c.record_timings}};
}

}  // namespace lpa
