#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lpa/config.hpp"

namespace lpa::cli {

struct Common {
  RunConfig config;
  int jobs = 1;
  std::filesystem::path out;
  std::vector<std::uint64_t> seeds;  // --seed-list; empty means config.master_seed
  bool quiet = false;
};

struct GenDataArgs {
  std::size_t n = 0;
};

struct BaselineArgs {
  // Training-set sizes; empty means the cumulative budgets of the AL schedule.
  std::vector<std::size_t> budgets;
};

struct DesignArgs {
  std::filesystem::path ensemble;
  std::filesystem::path init;  // optional initial design
};

struct ValidateArgs {
  std::filesystem::path design;
  std::filesystem::path ensemble;
  std::filesystem::path labels;  // exact amplitudes instead of an ensemble
};

struct BenchArgs {
  std::filesystem::path ensemble;  // optional; an untrained ensemble times the same
  std::size_t n = 1000;            // surrogate points
  std::size_t oracle_n = 3;        // oracle labels
};

struct ExportArgs {
  std::vector<std::filesystem::path> runs;
};

// Each returns the process exit code; errors propagate as lpa exceptions.
int gen_data(const Common& c, const GenDataArgs& a);
int al_run(const Common& c);
int baseline_run(const Common& c, const BaselineArgs& a);
int design(const Common& c, const DesignArgs& a);
int validate(const Common& c, const ValidateArgs& a);
int bench(const Common& c, const BenchArgs& a);
int export_plots(const Common& c, const ExportArgs& a);
int cheb_run(const Common& c);

}  // namespace lpa::cli
