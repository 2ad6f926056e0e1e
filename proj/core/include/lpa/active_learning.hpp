#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpa/dataset.hpp"
#include "lpa/oracle.hpp"
#include "lpa/surrogate.hpp"

namespace lpa {

struct ALConfig {
  int n_init = 2000;
  int M = 4;                   // oversampling factor
  std::vector<int> K = {500};  // one entry per iteration, or a single starting value
  bool K_doubling = true;      // with a single K: K, 2K, 4K, ...
  int T = 9;                   // iterations
  int test_size = 2000;
  bool warm_start = true;      // continue from the previous weights each iteration
  std::uint64_t master_seed = 0;

  void validate() const;
  // Batch size of iteration i (1-based).
  int k_at(int iteration) const;
  std::size_t total_budget() const;
  bool operator==(const ALConfig&) const = default;
};

struct FeReport {
  double complex_fe = 0.0;
  double re = 0.0;
  double im = 0.0;
};

struct HistoryRow {
  int iter = 0;
  std::size_t n_train = 0;
  FeReport fe;
  std::uint64_t oracle_calls = 0;  // cumulative training labels
  double oracle_seconds = 0.0;     // cumulative
  double surrogate_eval_seconds = 0.0;
};

struct ALHistory {
  std::vector<HistoryRow> rows;
};

void write_history_csv(const std::filesystem::path& path, const ALHistory& h);
std::string history_csv(const ALHistory& h);
ALHistory read_history_csv(const std::filesystem::path& path);

struct RunOptions {
  int jobs = 1;
  bool record_timings = false;
  // When set, train.csv and test.csv are streamed here as rows are labeled,
  // so partial datasets survive an oracle failure.
  std::filesystem::path stream_dir;
  std::function<void(const std::string&)> log;
};

struct RunResult {
  Ensemble ensemble;
  LabeledSet train;
  LabeledSet test;
  ALHistory history;
};

// Indices of the K largest scores, ties broken by lower index.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t K);

// Throws ValidationError if `test` shares a row with `train`.
FeReport evaluate_fe(const Ensemble& e, const LabeledSet& test, const LabeledSet* train = nullptr);

// Test set drawn from the master seed only.
LabeledSet make_test_set(const ALConfig& cfg, const Oracle& oracle, const RunOptions& opts = {});

RunResult run_active(const ALConfig& cfg, const Oracle& oracle, const EnsembleConfig& ens,
                     const RunOptions& opts = {});
RunResult run_baseline(std::size_t n_total, const ALConfig& cfg, const Oracle& oracle,
                       const EnsembleConfig& ens, const RunOptions& opts = {});

// config.json (given echo), train.csv, test.csv, history.csv, ensemble.json.
void write_run_dir(const std::filesystem::path& dir, const nlohmann::json& config_echo,
                   const RunResult& result);

// Least-squares slope of log(fe) against log(n).
double loglog_slope(std::span<const double> n, std::span<const double> fe);

void to_json(nlohmann::json& j, const ALConfig& c);
void from_json(const nlohmann::json& j, ALConfig& c);

}  // namespace lpa
