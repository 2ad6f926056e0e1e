#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>

#include "lpa/chebyshev.hpp"
#include "lpa/error.hpp"
#include "lpa/random.hpp"

namespace lpa::cli {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

void say(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << "lpa: " << msg << '\n';
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed " + path.string() + ": " + e.what());
  }
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

struct SeededRun {
  RunConfig config;
  fs::path dir;
};

// One entry per --seed-list value (each in its own seed_<s> subdirectory),
// or the configuration as given.
std::vector<SeededRun> seeded_runs(const Common& c) {
  const fs::path out = require_out(c);
  if (c.seeds.empty()) return {{c.config, out}};
  std::vector<SeededRun> runs;
  for (auto s : c.seeds) {
    RunConfig cfg = c.config;
    cfg.set_seed(s);
    runs.push_back({cfg, out / ("seed_" + std::to_string(s))});
  }
  return runs;
}

RunOptions run_options(const Common& c, const RunConfig& cfg, const fs::path& dir) {
  RunOptions o;
  o.jobs = c.jobs;
  o.record_timings = cfg.record_timings;
  o.stream_dir = dir;
  if (!c.quiet) o.log = [](const std::string& m) { std::cerr << "lpa: " << m << '\n'; };
  return o;
}

void write_run_marker(const fs::path& dir, const std::string& command, const std::string& series,
                      const RunConfig& cfg, const Oracle& oracle) {
  write_json(dir / "run.json", {{"command", command},
                                {"series", series},
                                {"seed", cfg.master_seed},
                                {"oracle", oracle.describe()},
                                {"schema_version", kSchemaVersion}});
}

std::unique_ptr<Oracle> oracle_for(const RunConfig& cfg, const UnitCellSpec& spec) {
  return make_oracle(cfg.oracle, spec, cfg.grid);
}

}  // namespace

int gen_data(const Common& c, const GenDataArgs& a) {
  if (c.out.empty()) throw ConfigError("--out is required");
  const RunConfig& cfg = c.config;
  auto oracle = oracle_for(cfg, cfg.unit_cell);
  if (c.out.has_parent_path()) fs::create_directories(c.out.parent_path());
  fs::remove(c.out);
  CsvAppender sink(c.out, cfg.unit_cell.layer_count);
  Rng rng(derive_seed(cfg.master_seed, "gen-data"));
  const auto q = sample_uniform(rng, cfg.unit_cell, a.n);
  say(c, "labeling " + std::to_string(a.n) + " points with " + oracle->kind());
  label_batch(*oracle, q, c.jobs, cfg.record_timings, &sink);
  return 0;
}

int al_run(const Common& c) {
  for (const auto& run : seeded_runs(c)) {
    auto oracle = oracle_for(run.config, run.config.unit_cell);
    const auto res = run_active(run.config.al, *oracle, run.config.ensemble,
                                run_options(c, run.config, run.dir));
    write_run_dir(run.dir, to_json(run.config), res);
    write_run_marker(run.dir, "al-run", "active", run.config, *oracle);
    say(c, "wrote " + run.dir.string());
  }
  return 0;
}

int baseline_run(const Common& c, const BaselineArgs& a) {
  for (const auto& run : seeded_runs(c)) {
    const ALConfig& al = run.config.al;
    std::vector<std::size_t> budgets = a.budgets;
    if (budgets.empty()) {
      std::size_t n = static_cast<std::size_t>(al.n_init);
      budgets.push_back(n);
      for (int i = 1; i <= al.T; ++i) budgets.push_back(n += static_cast<std::size_t>(al.k_at(i)));
    }
    std::sort(budgets.begin(), budgets.end());
    budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
    auto oracle = oracle_for(run.config, run.config.unit_cell);
    // Nested budgets share their test set and leading training rows.
    CachingOracle cached(*oracle);
    ALHistory history;
    RunResult last;
    for (std::size_t b = 0; b < budgets.size(); ++b) {
      const bool final = b + 1 == budgets.size();
      RunOptions opts = run_options(c, run.config, final ? run.dir : fs::path{});
      say(c, "baseline with " + std::to_string(budgets[b]) + " training points");
      last = run_baseline(budgets[b], al, cached, run.config.ensemble, opts);
      HistoryRow row = last.history.rows.front();
      row.iter = static_cast<int>(b);
      history.rows.push_back(row);
    }
    last.history = history;
    write_run_dir(run.dir, to_json(run.config), last);
    write_run_marker(run.dir, "baseline-run", "baseline", run.config, *oracle);
    say(c, "wrote " + run.dir.string());
  }
  return 0;
}

int design(const Common& c, const DesignArgs& a) {
  const fs::path out = require_out(c);
  if (a.ensemble.empty()) throw ConfigError("design needs --ensemble");
  const Ensemble ens = load_ensemble(a.ensemble);
  const DesignConfig& dc = c.config.design;
  MetasurfaceDesign d0 = a.init.empty()
                             ? random_design(ens.spec(), static_cast<std::size_t>(dc.N), dc.focal,
                                             dc.opt.seed)
                             : load_design(a.init);
  if (!(d0.spec == ens.spec())) throw ConfigError("design: unit cell differs from the ensemble's");
  const EnsembleAmplitudes model(ens);
  say(c, "optimizing " + std::to_string(d0.size()) + " cells for " +
             std::to_string(dc.opt.iterations) + " iterations");
  const auto res = optimize(d0, model, dc.opt);
  const ObjectiveValue before = objective(d0, model);
  const ObjectiveValue after = objective(res.design, model);
  save_design(out / "initial_design.json", d0);
  save_design(out / "design.json", res.design);
  write_trace_csv(out / "trace.csv", res.trace);
  write_json(out / "config.json", to_json(c.config));
  write_json(out / "summary.json",
             {{"initial_worst_case", before.worst_case},
              {"final_worst_case", after.worst_case},
              {"improvement", before.worst_case > 0 ? after.worst_case / before.worst_case : 0.0},
              {"iterations", dc.opt.iterations},
              {"ensemble", a.ensemble.string()}});
  write_json(out / "run.json",
             {{"command", "design"}, {"series", "design"}, {"seed", dc.opt.seed},
              {"schema_version", kSchemaVersion}});
  say(c, "worst-case focal intensity " + std::to_string(before.worst_case) + " -> " +
             std::to_string(after.worst_case));
  return 0;
}

int validate(const Common& c, const ValidateArgs& a) {
  const fs::path out = require_out(c);
  if (a.design.empty()) throw ConfigError("validate needs --design");
  const MetasurfaceDesign d = load_design(a.design);
  std::unique_ptr<Ensemble> ens;
  std::unique_ptr<Oracle> table;
  std::unique_ptr<AmplitudeModel> model;
  if (!a.labels.empty()) {
    table = std::make_unique<LookupOracle>(d.spec, read_csv(a.labels));
    model = std::make_unique<OracleAmplitudes>(*table, 1);
  } else if (!a.ensemble.empty()) {
    ens = std::make_unique<Ensemble>(load_ensemble(a.ensemble));
    model = std::make_unique<EnsembleAmplitudes>(*ens);
  } else {
    throw ConfigError("validate needs --ensemble or --labels");
  }
  auto truth = oracle_for(c.config, d.spec);
  say(c, "validating " + std::to_string(d.size()) + " cells with " + truth->kind());
  const auto r = validate(d, *model, *truth, c.config.design.focal_line, c.jobs);
  write_focal_csv(out / "predicted_focal.csv", r.predicted);
  write_focal_csv(out / "validated_focal.csv", r.validated);
  write_csv(out / "labels.csv", r.labels, d.spec.layer_count);
  nlohmann::json summary = report_json(r);
  summary["model"] = a.labels.empty() ? "ensemble" : "labels";
  write_json(out / "summary.json", summary);
  write_json(out / "run.json", {{"command", "validate"},
                                {"series", "validate"},
                                {"oracle", truth->describe()},
                                {"schema_version", kSchemaVersion}});
  say(c, "relative L2 discrepancy " + std::to_string(r.discrepancy_all));
  return 0;
}

int bench(const Common& c, const BenchArgs& a) {
  if (a.n == 0 || a.oracle_n == 0) throw ConfigError("bench needs --n and --oracle-n >= 1");
  const Ensemble ens = a.ensemble.empty()
                           ? Ensemble(c.config.unit_cell, c.config.ensemble)
                           : load_ensemble(a.ensemble);
  const UnitCellSpec& spec = ens.spec();
  auto oracle = oracle_for(c.config, spec);
  Rng rng(derive_seed(c.config.master_seed, "bench"));
  const auto q = sample_uniform(rng, spec, std::max(a.n, a.oracle_n));

  auto t0 = Clock::now();
  double sink = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) sink += ens.predict(q[i].params, q[i].frequency).mu_re;
  const double single = std::chrono::duration<double>(Clock::now() - t0).count() / a.n;

  std::vector<ParamVector> p;
  std::vector<FrequencyId> f;
  for (std::size_t i = 0; i < a.n; ++i) {
    p.push_back(q[i].params);
    f.push_back(q[i].frequency);
  }
  t0 = Clock::now();
  sink += ens.predict(p, f).front().mu_re;
  const double batched = std::chrono::duration<double>(Clock::now() - t0).count() / a.n;

  t0 = Clock::now();
  for (std::size_t i = 0; i < a.oracle_n; ++i)
    sink += oracle->label(q[i].params, q[i].frequency, false).t.real();
  const double solve = std::chrono::duration<double>(Clock::now() - t0).count() / a.oracle_n;

  const nlohmann::json report = {
      {"surrogate_s_per_point", single},
      {"surrogate_batch_s_per_point", batched},
      {"oracle_s_per_point", solve},
      {"speedup", solve / single},
      {"oracle", oracle->describe()},
      {"unit_cell", spec.variant_name},
      {"n", a.n},
      {"oracle_n", a.oracle_n},
      {"members_per_part", ens.config().members},
      {"hidden", ens.config().architecture.hidden},
      {"checksum", std::isfinite(sink)}};
  if (!c.out.empty()) {
    if (c.out.has_parent_path()) fs::create_directories(c.out.parent_path());
    write_json(c.out, report);
  }
  std::cout << report.dump(2) << '\n';
  return 0;
}

int export_plots(const Common& c, const ExportArgs& a) {
  if (a.runs.empty()) throw ConfigError("export-plots needs at least one run directory");
  const fs::path out = require_out(c);
  struct Point {
    std::string series;
    std::uint64_t seed;
    std::size_t n;
    FeReport fe;
  };
  std::vector<Point> pts;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<Point>> curves;
  for (const auto& dir : a.runs) {
    if (!fs::exists(dir / "run.json"))
      throw ConfigError("incomplete run directory " + dir.string() + " (no run.json)");
    const auto marker = read_json(dir / "run.json");
    const std::string series = marker.value("series", "run");
    const std::uint64_t seed = marker.value("seed", std::uint64_t{0});
    bool used = false;
    if (fs::exists(dir / "history.csv")) {
      for (const auto& r : read_history_csv(dir / "history.csv").rows) {
        pts.push_back({series, seed, r.n_train, r.fe});
        curves[{series, seed}].push_back(pts.back());
      }
      used = true;
    }
    for (const char* name : {"predicted_focal.csv", "validated_focal.csv", "trace.csv"}) {
      if (!fs::exists(dir / name)) continue;
      fs::copy_file(dir / name, out / (dir.filename().string() + "_" + name),
                    fs::copy_options::overwrite_existing);
      used = true;
    }
    if (!used) throw ConfigError("incomplete run directory " + dir.string());
  }
  std::stable_sort(pts.begin(), pts.end(), [](const Point& x, const Point& y) {
    if (x.n != y.n) return x.n < y.n;
    if (x.series != y.series) return x.series < y.series;
    return x.seed < y.seed;
  });
  {
    std::ofstream csv(out / "learning_curve.csv", std::ios::binary);
    if (!csv) throw ConfigError("cannot write learning_curve.csv");
    csv << "series,seed,n_train,fe_complex,fe_re,fe_im\n";
    for (const auto& p : pts)
      csv << p.series << ',' << p.seed << ',' << p.n << ',' << format_double(p.fe.complex_fe)
          << ',' << format_double(p.fe.re) << ',' << format_double(p.fe.im) << '\n';
  }
  write_json(out / "learning_curve.schema.json",
             {{"file", "learning_curve.csv"},
              {"order", "ascending n_train, then series, then seed"},
              {"columns",
               {{{"name", "series"}, {"type", "string"},
                 {"description", "active | baseline | chebyshev"}},
                {{"name", "seed"}, {"type", "integer"}, {"description", "master seed of the run"}},
                {{"name", "n_train"}, {"type", "integer"},
                 {"description", "training labels (Chebyshev: n^d tensor nodes per frequency)"}},
                {{"name", "fe_complex"}, {"type", "number"},
                 {"description", "|u - v| / |v| over the complex test labels"}},
                {{"name", "fe_re"}, {"type", "number"}, {"description", "same, real parts"}},
                {{"name", "fe_im"}, {"type", "number"},
                 {"description", "same, imaginary parts"}}}}});
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [key, rows] : curves) {
    std::vector<double> n, fe;
    for (const auto& p : rows) {
      n.push_back(static_cast<double>(p.n));
      fe.push_back(p.fe.complex_fe);
    }
    nlohmann::json s = {{"series", key.first},
                        {"seed", key.second},
                        {"points", rows.size()},
                        {"final_n_train", rows.back().n},
                        {"final_fe", rows.back().fe.complex_fe}};
    if (rows.size() >= 2) {
      s["loglog_slope"] = loglog_slope(n, fe);
      say(c, key.first + " seed " + std::to_string(key.second) + ": log-log slope " +
                 std::to_string(s["loglog_slope"].get<double>()));
    }
    summary.push_back(s);
  }
  write_json(out / "summary.json", {{"curves", summary}});
  return 0;
}

int cheb_run(const Common& c) {
  const fs::path out = require_out(c);
  const RunConfig& cfg = c.config;
  const ChebyshevConfig& cc = cfg.chebyshev;
  const UnitCellSpec& spec = cfg.unit_cell;
  auto oracle = oracle_for(cfg, spec);
  const std::size_t nodes = tensor_size(cc.n, cc.d, cc.capacity);
  say(c, "fitting Chebyshev interpolant on " + std::to_string(nodes) + " nodes per frequency");

  LabeledSet node_labels;
  const ChebSurrogate cheb =
      ChebSurrogate::fit(*oracle, cc.n, cc.d, cc.frequencies, c.jobs, &node_labels);

  auto label_set = [&](std::span<const Query> q) {
    LabeledSet s;
    for (auto& r : label_batch(*oracle, q, c.jobs, cfg.record_timings)) s.add(std::move(r));
    return s;
  };
  Rng test_rng(derive_seed(cfg.master_seed, "cheb-test"));
  const LabeledSet test = label_set(sample_subspace(
      test_rng, spec, cc.d, static_cast<std::size_t>(cc.test_size), cc.frequencies));

  std::vector<std::complex<double>> u, v;
  for (const auto& r : test) {
    u.push_back(cheb.predict(r.params, r.frequency));
    v.push_back(r.t);
  }
  const double cheb_fe = fractional_error(std::span<const std::complex<double>>(u),
                                          std::span<const std::complex<double>>(v));

  // Ensemble trained on the same label budget, drawn at random in the subspace.
  Rng nn_rng(derive_seed(cfg.master_seed, "cheb-nn"));
  const std::size_t budget = node_labels.size();
  const LabeledSet nn_train =
      label_set(sample_subspace(nn_rng, spec, cc.d, budget, cc.frequencies));
  EnsembleConfig ec = cfg.ensemble;
  ec.seed = derive_seed(cfg.master_seed, "ensemble", ec.seed);
  Ensemble nn(spec, ec);
  say(c, "training comparison ensemble on " + std::to_string(budget) + " points");
  nn.fit(nn_train, c.jobs);
  const FeReport nn_fe = evaluate_fe(nn, test, &nn_train);

  write_json(out / "chebyshev.json", cheb.to_json());
  write_csv(out / "nodes.csv", node_labels, spec.layer_count);
  write_csv(out / "nn_train.csv", nn_train, spec.layer_count);
  write_csv(out / "test.csv", test, spec.layer_count);
  write_json(out / "config.json", to_json(cfg));
  u.clear();
  v.clear();
  std::vector<double> ur, vr, ui, vi;
  for (const auto& r : test) {
    const auto p = cheb.predict(r.params, r.frequency);
    ur.push_back(p.real());
    ui.push_back(p.imag());
    vr.push_back(r.t.real());
    vi.push_back(r.t.imag());
  }
  ALHistory h;
  HistoryRow row;
  row.n_train = nodes;
  row.fe = {cheb_fe, fractional_error(std::span<const double>(ur), std::span<const double>(vr)),
            fractional_error(std::span<const double>(ui), std::span<const double>(vi))};
  row.oracle_calls = node_labels.size();
  h.rows.push_back(row);
  write_history_csv(out / "history.csv", h);
  const std::size_t full_nodes = tensor_size(cc.n, spec.layer_count, 1ull << 62);
  write_json(out / "summary.json", {{"n", cc.n},
                                    {"d", cc.d},
                                    {"nodes_per_frequency", nodes},
                                    {"labels", node_labels.size()},
                                    {"chebyshev_fe", cheb_fe},
                                    {"nn_fe", nn_fe.complex_fe},
                                    {"nn_budget", budget},
                                    {"full_dimension_nodes", full_nodes},
                                    {"test_size", test.size()}});
  write_run_marker(out, "cheb-run", "chebyshev", cfg, *oracle);
  say(c, "Chebyshev FE " + std::to_string(cheb_fe) + ", ensemble FE " +
             std::to_string(nn_fe.complex_fe));
  return 0;
}

}  // namespace lpa::cli
