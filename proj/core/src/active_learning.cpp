#include "lpa/active_learning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lpa/error.hpp"
#include "lpa/random.hpp"

namespace lpa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(const RunOptions& opts, const std::string& msg) {
  if (opts.log) opts.log(msg);
}

// Uniform queries that repeat neither each other nor any row of `avoid`.
std::vector<Query> draw_unique(Rng& rng, const UnitCellSpec& spec, std::size_t n,
                               std::initializer_list<const LabeledSet*> avoid) {
  std::vector<Query> out;
  out.reserve(n);
  LabeledSet seen;
  while (out.size() < n) {
    Query q = sample_uniform(rng, spec, 1)[0];
    bool dup = seen.contains(q.params, q.frequency);
    for (const LabeledSet* s : avoid) dup = dup || (s && s->contains(q.params, q.frequency));
    if (dup) continue;
    seen.add({q.params, q.frequency, {}, 0.0, Provenance::Other, 0});
    out.push_back(std::move(q));
  }
  return out;
}

std::unique_ptr<CsvAppender> stream(const RunOptions& opts, const char* name, int layers) {
  if (opts.stream_dir.empty()) return nullptr;
  std::filesystem::create_directories(opts.stream_dir);
  const auto path = opts.stream_dir / name;
  std::filesystem::remove(path);
  return std::make_unique<CsvAppender>(path, layers);
}

struct Tally {
  std::uint64_t calls = 0;
  double seconds = 0.0;
};

void label_into(LabeledSet& set, const Oracle& oracle, std::span<const Query> q,
                Provenance tag, int iteration, const RunOptions& opts, CsvAppender* sink,
                Tally* tally) {
  auto rows = label_batch(oracle, q, opts.jobs, opts.record_timings, sink);
  for (auto& r : rows) {
    r.source = tag;
    r.iteration = iteration;
    if (tally) {
      ++tally->calls;
      tally->seconds += r.solver_seconds;
    }
    set.add(std::move(r));
  }
}

std::vector<SurrogatePrediction> predict_queries(const Ensemble& e, std::span<const Query> q) {
  std::vector<SurrogatePrediction> out;
  out.reserve(q.size());
  constexpr std::size_t chunk = 2048;
  std::vector<ParamVector> p;
  std::vector<FrequencyId> f;
  for (std::size_t start = 0; start < q.size(); start += chunk) {
    const std::size_t end = std::min(q.size(), start + chunk);
    p.clear();
    f.clear();
    for (std::size_t i = start; i < end; ++i) {
      p.push_back(q[i].params);
      f.push_back(q[i].frequency);
    }
    auto part = e.predict(p, f);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

EnsembleConfig run_ensemble_config(const ALConfig& cfg, EnsembleConfig ens) {
  ens.seed = derive_seed(cfg.master_seed, "ensemble", ens.seed);
  return ens;
}

}  // namespace

void ALConfig::validate() const {
  if (n_init < 1) throw ConfigError("al: n_init must be >= 1");
  if (M < 1) throw ConfigError("al: M must be >= 1");
  if (T < 0) throw ConfigError("al: T must be >= 0");
  if (test_size < 1) throw ConfigError("al: test_size must be >= 1");
  if (K.empty()) throw ConfigError("al: K must be given");
  for (int k : K)
    if (k < 1) throw ConfigError("al: K entries must be >= 1");
  if (K.size() > 1 && static_cast<int>(K.size()) < T)
    throw ConfigError("al: K list shorter than T");
}

int ALConfig::k_at(int iteration) const {
  if (iteration < 1) throw ConfigError("al: iterations are numbered from 1");
  if (K.size() > 1) return K[static_cast<std::size_t>(iteration - 1)];
  if (!K_doubling) return K[0];
  return K[0] << (iteration - 1);
}

std::size_t ALConfig::total_budget() const {
  std::size_t n = static_cast<std::size_t>(n_init);
  for (int i = 1; i <= T; ++i) n += static_cast<std::size_t>(k_at(i));
  return n;
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t K) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  K = std::min(K, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(K), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return a < b;
                    });
  idx.resize(K);
  return idx;
}

FeReport evaluate_fe(const Ensemble& e, const LabeledSet& test, const LabeledSet* train) {
  if (test.empty()) throw ConfigError("evaluate_fe: empty test set");
  if (train && test.intersects(*train))
    throw ValidationError("evaluate_fe: test set overlaps the training set");
  std::vector<ParamVector> p;
  std::vector<FrequencyId> f;
  for (const auto& r : test) {
    p.push_back(r.params);
    f.push_back(r.frequency);
  }
  const auto pred = e.predict(p, f);
  std::vector<std::complex<double>> u, v;
  std::vector<double> ur, vr, ui, vi;
  for (std::size_t i = 0; i < test.size(); ++i) {
    u.push_back(pred[i].mean());
    v.push_back(test[i].t);
    ur.push_back(pred[i].mu_re);
    vr.push_back(test[i].t.real());
    ui.push_back(pred[i].mu_im);
    vi.push_back(test[i].t.imag());
  }
  FeReport r;
  r.complex_fe = fractional_error(std::span<const std::complex<double>>(u),
                                  std::span<const std::complex<double>>(v));
  r.re = fractional_error(std::span<const double>(ur), std::span<const double>(vr));
  r.im = fractional_error(std::span<const double>(ui), std::span<const double>(vi));
  return r;
}

LabeledSet make_test_set(const ALConfig& cfg, const Oracle& oracle, const RunOptions& opts) {
  Rng rng(derive_seed(cfg.master_seed, "test"));
  const auto q = draw_unique(rng, oracle.spec(), static_cast<std::size_t>(cfg.test_size), {});
  auto sink = stream(opts, "test.csv", oracle.spec().layer_count);
  LabeledSet test;
  label_into(test, oracle, q, Provenance::Test, 0, opts, sink.get(), nullptr);
  return test;
}

namespace {

RunResult run_impl(const ALConfig& cfg, const Oracle& oracle, const EnsembleConfig& ens_cfg,
                   const RunOptions& opts, Provenance init_tag) {
  cfg.validate();
  const UnitCellSpec& spec = oracle.spec();
  RunResult res;
  say(opts, "labeling test set (" + std::to_string(cfg.test_size) + " points)");
  res.test = make_test_set(cfg, oracle, opts);

  auto sink = stream(opts, "train.csv", spec.layer_count);
  Tally tally;
  {
    Rng rng(derive_seed(cfg.master_seed, "init"));
    const auto q = draw_unique(rng, spec, static_cast<std::size_t>(cfg.n_init), {&res.test});
    say(opts, "labeling " + std::to_string(q.size()) + " initial points");
    label_into(res.train, oracle, q, init_tag, 0, opts, sink.get(), &tally);
  }
  const EnsembleConfig ens = run_ensemble_config(cfg, ens_cfg);
  res.ensemble = Ensemble(spec, ens);

  auto record = [&](int iter, double eval_seconds) {
    const auto t0 = Clock::now();
    HistoryRow row;
    row.iter = iter;
    row.n_train = res.train.size();
    row.fe = evaluate_fe(res.ensemble, res.test, &res.train);
    row.oracle_calls = tally.calls;
    row.oracle_seconds = tally.seconds;
    row.surrogate_eval_seconds = opts.record_timings ? eval_seconds + seconds_since(t0) : 0.0;
    res.history.rows.push_back(row);
    std::ostringstream msg;
    msg << "iter " << iter << ": n_train " << row.n_train << ", FE " << row.fe.complex_fe;
    say(opts, msg.str());
  };

  say(opts, "training initial ensemble");
  res.ensemble.fit(res.train, opts.jobs);
  record(0, 0.0);

  for (int i = 1; i <= cfg.T; ++i) {
    const int K = cfg.k_at(i);
    Rng rng(derive_seed(cfg.master_seed, "candidates", static_cast<std::uint64_t>(i)));
    const auto cand = draw_unique(rng, spec, static_cast<std::size_t>(K) * cfg.M,
                                  {&res.train, &res.test});
    const auto t0 = Clock::now();
    const auto pred = predict_queries(res.ensemble, cand);
    std::vector<double> scores(pred.size());
    for (std::size_t k = 0; k < pred.size(); ++k) scores[k] = acquisition_score(pred[k]);
    const auto pick = select_top_k(scores, static_cast<std::size_t>(K));
    const double eval_seconds = seconds_since(t0);
    std::vector<Query> chosen;
    chosen.reserve(pick.size());
    for (std::size_t k : pick) chosen.push_back(cand[k]);
    label_into(res.train, oracle, chosen, Provenance::Acquired, i, opts, sink.get(), &tally);
    if (!cfg.warm_start) res.ensemble = Ensemble(spec, ens);
    res.ensemble.fit(res.train, opts.jobs);
    record(i, eval_seconds);
  }
  res.ensemble.dataset_fingerprint = fingerprint(to_csv(res.train, spec.layer_count));
  return res;
}

}  // namespace

RunResult run_active(const ALConfig& cfg, const Oracle& oracle, const EnsembleConfig& ens,
                     const RunOptions& opts) {
  return run_impl(cfg, oracle, ens, opts, Provenance::Init);
}

RunResult run_baseline(std::size_t n_total, const ALConfig& cfg, const Oracle& oracle,
                       const EnsembleConfig& ens_cfg, const RunOptions& opts) {
  if (n_total < 1) throw ConfigError("baseline: n_total must be >= 1");
  ALConfig c = cfg;
  c.n_init = static_cast<int>(n_total);
  c.T = 0;
  return run_impl(c, oracle, ens_cfg, opts, Provenance::Baseline);
}

void write_history_csv(const std::filesystem::path& path, const ALHistory& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << history_csv(h);
}

std::string history_csv(const ALHistory& h) {
  std::ostringstream out;
  out << "iter,n_train,fe_complex,fe_re,fe_im,oracle_calls,oracle_seconds,surrogate_eval_seconds\n";
  for (const auto& r : h.rows)
    out << r.iter << ',' << r.n_train << ',' << format_double(r.fe.complex_fe) << ','
        << format_double(r.fe.re) << ',' << format_double(r.fe.im) << ',' << r.oracle_calls << ','
        << format_double(r.oracle_seconds) << ',' << format_double(r.surrogate_eval_seconds)
        << '\n';
  return out.str();
}

ALHistory read_history_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("iter,n_train,fe_complex", 0) != 0)
    throw ConfigError(path.string() + ": not a history file");
  ALHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<std::string> c;
    while (std::getline(ss, cell, ',')) c.push_back(cell);
    if (c.size() != 8) throw ConfigError(path.string() + ": malformed history row");
    HistoryRow r;
    r.iter = std::stoi(c[0]);
    r.n_train = std::stoull(c[1]);
    r.fe = {std::stod(c[2]), std::stod(c[3]), std::stod(c[4])};
    r.oracle_calls = std::stoull(c[5]);
    r.oracle_seconds = std::stod(c[6]);
    r.surrogate_eval_seconds = std::stod(c[7]);
    h.rows.push_back(r);
  }
  return h;
}

void write_run_dir(const std::filesystem::path& dir, const nlohmann::json& config_echo,
                   const RunResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json", std::ios::binary);
    if (!out) throw ConfigError("cannot write " + (dir / "config.json").string());
    out << config_echo.dump(2) << '\n';
  }
  const int layers = result.ensemble.spec().layer_count;
  write_csv(dir / "train.csv", result.train, layers);
  write_csv(dir / "test.csv", result.test, layers);
  write_history_csv(dir / "history.csv", result.history);
  save_ensemble(dir / "ensemble.json", result.ensemble);
}

double loglog_slope(std::span<const double> n, std::span<const double> fe) {
  if (n.size() != fe.size() || n.size() < 2) throw ConfigError("loglog_slope: need >= 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    const double x = std::log(n[i]), y = std::log(fe[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = m * sxx - sx * sx;
  if (den == 0.0) throw NumericError("loglog_slope: degenerate abscissae");
  return (m * sxy - sx * sy) / den;
}

void to_json(nlohmann::json& j, const ALConfig& c) {
  j = nlohmann::json{{"n_init", c.n_init},         {"M", c.M},
                     {"K", c.K},                   {"K_doubling", c.K_doubling},
                     {"T", c.T},                   {"test_size", c.test_size},
                     {"warm_start", c.warm_start}, {"master_seed", c.master_seed}};
}

void from_json(const nlohmann::json& j, ALConfig& c) {
  c = ALConfig{};
  if (j.contains("n_init")) j.at("n_init").get_to(c.n_init);
  if (j.contains("M")) j.at("M").get_to(c.M);
  if (j.contains("K")) {
    const auto& k = j.at("K");
    c.K = k.is_array() ? k.get<std::vector<int>>() : std::vector<int>{k.get<int>()};
  }
  if (j.contains("K_doubling")) j.at("K_doubling").get_to(c.K_doubling);
  if (j.contains("T")) j.at("T").get_to(c.T);
  if (j.contains("test_size")) j.at("test_size").get_to(c.test_size);
  if (j.contains("warm_start")) j.at("warm_start").get_to(c.warm_start);
  if (j.contains("master_seed")) j.at("master_seed").get_to(c.master_seed);
  c.validate();
}

}  // namespace lpa
