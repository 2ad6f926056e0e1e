#include <benchmark/benchmark.h>

#include "lpa/oracle.hpp"
#include "lpa/surrogate.hpp"

namespace {

lpa::Ensemble make_ensemble(int width) {
  lpa::EnsembleConfig cfg;
  cfg.architecture.hidden = {width, width, width};
  return lpa::Ensemble(lpa::UnitCellSpec::normal(), cfg);
}

void BM_PredictSingle(benchmark::State& state) {
  const auto e = make_ensemble(static_cast<int>(state.range(0)));
  lpa::Rng rng(1);
  const auto q = lpa::sample_uniform(rng, e.spec(), 64);
  std::size_t i = 0;
  for (auto _ : state) {
    auto p = e.predict(q[i].params, q[i].frequency);
    benchmark::DoNotOptimize(p);
    i = (i + 1) % q.size();
  }
}
BENCHMARK(BM_PredictSingle)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_PredictBatch(benchmark::State& state) {
  const auto e = make_ensemble(256);
  lpa::Rng rng(2);
  const auto q = lpa::sample_uniform(rng, e.spec(), static_cast<std::size_t>(state.range(0)));
  std::vector<lpa::ParamVector> p;
  std::vector<lpa::FrequencyId> f;
  for (const auto& item : q) {
    p.push_back(item.params);
    f.push_back(item.frequency);
  }
  for (auto _ : state) {
    auto out = e.predict(p, f);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PredictBatch)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_PredictWithGradient(benchmark::State& state) {
  const auto e = make_ensemble(256);
  lpa::Rng rng(3);
  const auto q = lpa::sample_uniform(rng, e.spec(), 10);
  std::vector<lpa::ParamVector> p;
  std::vector<lpa::FrequencyId> f;
  for (const auto& item : q) {
    p.push_back(item.params);
    f.push_back(item.frequency);
  }
  const auto x = lpa::encode_batch(p, f, e.spec());
  for (auto _ : state) {
    lpa::PredictionGradient g;
    auto out = e.predict_encoded(x, &g);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_PredictWithGradient)->Unit(benchmark::kMicrosecond);

void BM_TrainEpoch(benchmark::State& state) {
  lpa::MlpArchitecture arch;
  arch.hidden = {256, 256, 256};
  const auto net = lpa::Mlp::initialized(arch, 4);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(13, 1024);
  const Eigen::VectorXd y = Eigen::VectorXd::Random(1024);
  lpa::TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) {
    auto out = lpa::train(net, x, y, cfg);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
