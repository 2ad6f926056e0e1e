#include <benchmark/benchmark.h>

#include "lpa/fdfd.hpp"
#include "lpa/random.hpp"

namespace {

void BM_FdfdLabel(benchmark::State& state) {
  const auto spec = lpa::UnitCellSpec::preset(state.range(0) == 0   ? "normal"
                                              : state.range(0) == 1 ? "small"
                                                                    : "smallest");
  const lpa::FdfdLabeler labeler(spec);
  const auto f = lpa::kAllFrequencies[static_cast<std::size_t>(state.range(1))];
  lpa::Rng rng(5);
  lpa::ParamVector p;
  for (int i = 0; i < spec.layer_count; ++i)
    p.widths.push_back(lpa::uniform(rng, spec.width_min, spec.width_max));
  for (auto _ : state) {
    auto rec = labeler.label(p, f);
    benchmark::DoNotOptimize(rec);
  }
}
BENCHMARK(BM_FdfdLabel)
    ->ArgsProduct({{0, 1, 2}, {0, 1, 2}})
    ->ArgNames({"cell", "freq"})
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
