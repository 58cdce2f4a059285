#include <benchmark/benchmark.h>

#include "diffusion/bound.hpp"
#include "diffusion/kernels.hpp"
#include "diffusion/sampling.hpp"
#include "diffusion/train.hpp"

using namespace diffusion;

namespace {

Mat random_bits(int n, int d, Rng& rng) {
  Mat m(n, d);
  for (double& v : m.a) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
  return m;
}

void BM_ForwardMarginal(benchmark::State& state) {
  DiffusionSpec spec{make_schedule(ProcessKind::gaussian, 40, 1e-4, ScheduleMode::fixed_rule), 2};
  const std::vector<double> x0 = {0.3, -0.8};
  int t = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_marginal(spec, x0, 1 + (t++ % 40)));
  }
}
BENCHMARK(BM_ForwardMarginal);

void BM_BoundGradientStep(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  const int batch = 32, k_sub = 16, d = 20;
  DiffusionSpec spec{make_schedule(ProcessKind::binomial, T, 1e-4, ScheduleMode::fixed_rule), d};
  ModelDescriptor desc;
  desc.family = ModelFamily::mlp;
  desc.hidden = {50, 50, 50};
  Rng rng(1);
  auto model = make_model(spec, desc, rng, nullptr);
  Mat x0 = random_bits(batch, d, rng);

  for (auto _ : state) {
    BoundWorkspace ws = make_marginal_workspace(spec, x0, rng, k_sub);
    const Evaluation ev =
        evaluate_with_gradients(model->params(), [&](Tape& tape, ParamBinder& binder) {
          return build_bound_graph(tape, binder, spec, *model, ws, false);
        });
    benchmark::DoNotOptimize(ev.value);
  }
}
BENCHMARK(BM_BoundGradientStep)->Arg(200)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_ReverseSampling(benchmark::State& state) {
  const int T = 100, d = 20, n = static_cast<int>(state.range(0));
  DiffusionSpec spec{make_schedule(ProcessKind::binomial, T, 1e-4, ScheduleMode::fixed_rule), d};
  ModelDescriptor desc;
  desc.family = ModelFamily::mlp;
  desc.hidden = {50, 50, 50};
  Rng rng(1);
  auto model = make_model(spec, desc, rng, nullptr);
  for (auto _ : state) {
    Rng r(2);
    benchmark::DoNotOptimize(sample_reverse(spec, *model, n, r));
  }
}
BENCHMARK(BM_ReverseSampling)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_GaussianChainStep(benchmark::State& state) {
  const int T = 40, d = 2, batch = 64;
  DiffusionSpec spec{make_schedule(ProcessKind::gaussian, T, 1e-4, ScheduleMode::learnable), d};
  ModelDescriptor desc;
  desc.family = ModelFamily::rbf;
  desc.hidden = {16};
  Rng rng(1);
  Mat data(256, d);
  for (double& v : data.a) v = rng.normal();
  auto model = make_model(spec, desc, rng, &data);

  ParameterVector combined = model->params();
  for (int t = 2; t <= T; ++t) {
    combined.add(schedule_entry_name(t), 1, 1);
    combined.data(schedule_entry_name(t))[0] = spec.schedule.u[t - 2];
  }
  Mat x0(batch, d);
  for (double& v : x0.a) v = rng.normal();

  for (auto _ : state) {
    FrozenNoise noise = draw_frozen_noise(T, batch, d, rng);
    BoundWorkspace ws = make_chain_workspace(spec, x0, std::move(noise));
    const Evaluation ev = evaluate_with_gradients(combined, [&](Tape& tape, ParamBinder& binder) {
      return build_bound_graph(tape, binder, spec, *model, ws, true);
    });
    benchmark::DoNotOptimize(ev.value);
  }
}
BENCHMARK(BM_GaussianChainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
