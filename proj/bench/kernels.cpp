// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <filesystem>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "optisync/metrics.hpp"
#include "optisync/ptp.hpp"
#include "optisync/rng.hpp"
#include "optisync/runner.hpp"

using namespace optisync;

namespace {

std::vector<std::int64_t> samples(std::size_t n) {
  RngStream rng(1, "bench.samples");
  std::vector<std::int64_t> xs(n);
  for (auto& x : xs) x = static_cast<std::int64_t>(rng.next_u64() % 400'001) - 200'000;
  return xs;
}

std::vector<PtpTimestamps> exchanges(std::size_t n) {
  RngStream rng(2, "bench.exchanges");
  std::vector<PtpTimestamps> ts(n);
  for (auto& t : ts) {
    const auto r = [&] { return LocalTime{static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000'000ULL)}; };
    t = PtpTimestamps{r(), r(), r(), r()};
  }
  return ts;
}

void BM_JitterParallel(benchmark::State& st) {
  const auto xs = samples(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(jitter_stats(xs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
void BM_JitterSerial(benchmark::State& st) {
  const auto xs = samples(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::jitter_stats(xs));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_EyeParallel(benchmark::State& st) {
  const auto xs = samples(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    EyeHistogram h;
    accumulate_eye(h, xs);
    benchmark::DoNotOptimize(h.total());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
void BM_EyeSerial(benchmark::State& st) {
  const auto xs = samples(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) {
    EyeHistogram h;
    reference::accumulate_eye(h, xs);
    benchmark::DoNotOptimize(h.total());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_EstimateParallel(benchmark::State& st) {
  const auto ts = exchanges(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(estimate_offsets(ts));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
void BM_EstimateSerial(benchmark::State& st) {
  const auto ts = exchanges(static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(reference::estimate_offsets(ts));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

// Sweep runs are independent simulations; range(0) is the thread count.
void BM_Sweep(benchmark::State& st) {
#ifdef _OPENMP
  omp_set_num_threads(static_cast<int>(st.range(0)));
#endif
  const Scenario s = load_scenario(bundled_scenario_path("fig2a-ptp-enabled"));
  const auto out = std::filesystem::temp_directory_path() / "optisync-bench-sweep";
  for (auto _ : st) benchmark::DoNotOptimize(sweep(s, "links.gm-slave.pdv_scale", {"0.5", "1", "1.5", "2"}, out));
  std::filesystem::remove_all(out);
}

}  // namespace

BENCHMARK(BM_JitterSerial)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_JitterParallel)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_EyeSerial)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_EyeParallel)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_EstimateSerial)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_EstimateParallel)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_Sweep)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
