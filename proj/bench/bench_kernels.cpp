// Serial reference vs OpenMP kernels on the shapes the harness actually sees:
// a few thousand rows of 32 to 256 features.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sldc/kernels.hpp"

namespace {

using sldc::Matrix;
using sldc::Vector;

Matrix random_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

void shapes(benchmark::internal::Benchmark* b) {
  for (int n : {1024, 8192})
    for (int d : {32, 128, 256}) b->Args({n, d});
}

template <bool Parallel>
void BM_Gram(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), state.range(1), 1);
  for (auto _ : state) {
    Matrix g = Parallel ? sldc::kernels::gram(x) : sldc::kernels::serial::gram(x);
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Cross(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), state.range(1), 2);
  const Matrix y = random_rows(state.range(0), state.range(1), 3);
  for (auto _ : state) {
    Matrix c = Parallel ? sldc::kernels::cross(x, y) : sldc::kernels::serial::cross(x, y);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Moments(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), state.range(1), 4);
  for (auto _ : state) {
    auto m = Parallel ? sldc::kernels::moments(x) : sldc::kernels::serial::moments(x);
    benchmark::DoNotOptimize(m.cov.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_Normalize(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), state.range(1), 5);
  Matrix work;
  for (auto _ : state) {
    state.PauseTiming();
    work = x;
    state.ResumeTiming();
    benchmark::DoNotOptimize(Parallel ? sldc::kernels::normalize_rows(work)
                                      : sldc::kernels::serial::normalize_rows(work));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// 200 classes, the size of the largest simulated stream.
template <bool Parallel>
void BM_Predict(benchmark::State& state) {
  const Matrix x = random_rows(state.range(0), state.range(1), 6);
  const Matrix w = random_rows(200, state.range(1), 7);
  const Vector b = random_rows(200, 1, 8).col(0);
  std::vector<std::int32_t> ids(200);
  for (int i = 0; i < 200; ++i) ids[static_cast<std::size_t>(i)] = i;
  for (auto _ : state) {
    auto p = Parallel ? sldc::kernels::predict(w, b, ids, x) : sldc::kernels::serial::predict(w, b, ids, x);
    benchmark::DoNotOptimize(p.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_Gram<false>)->Name("gram/serial")->Apply(shapes);
BENCHMARK(BM_Gram<true>)->Name("gram/omp")->Apply(shapes);
BENCHMARK(BM_Cross<false>)->Name("cross/serial")->Apply(shapes);
BENCHMARK(BM_Cross<true>)->Name("cross/omp")->Apply(shapes);
BENCHMARK(BM_Moments<false>)->Name("moments/serial")->Apply(shapes);
BENCHMARK(BM_Moments<true>)->Name("moments/omp")->Apply(shapes);
BENCHMARK(BM_Normalize<false>)->Name("normalize/serial")->Apply(shapes);
BENCHMARK(BM_Normalize<true>)->Name("normalize/omp")->Apply(shapes);
BENCHMARK(BM_Predict<false>)->Name("predict/serial")->Apply(shapes);
BENCHMARK(BM_Predict<true>)->Name("predict/omp")->Apply(shapes);

BENCHMARK_MAIN();
