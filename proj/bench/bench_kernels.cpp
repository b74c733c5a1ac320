// Serial versus OpenMP matmul, and grouped versus per-node composition.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "genparse/batching.hpp"
#include "genparse/kernels.hpp"

using namespace genparse;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_values(std::size_t(n) * n, 1), b = random_values(std::size_t(n) * n, 2);
  std::vector<float> c(std::size_t(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::matmul<float>(a, b, c, n, n, n);
    } else {
      kernels::serial::matmul<float>(a, b, c, n, n, n);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(n) * n * n);
}
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Matmul<true>)->Name("matmul/openmp")->Arg(64)->Arg(256)->Arg(512);

// Random projective tree by interval splitting.
DependencyTree random_tree(std::mt19937_64& rng, int n) {
  DependencyTree t;
  t.heads.assign(n, 0);
  for (int i = 1; i <= n; ++i) t.words.push_back("w" + std::to_string(i));
  auto attach = [&](auto&& self, int lo, int hi, int parent) -> void {
    if (lo > hi) return;
    const int k = std::uniform_int_distribution<int>(lo, hi)(rng);
    t.heads[k - 1] = parent;
    self(self, lo, k - 1, k);
    self(self, k + 1, hi, k);
  };
  attach(attach, 1, n, 0);
  return t;
}

template <bool Grouped>
void BM_Compose(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  constexpr int kBatch = 64;
  std::mt19937_64 rng(3);
  std::vector<DependencyTree> trees;
  for (int i = 0; i < kBatch; ++i) trees.push_back(random_tree(rng, 20));
  const BatchPlan p = plan(trees);
  ParameterStore<float> store;
  auto& w = store.add("W", dim, 2 * dim);
  auto& b = store.add("b", dim, 1);
  store.initialize(5);
  const auto leaf_values = random_values(std::size_t(dim), 4);
  for (auto _ : state) {
    Graph<float> g;
    std::vector<std::vector<Var>> leaves(p.nodes.size());
    for (std::size_t i = 0; i < p.nodes.size(); ++i) {
      for (int j = 0; j < p.num_leaves[i]; ++j) {
        leaves[i].push_back(g.constant(Tensor<float>::column(leaf_values)));
      }
    }
    const auto out = Grouped ? batched_compose(g, p, leaves, w, b)
                             : sequential_compose(g, p, leaves, w, b);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(p.num_nodes()));
}
BENCHMARK(BM_Compose<false>)->Name("compose/sequential")->Arg(128)->Arg(256);
BENCHMARK(BM_Compose<true>)->Name("compose/grouped")->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
