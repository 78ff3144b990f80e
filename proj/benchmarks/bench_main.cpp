// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sleeptl/autodiff.hpp"
#include "sleeptl/features.hpp"
#include "sleeptl/inference.hpp"
#include "sleeptl/layers.hpp"
#include "sleeptl/models.hpp"

namespace sleeptl {
namespace {

ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<double> d;
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return ad::Tensor::from_data(std::move(shape), std::move(v), grad);
}

void BM_StftEpoch(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  std::vector<double> x(3000);
  for (auto& v : x) v = d(rng);
  StftParams p;
  for (auto _ : state) benchmark::DoNotOptimize(stft_log_power(x, p));
}
BENCHMARK(BM_StftEpoch);

void BM_Conv1dForward(benchmark::State& state) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({static_cast<std::size_t>(state.range(0)), 1, 3000}, rng);
  auto w = random_tensor({64, 1, 50}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ad::conv1d(x, w, 6));
}
BENCHMARK(BM_Conv1dForward)->Arg(1)->Arg(8);

void BM_Conv1dBackward(benchmark::State& state) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 1, 3000}, rng, true);
  auto w = random_tensor({64, 1, 50}, rng, true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    ad::backward(ad::sum(ad::conv1d(x, w, 6)));
  }
}
BENCHMARK(BM_Conv1dBackward);

void BM_GruSequence(benchmark::State& state) {
  std::mt19937_64 rng(4);
  ParameterStore store;
  const auto h = static_cast<std::size_t>(state.range(0));
  layers::RnnCell cell(store, "g", ParamGroup::SPB, layers::RnnKind::GRU, 2 * h, h, false, rng);
  const std::size_t T = 20, N = 32;
  auto x = random_tensor({T * N, 2 * h}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(cell.run(x, T, false, {}));
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_GruSequence)->Arg(32)->Arg(64);

ModelInput model_input(const ModelConfig& c, std::size_t batch, std::mt19937_64& rng) {
  ModelInput in;
  in.batch = batch;
  in.seq_len = c.seq_len;
  const std::size_t e = batch * c.seq_len;
  if (input_kind(c.kind) == InputKind::Spectrogram) {
    in.x = random_tensor({c.n_channels, c.seqsleepnet.n_frames * e, c.seqsleepnet.n_bins}, rng);
  } else {
    in.x = random_tensor({e, c.n_channels, c.deepsleepnet.n_samples}, rng);
  }
  return in;
}

void BM_SeqSleepNetForward(benchmark::State& state) {
  ModelConfig c;
  c.seq_len = 20;
  auto m = build_model(c, 1);
  std::mt19937_64 rng(5);
  auto in = model_input(c, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(m->forward(in, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SeqSleepNetForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_DeepSleepNetForward(benchmark::State& state) {
  ModelConfig c;
  c.kind = ModelKind::DeepSleepNetPlus;
  c.seq_len = 20;
  auto m = build_model(c, 1);
  std::mt19937_64 rng(6);
  auto in = model_input(c, 1, rng);
  for (auto _ : state) benchmark::DoNotOptimize(m->forward(in, {}));
}
BENCHMARK(BM_DeepSleepNetForward)->Unit(benchmark::kMillisecond);

void BM_Aggregate(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<Posterior> d(20);
  for (auto& p : d) {
    double s = 0;
    for (auto& v : p) s += v = u(rng);
    for (auto& v : p) v /= s;
  }
  for (auto _ : state) benchmark::DoNotOptimize(aggregate(d));
}
BENCHMARK(BM_Aggregate);

}  // namespace
}  // namespace sleeptl

BENCHMARK_MAIN();
