#include <benchmark/benchmark.h>

#include <vector>

#include "lorafit/adapter.hpp"
#include "lorafit/encoder.hpp"
#include "lorafit/injection.hpp"
#include "lorafit/ops.hpp"
#include "lorafit/optimizer.hpp"
#include "lorafit/random.hpp"
#include "lorafit/tensor_ops.hpp"

namespace {

using namespace lorafit;

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

std::vector<int> tokens(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<int> out(n);
  for (int& t : out) t = static_cast<int>(rng() % vocab);
  return out;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_AdapterForward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto adapter = LoraAdapter::inject(random_tensor({d, d}, rng), 8, rng);
  adapter.set_factors(random_tensor({d, 8}, rng), random_tensor({d, 8}, rng));
  const Tensor x = random_tensor({32, d}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(adapter.forward(x));
}
BENCHMARK(BM_AdapterForward)->Arg(64)->Arg(256);

void BM_MergedForward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto adapter = LoraAdapter::inject(random_tensor({d, d}, rng), 8, rng);
  adapter.set_factors(random_tensor({d, 8}, rng), random_tensor({d, 8}, rng));
  const Tensor merged = adapter.merge();
  const Tensor x = random_tensor({32, d}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(x, merged));
}
BENCHMARK(BM_MergedForward)->Arg(64)->Arg(256);

void BM_ForwardPair(benchmark::State& state) {
  EncoderConfig config;
  const PairEncoder model = build_encoder(config);
  const AdapterSet adapters = inject_adapters(model, InjectionSpec{});
  Rng rng(3);
  const auto a = tokens(12, config.vocab_size, rng), b = tokens(12, config.vocab_size, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward_pair(model, a, b, &adapters));
}
BENCHMARK(BM_ForwardPair);

// One fine-tuning step on a single pair: taped forward, backward, step_lora.
void BM_TrainStep(benchmark::State& state) {
  EncoderConfig config;
  const PairEncoder model = build_encoder(config);
  AdapterSet adapters = inject_adapters(model, InjectionSpec{});
  Rng rng(4);
  const auto a = tokens(12, config.vocab_size, rng), b = tokens(12, config.vocab_size, rng);
  const std::vector<int> label{1};
  for (auto _ : state) {
    ad::Tape tape;
    ForwardSession session(tape, model, &adapters);
    const ad::Var loss = ad::cross_entropy_loss(session.encode(a, b).logits, label);
    tape.backward(loss);
    for (const auto& [name, bound] : session.adapter_vars()) {
      step_lora(adapters.at(name), bound.a.grad(), bound.b.grad(), {1e-3, 1e-3});
    }
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace
BENCHMARK_MAIN();
