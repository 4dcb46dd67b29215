#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "ppimtt/embedder.hpp"
#include "ppimtt/metrics.hpp"
#include "ppimtt/model.hpp"
#include "ppimtt/random.hpp"

namespace {

using namespace ppimtt;

MatrixF uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  MatrixF m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(rng.uniform_real(-0.5, 0.5));
  return m;
}

MlstmWeights random_layer(std::size_t hidden, std::size_t input, Rng& rng) {
  MlstmWeights w;
  w.hidden = hidden;
  w.input = input;
  w.vocab_embed = uniform(kVocabSize, input, rng);
  w.mult_input = uniform(hidden, input, rng);
  w.mult_hidden = uniform(hidden, hidden, rng);
  for (auto* g : {&w.input_gate, &w.forget_gate, &w.output_gate, &w.update}) {
    g->input = uniform(hidden, input, rng);
    g->intermediate = uniform(hidden, hidden, rng);
    g->bias = uniform(hidden, 1, rng);
  }
  return w;
}

void BM_EmbedSequence(benchmark::State& state) {
  Rng rng(1);
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const auto weights = random_layer(hidden, 10, rng);
  std::vector<std::uint8_t> tokens(500);
  for (auto& t : tokens) t = static_cast<std::uint8_t>(1 + rng.uniform_index(20));
  for (auto _ : state) benchmark::DoNotOptimize(embed_sequence(weights, tokens));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(BM_EmbedSequence)->Arg(64)->Arg(256);

void BM_TrainingStep(benchmark::State& state) {
  Rng rng(2);
  const std::size_t dim = 64;
  EmbeddingTable pathogens, humans;
  pathogens.dim = humans.dim = dim;
  auto row = [&] {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(rng.uniform_real(-1, 1));
    return v;
  };
  for (int i = 0; i < 50; ++i) pathogens.insert("v" + std::to_string(i), row());
  for (int i = 0; i < 2000; ++i) humans.insert("h" + std::to_string(i), row());
  TrainConfig config;
  config.hid = static_cast<std::size_t>(state.range(0));
  config.alpha = 1e-2;
  auto model = init_model(config, pathogens, humans, 3);

  std::vector<ResolvedPair> vh, hh;
  for (int i = 0; i < 256; ++i) {
    vh.push_back({rng.uniform_index(50), rng.uniform_index(2000), static_cast<double>(i % 2)});
    hh.push_back({rng.uniform_index(2000), rng.uniform_index(2000), rng.uniform_real()});
  }
  auto grads = zeros_like(model.params);
  for (auto _ : state) {
    backward_into(model, vh, hh, grads);
    adam_step(model, grads);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(16)->Arg(64);

void BM_Auc(benchmark::State& state) {
  Rng rng(3);
  ScoredSet set;
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    set.scores.push_back(rng.uniform_real());
    set.labels.push_back(static_cast<int>(rng.uniform_index(2)));
  }
  for (auto _ : state) benchmark::DoNotOptimize(auc(set));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
