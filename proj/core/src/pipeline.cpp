#include "ppimtt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "ppimtt/error.hpp"
#include "ppimtt/log.hpp"
#include "ppimtt/random.hpp"

namespace ppimtt {
namespace {

// Sub-stream tags for derive_seed.
enum Stream : std::uint64_t {
  kSplitStream = 1,
  kInitStream = 2,
  kVhShuffleStream = 3,
  kHhShuffleStream = 4,
  kTrainNegativeStream = 5,
  kTestNegativeStream = 6,
};

bool is_positive(const InteractionExample& e) { return e.target >= 0.5; }

std::vector<std::string> sorted_unique(std::span<const std::string> ids) {
  std::vector<std::string> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Runs job(i) for i in [0, n) on up to `parallelism` threads; rethrows the
// failure with the lowest index.
void parallel_for(std::size_t n, std::size_t parallelism, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ScoredSet score_set(const ModelState& state, std::span<const ResolvedPair> pairs) {
  ScoredSet set;
  set.scores.reserve(pairs.size());
  set.labels.reserve(pairs.size());
  for (const auto& p : pairs) {
    set.scores.push_back(score_resolved(state, Task::VH, p));
    set.labels.push_back(p.target >= 0.5 ? 1 : 0);
  }
  return set;
}

// Cycles through a seeded permutation, reshuffling at every wrap.
class CyclicBatcher {
 public:
  CyclicBatcher(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(std::span(order_));
  }

  void next(std::size_t count, std::vector<std::size_t>& out) {
    out.clear();
    if (order_.empty()) return;
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        rng_.shuffle(std::span(order_));
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<InteractionExample> sample_negatives(std::span<const InteractionExample> positives,
                                                 std::span<const std::string> pathogen_ids,
                                                 std::span<const std::string> human_ids,
                                                 const SamplingSpec& spec,
                                                 std::span<const InteractionExample> exclude) {
  if (spec.rate == 0) fail(ErrorKind::InvalidArgument, "negative sampling rate must be positive");
  const auto pathogens = sorted_unique(pathogen_ids);
  const auto humans = sorted_unique(human_ids);
  std::unordered_map<std::string_view, std::uint64_t> p_index, h_index;
  for (std::size_t i = 0; i < pathogens.size(); ++i) p_index.emplace(pathogens[i], i);
  for (std::size_t j = 0; j < humans.size(); ++j) h_index.emplace(humans[j], j);

  const std::uint64_t width = humans.size();
  const std::uint64_t total = static_cast<std::uint64_t>(pathogens.size()) * width;
  std::unordered_set<std::uint64_t> forbidden;
  auto forbid = [&](std::span<const InteractionExample> list) {
    for (const auto& e : list) {
      auto pi = p_index.find(e.a);
      auto hi = h_index.find(e.b);
      if (pi != p_index.end() && hi != h_index.end()) forbidden.insert(pi->second * width + hi->second);
    }
  };
  forbid(positives);
  forbid(exclude);

  const std::uint64_t universe = total - forbidden.size();
  std::uint64_t requested = static_cast<std::uint64_t>(spec.rate) * positives.size();
  if (requested > universe) {
    if (!spec.clamp) {
      fail(ErrorKind::InsufficientUniverse, "requested " + std::to_string(requested) +
                                                " negatives but only " + std::to_string(universe) +
                                                " candidate pairs exist");
    }
    log::warn("negative sampling clamped to the whole universe of " + std::to_string(universe) + " pairs");
    requested = universe;
  }

  Rng rng(spec.seed);
  std::vector<std::uint64_t> codes;
  codes.reserve(requested);
  if (requested * 2 >= universe) {
    // Dense regime: enumerate and take a uniformly random prefix.
    std::vector<std::uint64_t> allowed;
    allowed.reserve(universe);
    for (std::uint64_t c = 0; c < total; ++c) {
      if (!forbidden.count(c)) allowed.push_back(c);
    }
    for (std::uint64_t i = 0; i < requested; ++i) {
      const auto j = i + rng.uniform_index(allowed.size() - i);
      std::swap(allowed[i], allowed[j]);
      codes.push_back(allowed[i]);
    }
  } else {
    std::unordered_set<std::uint64_t> chosen;
    while (codes.size() < requested) {
      const auto c = rng.uniform_index(total);
      if (forbidden.count(c) || !chosen.insert(c).second) continue;
      codes.push_back(c);
    }
  }

  std::vector<InteractionExample> out;
  out.reserve(codes.size());
  for (auto c : codes) out.push_back(InteractionExample{pathogens[c / width], humans[c % width], 0.0});
  return out;
}

Split make_validation_split(std::span<const InteractionExample> examples, double fraction,
                            std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    fail(ErrorKind::InvalidArgument, "validation fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < examples.size(); ++i) (is_positive(examples[i]) ? pos : neg).push_back(i);

  Rng rng(seed);
  std::vector<bool> held_out(examples.size(), false);
  for (auto* cls : {&pos, &neg}) {
    const std::size_t n = cls->size();
    const auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
    if (n_val == 0 || n_val >= n) {
      fail(ErrorKind::TooFewExamples, std::string(cls == &pos ? "positive" : "negative") +
                                          " class has " + std::to_string(n) +
                                          " examples, too few for a two-sided split");
    }
    rng.shuffle(std::span(*cls));
    for (std::size_t k = 0; k < n_val; ++k) held_out[(*cls)[k]] = true;
  }

  Split split;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    (held_out[i] ? split.validation : split.train).push_back(examples[i]);
  }
  return split;
}

std::pair<EmbeddingTable, EmbeddingTable> split_embeddings(const DatasetBundle& bundle,
                                                           const EmbeddingTable& embeddings) {
  EmbeddingTable pathogen, human;
  pathogen.dim = human.dim = embeddings.dim;
  for (const auto& p : bundle.proteins) {
    const auto* v = embeddings.find(p.id);
    if (v == nullptr) continue;
    (p.role == Role::Human ? human : pathogen).insert(p.id, *v);
  }
  auto require = [&](const std::vector<InteractionExample>& list) {
    for (const auto& e : list) {
      for (const auto* id : {&e.a, &e.b}) {
        if (embeddings.find(*id) == nullptr) {
          fail(ErrorKind::UnknownProtein, "no embedding for protein '" + *id + "'");
        }
      }
    }
  };
  require(bundle.vh_train);
  require(bundle.vh_test);
  require(bundle.hh_train);
  return {std::move(pathogen), std::move(human)};
}

ExperimentReport evaluate_vh(const ModelState& state, std::span<const InteractionExample> examples,
                             double threshold, ThresholdMode mode) {
  const auto pairs = resolve(state, Task::VH, examples);
  return make_report(score_set(state, pairs), threshold, mode);
}

TrainOutput train(const DatasetBundle& bundle, const TrainConfig& config,
                  const EmbeddingTable& embeddings) {
  validate(config);
  if (bundle.vh_train.empty()) fail(ErrorKind::EmptyTrainingSet, bundle.name + ": no VH training pairs");
  const auto started = std::chrono::steady_clock::now();

  auto [pathogen_table, human_table] = split_embeddings(bundle, embeddings);
  ModelState state = init_model(config, pathogen_table, human_table, derive_seed(config.seed, kInitStream));

  const Split split = make_validation_split(bundle.vh_train, config.validation_fraction,
                                            derive_seed(config.seed, kSplitStream));
  const auto vh_train = resolve(state, Task::VH, split.train);
  const auto vh_valid = resolve(state, Task::VH, split.validation);
  const auto hh_train = resolve(state, Task::HH, bundle.hh_train);
  const bool side_task = config.alpha != 0.0 && !hh_train.empty();

  Rng vh_rng(derive_seed(config.seed, kVhShuffleStream));
  CyclicBatcher hh_batches(side_task ? hh_train.size() : 0, derive_seed(config.seed, kHhShuffleStream));

  std::vector<std::size_t> order(vh_train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = std::min(config.batch_size, vh_train.size());

  RunResult result;
  result.config = config;
  result.seed = config.seed;
  result.variant = std::string(variant_label(config));

  std::optional<ModelState> best;
  double best_f1 = -1.0;
  auto checkpoint_epoch = [&](std::size_t epoch, double train_loss) {
    const double f1 = prf1(score_set(state, vh_valid), config.threshold).f1;
    result.curve.push_back(EpochScore{epoch, f1, train_loss});
    if (f1 > best_f1) {
      best_f1 = f1;
      best = state;
      result.best_epoch = epoch;
    }
  };

  checkpoint_epoch(0, 0.0);
  Parameters grads = zeros_like(state.params);
  std::vector<ResolvedPair> vh_batch, hh_batch;
  std::vector<std::size_t> hh_idx;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    vh_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      vh_batch.clear();
      for (std::size_t i = start; i < end; ++i) vh_batch.push_back(vh_train[order[i]]);
      hh_batch.clear();
      if (side_task) {
        hh_batches.next(vh_batch.size(), hh_idx);
        for (auto i : hh_idx) hh_batch.push_back(hh_train[i]);
      }
      loss_sum += backward_into(state, vh_batch, hh_batch, grads).total;
      ++steps;
      adam_step(state, grads);
    }
    if (epoch % config.epoch_stride == 0) checkpoint_epoch(epoch, loss_sum / static_cast<double>(steps));
  }

  TrainOutput out{std::move(*best), std::move(result)};
  out.result.validation = make_report(score_set(out.state, vh_valid), config.threshold);
  if (!bundle.vh_test.empty()) out.result.test = evaluate_vh(out.state, bundle.vh_test, config.threshold);
  out.result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

std::vector<GridCell> plan_grid(const GridSpec& grid) {
  if (grid.hid.empty() || grid.alpha.empty() || grid.lr.empty()) {
    fail(ErrorKind::InvalidArgument, "grid value lists must be non-empty");
  }
  if (grid.epoch_stride == 0) fail(ErrorKind::InvalidArgument, "epoch stride must be positive");
  auto sorted = [](auto values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
  };
  std::vector<GridCell> cells;
  for (auto h : sorted(grid.hid)) {
    for (auto a : sorted(grid.alpha)) {
      for (auto l : sorted(grid.lr)) cells.push_back(GridCell{h, a, l});
    }
  }
  return cells;
}

std::vector<std::size_t> epoch_schedule(std::size_t ceiling, std::size_t stride) {
  if (stride == 0) fail(ErrorKind::InvalidArgument, "epoch stride must be positive");
  std::vector<std::size_t> epochs;
  for (std::size_t e = 0; e <= ceiling; e += stride) epochs.push_back(e);
  return epochs;
}

GridResult grid_search(const DatasetBundle& bundle, const GridSpec& grid,
                       const EmbeddingTable& embeddings, const TrainConfig& base,
                       std::size_t parallelism) {
  const auto cells = plan_grid(grid);
  std::vector<std::optional<TrainOutput>> runs(cells.size());
  parallel_for(cells.size(), parallelism, [&](std::size_t i) {
    TrainConfig config = base;
    config.hid = cells[i].hid;
    config.alpha = cells[i].alpha;
    config.lr = cells[i].lr;
    config.epochs = grid.epoch_ceiling;
    config.epoch_stride = grid.epoch_stride;
    runs[i] = train(bundle, config, embeddings);
    log::info("grid cell hid=" + std::to_string(config.hid) + " alpha=" + std::to_string(config.alpha) +
              " lr=" + std::to_string(config.lr) + ": validation F1 " +
              std::to_string(runs[i]->result.validation.f1) + " at epoch " +
              std::to_string(runs[i]->result.best_epoch));
  });

  GridResult out;
  std::size_t best = 0;
  double best_f1 = -1.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& r = runs[i]->result;
    const double f1 = r.validation.f1;
    out.table.push_back(GridEntry{cells[i], r.best_epoch, f1, r.curve});
    // cells are in tie-break order, so only a strict improvement wins
    if (f1 > best_f1) {
      best_f1 = f1;
      best = i;
    }
  }
  out.best = std::move(*runs[best]);
  return out;
}

DatasetBundle resample_bundle(const DatasetBundle& bundle, std::size_t train_rate,
                              std::size_t test_rate, std::uint64_t seed, bool clamp) {
  DatasetBundle out = bundle;
  const auto humans = bundle.ids_with_role(Role::Human);

  std::vector<InteractionExample> all_positives;
  auto positives_of = [&](const std::vector<InteractionExample>& list) {
    std::vector<InteractionExample> pos;
    std::copy_if(list.begin(), list.end(), std::back_inserter(pos), is_positive);
    all_positives.insert(all_positives.end(), pos.begin(), pos.end());
    return pos;
  };
  auto pathogens_of = [](const std::vector<InteractionExample>& pos) {
    std::vector<std::string> ids;
    for (const auto& e : pos) ids.push_back(e.a);
    return sorted_unique(ids);
  };
  const auto train_pos = positives_of(bundle.vh_train);
  const auto test_pos = positives_of(bundle.vh_test);

  if (train_rate > 0) {
    SamplingSpec spec{train_rate, 1, derive_seed(seed, kTrainNegativeStream), clamp};
    auto neg = sample_negatives(train_pos, pathogens_of(train_pos), humans, spec, all_positives);
    out.vh_train = train_pos;
    out.vh_train.insert(out.vh_train.end(), neg.begin(), neg.end());
  }
  if (test_rate > 0 && !test_pos.empty()) {
    std::vector<InteractionExample> exclude = all_positives;
    exclude.insert(exclude.end(), out.vh_train.begin(), out.vh_train.end());
    SamplingSpec spec{test_rate, 1, derive_seed(seed, kTestNegativeStream), clamp};
    auto neg = sample_negatives(test_pos, pathogens_of(test_pos), humans, spec, exclude);
    out.vh_test = test_pos;
    out.vh_test.insert(out.vh_test.end(), neg.begin(), neg.end());
  }
  out.report.vh_train = count_split(out, out.vh_train);
  out.report.vh_test = count_split(out, out.vh_test);
  return out;
}

MetricSummary summarize_runs(std::span<const RunResult> runs) {
  std::vector<double> auc_v, ap_v, p_v, r_v, f1_v;
  for (const auto& run : runs) {
    const auto& m = run.metrics();
    if (m.auc) auc_v.push_back(*m.auc);
    if (m.ap) ap_v.push_back(*m.ap);
    p_v.push_back(m.precision);
    r_v.push_back(m.recall);
    f1_v.push_back(m.f1);
  }
  return MetricSummary{summarize(auc_v), summarize(ap_v), summarize(p_v), summarize(r_v), summarize(f1_v)};
}

RepeatedRuns repeated_runs(const DatasetBundle& bundle, const SamplingSpec& sampling,
                           std::size_t test_rate, const TrainConfig& config,
                           const EmbeddingTable& embeddings, std::size_t n_runs,
                           std::size_t parallelism) {
  if (n_runs == 0) fail(ErrorKind::InvalidArgument, "n_runs must be at least 1");
  std::vector<std::optional<TrainOutput>> slots(n_runs);
  parallel_for(n_runs, parallelism, [&](std::size_t r) {
    const auto data = resample_bundle(bundle, sampling.rate, test_rate, sampling.seed + r, sampling.clamp);
    TrainConfig run_config = config;
    run_config.seed = config.seed + r;
    slots[r] = train(data, run_config, embeddings);
  });
  RepeatedRuns out;
  std::vector<RunResult> results;
  for (auto& s : slots) {
    results.push_back(s->result);
    out.runs.push_back(std::move(*s));
  }
  out.summary = summarize_runs(results);
  return out;
}

std::vector<ProtocolCell> schedule_protocol(const ProtocolSpec& spec) {
  std::vector<ProtocolCell> cells;
  for (auto tr : spec.train_rates) {
    for (auto te : spec.test_rates) {
      for (std::size_t r = 0; r < spec.repeats; ++r) cells.push_back(ProtocolCell{tr, te, r});
    }
  }
  return cells;
}

std::vector<ProtocolEvaluation> run_protocol(const DatasetBundle& bundle, const ProtocolSpec& spec,
                                             const TrainConfig& config,
                                             const EmbeddingTable& embeddings,
                                             std::size_t parallelism) {
  const auto cells = schedule_protocol(spec);
  const std::size_t jobs = spec.train_rates.size() * spec.repeats;
  const std::size_t n_test = spec.test_rates.size();
  std::vector<ProtocolEvaluation> out(cells.size());

  parallel_for(jobs, parallelism, [&](std::size_t job) {
    const std::size_t ti = job / spec.repeats;
    const std::size_t repeat = job % spec.repeats;
    const std::size_t train_rate = spec.train_rates[ti];
    const std::uint64_t seed = spec.seed + repeat;

    auto train_data = resample_bundle(bundle, train_rate, 0, seed, spec.clamp);
    train_data.vh_test.clear();
    TrainConfig run_config = config;
    run_config.seed = config.seed + repeat;
    const auto trained = train(train_data, run_config, embeddings);

    for (std::size_t k = 0; k < n_test; ++k) {
      const auto data = resample_bundle(bundle, train_rate, spec.test_rates[k], seed, spec.clamp);
      const std::size_t slot = (ti * n_test + k) * spec.repeats + repeat;
      out[slot].cell = cells[slot];
      out[slot].report = evaluate_vh(trained.state, data.vh_test, config.threshold);
      out[slot].best_epoch = trained.result.best_epoch;
    }
  });
  return out;
}

}  // namespace ppimtt
