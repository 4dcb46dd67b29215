#include "ppimtt/serialization.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <string>

#include "ppimtt/error.hpp"
#include "ppimtt/experiment.hpp"

namespace ppimtt {
namespace {

using nlohmann::json;

constexpr std::size_t kFullBatch = std::numeric_limits<std::size_t>::max();

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) fail(ErrorKind::Config, std::string(where) + " must be a JSON object");
  std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::Config, std::string(where) + ": unknown key '" + key + "'");
  }
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("key '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

json to_json(const TrainConfig& c) {
  return json{{"alpha", c.alpha},
              {"lr", c.lr},
              {"hid", c.hid},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"batch_size", c.batch_size == kFullBatch ? json("full") : json(c.batch_size)},
              {"l1_reduction", c.l1_reduction == Reduction::Mean ? "mean" : "sum"},
              {"validation_fraction", c.validation_fraction},
              {"epoch_stride", c.epoch_stride},
              {"threshold", c.threshold}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown_keys(j,
                      {"alpha", "lr", "hid", "epochs", "seed", "batch_size", "l1_reduction",
                       "validation_fraction", "epoch_stride", "threshold"},
                      "config");
  c.alpha = get_or(j, "alpha", c.alpha);
  c.lr = get_or(j, "lr", c.lr);
  c.hid = get_or(j, "hid", c.hid);
  c.epochs = get_or(j, "epochs", c.epochs);
  c.seed = get_or(j, "seed", c.seed);
  if (j.contains("batch_size")) {
    const auto& b = j.at("batch_size");
    if (b.is_string() && b.get<std::string>() == "full") {
      c.batch_size = kFullBatch;
    } else {
      c.batch_size = get_or(j, "batch_size", c.batch_size);
    }
  }
  if (j.contains("l1_reduction")) {
    const auto r = get_or<std::string>(j, "l1_reduction", "mean");
    if (r == "mean") c.l1_reduction = Reduction::Mean;
    else if (r == "sum") c.l1_reduction = Reduction::Sum;
    else fail(ErrorKind::Config, "l1_reduction must be 'mean' or 'sum'");
  }
  c.validation_fraction = get_or(j, "validation_fraction", c.validation_fraction);
  c.epoch_stride = get_or(j, "epoch_stride", c.epoch_stride);
  c.threshold = get_or(j, "threshold", c.threshold);
  try {
    validate(c);
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  return c;
}

json to_json(const ExperimentReport& r) {
  json topk = json::array();
  for (bool b : r.topk) topk.push_back(b);
  return json{{"auc", optional_number(r.auc)},
              {"ap", optional_number(r.ap)},
              {"precision", r.precision},
              {"recall", r.recall},
              {"f1", r.f1},
              {"threshold", r.threshold},
              {"tp", r.counts.tp},
              {"fp", r.counts.fp},
              {"tn", r.counts.tn},
              {"fn", r.counts.fn},
              {"topk", topk},
              {"mode", std::string(to_string(r.mode))}};
}

ExperimentReport report_from_json(const json& j) {
  ExperimentReport r;
  try {
    if (!j.at("auc").is_null()) r.auc = j.at("auc").get<double>();
    if (!j.at("ap").is_null()) r.ap = j.at("ap").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.counts = ConfusionCounts{j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(),
                               j.at("tn").get<std::size_t>(), j.at("fn").get<std::size_t>()};
    for (const auto& b : j.value("topk", json::array())) r.topk.push_back(b.get<bool>());
    r.mode = j.value("mode", "threshold") == "r_precision" ? ThresholdMode::RPrecision
                                                            : ThresholdMode::Threshold;
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("report: ") + e.what());
  }
  return r;
}

json to_json(const RunResult& r, bool include_timing) {
  json curve = json::array();
  for (const auto& s : r.curve) {
    curve.push_back(json{{"epoch", s.epoch}, {"validation_f1", s.validation_f1}, {"train_loss", s.train_loss}});
  }
  json j{{"variant", r.variant},
         {"seed", r.seed},
         {"best_epoch", r.best_epoch},
         {"config", to_json(r.config)},
         {"metrics", to_json(r.metrics())},
         {"metrics_split", r.test ? "test" : "validation"},
         {"validation", to_json(r.validation)},
         {"curve", curve}};
  if (include_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

RunResult run_result_from_json(const json& j) {
  RunResult r;
  try {
    r.variant = j.value("variant", "");
    r.seed = j.value("seed", std::uint64_t{0});
    r.best_epoch = j.value("best_epoch", std::size_t{0});
    if (j.contains("config")) r.config = train_config_from_json(j.at("config"));
    r.validation = report_from_json(j.contains("validation") ? j.at("validation") : j.at("metrics"));
    if (j.value("metrics_split", "validation") == "test") r.test = report_from_json(j.at("metrics"));
    for (const auto& s : j.value("curve", json::array())) {
      r.curve.push_back(EpochScore{s.at("epoch").get<std::size_t>(), s.at("validation_f1").get<double>(),
                                   s.at("train_loss").get<double>()});
    }
    r.wall_seconds = j.value("wall_seconds", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("run result: ") + e.what());
  }
  return r;
}

json to_json(const SampleSummary& s) { return json{{"mean", s.mean}, {"stddev", s.stddev}}; }

json to_json(const MetricSummary& s) {
  return json{{"auc", to_json(s.auc)},
              {"ap", to_json(s.ap)},
              {"precision", to_json(s.precision)},
              {"recall", to_json(s.recall)},
              {"f1", to_json(s.f1)}};
}

json to_json(const GridCell& c) { return json{{"hid", c.hid}, {"alpha", c.alpha}, {"lr", c.lr}}; }

json to_json(const GridEntry& e) {
  json f1 = json::array();
  for (const auto& s : e.curve) f1.push_back(json::array({s.epoch, s.validation_f1}));
  return json{{"hid", e.cell.hid},
              {"alpha", e.cell.alpha},
              {"lr", e.cell.lr},
              {"best_epoch", e.best_epoch},
              {"validation_f1", e.validation_f1},
              {"epoch_f1", f1}};
}

json to_json(const SplitCounts& c) {
  return json{{"pairs", c.pairs},
              {"positives", c.positives},
              {"negatives", c.negatives},
              {"human_proteins", c.human_proteins},
              {"pathogen_proteins", c.pathogen_proteins},
              {"duplicates_dropped", c.duplicates_dropped},
              {"length_filtered_dropped", c.length_filtered_dropped}};
}

json to_json(const BundleReport& r) {
  return json{{"proteins", r.proteins},
              {"proteins_too_long", r.proteins_too_long},
              {"vh_train", to_json(r.vh_train)},
              {"vh_test", to_json(r.vh_test)},
              {"hh_train", to_json(r.hh_train)},
              {"train_test_overlap_dropped", r.train_test_overlap_dropped}};
}

GridSpec grid_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"hid", "alpha", "lr", "epochs", "stride"}, "grid");
  GridSpec g;
  g.hid = get_or(j, "hid", g.hid);
  g.alpha = get_or(j, "alpha", g.alpha);
  g.lr = get_or(j, "lr", g.lr);
  g.epoch_ceiling = get_or(j, "epochs", g.epoch_ceiling);
  g.epoch_stride = get_or(j, "stride", g.epoch_stride);
  if (g.hid.empty() || g.alpha.empty() || g.lr.empty()) fail(ErrorKind::Config, "grid lists must be non-empty");
  if (g.epoch_stride == 0) fail(ErrorKind::Config, "grid stride must be positive");
  for (auto h : g.hid) {
    if (h == 0) fail(ErrorKind::Config, "grid hid values must be positive");
  }
  for (auto a : g.alpha) {
    if (!(a >= 0.0)) fail(ErrorKind::Config, "grid alpha values must be >= 0");
  }
  for (auto l : g.lr) {
    if (!(l > 0.0)) fail(ErrorKind::Config, "grid lr values must be > 0");
  }
  return g;
}

SamplingSpec sampling_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"rate", "test_rate", "repeats", "seed", "clamp"}, "sampling");
  SamplingSpec s;
  s.rate = get_or(j, "rate", s.rate);
  s.repeats = get_or(j, "repeats", s.repeats);
  s.seed = get_or(j, "seed", s.seed);
  s.clamp = get_or(j, "clamp", s.clamp);
  if (s.repeats == 0) fail(ErrorKind::Config, "sampling.repeats must be positive");
  return s;
}

ExperimentConfig parse_experiment_config(const json& j, const std::filesystem::path& base) {
  reject_unknown_keys(j, {"data", "embeddings", "sampling", "grid", "config", "n_runs", "output", "parallel"},
                      "experiment config");
  ExperimentConfig c;
  if (!j.contains("data") || !j.at("data").is_string()) fail(ErrorKind::Config, "'data' (manifest path) is required");
  if (!j.contains("embeddings") || !j.at("embeddings").is_string()) {
    fail(ErrorKind::Config, "'embeddings' (embedding table path) is required");
  }
  c.manifest = resolve_path(base, j.at("data").get<std::string>());
  c.embeddings = resolve_path(base, j.at("embeddings").get<std::string>());
  if (j.contains("sampling")) {
    c.sampling = sampling_spec_from_json(j.at("sampling"));
    c.test_rate = get_or(j.at("sampling"), "test_rate", c.sampling->rate);
  }
  if (j.contains("grid")) c.grid = grid_spec_from_json(j.at("grid"));
  if (j.contains("config")) c.config = train_config_from_json(j.at("config"));
  c.n_runs = get_or(j, "n_runs", c.sampling ? c.sampling->repeats : std::size_t{1});
  if (c.n_runs == 0) fail(ErrorKind::Config, "n_runs must be at least 1");
  if (j.contains("output")) c.output = resolve_path(base, get_or<std::string>(j, "output", ""));
  c.parallel = get_or(j, "parallel", c.parallel);
  return c;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config '" + path.string() + "': " + e.what());
  }
  return parse_experiment_config(j, path.parent_path());
}

}  // namespace ppimtt
