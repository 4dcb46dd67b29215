#include "cli/cli.hpp"

#include <glob.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ppimtt/checkpoint.hpp"
#include "ppimtt/embedder.hpp"
#include "ppimtt/error.hpp"
#include "ppimtt/experiment.hpp"
#include "ppimtt/log.hpp"
#include "ppimtt/metrics.hpp"
#include "ppimtt/numeric_text.hpp"
#include "ppimtt/pipeline.hpp"
#include "ppimtt/seqio.hpp"
#include "ppimtt/serialization.hpp"

namespace ppimtt::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Failure with an explicit exit code, used where the library error kind
/// alone does not say whether the input or the data is at fault.
struct CommandError {
  int code;
  std::string message;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownProtein:
    case ErrorKind::InsufficientUniverse:
    case ErrorKind::TooFewExamples:
    case ErrorKind::EmptyTrainingSet:
    case ErrorKind::DegenerateLabels:
    case ErrorKind::DegenerateSample:
    case ErrorKind::Io:
      return kDataError;
    case ErrorKind::Internal:
      return kInternalError;
    default:
      return kInputError;
  }
}

// Data-phase failures of train/gridsearch are data errors whatever their kind.
template <class Fn>
auto as_data_error(Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw CommandError{kDataError, e.what()};
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string run_name(std::size_t i) {
  std::ostringstream s;
  s << "run_" << std::setw(3) << std::setfill('0') << i;
  return s.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CommandError{kInputError, "cannot create output directory '" + dir.string() + "': " + ec.message()};
}

struct LoadedData {
  DatasetBundle bundle;
  EmbeddingTable embeddings;
};

LoadedData load_data(const ExperimentConfig& config) {
  return as_data_error([&] {
    log::info("loading bundle " + config.manifest.string());
    LoadedData d{load_bundle(read_manifest(config.manifest)), read_embeddings(config.embeddings)};
    const auto& r = d.bundle.report;
    log::info(d.bundle.name + ": " + std::to_string(r.proteins) + " proteins, vh_train " +
              std::to_string(r.vh_train.positives) + "+/" + std::to_string(r.vh_train.negatives) +
              "-, vh_test " + std::to_string(r.vh_test.positives) + "+/" +
              std::to_string(r.vh_test.negatives) + "-, hh_train " + std::to_string(r.hh_train.pairs));
    return d;
  });
}

ExperimentConfig load_config(const std::string& path) {
  try {
    return read_experiment_config(path);
  } catch (const Error& e) {
    throw CommandError{kInputError, e.what()};
  }
}

fs::path output_dir(const std::string& flag, const ExperimentConfig& config) {
  if (!flag.empty()) return flag;
  if (config.output) return *config.output;
  throw CommandError{kInputError, "no output directory: pass --out or set 'output' in the config"};
}

// ---- embed ----------------------------------------------------------------

struct EmbedArgs {
  std::vector<std::string> weights;
  std::vector<std::string> fasta;
  std::string out;
  std::string pool = "avg";
  std::size_t parallel = 0;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  MlstmStack stack;
  for (std::size_t i = 0; i < a.weights.size(); ++i) stack.push_back(load_mlstm_weights(fs::path(a.weights[i]), i == 0));
  validate_stack(stack);

  std::vector<ProteinRecord> records;
  std::vector<std::pair<std::string, std::size_t>> per_file;
  for (const auto& path : a.fasta) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
    std::vector<ProteinRecord> recs;
    try {
      recs = parse_fasta(in);
    } catch (const Error& e) {
      throw Error(e.kind(), path + ": " + e.what());
    }
    per_file.emplace_back(path, recs.size());
    std::move(recs.begin(), recs.end(), std::back_inserter(records));
  }

  const auto threads = thread_budget(a.parallel);
  log::info("embedding " + std::to_string(records.size()) + " proteins on " + std::to_string(threads) + " threads");
  const auto table = embed_batch(stack, records, threads, a.pool == "last" ? Pooling::Last : Pooling::Mean);
  write_embeddings(fs::path(a.out), table);
  for (const auto& [path, n] : per_file) out << path << '\t' << n << '\n';
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct RunArgs {
  std::string config;
  std::string out;
  std::size_t parallel = 0;
  bool timing = false;
};

int cmd_train(const RunArgs& a, std::ostream& out) {
  const auto config = load_config(a.config);
  const auto dir = output_dir(a.out, config);
  const auto data = load_data(config);
  ensure_dir(dir);

  SamplingSpec sampling;
  sampling.rate = 0;  // keep the bundle's own negatives unless sampling is configured
  if (config.sampling) sampling = *config.sampling;
  const std::size_t threads = thread_budget(a.parallel ? a.parallel : config.parallel);

  const auto runs = as_data_error([&] {
    return repeated_runs(data.bundle, sampling, config.test_rate, config.config, data.embeddings,
                         config.n_runs, threads);
  });

  json run_files = json::array();
  double best_f1 = -1.0;
  std::size_t best_run = 0;
  for (std::size_t i = 0; i < runs.runs.size(); ++i) {
    const auto& r = runs.runs[i];
    save_checkpoint(dir / (run_name(i) + ".ckpt"), r.state);
    write_json(dir / (run_name(i) + ".json"), to_json(r.result, a.timing));
    run_files.push_back(run_name(i) + ".json");
    if (r.result.validation.f1 > best_f1) {
      best_f1 = r.result.validation.f1;
      best_run = i;
    }
  }
  write_json(dir / "aggregate.json", json{{"variant", std::string(variant_label(config.config))},
                                          {"n_runs", runs.runs.size()},
                                          {"bundle", to_json(data.bundle.report)},
                                          {"summary", to_json(runs.summary)},
                                          {"runs", run_files}});
  out << "best_validation_f1\t" << format_double(best_f1) << '\t' << run_name(best_run) << '\n';
  return kOk;
}

int cmd_gridsearch(const RunArgs& a, std::ostream& out) {
  const auto config = load_config(a.config);
  const auto dir = output_dir(a.out, config);
  const auto data = load_data(config);
  ensure_dir(dir);

  GridSpec grid;
  if (config.grid) {
    grid = *config.grid;
  } else {
    grid.hid = {config.config.hid};
    grid.alpha = {config.config.alpha};
    grid.lr = {config.config.lr};
    grid.epoch_ceiling = config.config.epochs;
    grid.epoch_stride = config.config.epoch_stride;
  }
  const std::size_t threads = thread_budget(a.parallel ? a.parallel : config.parallel);

  const auto result = as_data_error([&] {
    DatasetBundle bundle = data.bundle;
    if (config.sampling) {
      bundle = resample_bundle(data.bundle, config.sampling->rate, config.test_rate, config.sampling->seed,
                               config.sampling->clamp);
    }
    return grid_search(bundle, grid, data.embeddings, config.config, threads);
  });

  json table = json::array();
  for (const auto& e : result.table) table.push_back(to_json(e));
  const auto& best = result.best.result;
  save_checkpoint(dir / "checkpoint.ckpt", result.best.state);
  write_json(dir / "report.json", json{{"variant", best.variant},
                                       {"cells", result.table.size()},
                                       {"best", to_json(best, a.timing)},
                                       {"table", table}});
  out << "best_validation_f1\t" << format_double(best.validation.f1) << '\t' << best.variant << "\thid="
      << best.config.hid << "\talpha=" << format_double(best.config.alpha)
      << "\tlr=" << format_double(best.config.lr) << "\tepoch=" << best.best_epoch << '\n';
  return kOk;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string test;
  std::string out;
  double threshold = 0.5;
  bool r_precision = false;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const auto state = load_checkpoint(fs::path(a.checkpoint));
  std::ifstream in(a.test, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + a.test + "'");
  const auto examples = parse_interactions(in);
  const auto report = evaluate_vh(state, examples, a.threshold,
                                  a.r_precision ? ThresholdMode::RPrecision : ThresholdMode::Threshold);
  write_json(a.out, to_json(report));
  out << "f1\t" << format_double(report.f1) << '\n';
  return kOk;
}

// ---- rank -------------------------------------------------------------------

struct RankArgs {
  std::vector<std::string> checkpoints;
  std::string virus;
  std::string candidates;
  std::string true_id;
  std::size_t runs = 1;
  std::string out;
};

std::vector<std::string> read_candidates(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path + "'");
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::string first;
    for_each_token(line, [&](std::string_view t) {
      if (first.empty()) first = std::string(t);
    });
    if (!first.empty()) ids.push_back(first);
  }
  return ids;
}

std::vector<fs::path> resolve_checkpoints(const RankArgs& a) {
  std::vector<fs::path> paths;
  if (a.checkpoints.size() == 1 && fs::is_directory(a.checkpoints.front())) {
    for (std::size_t i = 0; i < a.runs; ++i) {
      auto p = fs::path(a.checkpoints.front()) / (run_name(i) + ".ckpt");
      if (!fs::exists(p)) {
        throw CommandError{kInputError, "--runs " + std::to_string(a.runs) + " but '" + p.string() + "' is missing"};
      }
      paths.push_back(std::move(p));
    }
    return paths;
  }
  if (a.checkpoints.size() != a.runs) {
    throw CommandError{kInputError, "--runs " + std::to_string(a.runs) + " needs that many checkpoints (got " +
                                        std::to_string(a.checkpoints.size()) + ") or one run directory"};
  }
  for (const auto& c : a.checkpoints) paths.emplace_back(c);
  return paths;
}

int cmd_rank(const RankArgs& a, std::ostream& out) {
  if (a.runs == 0) throw CommandError{kInputError, "--runs must be at least 1"};
  const auto ids = read_candidates(a.candidates);
  if (std::find(ids.begin(), ids.end(), a.true_id) == ids.end()) {
    throw CommandError{kInputError, "true id '" + a.true_id + "' is not among the candidates"};
  }
  const auto paths = resolve_checkpoints(a);

  std::vector<std::vector<double>> scores(ids.size());
  std::vector<std::vector<bool>> run_hits;
  for (const auto& path : paths) {
    const auto state = load_checkpoint(path);
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double s = score_pair(state, Task::VH, a.virus, ids[i]);
      scores[i].push_back(s);
      cands.push_back(Candidate{ids[i], s});
    }
    run_hits.push_back(topk_hits(cands, a.true_id));
  }

  std::vector<Candidate> mean_cands;
  std::vector<SampleSummary> summaries;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    summaries.push_back(summarize(scores[i]));
    mean_cands.push_back(Candidate{ids[i], summaries.back().mean});
  }
  const auto mean_hits = topk_hits(mean_cands, a.true_id);
  std::vector<bool> all_runs(kTopK, true);
  json rate = json::array();
  for (std::size_t k = 0; k < kTopK; ++k) {
    std::size_t n = 0;
    for (const auto& h : run_hits) n += h[k] ? 1 : 0;
    all_runs[k] = n == run_hits.size();
    rate.push_back(static_cast<double>(n) / static_cast<double>(run_hits.size()));
  }

  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
  const auto ranked = rank_candidates(mean_cands);
  json ranking = json::array();
  out << "rank\tid\tmean\tstddev\n";
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& s = summaries[pos.at(ranked[r].id)];
    out << r + 1 << '\t' << ranked[r].id << '\t' << format_double(s.mean) << '\t' << format_double(s.stddev) << '\n';
    ranking.push_back(json{{"id", ranked[r].id}, {"mean", s.mean}, {"stddev", s.stddev}});
  }
  for (std::size_t k = 0; k < kTopK; ++k) {
    out << (k ? " " : "") << "top" << k + 1 << '=' << (all_runs[k] ? "yes" : "no");
  }
  out << '\n';

  if (!a.out.empty()) {
    write_json(a.out, json{{"virus_protein", a.virus},
                           {"true_id", a.true_id},
                           {"runs", paths.size()},
                           {"candidates", ids.size()},
                           {"true_rank", pessimistic_rank(mean_cands, a.true_id)},
                           {"topk", mean_hits},
                           {"topk_all_runs", all_runs},
                           {"topk_hit_rate", rate},
                           {"ranking", ranking}});
  }
  return kOk;
}

// ---- ttest ------------------------------------------------------------------

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> read_f1(const std::string& pattern) {
  const auto files = expand_glob(pattern);
  if (files.size() < 2) {
    throw CommandError{kInputError, "'" + pattern + "' matches " + std::to_string(files.size()) +
                                        " result files; at least 2 are needed"};
  }
  std::vector<double> f1;
  for (const auto& f : files) {
    std::ifstream in(f);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CommandError{kInputError, f + ": " + e.what()};
    }
    try {
      f1.push_back(run_result_from_json(j).metrics().f1);
    } catch (const Error& e) {
      throw CommandError{kInputError, f + ": " + e.what()};
    }
  }
  return f1;
}

int cmd_ttest(const std::string& glob_a, const std::string& glob_b, std::ostream& out) {
  const auto a = read_f1(glob_a);
  const auto b = read_f1(glob_b);
  const auto r = welch_ttest(a, b);
  out << "n_a\t" << a.size() << "\nn_b\t" << b.size() << "\nt\t" << format_double(r.t) << "\ndf\t"
      << format_double(r.df) << "\np\t" << format_double(r.p) << "\nsignificant at 0.05: "
      << (r.p < 0.05 ? "yes" : "no") << '\n';
  return kOk;
}

}  // namespace

std::size_t thread_budget(std::size_t requested) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PPI_MTT_THREADS")) {
    if (auto v = parse_integer(env); v && *v > 0) cap = static_cast<std::size_t>(*v);
  }
  return requested == 0 ? cap : std::min(requested, cap);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multitask transfer learning for pathogen-human protein interaction prediction", "ppi-mtt"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only report errors on stderr");

  EmbedArgs embed;
  auto* embed_cmd = app.add_subcommand("embed", "Embed FASTA sequences with mLSTM weights");
  embed_cmd->add_option("--weights", embed.weights, "Weight file; repeat for stacked layers")->required();
  embed_cmd->add_option("--fasta", embed.fasta, "FASTA file(s)")->required();
  embed_cmd->add_option("--out", embed.out, "Output embedding table")->required();
  embed_cmd->add_option("--pool", embed.pool, "Pooling over positions")->check(CLI::IsMember({"avg", "last"}));
  embed_cmd->add_option("--parallel", embed.parallel, "Worker threads (0: all cores)");

  RunArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train with a fixed configuration over seeded runs");
  train_cmd->add_option("--config", train_args.config, "Experiment config JSON")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory");
  train_cmd->add_option("--parallel", train_args.parallel, "Concurrent runs (0: config/cores)");
  train_cmd->add_flag("--timing", train_args.timing, "Record wall-clock seconds in run reports");

  RunArgs grid_args;
  auto* grid_cmd = app.add_subcommand("gridsearch", "Grid search over hid, alpha, lr and epochs");
  grid_cmd->add_option("--config", grid_args.config, "Experiment config JSON")->required();
  grid_cmd->add_option("--out", grid_args.out, "Output directory");
  grid_cmd->add_option("--parallel", grid_args.parallel, "Concurrent grid cells (0: config/cores)");
  grid_cmd->add_flag("--timing", grid_args.timing, "Record wall-clock seconds in the report");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a labelled pair list with a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--test", eval.test, "Pathogen-human TSV with 0/1 targets")->required();
  eval_cmd->add_option("--out", eval.out, "Report JSON")->required();
  eval_cmd->add_option("--threshold", eval.threshold, "Decision threshold");
  eval_cmd->add_flag("--r-precision", eval.r_precision, "Cut at the number of positives instead");

  RankArgs rank;
  auto* rank_cmd = app.add_subcommand("rank", "Rank candidate human partners of one pathogen protein");
  rank_cmd->add_option("--checkpoint", rank.checkpoints, "Checkpoint file(s) or a train output directory")->required();
  rank_cmd->add_option("--virus-protein", rank.virus, "Pathogen protein id")->required();
  rank_cmd->add_option("--candidates", rank.candidates, "Candidate human ids, one per line")->required();
  rank_cmd->add_option("--true-id", rank.true_id, "Known partner among the candidates")->required();
  rank_cmd->add_option("--runs", rank.runs, "Number of seeded runs");
  rank_cmd->add_option("--out", rank.out, "Optional ranking JSON");

  std::string glob_a, glob_b;
  auto* ttest_cmd = app.add_subcommand("ttest", "Welch t-test on F1 across two sets of run results");
  ttest_cmd->add_option("--a", glob_a, "Glob for the first result set")->required();
  ttest_cmd->add_option("--b", glob_b, "Glob for the second result set")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }
  log::set_quiet(quiet);

  try {
    if (*embed_cmd) return cmd_embed(embed, out);
    if (*train_cmd) return cmd_train(train_args, out);
    if (*grid_cmd) return cmd_gridsearch(grid_args, out);
    if (*eval_cmd) return cmd_evaluate(eval, out);
    if (*rank_cmd) return cmd_rank(rank, out);
    if (*ttest_cmd) return cmd_ttest(glob_a, glob_b, out);
  } catch (const CommandError& e) {
    err << "error: " << e.message << '\n';
    return e.code;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  err << "error: no subcommand\n";
  return kInputError;
}

}  // namespace ppimtt::cli
