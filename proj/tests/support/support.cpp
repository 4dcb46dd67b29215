#include "support/support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "cli/cli.hpp"
#include "ppimtt/error.hpp"

namespace ppimtt::testing {
namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<unsigned> counter{0};
  path_ = fs::temp_directory_path() /
          ("ppimtt-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

namespace {

double gaussian(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument away from zero.
  const double u = 1.0 - rng.uniform_real();
  const double v = rng.uniform_real();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * M_PI * v);
}

MatrixF uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale) {
  MatrixF m(rows, cols);
  for (auto& v : m.values()) v = static_cast<float>(rng.uniform_real(-scale, scale));
  return m;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

MlstmWeights random_mlstm(std::size_t hidden, std::size_t input, Rng& rng, double scale, bool with_vocab) {
  MlstmWeights w;
  w.hidden = hidden;
  w.input = input;
  if (with_vocab) w.vocab_embed = uniform_matrix(kVocabSize, input, rng, scale);
  w.mult_input = uniform_matrix(hidden, input, rng, scale);
  w.mult_hidden = uniform_matrix(hidden, hidden, rng, scale);
  for (auto* g : {&w.input_gate, &w.forget_gate, &w.output_gate, &w.update}) {
    g->input = uniform_matrix(hidden, input, rng, scale);
    g->intermediate = uniform_matrix(hidden, hidden, rng, scale);
    g->bias = uniform_matrix(hidden, 1, rng, scale);
  }
  return w;
}

MlstmWeights constant_mlstm(std::size_t hidden, std::size_t input, float value, float bias) {
  MlstmWeights w;
  w.hidden = hidden;
  w.input = input;
  w.vocab_embed = MatrixF(kVocabSize, input, value);
  w.mult_input = MatrixF(hidden, input, value);
  w.mult_hidden = MatrixF(hidden, hidden, value);
  for (auto* g : {&w.input_gate, &w.forget_gate, &w.output_gate, &w.update}) {
    g->input = MatrixF(hidden, input, value);
    g->intermediate = MatrixF(hidden, hidden, value);
    g->bias = MatrixF(hidden, 1, bias);
  }
  return w;
}

std::vector<double> reference_mlstm(const MlstmWeights& w, std::span<const std::uint8_t> tokens,
                                    Pooling pooling) {
  const std::size_t H = w.hidden;
  const std::size_t I = w.input;
  std::vector<double> h(H, 0.0), c(H, 0.0), sum(H, 0.0);
  for (std::uint8_t tok : tokens) {
    std::vector<double> x(I);
    for (std::size_t j = 0; j < I; ++j) x[j] = w.vocab_embed(tok, j);

    std::vector<double> m(H);
    for (std::size_t k = 0; k < H; ++k) {
      double a = 0.0, b = 0.0;
      for (std::size_t j = 0; j < I; ++j) a += double(w.mult_input(k, j)) * x[j];
      for (std::size_t j = 0; j < H; ++j) b += double(w.mult_hidden(k, j)) * h[j];
      m[k] = a * b;
    }
    std::vector<double> next_h(H), next_c(H);
    for (std::size_t k = 0; k < H; ++k) {
      double zi = w.input_gate.bias(k, 0), zf = w.forget_gate.bias(k, 0);
      double zo = w.output_gate.bias(k, 0), zu = w.update.bias(k, 0);
      for (std::size_t j = 0; j < I; ++j) {
        zi += double(w.input_gate.input(k, j)) * x[j];
        zf += double(w.forget_gate.input(k, j)) * x[j];
        zo += double(w.output_gate.input(k, j)) * x[j];
        zu += double(w.update.input(k, j)) * x[j];
      }
      for (std::size_t j = 0; j < H; ++j) {
        zi += double(w.input_gate.intermediate(k, j)) * m[j];
        zf += double(w.forget_gate.intermediate(k, j)) * m[j];
        zo += double(w.output_gate.intermediate(k, j)) * m[j];
        zu += double(w.update.intermediate(k, j)) * m[j];
      }
      next_c[k] = logistic(zf) * c[k] + logistic(zi) * std::tanh(zu);
      next_h[k] = logistic(zo) * std::tanh(next_c[k]);
    }
    h = next_h;
    c = next_c;
    for (std::size_t k = 0; k < H; ++k) sum[k] += h[k];
  }
  if (pooling == Pooling::Last) return h;
  for (auto& v : sum) v /= static_cast<double>(tokens.size());
  return sum;
}

std::vector<std::uint8_t> random_tokens(std::size_t length, Rng& rng) {
  std::vector<std::uint8_t> t(length);
  for (auto& v : t) v = static_cast<std::uint8_t>(rng.uniform_index(kVocabSize));
  return t;
}

RandomProblem random_problem(Rng& rng, std::size_t max_dim, std::size_t max_hid, std::size_t max_pairs,
                             double alpha, Reduction reduction) {
  const std::size_t D = 1 + rng.uniform_index(max_dim);
  const std::size_t hid = 1 + rng.uniform_index(max_hid);
  const std::size_t n_path = 1 + rng.uniform_index(4);
  const std::size_t n_human = 2 + rng.uniform_index(5);

  EmbeddingTable path_t, human_t;
  path_t.dim = human_t.dim = D;
  auto draw = [&](EmbeddingTable& t, const std::string& prefix, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v(D);
      for (auto& x : v) x = static_cast<float>(rng.uniform_real(-1.0, 1.0));
      t.insert(prefix + std::to_string(i), std::move(v));
    }
  };
  draw(path_t, "v", n_path);
  draw(human_t, "h", n_human);

  TrainConfig config;
  config.hid = hid;
  config.alpha = alpha;
  config.l1_reduction = reduction;
  RandomProblem p{init_model(config, path_t, human_t, rng.next()), {}, {}};
  for (auto* m : {&p.state.params.theta.bias, &p.state.params.phi.bias}) {
    for (auto& v : m->values()) v = rng.uniform_real(-0.5, 0.5);
  }
  for (auto* m : {&p.state.params.heads.w1, &p.state.params.heads.w2}) {
    for (auto& v : m->values()) v = rng.uniform_real(-1.5, 1.5);
  }

  const std::size_t n_vh = 1 + rng.uniform_index(max_pairs);
  const std::size_t n_hh = rng.uniform_index(max_pairs + 1);
  for (std::size_t i = 0; i < n_vh; ++i) {
    p.vh.push_back(ResolvedPair{rng.uniform_index(n_path), rng.uniform_index(n_human),
                                static_cast<double>(rng.uniform_index(2))});
  }
  for (std::size_t i = 0; i < n_hh; ++i) {
    p.hh.push_back(ResolvedPair{rng.uniform_index(n_human), rng.uniform_index(n_human), rng.uniform_real()});
  }
  return p;
}

double min_relu_margin(const RandomProblem& problem) {
  const auto& prm = problem.state.params;
  double margin = INFINITY;
  auto scan = [&](const MlpParams& mlp, std::span<const double> x) {
    for (std::size_t k = 0; k < mlp.weight.cols(); ++k) {
      double pre = mlp.bias(0, k);
      for (std::size_t d = 0; d < x.size(); ++d) pre += x[d] * mlp.weight(d, k);
      margin = std::min(margin, std::abs(pre));
    }
  };
  for (const auto& pr : problem.vh) {
    scan(prm.theta, prm.x_pathogen.row(pr.a));
    scan(prm.phi, prm.x_human.row(pr.b));
  }
  for (const auto& pr : problem.hh) {
    scan(prm.phi, prm.x_human.row(pr.a));
    scan(prm.phi, prm.x_human.row(pr.b));
  }
  return margin;
}

GradCheck finite_difference_check(const RandomProblem& problem, double eps, double floor) {
  Parameters grads = zeros_like(problem.state.params);
  backward_into(problem.state, problem.vh, problem.hh, grads);

  GradCheck out;
  ModelState probe = problem.state;
  auto probe_tensors = probe.params.tensors();
  const auto grad_tensors = std::as_const(grads).tensors();
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    auto values = probe_tensors[t]->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate_loss(probe, problem.vh, problem.hh).total;
      values[i] = saved - eps;
      const double down = evaluate_loss(probe, problem.vh, problem.hh).total;
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = grad_tensors[t]->values()[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      ++out.entries;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = std::string(Parameters::kNames[t]) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

std::vector<ProteinRecord> make_records(const std::vector<std::string>& ids, Role role, Rng& rng) {
  std::vector<ProteinRecord> out;
  for (const auto& id : ids) {
    std::string seq(20 + rng.uniform_index(21), 'A');
    for (auto& c : seq) c = kAlphabet[rng.uniform_index(20)];
    out.push_back(ProteinRecord{id, role, std::move(seq)});
  }
  return out;
}

SyntheticData separable_pairs(std::uint64_t seed, std::size_t dim) {
  Rng rng(seed);
  std::vector<std::string> pathogens, humans;
  for (int i = 0; i < 5; ++i) pathogens.push_back("v" + std::to_string(i));
  for (int j = 0; j < 10; ++j) humans.push_back("h" + std::to_string(j));

  SyntheticData d;
  d.embeddings.dim = dim;
  auto embed = [&](const std::string& id, int group) {
    std::vector<float> v(dim);
    v[0] = group == 0 ? 1.0f : -1.0f;
    for (std::size_t k = 1; k < dim; ++k) v[k] = static_cast<float>(rng.uniform_real(-0.3, 0.3));
    d.embeddings.insert(id, std::move(v));
  };
  for (int i = 0; i < 5; ++i) embed(pathogens[i], i % 2);
  for (int j = 0; j < 10; ++j) embed(humans[j], j % 2);

  std::vector<InteractionExample> vh;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 10; ++j) vh.push_back({pathogens[i], humans[j], i % 2 == j % 2 ? 1.0 : 0.0});
  }
  auto proteins = make_records(pathogens, Role::Virus, rng);
  auto hp = make_records(humans, Role::Human, rng);
  proteins.insert(proteins.end(), hp.begin(), hp.end());
  d.bundle = assemble_bundle("separable", Role::Virus, std::move(proteins), std::move(vh), {}, {}, 0);
  return d;
}

SyntheticData cluster_family(const FamilySpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t K = spec.clusters;
  std::vector<std::vector<double>> centers(K, std::vector<double>(spec.dim));
  for (auto& c : centers) {
    for (auto& v : c) v = gaussian(rng);
  }

  SyntheticData d;
  d.embeddings.dim = spec.dim;
  std::vector<std::string> humans, pathogens;
  std::vector<std::size_t> cluster_of(spec.humans);
  for (std::size_t i = 0; i < spec.humans; ++i) {
    humans.push_back("h" + std::to_string(i));
    cluster_of[i] = (i / 2) % K;
    std::vector<float> v(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      v[k] = static_cast<float>(spec.signal * centers[cluster_of[i]][k] + spec.noise * gaussian(rng));
    }
    d.embeddings.insert(humans.back(), std::move(v));
  }
  std::vector<std::size_t> target_of(spec.pathogens);
  for (std::size_t p = 0; p < spec.pathogens; ++p) {
    pathogens.push_back("v" + std::to_string(p));
    target_of[p] = p % K;
    std::vector<float> v(spec.dim);
    for (std::size_t k = 0; k < spec.dim; ++k) {
      v[k] = static_cast<float>(centers[target_of[p]][k] + 0.3 * gaussian(rng));
    }
    d.embeddings.insert(pathogens.back(), std::move(v));
  }

  // Even-numbered humans serve training pairs, odd-numbered ones test pairs.
  std::set<std::pair<std::size_t, std::size_t>> used;
  auto draw_pairs = [&](std::size_t n, std::size_t parity) {
    std::vector<InteractionExample> out;
    while (out.size() < n) {
      const bool positive = out.size() % 2 == 0;
      const std::size_t p = rng.uniform_index(spec.pathogens);
      const std::size_t h = 2 * rng.uniform_index(spec.humans / 2) + parity;
      if ((cluster_of[h] == target_of[p]) != positive) continue;
      if (!used.emplace(p, h).second) continue;
      out.push_back({pathogens[p], humans[h], positive ? 1.0 : 0.0});
    }
    return out;
  };
  auto vh_train = draw_pairs(spec.vh_train_pairs, 0);
  auto vh_test = draw_pairs(spec.vh_test_pairs, 1);

  std::set<std::pair<std::size_t, std::size_t>> hh_used;
  std::vector<InteractionExample> hh;
  while (hh.size() < spec.hh_pairs) {
    const bool same = hh.size() % 2 == 0;
    std::size_t a = rng.uniform_index(spec.humans);
    std::size_t b = rng.uniform_index(spec.humans);
    if (a == b || (cluster_of[a] == cluster_of[b]) != same) continue;
    if (!hh_used.emplace(std::min(a, b), std::max(a, b)).second) continue;
    hh.push_back({humans[a], humans[b],
                  same ? spec.same_cluster_confidence : spec.cross_cluster_confidence});
  }

  auto proteins = make_records(pathogens, Role::Virus, rng);
  auto hp = make_records(humans, Role::Human, rng);
  proteins.insert(proteins.end(), hp.begin(), hp.end());
  d.bundle = assemble_bundle("cluster-family", Role::Virus, std::move(proteins), std::move(vh_train),
                             std::move(vh_test), std::move(hh), 0);
  return d;
}

fs::path write_bundle(const SyntheticData& data, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<ProteinRecord> pathogen, human;
  for (const auto& p : data.bundle.proteins) (p.role == Role::Human ? human : pathogen).push_back(p);
  auto write_list = [&](const char* name, const std::vector<InteractionExample>& list) {
    std::ofstream out(dir / name, std::ios::binary);
    write_interactions(out, list);
  };
  {
    std::ofstream out(dir / "pathogen.fasta", std::ios::binary);
    write_fasta(out, pathogen);
  }
  {
    std::ofstream out(dir / "human.fasta", std::ios::binary);
    write_fasta(out, human);
  }
  write_list("vh_train.tsv", data.bundle.vh_train);
  write_list("vh_test.tsv", data.bundle.vh_test);
  write_list("hh_train.tsv", data.bundle.hh_train);
  write_embeddings(dir / "embeddings.emb", data.embeddings);
  const auto manifest = dir / "manifest.json";
  write_file(manifest, R"({"name": ")" + data.bundle.name + R"(", "pathogen_role": ")" +
                           std::string(to_string(data.bundle.pathogen_role)) +
                           R"(", "fasta": {"pathogen": "pathogen.fasta", "human": "human.fasta"},
 "vh_train": "vh_train.tsv", "vh_test": "vh_test.tsv", "hh_train": "hh_train.tsv", "max_length": 0}
)");
  return manifest;
}

CliResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace ppimtt::testing
