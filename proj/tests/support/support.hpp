#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ppimtt/embedder.hpp"
#include "ppimtt/model.hpp"
#include "ppimtt/random.hpp"
#include "ppimtt/seqio.hpp"

namespace ppimtt::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view text);

// ---- mLSTM ------------------------------------------------------------------

/// Every entry drawn uniformly from [-scale, scale]; vocab_embed included
/// when `with_vocab` is set.
MlstmWeights random_mlstm(std::size_t hidden, std::size_t input, Rng& rng, double scale = 0.8,
                          bool with_vocab = true);

/// Every weight entry set to `value` and every bias to `bias`.
MlstmWeights constant_mlstm(std::size_t hidden, std::size_t input, float value, float bias = 0.0f);

/// Step-by-step evaluation of the recurrence written independently of the
/// library: explicit scalar sums per gate, no shared helpers.
std::vector<double> reference_mlstm(const MlstmWeights& w, std::span<const std::uint8_t> tokens,
                                    Pooling pooling = Pooling::Mean);

std::vector<std::uint8_t> random_tokens(std::size_t length, Rng& rng);

// ---- models and gradients ---------------------------------------------------

struct RandomProblem {
  ModelState state;
  std::vector<ResolvedPair> vh;
  std::vector<ResolvedPair> hh;
};

/// Random model with non-zero biases and heads plus random VH (0/1) and HH
/// ([0,1]) batches. Sizes are drawn up to the given bounds.
RandomProblem random_problem(Rng& rng, std::size_t max_dim, std::size_t max_hid, std::size_t max_pairs,
                             double alpha, Reduction reduction = Reduction::Mean);

/// Smallest |pre-activation| over every tower evaluation the batches touch.
double min_relu_margin(const RandomProblem& problem);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // tensor[index] of the largest error
};

/// Central finite differences of the combined loss against backward_into.
/// Relative error is |g - n| / max(|g|, |n|, floor).
GradCheck finite_difference_check(const RandomProblem& problem, double eps = 1e-5, double floor = 1e-6);

// ---- synthetic bundles ------------------------------------------------------

struct SyntheticData {
  DatasetBundle bundle;
  EmbeddingTable embeddings;
};

/// Random residue strings so bundles carry real records.
std::vector<ProteinRecord> make_records(const std::vector<std::string>& ids, Role role, Rng& rng);

/// 5 pathogens x 10 humans, each in one of two groups; a pair interacts iff
/// the groups match. Embeddings separate the groups along the first axis.
SyntheticData separable_pairs(std::uint64_t seed, std::size_t dim = 4);

/// Parameters of the clustered family used to compare MTT and STT.
struct FamilySpec {
  std::size_t clusters = 2;
  std::size_t humans = 240;
  std::size_t pathogens = 8;
  std::size_t dim = 16;
  double signal = 0.2;   // weight of the cluster vector in a human embedding
  double noise = 1.0;    // weight of the per-protein noise
  double same_cluster_confidence = 0.9;
  double cross_cluster_confidence = 0.1;
  std::size_t vh_train_pairs = 40;
  std::size_t hh_pairs = 2000;
  std::size_t vh_test_pairs = 200;
};

/// Human proteins carry latent cluster vectors; HH confidence is the cluster
/// affinity; a pathogen interacts with the humans of one target cluster.
/// Human i belongs to cluster (i / 2) % clusters and pathogen p targets
/// cluster p % clusters. Train VH pairs use even-numbered humans and test
/// pairs odd-numbered ones; both lists alternate positive and negative.
SyntheticData cluster_family(const FamilySpec& spec, std::uint64_t seed);

/// Writes FASTA, TSV lists, manifest.json and embeddings.emb into `dir`.
/// Returns the manifest path.
std::filesystem::path write_bundle(const SyntheticData& data, const std::filesystem::path& dir);

// ---- CLI --------------------------------------------------------------------

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args);

}  // namespace ppimtt::testing
