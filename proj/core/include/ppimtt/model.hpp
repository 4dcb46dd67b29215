#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ppimtt/embedder.hpp"
#include "ppimtt/seqio.hpp"
#include "ppimtt/tensor.hpp"

namespace ppimtt {

enum class Reduction { Mean, Sum };

struct TrainConfig {
  double alpha = 1e-3;  // weight of the human-human side loss
  double lr = 1e-3;
  std::size_t hid = 16;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t batch_size = 256;  // batches larger than the set mean full-batch
  Reduction l1_reduction = Reduction::Mean;
  double validation_fraction = 0.1;
  std::size_t epoch_stride = 1;  // validation is evaluated every `stride` epochs
  double threshold = 0.5;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Throws InvalidArgument on out-of-domain values.
void validate(const TrainConfig& config);

// "STT" when the side task is switched off, "MTT" otherwise.
std::string_view variant_label(const TrainConfig& config);

enum class Side { Pathogen, Human };
enum class Task { VH, HH };

/// One hidden layer with ReLU: relu(x * weight + bias).
struct MlpParams {
  Matrix weight;  // [D x hid]
  Matrix bias;    // [1 x hid]

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Bias-free linear heads applied to the element-wise product of two
/// tower outputs.
struct ScoringHeads {
  Matrix w1;  // [1 x hid], pathogen x human
  Matrix w2;  // [1 x hid], human x human

  friend bool operator==(const ScoringHeads&, const ScoringHeads&) = default;
};

/// Every learnable tensor. Gradients and Adam moments use the same layout.
struct Parameters {
  Matrix x_pathogen;  // [|pathogens| x D]
  Matrix x_human;     // [|humans| x D], shared by both tasks
  MlpParams theta;    // pathogen tower
  MlpParams phi;      // human tower
  ScoringHeads heads;

  static constexpr std::array<std::string_view, 8> kNames = {
      "x_pathogen", "x_human", "theta_W", "theta_b", "phi_W", "phi_b", "w1", "w2"};

  std::array<Matrix*, 8> tensors();
  std::array<const Matrix*, 8> tensors() const;

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

Parameters zeros_like(const Parameters& p);

/// Row lookup for an embedding matrix; ids are kept sorted.
class IdIndex {
 public:
  IdIndex() = default;
  explicit IdIndex(std::vector<std::string> sorted_ids);

  std::optional<std::size_t> find(std::string_view id) const;
  const std::vector<std::string>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }

  friend bool operator==(const IdIndex& a, const IdIndex& b) { return a.ids_ == b.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> rows_;
};

struct AdamState {
  Parameters first_moment;
  Parameters second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct ModelState {
  IdIndex pathogen_ids;
  IdIndex human_ids;
  Parameters params;
  AdamState adam;
  TrainConfig config;

  std::size_t dim() const { return params.theta.weight.rows(); }
  std::size_t hid() const { return params.theta.weight.cols(); }

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Copies the pretrained tables into trainable matrices and draws tower and
/// head weights Glorot-uniform from `seed`; biases and moments start at zero.
ModelState init_model(const TrainConfig& config, const EmbeddingTable& pathogen,
                      const EmbeddingTable& human, std::uint64_t seed);

std::vector<double> tower_forward(const ModelState& state, Side side, std::string_view id);

double score_pair(const ModelState& state, Task task, std::string_view a, std::string_view b);

/// A pair with ids already mapped to embedding rows.
struct ResolvedPair {
  std::size_t a = 0;
  std::size_t b = 0;
  double target = 0.0;
};

// Throws UnknownProtein.
std::vector<ResolvedPair> resolve(const ModelState& state, Task task,
                                  std::span<const InteractionExample> examples);

double score_resolved(const ModelState& state, Task task, const ResolvedPair& pair);

inline constexpr double kProbabilityClamp = 1e-7;

double loss_vh(const ModelState& state, std::span<const InteractionExample> batch);
double loss_hh(const ModelState& state, std::span<const InteractionExample> batch);
double total_loss(const ModelState& state, std::span<const InteractionExample> vh,
                  std::span<const InteractionExample> hh);

struct LossBreakdown {
  double vh = 0.0;
  double hh = 0.0;
  double total = 0.0;
};

LossBreakdown evaluate_loss(const ModelState& state, std::span<const ResolvedPair> vh,
                            std::span<const ResolvedPair> hh);

struct GradientResult {
  Parameters gradients;
  LossBreakdown loss;
};

GradientResult backward(const ModelState& state, std::span<const InteractionExample> vh,
                        std::span<const InteractionExample> hh);

/// Overwrites `grads` (which must already have the parameter shapes) with the
/// exact gradient of the combined loss. Returns the loss at the current point.
LossBreakdown backward_into(const ModelState& state, std::span<const ResolvedPair> vh,
                            std::span<const ResolvedPair> hh, Parameters& grads);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update of one tensor; `step` is the 1-based count
/// after this update.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::uint64_t step, double lr, const AdamHyper& hyper = {});

// Throws ShapeMismatch.
void adam_step(ModelState& state, const Parameters& grads);

/// Logistic regression on the concatenation [X(a); X(b)] of frozen
/// embeddings.
struct NaiveBaseline {
  std::size_t dim = 0;           // per-protein embedding width
  std::vector<double> weights;   // 2 * dim
  double bias = 0.0;

  friend bool operator==(const NaiveBaseline&, const NaiveBaseline&) = default;
};

NaiveBaseline naive_baseline_fit(const EmbeddingTable& embeddings,
                                 std::span<const InteractionExample> train, const TrainConfig& config);

double naive_baseline_score(const NaiveBaseline& model, const EmbeddingTable& embeddings,
                            const InteractionExample& pair);

// Mean binary cross-entropy of the baseline over a set.
double naive_baseline_loss(const NaiveBaseline& model, const EmbeddingTable& embeddings,
                           std::span<const InteractionExample> set);

}  // namespace ppimtt
