#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppimtt/seqio.hpp"
#include "ppimtt/tensor.hpp"

namespace ppimtt {

inline constexpr std::size_t kVocabSize = kAlphabet.size();

/// A=0, C=1, ..., Y=19, X=20. Input must already be normalized.
std::vector<std::uint8_t> tokenize(std::string_view sequence);

struct GateWeights {
  MatrixF input;         // [H x in]
  MatrixF intermediate;  // [H x H]
  MatrixF bias;          // [H x 1]
};

/// One multiplicative-LSTM layer. The first layer of a stack owns the residue
/// embedding table; chained layers take the previous layer's hidden states
/// as input and leave `vocab_embed` empty.
struct MlstmWeights {
  std::size_t hidden = 0;
  std::size_t input = 0;
  MatrixF vocab_embed;  // [V x in]
  MatrixF mult_input;   // W_mx [H x in]
  MatrixF mult_hidden;  // W_mh [H x H]
  GateWeights input_gate;
  GateWeights forget_gate;
  GateWeights output_gate;
  GateWeights update;
};

using MlstmStack = std::vector<MlstmWeights>;

enum class Pooling { Mean, Last };

MlstmWeights load_mlstm_weights(std::istream& in, bool require_vocab = true);
MlstmWeights load_mlstm_weights(const std::filesystem::path& path, bool require_vocab = true);
void write_mlstm_weights(std::ostream& out, const MlstmWeights& weights);

/// Checks that each layer's input width matches the previous layer's hidden
/// width. Throws ShapeMismatch.
void validate_stack(std::span<const MlstmWeights> stack);

/// Runs the recurrence from zero state and pools the hidden states.
/// Accumulation is in double; the result is rounded to float for storage.
std::vector<float> embed_sequence(const MlstmWeights& weights, std::span<const std::uint8_t> tokens,
                                  Pooling pooling = Pooling::Mean);
std::vector<float> embed_sequence(const MlstmStack& stack, std::span<const std::uint8_t> tokens,
                                  Pooling pooling = Pooling::Mean);

/// Fixed-length protein vectors keyed by id. std::map keeps iteration (and
/// therefore file output) in id order.
struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<float>, std::less<>> entries;

  const std::vector<float>* find(std::string_view id) const;
  void insert(std::string id, std::vector<float> values);

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

EmbeddingTable embed_batch(const MlstmStack& stack, std::span<const ProteinRecord> records,
                           std::size_t parallelism = 1, Pooling pooling = Pooling::Mean);

void write_embeddings(std::ostream& out, const EmbeddingTable& table);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(std::istream& in);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

}  // namespace ppimtt
