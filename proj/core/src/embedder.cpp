#include "ppimtt/embedder.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <thread>

#include "ppimtt/error.hpp"
#include "ppimtt/named_tensors.hpp"
#include "ppimtt/numeric_text.hpp"

namespace ppimtt {
namespace {

constexpr std::array<std::string_view, 15> kTensorNames = {
    "vocab_embed", "W_mx", "W_mh", "W_ix", "W_im", "b_i", "W_fx", "W_fm",
    "b_f",         "W_ox", "W_om", "b_o",  "W_ux", "W_um", "b_u"};

MatrixF to_float(const Matrix& m) {
  MatrixF out(m.rows(), m.cols());
  std::transform(m.values().begin(), m.values().end(), out.values().begin(),
                 [](double v) { return static_cast<float>(v); });
  return out;
}

Matrix to_double(const MatrixF& m) {
  Matrix out(m.rows(), m.cols());
  std::transform(m.values().begin(), m.values().end(), out.values().begin(),
                 [](float v) { return static_cast<double>(v); });
  return out;
}

void expect_shape(std::string_view name, const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::ShapeMismatch, std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                                       std::to_string(m.cols()) + ", expected " +
                                       std::to_string(rows) + "x" + std::to_string(cols));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out = W x, with W float storage and double accumulation.
void matvec(const MatrixF& w, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += static_cast<double>(row[c]) * x[c];
    out[r] = acc;
  }
}

// Hidden state sequence [T x H] for one layer.
Matrix run_layer(const MlstmWeights& w, const Matrix& inputs) {
  const std::size_t H = w.hidden;
  const std::size_t T = inputs.rows();
  Matrix states(T, H);
  std::vector<double> h(H, 0.0), c(H, 0.0), m(H), tmp(H), scratch(H);
  std::vector<double> gi(H), gf(H), go(H), gu(H);

  auto gate = [&](const GateWeights& g, std::span<const double> x, std::vector<double>& out) {
    matvec(g.input, x, out);
    matvec(g.intermediate, m, scratch);
    for (std::size_t k = 0; k < H; ++k) out[k] += scratch[k] + static_cast<double>(g.bias(k, 0));
  };

  for (std::size_t t = 0; t < T; ++t) {
    const auto x = inputs.row(t);
    matvec(w.mult_input, x, m);
    matvec(w.mult_hidden, h, tmp);
    for (std::size_t k = 0; k < H; ++k) m[k] *= tmp[k];

    gate(w.input_gate, x, gi);
    gate(w.forget_gate, x, gf);
    gate(w.output_gate, x, go);
    gate(w.update, x, gu);
    for (std::size_t k = 0; k < H; ++k) {
      c[k] = sigmoid(gf[k]) * c[k] + sigmoid(gi[k]) * std::tanh(gu[k]);
      h[k] = sigmoid(go[k]) * std::tanh(c[k]);
      states(t, k) = h[k];
    }
  }
  return states;
}

std::vector<float> embed_layers(std::span<const MlstmWeights> stack, std::span<const std::uint8_t> tokens,
                                Pooling pooling) {
  if (tokens.empty()) fail(ErrorKind::EmptySequence, "cannot embed an empty token list");
  validate_stack(stack);

  const auto& first = stack.front();
  Matrix states(tokens.size(), first.input);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] >= first.vocab_embed.rows()) {
      fail(ErrorKind::InvalidArgument, "token " + std::to_string(tokens[t]) + " outside vocabulary");
    }
    const auto row = first.vocab_embed.row(tokens[t]);
    for (std::size_t k = 0; k < first.input; ++k) states(t, k) = row[k];
  }
  for (const auto& layer : stack) states = run_layer(layer, states);

  const std::size_t H = states.cols();
  std::vector<float> out(H);
  if (pooling == Pooling::Last) {
    const auto last = states.row(states.rows() - 1);
    for (std::size_t k = 0; k < H; ++k) out[k] = static_cast<float>(last[k]);
    return out;
  }
  for (std::size_t k = 0; k < H; ++k) {
    double sum = 0.0;
    for (std::size_t t = 0; t < states.rows(); ++t) sum += states(t, k);
    out[k] = static_cast<float>(sum / static_cast<double>(states.rows()));
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> tokenize(std::string_view sequence) {
  std::vector<std::uint8_t> tokens;
  tokens.reserve(sequence.size());
  for (char c : sequence) {
    auto pos = kAlphabet.find(c);
    // Unnormalized input falls back to the wildcard so tokenization stays total.
    if (pos == std::string_view::npos) {
      auto folded = normalize_residue(c);
      pos = folded ? kAlphabet.find(*folded) : kAlphabet.size() - 1;
      if (pos == std::string_view::npos) pos = kAlphabet.size() - 1;
    }
    tokens.push_back(static_cast<std::uint8_t>(pos));
  }
  return tokens;
}

MlstmWeights load_mlstm_weights(std::istream& in, bool require_vocab) {
  const auto file = read_named_tensors(in);
  for (auto name : kTensorNames) {
    if (name == "vocab_embed" && !require_vocab) continue;
    file.require(name);
  }

  const auto& w_mh = file.require("W_mh");
  const auto& w_mx = file.require("W_mx");
  const std::size_t H = w_mh.rows();
  const std::size_t in_dim = w_mx.cols();
  if (H == 0 || in_dim == 0) fail(ErrorKind::ShapeMismatch, "W_mh and W_mx must be non-empty");

  MlstmWeights w;
  w.hidden = H;
  w.input = in_dim;
  if (file.contains("vocab_embed")) {
    const auto& v = file.require("vocab_embed");
    if (v.rows() < kVocabSize || v.cols() != in_dim) {
      fail(ErrorKind::ShapeMismatch, "vocab_embed is " + std::to_string(v.rows()) + "x" +
                                         std::to_string(v.cols()) + ", expected at least " +
                                         std::to_string(kVocabSize) + "x" + std::to_string(in_dim));
    }
    w.vocab_embed = to_float(v);
  }
  expect_shape("W_mx", w_mx, H, in_dim);
  expect_shape("W_mh", w_mh, H, H);
  w.mult_input = to_float(w_mx);
  w.mult_hidden = to_float(w_mh);

  auto load_gate = [&](char g, GateWeights& out) {
    const std::string sx = std::string("W_") + g + "x";
    const std::string sm = std::string("W_") + g + "m";
    const std::string sb = std::string("b_") + g;
    expect_shape(sx, file.require(sx), H, in_dim);
    expect_shape(sm, file.require(sm), H, H);
    expect_shape(sb, file.require(sb), H, 1);
    out.input = to_float(file.require(sx));
    out.intermediate = to_float(file.require(sm));
    out.bias = to_float(file.require(sb));
  };
  load_gate('i', w.input_gate);
  load_gate('f', w.forget_gate);
  load_gate('o', w.output_gate);
  load_gate('u', w.update);
  return w;
}

MlstmWeights load_mlstm_weights(const std::filesystem::path& path, bool require_vocab) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open weights '" + path.string() + "'");
  try {
    return load_mlstm_weights(in, require_vocab);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_mlstm_weights(std::ostream& out, const MlstmWeights& w) {
  if (!w.vocab_embed.empty()) write_tensor(out, "vocab_embed", to_double(w.vocab_embed));
  write_tensor(out, "W_mx", to_double(w.mult_input));
  write_tensor(out, "W_mh", to_double(w.mult_hidden));
  auto gate = [&](char g, const GateWeights& gw) {
    write_tensor(out, std::string("W_") + g + "x", to_double(gw.input));
    write_tensor(out, std::string("W_") + g + "m", to_double(gw.intermediate));
    write_tensor(out, std::string("b_") + g, to_double(gw.bias));
  };
  gate('i', w.input_gate);
  gate('f', w.forget_gate);
  gate('o', w.output_gate);
  gate('u', w.update);
}

void validate_stack(std::span<const MlstmWeights> stack) {
  if (stack.empty()) fail(ErrorKind::InvalidArgument, "empty mLSTM stack");
  if (stack.front().vocab_embed.empty()) {
    fail(ErrorKind::MissingTensor, "vocab_embed (first layer of the stack)");
  }
  for (std::size_t i = 1; i < stack.size(); ++i) {
    if (stack[i].input != stack[i - 1].hidden) {
      fail(ErrorKind::ShapeMismatch, "layer " + std::to_string(i) + " expects input width " +
                                         std::to_string(stack[i].input) + " but layer " +
                                         std::to_string(i - 1) + " produces " +
                                         std::to_string(stack[i - 1].hidden));
    }
  }
}

std::vector<float> embed_sequence(const MlstmStack& stack, std::span<const std::uint8_t> tokens,
                                  Pooling pooling) {
  return embed_layers(stack, tokens, pooling);
}

std::vector<float> embed_sequence(const MlstmWeights& weights, std::span<const std::uint8_t> tokens,
                                  Pooling pooling) {
  return embed_layers(std::span<const MlstmWeights>(&weights, 1), tokens, pooling);
}

const std::vector<float>* EmbeddingTable::find(std::string_view id) const {
  auto it = entries.find(id);
  return it == entries.end() ? nullptr : &it->second;
}

void EmbeddingTable::insert(std::string id, std::vector<float> values) {
  if (values.size() != dim) {
    fail(ErrorKind::DimMismatch, "'" + id + "' has " + std::to_string(values.size()) +
                                     " components, table dim is " + std::to_string(dim));
  }
  for (float v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "embedding for '" + id + "'");
  }
  if (!entries.emplace(id, std::move(values)).second) {
    fail(ErrorKind::DuplicateId, "embedding for '" + id + "' already present");
  }
}

EmbeddingTable embed_batch(const MlstmStack& stack, std::span<const ProteinRecord> records,
                           std::size_t parallelism, Pooling pooling) {
  validate_stack(stack);
  EmbeddingTable table;
  table.dim = stack.back().hidden;
  {
    std::vector<std::string_view> ids;
    ids.reserve(records.size());
    for (const auto& r : records) ids.push_back(r.id);
    std::sort(ids.begin(), ids.end());
    auto dup = std::adjacent_find(ids.begin(), ids.end());
    if (dup != ids.end()) fail(ErrorKind::DuplicateId, "protein id '" + std::string(*dup) + "' repeated");
  }

  std::vector<std::vector<float>> results(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        if (records[i].sequence.empty()) {
          fail(ErrorKind::EmptySequence, "protein '" + records[i].id + "' has no residues");
        }
        results[i] = embed_sequence(stack, tokenize(records[i].sequence), pooling);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(parallelism, 1, std::max<std::size_t>(1, records.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < records.size(); ++i) table.insert(records[i].id, std::move(results[i]));
  return table;
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << "dim=" << table.dim << '\n';
  for (const auto& [id, values] : table.entries) {
    out << id << '\t';
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (k > 0) out << ' ';
      out << format_float(values[k]);
    }
    out << '\n';
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  write_embeddings(out, table);
}

EmbeddingTable read_embeddings(std::istream& in) {
  EmbeddingTable table;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::MalformedHeader, "missing 'dim=<D>' header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::string_view header(line);
  auto dim = header.starts_with("dim=") ? parse_integer(header.substr(4)) : std::nullopt;
  if (!dim || *dim < 0) fail(ErrorKind::MalformedHeader, "expected 'dim=<D>', got '" + line + "'");
  table.dim = static_cast<std::size_t>(*dim);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      fail(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": expected '<id>\\t<values>'");
    }
    std::string id = line.substr(0, tab);
    std::vector<float> values;
    values.reserve(table.dim);
    for_each_token(std::string_view(line).substr(tab + 1), [&](std::string_view tok) {
      auto v = parse_double(tok);
      if (!v) fail(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": bad value '" + std::string(tok) + "'");
      values.push_back(static_cast<float>(*v));
    });
    if (values.size() != table.dim) {
      fail(ErrorKind::DimMismatch, "line " + std::to_string(line_no) + ": '" + id + "' has " +
                                       std::to_string(values.size()) + " values, header says " +
                                       std::to_string(table.dim));
    }
    table.insert(std::move(id), std::move(values));
  }
  return table;
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open embeddings '" + path.string() + "'");
  try {
    return read_embeddings(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ppimtt
