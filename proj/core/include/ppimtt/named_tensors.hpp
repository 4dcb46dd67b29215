#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ppimtt/tensor.hpp"

namespace ppimtt {

/// Text container shared by mLSTM weight files and model checkpoints:
///
///   meta <json>                 (optional, at most once)
///   tensor <name> <rows> <cols>
///   <rows*cols whitespace-separated decimals, row-major>
///
/// Values are read into doubles; non-finite values are rejected.
struct NamedTensors {
  std::optional<std::string> meta;
  std::map<std::string, Matrix, std::less<>> tensors;

  const Matrix& require(std::string_view name) const;
  bool contains(std::string_view name) const { return tensors.find(name) != tensors.end(); }
};

NamedTensors read_named_tensors(std::istream& in);

void write_meta(std::ostream& out, std::string_view json_line);
void write_tensor(std::ostream& out, std::string_view name, std::size_t rows, std::size_t cols,
                  std::span<const double> values);
void write_tensor(std::ostream& out, std::string_view name, const Matrix& m);

}  // namespace ppimtt
