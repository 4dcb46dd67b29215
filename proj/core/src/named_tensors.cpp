#include "ppimtt/named_tensors.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "ppimtt/error.hpp"
#include "ppimtt/numeric_text.hpp"

namespace ppimtt {

const Matrix& NamedTensors::require(std::string_view name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) fail(ErrorKind::MissingTensor, std::string(name));
  return it->second;
}

NamedTensors read_named_tensors(std::istream& in) {
  NamedTensors out;
  std::string line;
  std::size_t line_no = 0;

  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  bool open = false;

  auto close = [&] {
    if (!open) return;
    if (values.size() != rows * cols) {
      fail(ErrorKind::ShapeMismatch, "tensor '" + name + "' declares " + std::to_string(rows) + "x" +
                                         std::to_string(cols) + " but has " +
                                         std::to_string(values.size()) + " values");
    }
    if (!out.tensors.emplace(name, Matrix(rows, cols, std::move(values))).second) {
      fail(ErrorKind::DuplicateId, "tensor '" + name + "' appears twice");
    }
    values = {};
    open = false;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view view(line);
    if (view.starts_with("meta ") || view == "meta") {
      close();
      if (out.meta) fail(ErrorKind::MalformedHeader, "line " + std::to_string(line_no) + ": second meta line");
      out.meta = std::string(view.substr(std::min<std::size_t>(5, view.size())));
      continue;
    }
    if (view.starts_with("tensor")) {
      close();
      std::vector<std::string_view> toks;
      for_each_token(view, [&](std::string_view t) { toks.push_back(t); });
      auto r = toks.size() == 4 ? parse_integer(toks[2]) : std::nullopt;
      auto c = toks.size() == 4 ? parse_integer(toks[3]) : std::nullopt;
      if (toks.size() != 4 || toks[0] != "tensor" || !r || !c || *r < 0 || *c < 0) {
        fail(ErrorKind::MalformedHeader,
             "line " + std::to_string(line_no) + ": expected 'tensor <name> <rows> <cols>'");
      }
      name = std::string(toks[1]);
      rows = static_cast<std::size_t>(*r);
      cols = static_cast<std::size_t>(*c);
      values.reserve(rows * cols);
      open = true;
      continue;
    }
    for_each_token(view, [&](std::string_view tok) {
      if (!open) {
        fail(ErrorKind::MalformedHeader, "line " + std::to_string(line_no) + ": values before any tensor header");
      }
      auto v = parse_double(tok);
      if (!v) {
        fail(ErrorKind::MalformedRow, "tensor '" + name + "' line " + std::to_string(line_no) +
                                          ": '" + std::string(tok) + "' is not a number");
      }
      if (!std::isfinite(*v)) {
        fail(ErrorKind::NonFiniteValue, "tensor '" + name + "' line " + std::to_string(line_no));
      }
      values.push_back(*v);
    });
  }
  close();
  return out;
}

void write_meta(std::ostream& out, std::string_view json_line) { out << "meta " << json_line << '\n'; }

void write_tensor(std::ostream& out, std::string_view name, std::size_t rows, std::size_t cols,
                  std::span<const double> values) {
  out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c > 0) out << ' ';
      out << format_double(values[r * cols + c]);
    }
    out << '\n';
  }
}

void write_tensor(std::ostream& out, std::string_view name, const Matrix& m) {
  write_tensor(out, name, m.rows(), m.cols(), m.values());
}

}  // namespace ppimtt
