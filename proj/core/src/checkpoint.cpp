#include "ppimtt/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ppimtt/error.hpp"
#include "ppimtt/named_tensors.hpp"
#include "ppimtt/serialization.hpp"

namespace ppimtt {

namespace {
constexpr const char* kFormat = "ppimtt-checkpoint";
constexpr int kVersion = 1;
}  // namespace

void save_checkpoint(std::ostream& out, const ModelState& state) {
  nlohmann::json meta{{"format", kFormat},
                      {"version", kVersion},
                      {"config", to_json(state.config)},
                      {"step", state.adam.step},
                      {"dim", state.dim()},
                      {"hid", state.hid()},
                      {"pathogen_ids", state.pathogen_ids.ids()},
                      {"human_ids", state.human_ids.ids()}};
  write_meta(out, meta.dump());
  const auto tensors = state.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) write_tensor(out, Parameters::kNames[i], *tensors[i]);
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint '" + path.string() + "'");
  save_checkpoint(out, state);
}

ModelState load_checkpoint(std::istream& in) {
  auto file = read_named_tensors(in);
  if (!file.meta) fail(ErrorKind::MalformedHeader, "checkpoint has no meta line");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(*file.meta);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedHeader, std::string("checkpoint meta: ") + e.what());
  }
  if (meta.value("format", "") != kFormat) fail(ErrorKind::MalformedHeader, "not a ppimtt checkpoint");

  ModelState s;
  try {
    s.config = train_config_from_json(meta.at("config"));
    s.adam.step = meta.at("step").get<std::uint64_t>();
    s.pathogen_ids = IdIndex(meta.at("pathogen_ids").get<std::vector<std::string>>());
    s.human_ids = IdIndex(meta.at("human_ids").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::MalformedHeader, std::string("checkpoint meta: ") + e.what());
  }

  auto tensors = s.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto it = file.tensors.find(Parameters::kNames[i]);
    if (it == file.tensors.end()) fail(ErrorKind::MissingTensor, std::string(Parameters::kNames[i]));
    *tensors[i] = std::move(it->second);
  }

  const std::size_t D = s.params.theta.weight.rows();
  const std::size_t hid = s.params.theta.weight.cols();
  auto expect = [](const char* name, const Matrix& m, std::size_t rows, std::size_t cols) {
    if (m.rows() != rows || m.cols() != cols) {
      fail(ErrorKind::ShapeMismatch, std::string(name) + " is " + std::to_string(m.rows()) + "x" +
                                         std::to_string(m.cols()) + ", expected " +
                                         std::to_string(rows) + "x" + std::to_string(cols));
    }
  };
  expect("x_pathogen", s.params.x_pathogen, s.pathogen_ids.size(), D);
  expect("x_human", s.params.x_human, s.human_ids.size(), D);
  expect("theta_b", s.params.theta.bias, 1, hid);
  expect("phi_W", s.params.phi.weight, D, hid);
  expect("phi_b", s.params.phi.bias, 1, hid);
  expect("w1", s.params.heads.w1, 1, hid);
  expect("w2", s.params.heads.w2, 1, hid);

  s.adam.first_moment = zeros_like(s.params);
  s.adam.second_moment = zeros_like(s.params);
  return s;
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
  try {
    return load_checkpoint(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ppimtt
