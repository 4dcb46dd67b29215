#pragma once

#include <filesystem>
#include <iosfwd>

#include "ppimtt/model.hpp"

namespace ppimtt {

/// Named-tensor file holding x_pathogen, x_human, theta_W, theta_b, phi_W,
/// phi_b, w1 and w2, preceded by a `meta` JSON line with the TrainConfig,
/// the Adam step counter and the row ids of both embedding tables.
/// Adam moments are not persisted; a loaded state has zero moments.
void save_checkpoint(std::ostream& out, const ModelState& state);
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);

ModelState load_checkpoint(std::istream& in);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace ppimtt
