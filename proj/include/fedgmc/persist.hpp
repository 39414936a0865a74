#pragma once

#include <filesystem>

#include "fedgmc/model.hpp"

namespace fedgmc {

// Text dump: a "fedgmc-params 1" line, a dims line (input embed classes),
// then w_ego, w_cls and b_cls rows, then "end". Values round-trip exactly.
void save_params(const ModelParams& params, const std::filesystem::path& path);

// Throws FormatError on a bad header, wrong version, wrong value count or a
// missing trailer. Nothing is returned on failure.
ModelParams load_params(const std::filesystem::path& path);

}  // namespace fedgmc
