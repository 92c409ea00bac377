#pragma once

#include <filesystem>
#include <string>

#include "iclv/io.hpp"
#include "iclv/model.hpp"

namespace iclv::test {

inline std::filesystem::path data_dir() { return ICLV_DATA_DIR; }

inline ParameterSet paper_params() {
  return io::parameters_from_json(io::read_json_file(data_dir() / "paper-params.json"));
}

inline double paper_opt_out_constant() {
  return *io::opt_out_constant_from_json(io::read_json_file(data_dir() / "paper-params.json"));
}

/// Two-alternative vehicle with every numeric attribute set.
inline AlternativeAttributes vehicle(BodyType body, double price, double range) {
  AlternativeAttributes a;
  a.body_type = body;
  a.price = price;
  a.setup_cost = 2.5;
  a.operating_cost = 4.0;
  a.recharge_time = 0.3;
  a.range_km = range;
  a.rebate_upfront = 0.5;
  a.energy_discount = 0.25;
  a.market_uptake = 0.3;
  a.charge_spacing = 5.0;
  return a;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("iclv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace iclv::test
