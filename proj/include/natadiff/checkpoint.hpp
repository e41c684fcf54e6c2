#pragma once

#include <json.hpp>

#include "natadiff/mlp.hpp"

namespace natadiff::checkpoint {

inline constexpr const char* kFormat = "natadiff-checkpoint";
inline constexpr int kVersion = 1;

nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);

nlohmann::json mlp_to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& j);

// Header common to every checkpoint kind.
nlohmann::json header(const std::string& kind);
// Throws ValidationError if `j` is not a checkpoint of the expected kind.
void check_header(const nlohmann::json& j, const std::string& kind);

}  // namespace natadiff::checkpoint
