#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ncl {

// 17 significant digits, "inf"/"-inf"/"nan" for non-finite values.
std::string fmt17(double v);

// JSON cannot hold infinities; they become the string "inf".
nlohmann::json json_number(double v);
nlohmann::json json_array(const std::vector<double>& v);
// Inverse of json_number.
double number_from_json(const nlohmann::json& j);

}  // namespace ncl
