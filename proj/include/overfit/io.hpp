#pragma once

#include <string>

#include "json.hpp"

#include "overfit/data.hpp"
#include "overfit/network.hpp"

namespace overfit {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

json read_json_file(const std::string& path);
/// Doubles are written with 17 significant digits, so a save/load cycle is exact.
void write_json_file(const json& j, const std::string& path);

json to_json(const Network& net);
Network network_from_json(const json& j);

json to_json(const Dataset& ds);
Dataset dataset_from_json(const json& j);

}  // namespace overfit
