#pragma once

#include <json.hpp>

#include "medintake/cnn_model.hpp"

namespace medintake {

void to_json(nlohmann::json& j, const HyperParams& hp);
void from_json(const nlohmann::json& j, HyperParams& hp);

}  // namespace medintake
