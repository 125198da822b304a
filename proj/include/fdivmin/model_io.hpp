#pragma once

#include <string>

#include "fdivmin/params.hpp"

namespace fdivmin {

// JSON document: name, role, shape and flat data per parameter. Doubles are
// written in shortest round-trip form, so load(save(ps)) is value-exact.
std::string params_to_json(const ParameterSet& ps);
ParameterSet params_from_json(const std::string& json_text);

void save_params_json(const ParameterSet& ps, const std::string& path);
ParameterSet load_params_json(const std::string& path);

}  // namespace fdivmin
