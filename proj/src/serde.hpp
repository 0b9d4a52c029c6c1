// Internal JSON (de)serialization helpers shared by manifest and run-config
// code. Not part of the public headers.
#pragma once

#include <initializer_list>

#include "json.hpp"
#include "ous/data.hpp"

namespace ous {

// Rejects keys outside `allowed` and reports them with `ctx` in the message.
void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* ctx);

nlohmann::json generator_config_to_json(const GeneratorConfig& c);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

}  // namespace ous
