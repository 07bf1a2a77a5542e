/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#ifndef MINIIO_CORE_DEF_JSON_HPP
#define MINIIO_CORE_DEF_JSON_HPP

#include "miniio/core/types.hpp"

#include "json.hpp"

#include <vector>

namespace miniio
{

/// {"name":..., "dtype":..., "shape":[...]} in that key order.
nlohmann::ordered_json def_to_json(const VariableDef &def);
/// Throws FormatError on a malformed entry.
VariableDef def_from_json(const nlohmann::json &j);

nlohmann::ordered_json defs_to_json(const std::vector<VariableDef> &defs);
std::vector<VariableDef> defs_from_json(const nlohmann::json &j);

} // end namespace miniio

#endif // MINIIO_CORE_DEF_JSON_HPP
