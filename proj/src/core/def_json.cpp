/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"

namespace miniio
{

nlohmann::ordered_json def_to_json(const VariableDef &def)
{
    nlohmann::ordered_json j;
    j["name"] = def.name;
    j["dtype"] = std::string(def.dtype.name());
    j["shape"] = def.shape;
    return j;
}

VariableDef def_from_json(const nlohmann::json &j)
{
    try
    {
        VariableDef def;
        def.name = j.at("name").get<std::string>();
        def.dtype = Dtype::from_name(j.at("dtype").get<std::string>());
        def.shape = j.at("shape").get<Dims>();
        return def;
    }
    catch (const nlohmann::json::exception &e)
    {
        throw FormatError(std::string("malformed variable definition: ") + e.what());
    }
    catch (const ConfigError &e)
    {
        throw FormatError(e.what());
    }
}

nlohmann::ordered_json defs_to_json(const std::vector<VariableDef> &defs)
{
    auto arr = nlohmann::ordered_json::array();
    for (const auto &d : defs)
        arr.push_back(def_to_json(d));
    return arr;
}

std::vector<VariableDef> defs_from_json(const nlohmann::json &j)
{
    if (!j.is_array())
        throw FormatError("variables must be an array");
    std::vector<VariableDef> defs;
    for (const auto &e : j)
        defs.push_back(def_from_json(e));
    return defs;
}

} // end namespace miniio
