/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/layout.hpp"
#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"

namespace miniio::container
{

std::string container_dirname(const std::string &name)
{
    if (name.size() >= 4 && name.compare(name.size() - 4, 4, ".mbp") == 0)
        return name;
    return name + ".mbp";
}

ContainerPaths container_paths(const EngineParams &params, const std::string &name)
{
    ContainerPaths p;
    const auto dir = container_dirname(name);
    p.pfs = params.pfs_dir / dir;
    if (params.bb_dir)
        p.bb = *params.bb_dir / dir;
    p.drain = params.drain;
    return p;
}

std::string ContainerInfo::serialize() const
{
    nlohmann::ordered_json j;
    j["format_version"] = format_version;
    j["created_unix_ms"] = created_unix_ms;
    j["world_size"] = world_size;
    j["ranks_per_node"] = ranks_per_node;
    j["aggregation_ratio"] = aggregation_ratio;
    j["variables"] = defs_to_json(variables);
    nlohmann::ordered_json p;
    p["codec"] = std::string(to_string(codec.codec));
    p["level"] = codec.level;
    p["shuffle"] = codec.shuffle;
    p["mode"] = std::string(to_string(mode));
    j["params"] = std::move(p);
    return j.dump(2) + "\n";
}

ContainerInfo ContainerInfo::parse(const std::string &text)
{
    ContainerInfo info;
    try
    {
        const auto j = nlohmann::json::parse(text);
        info.format_version = j.at("format_version").get<int>();
        info.created_unix_ms = j.at("created_unix_ms").get<std::uint64_t>();
        info.world_size = j.at("world_size").get<int>();
        info.ranks_per_node = j.at("ranks_per_node").get<int>();
        info.aggregation_ratio = j.at("aggregation_ratio").get<int>();
        info.variables = defs_from_json(j.at("variables"));
        const auto &p = j.at("params");
        info.codec.codec = codec_from_string(p.at("codec").get<std::string>());
        info.codec.level = p.at("level").get<int>();
        info.codec.shuffle = p.at("shuffle").get<bool>();
        info.mode = mode_from_string(p.at("mode").get<std::string>());
    }
    catch (const nlohmann::json::exception &e)
    {
        throw FormatError(std::string("malformed info.json: ") + e.what());
    }
    catch (const ConfigError &e)
    {
        throw FormatError(std::string("malformed info.json: ") + e.what());
    }
    if (info.format_version != 1)
        throw FormatError("unsupported container version " +
                          std::to_string(info.format_version));
    return info;
}

} // end namespace miniio::container
