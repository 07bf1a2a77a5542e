/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/core/step_index.hpp"
#include "miniio/core/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <utility>

namespace miniio
{

StepIndex index_merge(const std::vector<StepIndex> &fragments, int world_size)
{
    StepIndex merged;
    if (!fragments.empty())
        merged.step = fragments.front().step;

    std::set<std::pair<std::string, int>> seen;
    std::set<int> contributors;
    for (const auto &frag : fragments)
    {
        if (frag.step != merged.step)
            throw IndexError("fragment for step " + std::to_string(frag.step) +
                             " merged into step " + std::to_string(merged.step));
        for (const auto &b : frag.blocks)
        {
            if (b.step != merged.step)
                throw IndexError("block of \"" + b.var + "\" carries step " +
                                 std::to_string(b.step) + ", expected " +
                                 std::to_string(merged.step));
            if (!seen.emplace(b.var, b.writer_rank).second)
                throw DuplicateBlock("duplicate block for variable \"" + b.var +
                                     "\" from rank " +
                                     std::to_string(b.writer_rank));
            contributors.insert(b.writer_rank);
            merged.blocks.push_back(b);
        }
    }

    std::sort(merged.blocks.begin(), merged.blocks.end(),
              [](const BlockRecord &a, const BlockRecord &b) {
                  if (a.var != b.var)
                      return a.var < b.var;
                  return a.writer_rank < b.writer_rank;
              });

    merged.complete = world_size > 0;
    for (int r = 0; r < world_size; ++r)
        if (!contributors.count(r))
        {
            merged.complete = false;
            break;
        }
    return merged;
}

namespace
{

std::string hex8(std::uint32_t v)
{
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

// Each field's key in the order it is emitted.
nlohmann::ordered_json block_to_json(const BlockRecord &b)
{
    nlohmann::ordered_json j;
    j["var"] = b.var;
    j["step"] = b.step;
    j["rank"] = b.writer_rank;
    j["start"] = b.selection.start;
    j["count"] = b.selection.count;
    j["subfile"] = b.subfile_id;
    j["offset"] = b.offset;
    j["stored"] = b.stored_nbytes;
    j["raw"] = b.raw_nbytes;
    j["codec"] = std::string(to_string(b.codec.codec));
    j["level"] = b.codec.level;
    j["shuffle"] = b.codec.shuffle;
    j["crc32c"] = hex8(b.checksum_raw);
    j["min"] = b.stat_min;
    j["max"] = b.stat_max;
    return j;
}

template <class T>
T field(const nlohmann::json &obj, const char *key, std::size_t pos)
{
    auto it = obj.find(key);
    if (it == obj.end())
        throw ParseError(std::string("missing key \"") + key + "\"", pos);
    try
    {
        return it->get<T>();
    }
    catch (const nlohmann::json::exception &)
    {
        throw ParseError(std::string("wrong type for key \"") + key + "\"", pos);
    }
}

std::uint32_t parse_hex8(const std::string &s, std::size_t pos)
{
    if (s.size() != 8)
        throw ParseError("crc32c must be 8 hex digits", pos);
    std::uint32_t v = 0;
    for (char c : s)
    {
        v <<= 4;
        if (c >= '0' && c <= '9')
            v |= static_cast<std::uint32_t>(c - '0');
        else if (c >= 'a' && c <= 'f')
            v |= static_cast<std::uint32_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F')
            v |= static_cast<std::uint32_t>(c - 'A' + 10);
        else
            throw ParseError("crc32c must be 8 hex digits", pos);
    }
    return v;
}

} // end anonymous namespace

std::string index_serialize(const StepIndex &idx)
{
    nlohmann::ordered_json j;
    j["step"] = idx.step;
    j["complete"] = idx.complete;
    auto blocks = nlohmann::ordered_json::array();
    for (const auto &b : idx.blocks)
        blocks.push_back(block_to_json(b));
    j["blocks"] = std::move(blocks);
    return j.dump();
}

StepIndex index_parse(std::string_view line)
{
    nlohmann::json j;
    try
    {
        j = nlohmann::json::parse(line.begin(), line.end());
    }
    catch (const nlohmann::json::parse_error &e)
    {
        throw ParseError("malformed index line", e.byte > 0 ? e.byte - 1 : 0);
    }
    // Structural defects are reported at the end of the line; the JSON
    // itself was well-formed up to there.
    const auto pos = line.size();
    if (!j.is_object())
        throw ParseError("index line is not an object", 0);

    StepIndex idx;
    idx.step = field<std::uint64_t>(j, "step", pos);
    idx.complete = field<bool>(j, "complete", pos);
    auto blocks = j.find("blocks");
    if (blocks == j.end() || !blocks->is_array())
        throw ParseError("missing array \"blocks\"", pos);

    for (const auto &jb : *blocks)
    {
        if (!jb.is_object())
            throw ParseError("block is not an object", pos);
        BlockRecord b;
        b.var = field<std::string>(jb, "var", pos);
        b.step = field<std::uint64_t>(jb, "step", pos);
        b.writer_rank = field<int>(jb, "rank", pos);
        b.selection.start = field<Dims>(jb, "start", pos);
        b.selection.count = field<Dims>(jb, "count", pos);
        b.subfile_id = field<int>(jb, "subfile", pos);
        b.offset = field<std::uint64_t>(jb, "offset", pos);
        b.stored_nbytes = field<std::uint64_t>(jb, "stored", pos);
        b.raw_nbytes = field<std::uint64_t>(jb, "raw", pos);
        try
        {
            b.codec.codec = codec_from_string(field<std::string>(jb, "codec", pos));
        }
        catch (const ConfigError &e)
        {
            throw ParseError(e.what(), pos);
        }
        b.codec.level = field<int>(jb, "level", pos);
        b.codec.shuffle = field<bool>(jb, "shuffle", pos);
        b.checksum_raw = parse_hex8(field<std::string>(jb, "crc32c", pos), pos);
        b.stat_min = field<double>(jb, "min", pos);
        b.stat_max = field<double>(jb, "max", pos);
        if (b.selection.start.size() != b.selection.count.size())
            throw ParseError("start/count rank mismatch", pos);
        idx.blocks.push_back(std::move(b));
    }
    return idx;
}

} // end namespace miniio
