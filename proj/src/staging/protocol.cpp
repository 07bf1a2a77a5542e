/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/staging/protocol.hpp"
#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"

#include <cstdlib>
#include <cstring>
#include <unistd.h>

namespace miniio::staging
{

namespace
{
template <class F>
auto guarded(const char *what, std::string_view text, F &&f)
{
    try
    {
        return f(nlohmann::json::parse(text));
    }
    catch (const nlohmann::json::exception &e)
    {
        throw ProtocolError(std::string("malformed ") + what + ": " + e.what());
    }
    catch (const ConfigError &e)
    {
        throw ProtocolError(std::string("malformed ") + what + ": " + e.what());
    }
    catch (const FormatError &e)
    {
        throw ProtocolError(std::string("malformed ") + what + ": " + e.what());
    }
}
} // end anonymous namespace

std::string HelloR::dump() const
{
    nlohmann::ordered_json j;
    j["version"] = version;
    j["role"] = role;
    j["host"] = host;
    j["reader_id"] = reader_id;
    return j.dump();
}

HelloR HelloR::parse(std::string_view text)
{
    return guarded("HELLO_R", text, [](const nlohmann::json &j) {
        HelloR h;
        h.version = j.at("version").get<int>();
        h.role = j.value("role", std::string("control"));
        h.host = j.value("host", std::string());
        h.reader_id = j.value("reader_id", -1);
        return h;
    });
}

std::string HelloW::dump() const
{
    nlohmann::ordered_json j;
    j["version"] = version;
    j["reader_id"] = reader_id;
    j["world_size"] = world_size;
    j["variables"] = defs_to_json(variables);
    nlohmann::ordered_json dp;
    dp["kind"] = std::string(to_string(dataplane.kind));
    auto eps = nlohmann::ordered_json::array();
    for (const auto &e : dataplane.endpoints)
        eps.push_back(e.str());
    dp["endpoints"] = std::move(eps);
    dp["shm_prefix"] = dataplane.shm_prefix;
    j["dataplane"] = std::move(dp);
    j["queue_limit"] = queue_limit;
    return j.dump();
}

HelloW HelloW::parse(std::string_view text)
{
    return guarded("HELLO_W", text, [](const nlohmann::json &j) {
        HelloW h;
        h.version = j.at("version").get<int>();
        h.reader_id = j.at("reader_id").get<int>();
        h.world_size = j.at("world_size").get<int>();
        h.variables = defs_from_json(j.at("variables"));
        const auto &dp = j.at("dataplane");
        h.dataplane.kind = dataplane_from_string(dp.at("kind").get<std::string>());
        for (const auto &e : dp.at("endpoints"))
            h.dataplane.endpoints.push_back(net::Endpoint::parse(e.get<std::string>()));
        h.dataplane.shm_prefix = dp.value("shm_prefix", std::string());
        h.queue_limit = j.value("queue_limit", 1);
        return h;
    });
}

std::string GetReq::dump() const
{
    nlohmann::ordered_json j;
    j["step"] = step;
    j["var"] = var;
    j["rank"] = rank;
    return j.dump();
}

GetReq GetReq::parse(std::string_view text)
{
    return guarded("GET_REQ", text, [](const nlohmann::json &j) {
        GetReq g;
        g.step = j.at("step").get<std::uint64_t>();
        g.var = j.at("var").get<std::string>();
        g.rank = j.at("rank").get<int>();
        return g;
    });
}

std::vector<std::byte> data_prefix(const codecs::PayloadHeader &header)
{
    nlohmann::ordered_json j;
    j["raw_nbytes"] = header.raw_nbytes;
    j["codec"] = std::string(to_string(header.spec.codec));
    j["level"] = header.spec.level;
    j["shuffle"] = header.spec.shuffle;
    j["elem_size"] = header.elem_size;
    const auto text = j.dump();
    std::vector<std::byte> out(4 + text.size());
    net::put_u32le(out.data(), static_cast<std::uint32_t>(text.size()));
    std::memcpy(out.data() + 4, text.data(), text.size());
    return out;
}

codecs::StoredPayload parse_data(const net::Frame &frame)
{
    if (frame.payload.size() < 4)
        throw ProtocolError("DATA frame too short");
    const auto len = net::get_u32le(frame.payload.data());
    if (len > frame.payload.size() - 4)
        throw ProtocolError("DATA header overruns frame");
    const std::string_view text(reinterpret_cast<const char *>(frame.payload.data()) + 4, len);
    codecs::StoredPayload p;
    p.header = guarded("DATA header", text, [](const nlohmann::json &j) {
        codecs::PayloadHeader h;
        h.raw_nbytes = j.at("raw_nbytes").get<std::uint64_t>();
        h.spec.codec = codec_from_string(j.at("codec").get<std::string>());
        h.spec.level = j.at("level").get<int>();
        h.spec.shuffle = j.at("shuffle").get<bool>();
        h.elem_size = j.at("elem_size").get<std::uint32_t>();
        return h;
    });
    p.body.assign(frame.payload.begin() + 4 + len, frame.payload.end());
    return p;
}

std::string release_payload(std::uint64_t step)
{
    nlohmann::ordered_json j;
    j["step"] = step;
    return j.dump();
}

std::uint64_t parse_release(std::string_view text)
{
    return guarded("STEP_RELEASE", text,
                   [](const nlohmann::json &j) { return j.at("step").get<std::uint64_t>(); });
}

std::string err_payload(const std::string &message)
{
    nlohmann::ordered_json j;
    j["error"] = message;
    return j.dump();
}

std::string parse_err(std::string_view text)
{
    try
    {
        return nlohmann::json::parse(text).at("error").get<std::string>();
    }
    catch (const nlohmann::json::exception &)
    {
        return std::string(text);
    }
}

std::string local_host()
{
    char buf[256] = {};
    if (::gethostname(buf, sizeof(buf) - 1) != 0)
        return "localhost";
    return buf;
}

net::Endpoint resolve_endpoint(const std::string &configured)
{
    if (const char *env = std::getenv("MINIIO_ENDPOINT"); env && *env)
        return net::Endpoint::parse(env);
    return net::Endpoint::parse(configured);
}

} // end namespace miniio::staging
