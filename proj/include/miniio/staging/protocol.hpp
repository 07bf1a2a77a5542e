/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * protocol.hpp : staging wire protocol between writer ranks and readers
 *
 * Every frame is  u32le payload length | u8 type | payload.  HELLO, ANNOUNCE,
 * GET, RELEASE, CLOSE and ERR payloads are UTF-8 JSON.  A DATA payload is a
 * u32le length, the payload header as JSON, then the stored body bytes.
 */

#ifndef MINIIO_STAGING_PROTOCOL_HPP
#define MINIIO_STAGING_PROTOCOL_HPP

#include "miniio/codecs/codec.hpp"
#include "miniio/core/params.hpp"
#include "miniio/core/types.hpp"
#include "miniio/net/socket.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace miniio::staging
{

inline constexpr int kProtocolVersion = 1;

enum class MsgType : std::uint8_t
{
    HelloR = 1,
    HelloW = 2,
    StepAnnounce = 3,
    GetReq = 4,
    Data = 5,
    StepRelease = 6,
    Close = 7,
    Err = 8
};

constexpr std::uint8_t tag(MsgType t) noexcept { return static_cast<std::uint8_t>(t); }

/// Reader greeting. role is "control" for the connection to rank 0 and
/// "data" for the per-rank connections; reader_id is -1 on control.
struct HelloR
{
    int version = kProtocolVersion;
    std::string role = "control";
    std::string host;
    int reader_id = -1;

    std::string dump() const;
    static HelloR parse(std::string_view text);
};

struct DataplaneDescriptor
{
    Dataplane kind = Dataplane::Tcp;
    /// Data endpoint of every writer rank, indexed by rank.
    std::vector<net::Endpoint> endpoints;
    /// Segment name of (rank, step) is <shm_prefix>-<rank>-<step>.
    std::string shm_prefix;

    std::string segment_name(int rank, std::uint64_t step) const
    {
        return shm_prefix + "-" + std::to_string(rank) + "-" + std::to_string(step);
    }
};

struct HelloW
{
    int version = kProtocolVersion;
    int reader_id = 0;
    int world_size = 1;
    std::vector<VariableDef> variables;
    DataplaneDescriptor dataplane;
    int queue_limit = 1;

    std::string dump() const;
    static HelloW parse(std::string_view text);
};

struct GetReq
{
    std::uint64_t step = 0;
    std::string var;
    int rank = 0;

    std::string dump() const;
    static GetReq parse(std::string_view text);
};

/// Payload of DATA: header JSON (raw_nbytes, codec, level, shuffle,
/// elem_size) length-prefixed by u32le, followed by the body.
std::vector<std::byte> data_prefix(const codecs::PayloadHeader &header);
codecs::StoredPayload parse_data(const net::Frame &frame);

std::string release_payload(std::uint64_t step);
std::uint64_t parse_release(std::string_view text);
std::string err_payload(const std::string &message);
std::string parse_err(std::string_view text);

/// Host name used to decide whether shared memory can be offered.
std::string local_host();

/// Resolves the endpoint, honouring the MINIIO_ENDPOINT override.
net::Endpoint resolve_endpoint(const std::string &configured);

} // end namespace miniio::staging

#endif // MINIIO_STAGING_PROTOCOL_HPP
