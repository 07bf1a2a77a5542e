/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * comm.hpp : point-to-point message layer between rank processes
 *
 * Every rank owns a listener. A directed channel src->dst is one stream
 * connection opened lazily by src; the first frame on it names the sender.
 * Messages crossing a simulated node boundary are delayed by the injected
 * latency before they are sent.
 */

#ifndef MINIIO_NET_COMM_HPP
#define MINIIO_NET_COMM_HPP

#include "miniio/net/socket.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <span>
#include <vector>

namespace miniio::net
{

/// Message tags at or above this value are used by Comm itself.
inline constexpr std::uint8_t kReservedTagBase = 200;

struct Topology
{
    int rank = 0;
    int world_size = 1;
    int ranks_per_node = 1;

    int node_of(int r) const noexcept { return r / ranks_per_node; }
    int nodes() const noexcept
    {
        return (world_size + ranks_per_node - 1) / ranks_per_node;
    }
    bool same_node(int a, int b) const noexcept { return node_of(a) == node_of(b); }
};

class Comm
{
public:
    Comm(Topology topo, Listener listener, std::vector<Endpoint> peers,
         std::uint32_t latency_us = 0);
    Comm(const Comm &) = delete;
    Comm &operator=(const Comm &) = delete;

    const Topology &topology() const noexcept { return m_Topo; }
    int rank() const noexcept { return m_Topo.rank; }
    int world_size() const noexcept { return m_Topo.world_size; }
    std::uint32_t latency_us() const noexcept { return m_LatencyUs; }

    void send(int dst, std::uint8_t tag, std::span<const std::byte> payload);
    void send(int dst, std::uint8_t tag, std::span<const std::byte> prefix,
              std::span<const std::byte> body);
    void send(int dst, std::uint8_t tag, std::string_view text)
    {
        send(dst, tag, std::as_bytes(std::span(text.data(), text.size())));
    }

    /// Next frame on the channel from src. Throws ProtocolError if the peer
    /// went away and TimeoutError when the timeout elapses.
    Frame recv(int src);
    Frame recv(int src, std::chrono::milliseconds timeout);
    /// recv, then ProtocolError unless the frame carries tag.
    Frame expect(int src, std::uint8_t tag);
    Frame expect(int src, std::uint8_t tag, std::chrono::milliseconds timeout);

    /// All ranks block until every rank has entered.
    void barrier();

    std::uint64_t messages_sent() const noexcept { return m_MessagesSent.load(); }
    std::uint64_t delayed_messages() const noexcept { return m_Delayed.load(); }

    /// Drops every connection; pending receivers see EOF.
    void shutdown();

private:
    Socket &outgoing(int dst);
    Socket &incoming(int src, std::chrono::milliseconds timeout);
    void inject_latency(int dst);

    Topology m_Topo;
    Listener m_Listener;
    std::vector<Endpoint> m_Peers;
    std::uint32_t m_LatencyUs;

    std::map<int, Socket> m_Out;
    std::map<int, Socket> m_In;

    std::mutex m_SelfMutex;
    std::condition_variable m_SelfCv;
    std::deque<Frame> m_SelfQueue;

    std::atomic<std::uint64_t> m_MessagesSent{0};
    std::atomic<std::uint64_t> m_Delayed{0};
};

} // end namespace miniio::net

#endif // MINIIO_NET_COMM_HPP
