/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/net/comm.hpp"
#include "miniio/core/error.hpp"

#include <thread>

namespace miniio::net
{

namespace
{
constexpr std::uint8_t kTagHello = kReservedTagBase;
constexpr std::uint8_t kTagBarrierIn = kReservedTagBase + 1;
constexpr std::uint8_t kTagBarrierOut = kReservedTagBase + 2;

constexpr auto kForever = std::chrono::hours(24 * 365);
} // end anonymous namespace

Comm::Comm(Topology topo, Listener listener, std::vector<Endpoint> peers,
           std::uint32_t latency_us)
: m_Topo(topo), m_Listener(std::move(listener)), m_Peers(std::move(peers)),
  m_LatencyUs(latency_us)
{
    if (static_cast<int>(m_Peers.size()) != m_Topo.world_size)
        throw ConfigError("endpoint table has " + std::to_string(m_Peers.size()) +
                          " entries for a world of " + std::to_string(m_Topo.world_size));
    if (m_Topo.ranks_per_node <= 0)
        throw ConfigError("ranks_per_node must be positive");
}

void Comm::inject_latency(int dst)
{
    if (m_LatencyUs == 0 || m_Topo.same_node(m_Topo.rank, dst))
        return;
    ++m_Delayed;
    std::this_thread::sleep_for(std::chrono::microseconds(m_LatencyUs));
}

Socket &Comm::outgoing(int dst)
{
    auto it = m_Out.find(dst);
    if (it != m_Out.end())
        return it->second;
    auto sock = Socket::connect(m_Peers.at(static_cast<std::size_t>(dst)));
    std::byte hello[4];
    put_u32le(hello, static_cast<std::uint32_t>(m_Topo.rank));
    sock.send_frame(kTagHello, hello);
    return m_Out.emplace(dst, std::move(sock)).first->second;
}

Socket &Comm::incoming(int src, std::chrono::milliseconds timeout)
{
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true)
    {
        auto it = m_In.find(src);
        if (it != m_In.end())
            return it->second;
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0)
            throw TimeoutError("rank " + std::to_string(m_Topo.rank) +
                               ": no connection from rank " + std::to_string(src));
        auto sock = m_Listener.accept(left);
        if (!sock)
            continue;
        auto hello = sock->recv_frame(left);
        if (!hello || hello->type != kTagHello || hello->payload.size() != 4)
            throw ProtocolError("bad hello on rank channel");
        const int peer = static_cast<int>(get_u32le(hello->payload.data()));
        m_In.emplace(peer, std::move(*sock));
    }
}

void Comm::send(int dst, std::uint8_t tag, std::span<const std::byte> payload)
{
    send(dst, tag, payload, {});
}

void Comm::send(int dst, std::uint8_t tag, std::span<const std::byte> prefix,
                std::span<const std::byte> body)
{
    ++m_MessagesSent;
    if (dst == m_Topo.rank)
    {
        Frame f;
        f.type = tag;
        f.payload.reserve(prefix.size() + body.size());
        f.payload.insert(f.payload.end(), prefix.begin(), prefix.end());
        f.payload.insert(f.payload.end(), body.begin(), body.end());
        {
            std::lock_guard lock(m_SelfMutex);
            m_SelfQueue.push_back(std::move(f));
        }
        m_SelfCv.notify_one();
        return;
    }
    inject_latency(dst);
    outgoing(dst).send_frame(tag, prefix, body);
}

Frame Comm::recv(int src) { return recv(src, kForever); }

Frame Comm::recv(int src, std::chrono::milliseconds timeout)
{
    if (src == m_Topo.rank)
    {
        std::unique_lock lock(m_SelfMutex);
        if (!m_SelfCv.wait_for(lock, timeout, [&] { return !m_SelfQueue.empty(); }))
            throw TimeoutError("rank " + std::to_string(src) + ": no local message");
        Frame f = std::move(m_SelfQueue.front());
        m_SelfQueue.pop_front();
        return f;
    }
    const auto start = std::chrono::steady_clock::now();
    auto &sock = incoming(src, timeout);
    const auto left = timeout - std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - start);
    auto f = sock.recv_frame(std::max(left, std::chrono::milliseconds(0)));
    if (!f)
        throw ProtocolError("rank " + std::to_string(src) + " closed its channel");
    return std::move(*f);
}

Frame Comm::expect(int src, std::uint8_t tag) { return expect(src, tag, kForever); }

Frame Comm::expect(int src, std::uint8_t tag, std::chrono::milliseconds timeout)
{
    auto f = recv(src, timeout);
    if (f.type != tag)
        throw ProtocolError("rank " + std::to_string(m_Topo.rank) + " expected tag " +
                            std::to_string(tag) + " from rank " + std::to_string(src) +
                            ", got " + std::to_string(f.type));
    return f;
}

void Comm::barrier()
{
    if (m_Topo.world_size == 1)
        return;
    if (m_Topo.rank == 0)
    {
        for (int r = 1; r < m_Topo.world_size; ++r)
            expect(r, kTagBarrierIn);
        for (int r = 1; r < m_Topo.world_size; ++r)
            send(r, kTagBarrierOut, std::span<const std::byte>{});
    }
    else
    {
        send(0, kTagBarrierIn, std::span<const std::byte>{});
        expect(0, kTagBarrierOut);
    }
}

void Comm::shutdown()
{
    for (auto &[r, s] : m_Out)
        s.shutdown();
    m_Out.clear();
    m_In.clear();
    m_Listener.close();
}

} // end namespace miniio::net
