/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * socket.hpp : RAII stream sockets and the length-prefixed frame codec
 *
 * Frame layout on the wire: u32 little-endian payload length, u8 message
 * type, payload bytes.
 */

#ifndef MINIIO_NET_SOCKET_HPP
#define MINIIO_NET_SOCKET_HPP

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace miniio::net
{

struct Endpoint
{
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    /// Parses "host:port"; throws ConfigError.
    static Endpoint parse(std::string_view text);

    friend bool operator==(const Endpoint &, const Endpoint &) = default;
};

struct Frame
{
    std::uint8_t type = 0;
    std::vector<std::byte> payload;

    std::string_view text() const
    {
        return {reinterpret_cast<const char *>(payload.data()), payload.size()};
    }
};

inline constexpr std::size_t kFrameHeaderSize = 5;
inline constexpr std::uint32_t kMaxFramePayload = 1u << 31;

class Socket
{
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : m_Fd(fd) {}
    Socket(Socket &&other) noexcept : m_Fd(other.release()) {}
    Socket &operator=(Socket &&other) noexcept;
    Socket(const Socket &) = delete;
    Socket &operator=(const Socket &) = delete;
    ~Socket();

    int fd() const noexcept { return m_Fd; }
    bool valid() const noexcept { return m_Fd >= 0; }
    int release() noexcept
    {
        int fd = m_Fd;
        m_Fd = -1;
        return fd;
    }
    void close() noexcept;
    /// Half-close both directions so a peer blocked in recv wakes up.
    void shutdown() noexcept;

    /// Connects with retries until the deadline; throws IOError.
    static Socket connect(const Endpoint &ep,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10));

    void send_all(std::span<const std::byte> data);
    /// Returns false on orderly EOF before any byte was read.
    bool recv_all(std::span<std::byte> data);

    void send_frame(std::uint8_t type, std::span<const std::byte> payload);
    void send_frame(std::uint8_t type, std::string_view payload)
    {
        send_frame(type, std::as_bytes(std::span(payload.data(), payload.size())));
    }
    /// Sends header, prefix and body as one frame without concatenating.
    void send_frame(std::uint8_t type, std::span<const std::byte> prefix,
                    std::span<const std::byte> body);

    /// nullopt on orderly EOF at a frame boundary; throws ProtocolError on
    /// a truncated frame.
    std::optional<Frame> recv_frame();
    /// As recv_frame but throws TimeoutError if nothing arrives in time.
    std::optional<Frame> recv_frame(std::chrono::milliseconds timeout);

    /// True when the socket is readable (data or EOF) within timeout.
    bool wait_readable(std::chrono::milliseconds timeout) const;

private:
    int m_Fd = -1;
};

class Listener
{
public:
    Listener() = default;
    /// Binds and listens; port 0 lets the kernel choose. Throws OpenError.
    static Listener bind(const Endpoint &ep, int backlog = 128);

    Socket accept();
    /// nullopt if no connection arrives before the timeout.
    std::optional<Socket> accept(std::chrono::milliseconds timeout);

    const Endpoint &endpoint() const noexcept { return m_Endpoint; }
    int fd() const noexcept { return m_Socket.fd(); }
    bool valid() const noexcept { return m_Socket.valid(); }
    void close() noexcept { m_Socket.close(); }

private:
    Socket m_Socket;
    Endpoint m_Endpoint;
};

void put_u32le(std::byte *p, std::uint32_t v) noexcept;
std::uint32_t get_u32le(const std::byte *p) noexcept;
void put_u64le(std::byte *p, std::uint64_t v) noexcept;
std::uint64_t get_u64le(const std::byte *p) noexcept;

} // end namespace miniio::net

#endif // MINIIO_NET_SOCKET_HPP
