/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/net/socket.hpp"
#include "miniio/core/error.hpp"

#include <algorithm>
#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <thread>
#include <unistd.h>

namespace miniio::net
{

void put_u32le(std::byte *p, std::uint32_t v) noexcept
{
    for (int i = 0; i < 4; ++i)
        p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32le(const std::byte *p) noexcept
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

void put_u64le(std::byte *p, std::uint64_t v) noexcept
{
    for (int i = 0; i < 8; ++i)
        p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}

std::uint64_t get_u64le(const std::byte *p) noexcept
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

Endpoint Endpoint::parse(std::string_view text)
{
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size())
        throw ConfigError("endpoint \"" + std::string(text) + "\" is not host:port");
    Endpoint ep;
    ep.host = std::string(text.substr(0, colon));
    unsigned long port = 0;
    for (char c : text.substr(colon + 1))
    {
        if (c < '0' || c > '9')
            throw ConfigError("endpoint \"" + std::string(text) + "\" has a bad port");
        port = port * 10 + static_cast<unsigned long>(c - '0');
        if (port > 65535)
            throw ConfigError("endpoint \"" + std::string(text) + "\" port out of range");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

namespace
{

sockaddr_in resolve(const Endpoint &ep)
{
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1)
        return addr;

    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo *res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw IOError("cannot resolve host \"" + ep.host + "\"");
    addr.sin_addr = reinterpret_cast<sockaddr_in *>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

std::string errno_text(const char *what)
{
    return std::string(what) + ": " + std::strerror(errno);
}

void set_nodelay(int fd)
{
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

} // end anonymous namespace

Socket &Socket::operator=(Socket &&other) noexcept
{
    if (this != &other)
    {
        close();
        m_Fd = other.release();
    }
    return *this;
}

Socket::~Socket() { close(); }

void Socket::close() noexcept
{
    if (m_Fd >= 0)
    {
        ::close(m_Fd);
        m_Fd = -1;
    }
}

void Socket::shutdown() noexcept
{
    if (m_Fd >= 0)
        ::shutdown(m_Fd, SHUT_RDWR);
}

Socket Socket::connect(const Endpoint &ep, std::chrono::milliseconds timeout)
{
    const auto addr = resolve(ep);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    auto backoff = std::chrono::milliseconds(1);
    while (true)
    {
        int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
        if (fd < 0)
            throw IOError(errno_text("socket"));
        if (::connect(fd, reinterpret_cast<const sockaddr *>(&addr), sizeof(addr)) == 0)
        {
            set_nodelay(fd);
            return Socket(fd);
        }
        const int err = errno;
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline)
            throw IOError("connect to " + ep.str() + ": " + std::strerror(err));
        std::this_thread::sleep_for(backoff);
        backoff = std::min(backoff * 2, std::chrono::milliseconds(50));
    }
}

void Socket::send_all(std::span<const std::byte> data)
{
    std::size_t done = 0;
    while (done < data.size())
    {
        const auto n = ::send(m_Fd, data.data() + done, data.size() - done, MSG_NOSIGNAL);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            throw IOError(errno_text("send"));
        }
        done += static_cast<std::size_t>(n);
    }
}

bool Socket::recv_all(std::span<std::byte> data)
{
    std::size_t done = 0;
    while (done < data.size())
    {
        const auto n = ::recv(m_Fd, data.data() + done, data.size() - done, 0);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            if (errno == ECONNRESET)
            {
                if (done == 0)
                    return false;
                throw ProtocolError("connection reset mid-message");
            }
            throw IOError(errno_text("recv"));
        }
        if (n == 0)
        {
            if (done == 0)
                return false;
            throw ProtocolError("peer closed mid-message");
        }
        done += static_cast<std::size_t>(n);
    }
    return true;
}

void Socket::send_frame(std::uint8_t type, std::span<const std::byte> payload)
{
    send_frame(type, payload, {});
}

void Socket::send_frame(std::uint8_t type, std::span<const std::byte> prefix,
                        std::span<const std::byte> body)
{
    const std::size_t total = prefix.size() + body.size();
    if (total >= kMaxFramePayload)
        throw ProtocolError("frame payload of " + std::to_string(total) + " bytes too large");
    std::byte header[kFrameHeaderSize];
    put_u32le(header, static_cast<std::uint32_t>(total));
    header[4] = static_cast<std::byte>(type);

    iovec iov[3] = {{header, kFrameHeaderSize},
                    {const_cast<std::byte *>(prefix.data()), prefix.size()},
                    {const_cast<std::byte *>(body.data()), body.size()}};
    int first = 0;
    const int count = 3;
    while (first < count)
    {
        msghdr msg{};
        msg.msg_iov = iov + first;
        msg.msg_iovlen = static_cast<std::size_t>(count - first);
        auto n = ::sendmsg(m_Fd, &msg, MSG_NOSIGNAL);
        if (n < 0)
        {
            if (errno == EINTR)
                continue;
            throw IOError(errno_text("sendmsg"));
        }
        while (first < count && static_cast<std::size_t>(n) >= iov[first].iov_len)
        {
            n -= static_cast<ssize_t>(iov[first].iov_len);
            ++first;
        }
        if (first < count)
        {
            iov[first].iov_base = static_cast<char *>(iov[first].iov_base) + n;
            iov[first].iov_len -= static_cast<std::size_t>(n);
        }
    }
}

std::optional<Frame> Socket::recv_frame()
{
    std::byte header[kFrameHeaderSize];
    if (!recv_all(header))
        return std::nullopt;
    const auto length = get_u32le(header);
    if (length >= kMaxFramePayload)
        throw ProtocolError("frame length " + std::to_string(length) + " too large");
    Frame f;
    f.type = static_cast<std::uint8_t>(header[4]);
    f.payload.resize(length);
    if (length > 0 && !recv_all(f.payload))
        throw ProtocolError("peer closed mid-frame");
    return f;
}

std::optional<Frame> Socket::recv_frame(std::chrono::milliseconds timeout)
{
    if (!wait_readable(timeout))
        throw TimeoutError("no frame within " + std::to_string(timeout.count()) + " ms");
    return recv_frame();
}

bool Socket::wait_readable(std::chrono::milliseconds timeout) const
{
    pollfd pfd{m_Fd, POLLIN, 0};
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true)
    {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        const int rc = ::poll(&pfd, 1, static_cast<int>(std::max<long long>(0, left.count())));
        if (rc > 0)
            return true;
        if (rc == 0)
            return false;
        if (errno != EINTR)
            throw IOError(errno_text("poll"));
    }
}

Listener Listener::bind(const Endpoint &ep, int backlog)
{
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0)
        throw OpenError(errno_text("socket"));
    Socket guard(fd);
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr;
    try
    {
        addr = resolve(ep);
    }
    catch (const IOError &e)
    {
        throw OpenError(e.what());
    }
    if (::bind(fd, reinterpret_cast<const sockaddr *>(&addr), sizeof(addr)) != 0)
        throw OpenError("bind " + ep.str() + ": " + std::strerror(errno));
    if (::listen(fd, backlog) != 0)
        throw OpenError(errno_text("listen"));

    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr *>(&addr), &len);

    Listener l;
    l.m_Socket = std::move(guard);
    l.m_Endpoint.host = ep.host;
    l.m_Endpoint.port = ntohs(addr.sin_port);
    return l;
}

Socket Listener::accept()
{
    while (true)
    {
        int fd = ::accept4(m_Socket.fd(), nullptr, nullptr, SOCK_CLOEXEC);
        if (fd >= 0)
        {
            set_nodelay(fd);
            return Socket(fd);
        }
        if (errno != EINTR)
            throw IOError(errno_text("accept"));
    }
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout)
{
    if (!m_Socket.wait_readable(timeout))
        return std::nullopt;
    return accept();
}

} // end namespace miniio::net
