/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/staging/shm.hpp"
#include "miniio/core/error.hpp"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>
#include <utility>

namespace miniio::staging
{

namespace
{
std::string sys_error(const std::string &what, const std::string &name)
{
    return what + " " + name + ": " + std::strerror(errno);
}
} // end anonymous namespace

ShmSegment ShmSegment::create(const std::string &name, std::span<const std::byte> data)
{
    const int fd = ::shm_open(name.c_str(), O_CREAT | O_EXCL | O_RDWR, 0600);
    if (fd < 0)
        throw IOError(sys_error("shm_open", name));
    ShmSegment seg;
    seg.m_Name = name;
    seg.m_Owner = true;
    seg.m_Size = data.size();
    if (::ftruncate(fd, static_cast<off_t>(data.size())) != 0)
    {
        const auto msg = sys_error("ftruncate", name);
        ::close(fd);
        throw IOError(msg);
    }
    if (!data.empty())
    {
        seg.m_Addr = ::mmap(nullptr, data.size(), PROT_READ | PROT_WRITE, MAP_SHARED, fd, 0);
        if (seg.m_Addr == MAP_FAILED)
        {
            seg.m_Addr = nullptr;
            const auto msg = sys_error("mmap", name);
            ::close(fd);
            throw IOError(msg);
        }
        std::memcpy(seg.m_Addr, data.data(), data.size());
    }
    ::close(fd);
    return seg;
}

ShmSegment ShmSegment::open(const std::string &name)
{
    const int fd = ::shm_open(name.c_str(), O_RDONLY, 0);
    if (fd < 0)
        throw ProtocolError(sys_error("cannot open announced segment", name));
    struct stat st{};
    if (::fstat(fd, &st) != 0)
    {
        const auto msg = sys_error("fstat", name);
        ::close(fd);
        throw IOError(msg);
    }
    ShmSegment seg;
    seg.m_Name = name;
    seg.m_Size = static_cast<std::size_t>(st.st_size);
    if (seg.m_Size > 0)
    {
        seg.m_Addr = ::mmap(nullptr, seg.m_Size, PROT_READ, MAP_SHARED, fd, 0);
        if (seg.m_Addr == MAP_FAILED)
        {
            seg.m_Addr = nullptr;
            const auto msg = sys_error("mmap", name);
            ::close(fd);
            throw IOError(msg);
        }
    }
    ::close(fd);
    return seg;
}

ShmSegment::ShmSegment(ShmSegment &&other) noexcept
: m_Name(std::exchange(other.m_Name, {})), m_Addr(std::exchange(other.m_Addr, nullptr)),
  m_Size(std::exchange(other.m_Size, 0)), m_Owner(std::exchange(other.m_Owner, false))
{
}

ShmSegment &ShmSegment::operator=(ShmSegment &&other) noexcept
{
    if (this != &other)
    {
        reset();
        m_Name = std::exchange(other.m_Name, {});
        m_Addr = std::exchange(other.m_Addr, nullptr);
        m_Size = std::exchange(other.m_Size, 0);
        m_Owner = std::exchange(other.m_Owner, false);
    }
    return *this;
}

ShmSegment::~ShmSegment() { reset(); }

void ShmSegment::reset() noexcept
{
    if (m_Addr)
        ::munmap(m_Addr, m_Size);
    if (m_Owner && !m_Name.empty())
        ::shm_unlink(m_Name.c_str());
    m_Addr = nullptr;
    m_Size = 0;
    m_Owner = false;
    m_Name.clear();
}

bool shm_exists(const std::string &name)
{
    const int fd = ::shm_open(name.c_str(), O_RDONLY, 0);
    if (fd < 0)
        return false;
    ::close(fd);
    return true;
}

} // end namespace miniio::staging
