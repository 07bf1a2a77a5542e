/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * shm.hpp : POSIX shared memory segments for the same-host dataplane
 */

#ifndef MINIIO_STAGING_SHM_HPP
#define MINIIO_STAGING_SHM_HPP

#include <cstddef>
#include <span>
#include <string>

namespace miniio::staging
{

/// A mapped segment. The creating side owns the name and unlinks it on
/// destruction; the opening side only unmaps.
class ShmSegment
{
public:
    ShmSegment() = default;
    /// Creates name exclusively and fills it with data. Throws IOError.
    static ShmSegment create(const std::string &name, std::span<const std::byte> data);
    /// Maps an existing segment read-only. Throws ProtocolError when absent.
    static ShmSegment open(const std::string &name);

    ShmSegment(ShmSegment &&other) noexcept;
    ShmSegment &operator=(ShmSegment &&other) noexcept;
    ShmSegment(const ShmSegment &) = delete;
    ShmSegment &operator=(const ShmSegment &) = delete;
    ~ShmSegment();

    std::span<const std::byte> bytes() const noexcept
    {
        return {static_cast<const std::byte *>(m_Addr), m_Size};
    }
    const std::string &name() const noexcept { return m_Name; }
    bool valid() const noexcept { return !m_Name.empty(); }

private:
    void reset() noexcept;

    std::string m_Name;
    void *m_Addr = nullptr;
    std::size_t m_Size = 0;
    bool m_Owner = false;
};

bool shm_exists(const std::string &name);

} // end namespace miniio::staging

#endif // MINIIO_STAGING_SHM_HPP
