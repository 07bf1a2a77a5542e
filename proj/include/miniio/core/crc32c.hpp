/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#ifndef MINIIO_CORE_CRC32C_HPP
#define MINIIO_CORE_CRC32C_HPP

#include <cstddef>
#include <cstdint>
#include <span>

namespace miniio
{

/// CRC-32C (Castagnoli, reflected 0x82F63B78, init and final xor 0xFFFFFFFF).
/// Uses the SSE4.2 instruction when the CPU has it.
std::uint32_t crc32c(std::span<const std::byte> data) noexcept;

/// Continues a running checksum; crc32c(a ++ b) == crc32c_extend(crc32c(a), b).
std::uint32_t crc32c_extend(std::uint32_t crc,
                            std::span<const std::byte> data) noexcept;

} // end namespace miniio

#endif // MINIIO_CORE_CRC32C_HPP
