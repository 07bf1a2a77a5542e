/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/core/crc32c.hpp"

#include <array>
#include <cstring>

#if defined(__x86_64__)
#include <nmmintrin.h>
#endif

namespace miniio
{

namespace
{

constexpr std::uint32_t kPoly = 0x82F63B78u;

// Slicing-by-8 tables.
constexpr std::array<std::array<std::uint32_t, 256>, 8> make_tables()
{
    std::array<std::array<std::uint32_t, 256>, 8> t{};
    for (std::uint32_t i = 0; i < 256; ++i)
    {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k)
            c = (c >> 1) ^ ((c & 1u) ? kPoly : 0u);
        t[0][i] = c;
    }
    for (std::uint32_t i = 0; i < 256; ++i)
        for (int s = 1; s < 8; ++s)
            t[s][i] = (t[s - 1][i] >> 8) ^ t[0][t[s - 1][i] & 0xFFu];
    return t;
}

constexpr auto kTables = make_tables();

std::uint32_t extend_soft(std::uint32_t crc, const unsigned char *p,
                          std::size_t n) noexcept
{
    while (n >= 8)
    {
        std::uint64_t word;
        std::memcpy(&word, p, 8);
        word ^= crc;
        crc = kTables[7][word & 0xFF] ^ kTables[6][(word >> 8) & 0xFF] ^
              kTables[5][(word >> 16) & 0xFF] ^ kTables[4][(word >> 24) & 0xFF] ^
              kTables[3][(word >> 32) & 0xFF] ^ kTables[2][(word >> 40) & 0xFF] ^
              kTables[1][(word >> 48) & 0xFF] ^ kTables[0][word >> 56];
        p += 8;
        n -= 8;
    }
    while (n--)
        crc = (crc >> 8) ^ kTables[0][(crc ^ *p++) & 0xFF];
    return crc;
}

#if defined(__x86_64__)
__attribute__((target("sse4.2"))) std::uint32_t
extend_hw(std::uint32_t crc, const unsigned char *p, std::size_t n) noexcept
{
    std::uint64_t c = crc;
    while (n >= 8)
    {
        std::uint64_t word;
        std::memcpy(&word, p, 8);
        c = _mm_crc32_u64(c, word);
        p += 8;
        n -= 8;
    }
    auto c32 = static_cast<std::uint32_t>(c);
    while (n--)
        c32 = _mm_crc32_u8(c32, *p++);
    return c32;
}

const bool kHaveSse42 = __builtin_cpu_supports("sse4.2");
#endif

// x86-64 is little-endian, which the slicing loop above relies on too.
static_assert(__BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__);

} // end anonymous namespace

std::uint32_t crc32c_extend(std::uint32_t crc,
                            std::span<const std::byte> data) noexcept
{
    const auto *p = reinterpret_cast<const unsigned char *>(data.data());
    std::uint32_t c = ~crc;
#if defined(__x86_64__)
    if (kHaveSse42)
        return ~extend_hw(c, p, data.size());
#endif
    return ~extend_soft(c, p, data.size());
}

std::uint32_t crc32c(std::span<const std::byte> data) noexcept
{
    return crc32c_extend(0, data);
}

} // end namespace miniio
