/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * codec_spec.hpp : codec identifiers and per-block compression settings
 */

#ifndef MINIIO_CODECS_CODEC_SPEC_HPP
#define MINIIO_CODECS_CODEC_SPEC_HPP

#include "miniio/core/error.hpp"

#include <string>
#include <string_view>

namespace miniio
{

enum class Codec
{
    None,
    LZ4,
    Zstd,
    Zlib
};

inline std::string_view to_string(Codec c) noexcept
{
    switch (c)
    {
    case Codec::None:
        return "none";
    case Codec::LZ4:
        return "lz4";
    case Codec::Zstd:
        return "zstd";
    case Codec::Zlib:
        return "zlib";
    }
    return "none";
}

inline Codec codec_from_string(std::string_view name)
{
    if (name == "none")
        return Codec::None;
    if (name == "lz4")
        return Codec::LZ4;
    if (name == "zstd")
        return Codec::Zstd;
    if (name == "zlib")
        return Codec::Zlib;
    throw ConfigError("unknown codec \"" + std::string(name) + "\"");
}

/// Block compression settings. For Codec::None the level is ignored and
/// shuffle is forced off by normalized().
struct CodecSpec
{
    Codec codec = Codec::None;
    int level = 0;
    bool shuffle = false;

    /// Level used when a configuration names a codec but no level.
    static int default_level(Codec c) noexcept
    {
        switch (c)
        {
        case Codec::LZ4:
            return 1;
        case Codec::Zstd:
            return 3;
        case Codec::Zlib:
            return 6;
        default:
            return 0;
        }
    }
    /// codec at its default level, shuffled unless it is None.
    static CodecSpec with_defaults(Codec c) { return {c, default_level(c), c != Codec::None}; }

    /// Default compressed configuration: zstd level 3 with byte shuffle.
    static CodecSpec default_compressed() { return {Codec::Zstd, 3, true}; }

    CodecSpec normalized() const
    {
        if (codec == Codec::None)
            return {Codec::None, 0, false};
        return *this;
    }

    /// Throws ConfigError when the level is outside the codec's range.
    void validate() const
    {
        int lo = 0, hi = 0;
        switch (codec)
        {
        case Codec::None:
            return;
        case Codec::LZ4:
            lo = 0, hi = 12;
            break;
        case Codec::Zstd:
            lo = 1, hi = 22;
            break;
        case Codec::Zlib:
            lo = 0, hi = 9;
            break;
        }
        if (level < lo || level > hi)
            throw ConfigError(std::string(to_string(codec)) + " level " +
                              std::to_string(level) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(hi) +
                              "]");
    }

    friend bool operator==(const CodecSpec &, const CodecSpec &) = default;
};

} // end namespace miniio

#endif // MINIIO_CODECS_CODEC_SPEC_HPP
