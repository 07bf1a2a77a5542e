/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * error.hpp : exception hierarchy shared by every miniio module
 */

#ifndef MINIIO_CORE_ERROR_HPP
#define MINIIO_CORE_ERROR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace miniio
{

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

#define MINIIO_DEFINE_ERROR(Name)                                              \
    class Name : public Error                                                  \
    {                                                                          \
    public:                                                                    \
        using Error::Error;                                                    \
    }

MINIIO_DEFINE_ERROR(IndexError);
MINIIO_DEFINE_ERROR(DuplicateBlock);
MINIIO_DEFINE_ERROR(ShapeError);
MINIIO_DEFINE_ERROR(CodecError);
MINIIO_DEFINE_ERROR(FormatError);
MINIIO_DEFINE_ERROR(ConfigError);
MINIIO_DEFINE_ERROR(OpenError);
MINIIO_DEFINE_ERROR(StepOrderError);
MINIIO_DEFINE_ERROR(IncompleteStep);
MINIIO_DEFINE_ERROR(CoverageError);
MINIIO_DEFINE_ERROR(StallError);
MINIIO_DEFINE_ERROR(TimeoutError);
MINIIO_DEFINE_ERROR(ProtocolError);
MINIIO_DEFINE_ERROR(IOError);

#undef MINIIO_DEFINE_ERROR

/// Raised by index_parse; carries the byte position of the first offending
/// character in the line.
class ParseError : public Error
{
public:
    ParseError(const std::string &what, std::size_t position)
    : Error(what + " (at byte " + std::to_string(position) + ")"),
      m_Position(position)
    {
    }
    std::size_t position() const noexcept { return m_Position; }

private:
    std::size_t m_Position;
};

/// Checksum mismatch on a stored block.
class CorruptBlock : public Error
{
public:
    CorruptBlock(const std::string &what, int subfile, std::uint64_t offset)
    : Error(what + " (subfile " + std::to_string(subfile) + ", offset " +
            std::to_string(offset) + ")"),
      m_Subfile(subfile), m_Offset(offset)
    {
    }
    int subfile() const noexcept { return m_Subfile; }
    std::uint64_t offset() const noexcept { return m_Offset; }

private:
    int m_Subfile;
    std::uint64_t m_Offset;
};

} // end namespace miniio

#endif // MINIIO_CORE_ERROR_HPP
