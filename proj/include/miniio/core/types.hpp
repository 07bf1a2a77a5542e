/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * types.hpp : element types, variable definitions and selections
 */

#ifndef MINIIO_CORE_TYPES_HPP
#define MINIIO_CORE_TYPES_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace miniio
{

using Dims = std::vector<std::uint64_t>;

enum class DtypeTag : std::uint8_t
{
    F32,
    F64,
    I32,
    I64,
    U8
};

class Dtype
{
public:
    constexpr Dtype() = default;
    constexpr explicit Dtype(DtypeTag tag) : m_Tag(tag) {}

    constexpr DtypeTag tag() const noexcept { return m_Tag; }

    constexpr std::size_t elem_size() const noexcept
    {
        switch (m_Tag)
        {
        case DtypeTag::F32:
        case DtypeTag::I32:
            return 4;
        case DtypeTag::F64:
        case DtypeTag::I64:
            return 8;
        case DtypeTag::U8:
            return 1;
        }
        return 0;
    }

    constexpr bool is_float() const noexcept
    {
        return m_Tag == DtypeTag::F32 || m_Tag == DtypeTag::F64;
    }

    std::string_view name() const noexcept;

    /// Throws ConfigError for an unknown name.
    static Dtype from_name(std::string_view name);

    friend constexpr bool operator==(Dtype, Dtype) = default;

private:
    DtypeTag m_Tag = DtypeTag::F32;
};

/// A named, typed, globally-shaped array. Time is never a dimension here;
/// it is the step axis of the engine.
struct VariableDef
{
    std::string name;
    Dtype dtype;
    Dims shape;
    bool step_varying = true;

    std::uint64_t element_count() const noexcept;
    std::uint64_t nbytes() const noexcept
    {
        return element_count() * dtype.elem_size();
    }

    friend bool operator==(const VariableDef &, const VariableDef &) = default;
};

/// Throws ConfigError if the definition itself is malformed (empty name,
/// rank outside 1..4, zero extent) or names repeat.
void validate_defs(const std::vector<VariableDef> &defs);

/// Hyper-rectangle inside a variable's global shape.
struct Selection
{
    Dims start;
    Dims count;

    std::uint64_t element_count() const noexcept;

    static Selection whole(const Dims &shape)
    {
        return {Dims(shape.size(), 0), shape};
    }

    friend bool operator==(const Selection &, const Selection &) = default;
};

/// Empty optional when sel lies inside def.shape; otherwise a description
/// of the first violation naming the axis.
std::optional<std::string> validate_selection(const Selection &sel,
                                              const VariableDef &def);

/// Row-major linear index of point inside shape (last axis fastest).
/// Throws IndexError if point is outside shape or the ranks differ.
std::uint64_t canonical_offset(const Dims &point, const Dims &shape);

/// Intersection of two selections of equal rank; empty when disjoint.
std::optional<Selection> intersect(const Selection &a, const Selection &b);

/// Copies the elements of region from a buffer laid out as src_box into a
/// buffer laid out as dst_box. Both boxes must contain region.
void copy_region(const std::byte *src, const Selection &src_box,
                 std::byte *dst, const Selection &dst_box,
                 const Selection &region, std::size_t elem_size);

/// Outcome of one end_step call on a writer.
struct StepReport
{
    std::uint64_t step = 0;
    /// Time the caller was blocked in put and end_step for this step.
    double perceived_write_seconds = 0.0;
    /// Set when a staging writer dropped the step under the discard policy.
    bool skipped = false;
};

} // end namespace miniio

#endif // MINIIO_CORE_TYPES_HPP
