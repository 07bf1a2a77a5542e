/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/core/types.hpp"
#include "miniio/core/error.hpp"

#include <algorithm>
#include <cstring>
#include <set>

namespace miniio
{

std::string_view Dtype::name() const noexcept
{
    switch (m_Tag)
    {
    case DtypeTag::F32:
        return "f32";
    case DtypeTag::F64:
        return "f64";
    case DtypeTag::I32:
        return "i32";
    case DtypeTag::I64:
        return "i64";
    case DtypeTag::U8:
        return "u8";
    }
    return "f32";
}

Dtype Dtype::from_name(std::string_view name)
{
    if (name == "f32")
        return Dtype(DtypeTag::F32);
    if (name == "f64")
        return Dtype(DtypeTag::F64);
    if (name == "i32")
        return Dtype(DtypeTag::I32);
    if (name == "i64")
        return Dtype(DtypeTag::I64);
    if (name == "u8")
        return Dtype(DtypeTag::U8);
    throw ConfigError("unknown dtype \"" + std::string(name) + "\"");
}

namespace
{
std::uint64_t product(const Dims &d) noexcept
{
    std::uint64_t n = 1;
    for (auto v : d)
        n *= v;
    return n;
}
} // end anonymous namespace

std::uint64_t VariableDef::element_count() const noexcept
{
    return product(shape);
}

std::uint64_t Selection::element_count() const noexcept
{
    return product(count);
}

void validate_defs(const std::vector<VariableDef> &defs)
{
    std::set<std::string> seen;
    for (const auto &def : defs)
    {
        if (def.name.empty())
            throw ConfigError("variable with empty name");
        if (!seen.insert(def.name).second)
            throw ConfigError("variable \"" + def.name + "\" declared twice");
        if (def.shape.empty() || def.shape.size() > 4)
            throw ConfigError("variable \"" + def.name + "\" has rank " +
                              std::to_string(def.shape.size()) +
                              ", expected 1..4");
        for (std::size_t d = 0; d < def.shape.size(); ++d)
            if (def.shape[d] == 0)
                throw ConfigError("variable \"" + def.name +
                                  "\" has zero extent on axis " +
                                  std::to_string(d));
    }
}

std::optional<std::string> validate_selection(const Selection &sel,
                                              const VariableDef &def)
{
    const auto rank = def.shape.size();
    if (sel.start.size() != rank || sel.count.size() != rank)
        return "rank mismatch: selection has " +
               std::to_string(sel.start.size()) + "/" +
               std::to_string(sel.count.size()) + " axes, variable \"" +
               def.name + "\" has " + std::to_string(rank);
    for (std::size_t d = 0; d < rank; ++d)
    {
        if (sel.count[d] == 0)
            return "axis " + std::to_string(d) + ": count is zero";
        if (sel.start[d] > def.shape[d] ||
            sel.count[d] > def.shape[d] - sel.start[d])
            return "axis " + std::to_string(d) + ": start " +
                   std::to_string(sel.start[d]) + " + count " +
                   std::to_string(sel.count[d]) + " exceeds extent " +
                   std::to_string(def.shape[d]);
    }
    return std::nullopt;
}

std::uint64_t canonical_offset(const Dims &point, const Dims &shape)
{
    if (point.size() != shape.size())
        throw IndexError("point has " + std::to_string(point.size()) +
                         " axes, shape has " + std::to_string(shape.size()));
    std::uint64_t linear = 0;
    for (std::size_t d = 0; d < shape.size(); ++d)
    {
        if (point[d] >= shape[d])
            throw IndexError("axis " + std::to_string(d) + ": index " +
                             std::to_string(point[d]) + " outside extent " +
                             std::to_string(shape[d]));
        linear = linear * shape[d] + point[d];
    }
    return linear;
}

std::optional<Selection> intersect(const Selection &a, const Selection &b)
{
    if (a.start.size() != b.start.size())
        return std::nullopt;
    Selection out;
    out.start.resize(a.start.size());
    out.count.resize(a.start.size());
    for (std::size_t d = 0; d < a.start.size(); ++d)
    {
        const auto lo = std::max(a.start[d], b.start[d]);
        const auto hi = std::min(a.start[d] + a.count[d], b.start[d] + b.count[d]);
        if (hi <= lo)
            return std::nullopt;
        out.start[d] = lo;
        out.count[d] = hi - lo;
    }
    return out;
}

void copy_region(const std::byte *src, const Selection &src_box,
                 std::byte *dst, const Selection &dst_box,
                 const Selection &region, std::size_t elem_size)
{
    const auto rank = region.start.size();
    if (rank == 0)
        return;

    // Strides in elements for both layouts.
    std::vector<std::uint64_t> src_stride(rank, 1), dst_stride(rank, 1);
    for (std::size_t d = rank - 1; d > 0; --d)
    {
        src_stride[d - 1] = src_stride[d] * src_box.count[d];
        dst_stride[d - 1] = dst_stride[d] * dst_box.count[d];
    }

    const std::size_t run = region.count[rank - 1] * elem_size;
    std::vector<std::uint64_t> idx(rank, 0);
    while (true)
    {
        std::uint64_t s = 0, t = 0;
        for (std::size_t d = 0; d < rank; ++d)
        {
            const auto g = region.start[d] + idx[d];
            s += (g - src_box.start[d]) * src_stride[d];
            t += (g - dst_box.start[d]) * dst_stride[d];
        }
        std::memcpy(dst + t * elem_size, src + s * elem_size, run);

        // Odometer over all axes except the contiguous last one.
        std::size_t d = rank - 1;
        while (d > 0)
        {
            --d;
            if (++idx[d] < region.count[d])
                break;
            idx[d] = 0;
            if (d == 0)
                return;
        }
        if (rank == 1)
            return;
    }
}

} // end namespace miniio
