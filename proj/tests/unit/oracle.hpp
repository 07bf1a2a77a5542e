/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * oracle.hpp : closed-form test data every read-back is compared against
 */

#ifndef MINIIO_TESTS_ORACLE_HPP
#define MINIIO_TESTS_ORACLE_HPP

#include "miniio/core/types.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace miniio::testing::oracle
{

inline const Dtype kF32(DtypeTag::F32);

// Value of element `linear` of variable v at step t; the oracle for every test.
inline float value_at(std::size_t v, std::uint64_t t, std::uint64_t linear)
{
    return static_cast<float>(linear) + 0.25f * static_cast<float>(v) +
           1000.0f * static_cast<float>(t);
}

inline std::vector<std::byte> patch(const VariableDef &def, std::size_t v, std::uint64_t t,
                             const Selection &sel)
{
    // brute force: enumerate the selection in row-major order
    std::vector<float> vals;
    Dims point(sel.start.size());
    const auto n = sel.element_count();
    for (std::uint64_t i = 0; i < n; ++i)
    {
        std::uint64_t rem = i;
        for (std::size_t d = sel.count.size(); d-- > 0;)
        {
            point[d] = sel.start[d] + rem % sel.count[d];
            rem /= sel.count[d];
        }
        vals.push_back(value_at(v, t, canonical_offset(point, def.shape)));
    }
    std::vector<std::byte> out(vals.size() * 4);
    std::memcpy(out.data(), vals.data(), out.size());
    return out;
}

inline std::vector<std::byte> whole(const VariableDef &def, std::size_t v, std::uint64_t t)
{
    return patch(def, v, t, Selection::whole(def.shape));
}

// Row split of axis 0 among `world` ranks, remainder to low ranks.
inline Selection row_split(const VariableDef &def, int rank, int world)
{
    const auto n = def.shape[0];
    const auto base = n / world, rem = n % world;
    const auto r = static_cast<std::uint64_t>(rank);
    const auto start = r * base + std::min<std::uint64_t>(r, rem);
    Selection s = Selection::whole(def.shape);
    s.start[0] = start;
    s.count[0] = base + (r < rem ? 1 : 0);
    return s;
}

inline std::vector<VariableDef> two_vars(Dims shape)
{
    return {{"T", kF32, shape, true}, {"U", kF32, shape, true}};
}

} // end namespace miniio::testing::oracle

#endif // MINIIO_TESTS_ORACLE_HPP
