/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/workload.hpp"
#include "miniio/core/error.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

namespace miniio::harness
{

namespace
{

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

/// Uniform in [0, 1) from the top 53 bits.
constexpr double unit(std::uint64_t h) noexcept
{
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

const char *const kNames[] = {"T", "U", "V", "W", "QVAPOR", "P", "PH", "QCLOUD"};

} // end anonymous namespace

FieldParams field_params(int v, std::uint64_t seed)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::uint64_t state = splitmix64(seed ^ (0x5851f42d4c957f2dull * (static_cast<std::uint64_t>(v) + 1)));
    auto next = [&] {
        state = splitmix64(state);
        return unit(state);
    };
    FieldParams p;
    p.base = 250.0 + 50.0 * next();
    for (auto &w : p.waves)
    {
        // perturbations of order 1e-3 of the base on domain-scale
        // wavelengths: 64..256 cells horizontally, 8..32 vertically
        w.amp = 0.05 + 0.15 * next();
        w.kx = two_pi / (64.0 + 192.0 * next());
        w.ky = two_pi / (64.0 + 192.0 * next());
        w.kz = two_pi / (8.0 + 24.0 * next());
        w.phase = two_pi * next();
        w.drift = 0.1 + 0.3 * next();
        p.amp_sum += w.amp;
    }
    return p;
}

void WorkloadSpec::validate() const
{
    if (nx == 0 || ny == 0 || nz == 0)
        throw ConfigError("grid extents must be positive");
    if (nvars < 1)
        throw ConfigError("nvars must be at least 1");
    if (ranks < 1)
        throw ConfigError("ranks must be at least 1");
    if (ranks_per_node < 1)
        throw ConfigError("ranks_per_node must be at least 1");
    if (ranks % ranks_per_node != 0)
        throw ConfigError("ranks (" + std::to_string(ranks) +
                          ") must be a multiple of ranks_per_node (" +
                          std::to_string(ranks_per_node) + ")");
    if (!dtype.is_float())
        throw ConfigError("workload dtype must be f32 or f64");
    if (compute_ms < 0.0)
        throw ConfigError("compute_ms must be non-negative");
    if (!(noise >= 0.0))
        throw ConfigError("noise must be non-negative");
    const auto d = decompose(*this);
    if (static_cast<std::uint64_t>(d.px) > nx || static_cast<std::uint64_t>(d.py) > ny)
        throw ConfigError("grid " + std::to_string(nx) + "x" + std::to_string(ny) +
                          " is too small for " + std::to_string(ranks) + " ranks");
}

void to_json(nlohmann::json &j, const WorkloadSpec &s)
{
    j = nlohmann::json{{"nx", s.nx},
                       {"ny", s.ny},
                       {"nz", s.nz},
                       {"nvars", s.nvars},
                       {"dtype", std::string(s.dtype.name())},
                       {"steps", s.steps},
                       {"compute_ms", s.compute_ms},
                       {"ranks", s.ranks},
                       {"ranks_per_node", s.ranks_per_node},
                       {"seed", s.seed},
                       {"noise", s.noise}};
}

void from_json(const nlohmann::json &j, WorkloadSpec &s)
{
    if (!j.is_object())
        throw ConfigError("workload configuration must be an object");
    try
    {
        auto take = [&](const char *key, auto &out) {
            if (auto it = j.find(key); it != j.end() && !it->is_null())
                out = it->get<std::remove_reference_t<decltype(out)>>();
        };
        take("nx", s.nx);
        take("ny", s.ny);
        take("nz", s.nz);
        take("nvars", s.nvars);
        take("steps", s.steps);
        take("compute_ms", s.compute_ms);
        take("ranks", s.ranks);
        take("ranks_per_node", s.ranks_per_node);
        take("seed", s.seed);
        take("noise", s.noise);
        if (auto it = j.find("dtype"); it != j.end())
            s.dtype = Dtype::from_name(it->get<std::string>());
    }
    catch (const nlohmann::json::exception &e)
    {
        throw ConfigError(std::string("workload: ") + e.what());
    }
}

std::string variable_name(int v)
{
    if (v >= 0 && v < static_cast<int>(std::size(kNames)))
        return kNames[v];
    return "VAR" + std::to_string(v);
}

std::vector<VariableDef> workload_defs(const WorkloadSpec &s)
{
    std::vector<VariableDef> defs;
    for (int v = 0; v < s.nvars; ++v)
        defs.push_back({variable_name(v), s.dtype, {s.nz, s.ny, s.nx}, true});
    return defs;
}

Decomposition decompose(const WorkloadSpec &s)
{
    Decomposition best{s.ranks, 1};
    double best_gap = std::numeric_limits<double>::infinity();
    for (int px = 1; px <= s.ranks; ++px)
    {
        if (s.ranks % px != 0)
            continue;
        const int py = s.ranks / px;
        const double gap = std::abs(static_cast<double>(s.nx) / px - static_cast<double>(s.ny) / py);
        if (gap < best_gap)
        {
            best_gap = gap;
            best = {px, py};
        }
    }
    return best;
}

Selection patch_of(const WorkloadSpec &s, int rank)
{
    const auto d = decompose(s);
    auto split = [](std::uint64_t n, int parts, int i, std::uint64_t &start, std::uint64_t &count) {
        const auto p = static_cast<std::uint64_t>(parts), k = static_cast<std::uint64_t>(i);
        const auto base = n / p, rem = n % p;
        start = k * base + std::min(k, rem);
        count = base + (k < rem ? 1 : 0);
    };
    Selection sel{{0, 0, 0}, {s.nz, 0, 0}};
    split(s.nx, d.px, rank % d.px, sel.start[2], sel.count[2]);
    split(s.ny, d.py, rank / d.px, sel.start[1], sel.count[1]);
    return sel;
}

double field_value(int v, std::uint64_t x, std::uint64_t y, std::uint64_t z, std::uint64_t t,
                   std::uint64_t seed, double noise)
{
    // cheap to recompute; keeps the function pure
    thread_local int cached_v = -1;
    thread_local std::uint64_t cached_seed = 0;
    thread_local FieldParams p;
    if (cached_v != v || cached_seed != seed)
    {
        p = field_params(v, seed);
        cached_v = v;
        cached_seed = seed;
    }
    const double fx = static_cast<double>(x), fy = static_cast<double>(y),
                 fz = static_cast<double>(z), ft = static_cast<double>(t);
    double value = p.base;
    for (const auto &w : p.waves)
        value += w.amp * std::sin(w.kx * fx + w.ky * fy + w.kz * fz + w.phase + w.drift * ft);
    if (noise > 0.0)
    {
        auto h = splitmix64(seed ^ 0xd1b54a32d192ed03ull);
        h = splitmix64(h ^ static_cast<std::uint64_t>(v));
        h = splitmix64(h ^ x);
        h = splitmix64(h ^ y);
        h = splitmix64(h ^ z);
        h = splitmix64(h ^ t);
        value += noise * p.amp_sum * (2.0 * unit(h) - 1.0);
    }
    return value;
}

void store_value(Dtype dtype, double value, std::byte *out)
{
    switch (dtype.tag())
    {
    case DtypeTag::F32:
    {
        const auto f = static_cast<float>(value);
        std::memcpy(out, &f, 4);
        break;
    }
    case DtypeTag::F64:
        std::memcpy(out, &value, 8);
        break;
    case DtypeTag::I32:
    {
        const auto i = static_cast<std::int32_t>(std::llround(value));
        std::memcpy(out, &i, 4);
        break;
    }
    case DtypeTag::I64:
    {
        const auto i = static_cast<std::int64_t>(std::llround(value));
        std::memcpy(out, &i, 8);
        break;
    }
    case DtypeTag::U8:
        out[0] = static_cast<std::byte>(std::llround(value) & 0xff);
        break;
    }
}

std::vector<std::byte> fill(const WorkloadSpec &s, int v, std::uint64_t t, const Selection &sel)
{
    const auto es = s.dtype.elem_size();
    std::vector<std::byte> out(sel.element_count() * es);
    std::byte *p = out.data();
    for (std::uint64_t z = sel.start[0]; z < sel.start[0] + sel.count[0]; ++z)
        for (std::uint64_t y = sel.start[1]; y < sel.start[1] + sel.count[1]; ++y)
            for (std::uint64_t x = sel.start[2]; x < sel.start[2] + sel.count[2]; ++x, p += es)
                store_value(s.dtype, field_value(v, x, y, z, t, s.seed, s.noise), p);
    return out;
}

} // end namespace miniio::harness
