/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * workload.hpp : the synthetic WRF-like grid, its decomposition and fields
 */

#ifndef MINIIO_HARNESS_WORKLOAD_HPP
#define MINIIO_HARNESS_WORKLOAD_HPP

#include "miniio/core/types.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace miniio::harness
{

struct WorkloadSpec
{
    std::uint64_t nx = 256;
    std::uint64_t ny = 192;
    std::uint64_t nz = 32;
    int nvars = 8;
    Dtype dtype{DtypeTag::F32};
    std::uint64_t steps = 4;
    /// Simulated compute between history writes.
    double compute_ms = 0.0;
    int ranks = 8;
    int ranks_per_node = 4;
    std::uint64_t seed = 1;
    /// Noise amplitude relative to the summed sinusoid amplitudes.
    double noise = 1e-3;

    int nodes() const noexcept { return (ranks + ranks_per_node - 1) / ranks_per_node; }
    std::uint64_t bytes_per_step() const noexcept
    {
        return nx * ny * nz * static_cast<std::uint64_t>(nvars) * dtype.elem_size();
    }
    /// Throws ConfigError.
    void validate() const;
};

void to_json(nlohmann::json &j, const WorkloadSpec &s);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json &j, WorkloadSpec &s);

/// T, U, V, W, QVAPOR, P, PH, QCLOUD, then VAR<i>.
std::string variable_name(int v);
/// Every variable has shape {nz, ny, nx}.
std::vector<VariableDef> workload_defs(const WorkloadSpec &s);

/// px columns by py rows of patches, px * py = ranks.
struct Decomposition
{
    int px = 1;
    int py = 1;
};

/// The factorisation whose patches are closest to square.
Decomposition decompose(const WorkloadSpec &s);
/// Patch of a rank: full z, a near-equal share of y and x with the
/// remainder going to the low-index patches.
Selection patch_of(const WorkloadSpec &s, int rank);

/// One seeded sinusoid: amp * sin(kx x + ky y + kz z + phase + drift t).
struct Wave
{
    double amp, kx, ky, kz, phase, drift;
};

struct FieldParams
{
    double base = 0.0;
    double amp_sum = 0.0;
    std::array<Wave, 3> waves{};
};

/// The seeded constants behind field_value for variable v.
FieldParams field_params(int v, std::uint64_t seed);

/// Deterministic smooth field: a per-variable base plus three seeded
/// sinusoids in (x, y, z) whose phases drift with the step, plus seeded
/// noise of relative amplitude `noise`.
double field_value(int v, std::uint64_t x, std::uint64_t y, std::uint64_t z, std::uint64_t t,
                   std::uint64_t seed, double noise);

/// Element bytes of variable v at step t over sel, in canonical order.
std::vector<std::byte> fill(const WorkloadSpec &s, int v, std::uint64_t t, const Selection &sel);

/// Stores one field value in dtype's little-endian encoding.
void store_value(Dtype dtype, double value, std::byte *out);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_WORKLOAD_HPP
