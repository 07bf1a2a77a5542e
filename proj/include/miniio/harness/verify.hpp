/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * verify.hpp : bit-exact comparison of run outputs with the field oracle
 */

#ifndef MINIIO_HARNESS_VERIFY_HPP
#define MINIIO_HARNESS_VERIFY_HPP

#include "miniio/harness/workload.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace miniio::harness
{

struct Mismatch
{
    std::string var;
    std::uint64_t step = 0;
    /// Row-major element index inside the variable.
    std::uint64_t index = 0;
    double expected = 0.0;
    double got = 0.0;
    std::string detail;

    std::string describe() const;
};

struct VerifyResult
{
    bool ok = false;
    /// container, flat, parts or run
    std::string kind;
    std::uint64_t steps_checked = 0;
    std::uint64_t bytes_checked = 0;
    std::optional<Mismatch> mismatch;
    /// Why the check failed, or a one-line summary when it passed.
    std::string message;
};

/// Recomputes every element of every stored step and compares bits. The
/// artifact is a container directory, a flat file, one of a set of part
/// files, or a run directory (whose report names the artifact and spec;
/// `spec` is then ignored).
VerifyResult verify(const std::filesystem::path &artifact, const WorkloadSpec &spec);
/// verify() on a run directory using the workload recorded in its report.
VerifyResult verify_run(const std::filesystem::path &run_dir);

/// Canonical bytes of variable v at step t.
std::vector<std::byte> oracle_var(const WorkloadSpec &spec, int v, std::uint64_t t);
/// The flat file every file-producing mode must reproduce, built by
/// brute-force evaluation of the field.
void write_oracle_flat(const WorkloadSpec &spec, const std::filesystem::path &path);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_VERIFY_HPP
