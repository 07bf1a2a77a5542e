/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * bench.hpp : repeated runs over a matrix of configurations
 */

#ifndef MINIIO_HARNESS_BENCH_HPP
#define MINIIO_HARNESS_BENCH_HPP

#include "miniio/harness/report.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace miniio::harness
{

struct BenchCell
{
    std::string label;
    RunConfig config;
};

struct CellStats
{
    std::string label;
    RunConfig config;
    /// io_sum_s of every repetition.
    std::vector<double> samples;
    double mean_s = 0.0;
    double min_s = 0.0;
    double max_s = 0.0;
    int subfiles = 0;
    std::uint64_t stored_bytes = 0;
    std::uint64_t raw_bytes = 0;
    std::string failure;
};

struct SweepResult
{
    std::string preset;
    int repetitions = 0;
    std::vector<CellStats> cells;
    nlohmann::json summary = nlohmann::json::object();
};

/// table1, ratio, codec, bb or modes, derived from base (grid, steps,
/// seed). Throws ConfigError for an unknown preset.
std::vector<BenchCell> preset_cells(const std::string &preset, const RunConfig &base,
                                    const std::filesystem::path &work_dir);
/// Every cell run `repetitions` times in work_dir/<label>/rep<i>. Bulk data
/// is deleted after each repetition unless keep_data is set.
SweepResult bench_sweep(const std::string &preset, const std::vector<BenchCell> &cells,
                        int repetitions, const std::filesystem::path &work_dir,
                        bool keep_data = false);

/// Strict ordering of the means, each faster cell at least min_gap below
/// the slower one as a fraction of the slower one.
nlohmann::json ordering_check(const std::vector<CellStats> &cells, double min_gap);

std::string sweep_csv(const SweepResult &r);
/// <dir>/sweep.csv and <dir>/summary.json
void write_sweep(const SweepResult &r, const std::filesystem::path &dir);

/// Bytes stored and sub-file count of a run artifact.
struct ArtifactSize
{
    std::uint64_t stored_bytes = 0;
    int subfiles = 0;
};
ArtifactSize artifact_size(const std::filesystem::path &artifact);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_BENCH_HPP
