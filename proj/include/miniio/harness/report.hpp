/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * report.hpp : run configuration and the timing report of one run
 */

#ifndef MINIIO_HARNESS_REPORT_HPP
#define MINIIO_HARNESS_REPORT_HPP

#include "miniio/core/params.hpp"
#include "miniio/harness/workload.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace miniio::harness
{

struct RunConfig
{
    WorkloadSpec workload;
    EngineParams engine;
    /// Run directory; it is also the simulated PFS root.
    std::filesystem::path out = "run";
    std::string name = "wrfout";
    /// Upper bound on the whole run before ranks are killed.
    double timeout_s = 600.0;

    /// Throws ConfigError.
    void validate() const;
};

void to_json(nlohmann::json &j, const RunConfig &c);
/// Keys: workload, engine, out, name, timeout_s. Missing keys keep defaults.
void from_json(const nlohmann::json &j, RunConfig &c);

struct StepTiming
{
    std::uint64_t step = 0;
    /// Slowest rank's time blocked in put and end_step.
    double perceived_write_s = 0.0;
    /// Slowest rank's fill, simulated compute and pre-write barrier.
    double compute_s = 0.0;
};

struct RunReport
{
    RunConfig config;
    std::vector<StepTiming> steps;
    double wall_s = 0.0;
    /// Slowest rank from process start until its writer was open.
    double init_s = 0.0;
    /// Sum of perceived_write_s over steps, in step order.
    double io_sum_s = 0.0;
    double close_s = 0.0;
    std::vector<std::uint64_t> skipped_steps;
    /// Where the run left its data.
    std::filesystem::path artifact;
    std::optional<std::string> failure;
    /// Mode-specific figures (drain bytes, captured steps).
    nlohmann::json extra = nlohmann::json::object();

    bool ok() const noexcept { return !failure; }
    double compute_sum_s() const noexcept;
};

void to_json(nlohmann::json &j, const RunReport &r);
void from_json(const nlohmann::json &j, RunReport &r);

/// <out>/report.json and <out>/steps.csv.
void write_report(const RunReport &r);
RunReport load_report(const std::filesystem::path &run_dir);
/// step,perceived_write_s,compute_s with round-trip precision.
std::string steps_csv(const RunReport &r);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_REPORT_HPP
