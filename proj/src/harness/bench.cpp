/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/bench.hpp"
#include "miniio/container/layout.hpp"
#include "miniio/container/reader.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/part_file.hpp"
#include "miniio/harness/run.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace miniio::harness
{

namespace
{

RunConfig throttled(RunConfig c, int ranks, int rpn)
{
    c.workload.ranks = ranks;
    c.workload.ranks_per_node = rpn;
    if (!c.engine.pfs_bw_mbps)
        c.engine.pfs_bw_mbps = 100.0;
    return c;
}

RunConfig with_mode(RunConfig c, Mode m)
{
    c.engine.mode = m;
    c.engine.codec = {};
    c.engine.bb_dir.reset();
    c.engine.drain = false;
    return c;
}

} // end anonymous namespace

std::vector<BenchCell> preset_cells(const std::string &preset, const RunConfig &base,
                                    const std::filesystem::path &work_dir)
{
    std::vector<BenchCell> cells;
    const auto bb = work_dir / "bb";
    if (preset == "table1")
    {
        auto c = throttled(base, 16, 4);
        if (!c.engine.comm_latency_us)
            c.engine.comm_latency_us = 200;
        cells.push_back({"shared_two_phase", with_mode(c, Mode::SharedTwoPhase)});
        cells.push_back({"aggregated", with_mode(c, Mode::AggregatedSubfile)});
        auto b = with_mode(c, Mode::AggregatedSubfile);
        b.engine.bb_dir = bb;
        cells.push_back({"aggregated+bb", b});
        b.engine.codec = CodecSpec::default_compressed();
        cells.push_back({"aggregated+bb+zstd", b});
    }
    else if (preset == "ratio")
    {
        const auto c = with_mode(throttled(base, 16, 8), Mode::AggregatedSubfile);
        for (int ratio : {1, 2, 8})
        {
            auto r = c;
            r.engine.aggregation_ratio = ratio;
            cells.push_back({"ratio=" + std::to_string(ratio), r});
        }
    }
    else if (preset == "codec")
    {
        const auto c = with_mode(throttled(base, base.workload.ranks, base.workload.ranks_per_node),
                                 Mode::AggregatedSubfile);
        for (auto codec : {Codec::None, Codec::LZ4, Codec::Zstd, Codec::Zlib})
        {
            auto r = c;
            r.engine.codec = CodecSpec::with_defaults(codec);
            cells.push_back({"codec=" + std::string(to_string(codec)), r});
        }
    }
    else if (preset == "bb")
    {
        for (int nodes : {1, 2, 4})
        {
            const auto c = with_mode(throttled(base, 4 * nodes, 4), Mode::AggregatedSubfile);
            cells.push_back({"nodes=" + std::to_string(nodes) + ",bb=off", c});
            auto b = c;
            b.engine.bb_dir = bb;
            cells.push_back({"nodes=" + std::to_string(nodes) + ",bb=on", b});
        }
    }
    else if (preset == "modes")
    {
        for (int nodes : {1, 2, 4})
            for (auto m : {Mode::SerialFunnel, Mode::FilePerProcess, Mode::SharedTwoPhase,
                           Mode::AggregatedSubfile, Mode::Staging})
            {
                auto c = with_mode(throttled(base, 4 * nodes, 4), m);
                if (!c.engine.comm_latency_us)
                    c.engine.comm_latency_us = 200;
                cells.push_back({"nodes=" + std::to_string(nodes) + "," + std::string(to_string(m)), c});
            }
    }
    else
        throw ConfigError("unknown bench preset \"" + preset +
                          "\" (table1, ratio, codec, bb, modes)");
    return cells;
}

ArtifactSize artifact_size(const std::filesystem::path &artifact)
{
    ArtifactSize s;
    if (std::filesystem::is_directory(artifact) &&
        std::filesystem::exists(artifact / container::kInfoFile))
    {
        const container::Reader r(artifact);
        for (auto step : r.steps())
            for (const auto &b : r.step_index(step).blocks)
                s.stored_bytes += b.stored_nbytes;
        for (int k = 0;; ++k)
        {
            if (!std::filesystem::exists(container::data_file(artifact, k)))
                break;
            s.subfiles = k + 1;
        }
        return s;
    }
    if (PartFile::is_part_file(artifact))
    {
        const PartSet parts(artifact);
        s.subfiles = static_cast<int>(parts.parts());
        for (std::size_t v = 0; v < parts.variables().size(); ++v)
            s.stored_bytes += parts.variables()[v].nbytes() * parts.steps();
        return s;
    }
    if (std::filesystem::is_regular_file(artifact))
    {
        s.subfiles = 1;
        s.stored_bytes = std::filesystem::file_size(artifact);
    }
    return s;
}

SweepResult bench_sweep(const std::string &preset, const std::vector<BenchCell> &cells,
                        int repetitions, const std::filesystem::path &work_dir, bool keep_data)
{
    if (repetitions < 1)
        throw ConfigError("repetitions must be at least 1");
    SweepResult res;
    res.preset = preset;
    res.repetitions = repetitions;
    for (const auto &cell : cells)
    {
        CellStats st;
        st.label = cell.label;
        st.config = cell.config;
        st.raw_bytes = cell.config.workload.bytes_per_step() * cell.config.workload.steps;
        for (int rep = 0; rep < repetitions && st.failure.empty(); ++rep)
        {
            auto cfg = cell.config;
            cfg.out = work_dir / cell.label / ("rep" + std::to_string(rep));
            const auto report = run(cfg);
            if (!report.ok())
            {
                st.failure = *report.failure;
                break;
            }
            st.samples.push_back(report.io_sum_s);
            if (rep == 0)
            {
                const auto size = artifact_size(report.artifact);
                st.stored_bytes = size.stored_bytes;
                st.subfiles = size.subfiles;
            }
            if (!keep_data)
            {
                std::error_code ec;
                const auto prefix = cfg.name + ".";
                for (const auto &dir : {report.config.out, report.config.engine.bb_dir.value_or("")})
                {
                    if (dir.empty() || !std::filesystem::is_directory(dir, ec))
                        continue;
                    for (const auto &e : std::filesystem::directory_iterator(dir, ec))
                        if (e.path().filename().string().rfind(prefix, 0) == 0)
                            std::filesystem::remove_all(e.path(), ec);
                }
            }
        }
        if (!st.samples.empty())
        {
            st.mean_s = std::accumulate(st.samples.begin(), st.samples.end(), 0.0) /
                        static_cast<double>(st.samples.size());
            st.min_s = *std::min_element(st.samples.begin(), st.samples.end());
            st.max_s = *std::max_element(st.samples.begin(), st.samples.end());
        }
        res.cells.push_back(std::move(st));
    }

    auto cells_json = nlohmann::json::array();
    for (const auto &c : res.cells)
        cells_json.push_back({{"label", c.label},
                              {"mean_s", c.mean_s},
                              {"min_s", c.min_s},
                              {"max_s", c.max_s},
                              {"samples", c.samples},
                              {"subfiles", c.subfiles},
                              {"stored_bytes", c.stored_bytes},
                              {"raw_bytes", c.raw_bytes},
                              {"failure", c.failure.empty() ? nlohmann::json() : nlohmann::json(c.failure)}});
    res.summary = {{"preset", preset}, {"repetitions", repetitions}, {"cells", cells_json}};
    if (preset == "table1")
        res.summary["table1"] = ordering_check(res.cells, 0.15);
    return res;
}

nlohmann::json ordering_check(const std::vector<CellStats> &cells, double min_gap)
{
    nlohmann::json out = {{"min_gap", min_gap}, {"gaps", nlohmann::json::array()}};
    bool pass = !cells.empty();
    for (const auto &c : cells)
        pass = pass && c.failure.empty();
    for (std::size_t i = 0; i + 1 < cells.size(); ++i)
    {
        const auto &slow = cells[i], &fast = cells[i + 1];
        const double gap = slow.mean_s > 0 ? (slow.mean_s - fast.mean_s) / slow.mean_s : 0.0;
        const bool ok = slow.mean_s > fast.mean_s && gap >= min_gap;
        pass = pass && ok;
        out["gaps"].push_back({{"slower", slow.label},
                               {"faster", fast.label},
                               {"slower_mean_s", slow.mean_s},
                               {"faster_mean_s", fast.mean_s},
                               {"gap", gap},
                               {"pass", ok}});
    }
    out["pass"] = pass;
    return out;
}

std::string sweep_csv(const SweepResult &r)
{
    std::ostringstream out;
    out << "cell,mode,ranks,nodes,ratio,codec,bb,reps,mean_s,min_s,max_s,subfiles,stored_bytes,"
           "raw_bytes,failure\n";
    char num[64];
    auto g = [&](double v) {
        std::snprintf(num, sizeof num, "%.9g", v);
        return std::string(num);
    };
    for (const auto &c : r.cells)
    {
        const auto &e = c.config.engine;
        const auto &w = c.config.workload;
        auto failure = c.failure;
        std::replace(failure.begin(), failure.end(), ',', ';');
        std::replace(failure.begin(), failure.end(), '\n', ' ');
        out << c.label << ',' << to_string(e.mode) << ',' << w.ranks << ',' << w.nodes() << ','
            << e.effective_ratio(w.ranks_per_node) << ',' << to_string(e.codec.codec) << ','
            << (e.bb_dir ? "on" : "off") << ',' << c.samples.size() << ',' << g(c.mean_s) << ','
            << g(c.min_s) << ',' << g(c.max_s) << ',' << c.subfiles << ',' << c.stored_bytes << ','
            << c.raw_bytes << ',' << failure << '\n';
    }
    return out.str();
}

void write_sweep(const SweepResult &r, const std::filesystem::path &dir)
{
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "sweep.csv");
    csv << sweep_csv(r);
    std::ofstream js(dir / "summary.json");
    js << r.summary.dump(2) << '\n';
    if (!csv || !js)
        throw IOError("cannot write sweep results under " + dir.string());
}

} // end namespace miniio::harness
