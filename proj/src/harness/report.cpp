/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/report.hpp"
#include "miniio/core/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace miniio::harness
{

void RunConfig::validate() const
{
    workload.validate();
    engine.validate();
    if (name.empty() || name.find('/') != std::string::npos)
        throw ConfigError("run name must be a plain file name");
    if (!(timeout_s > 0.0))
        throw ConfigError("timeout_s must be positive");
    if (engine.mode == Mode::SharedTwoPhase && engine.two_phase_writers > workload.ranks)
        throw ConfigError("two_phase_writers exceeds the number of ranks");
}

void to_json(nlohmann::json &j, const RunConfig &c)
{
    j = nlohmann::json{{"workload", c.workload},
                       {"engine", c.engine},
                       {"out", c.out.string()},
                       {"name", c.name},
                       {"timeout_s", c.timeout_s}};
}

void from_json(const nlohmann::json &j, RunConfig &c)
{
    if (!j.is_object())
        throw ConfigError("run configuration must be an object");
    if (auto it = j.find("workload"); it != j.end())
        from_json(*it, c.workload);
    if (auto it = j.find("engine"); it != j.end())
        from_json(*it, c.engine);
    try
    {
        if (auto it = j.find("out"); it != j.end())
            c.out = it->get<std::string>();
        if (auto it = j.find("name"); it != j.end())
            c.name = it->get<std::string>();
        if (auto it = j.find("timeout_s"); it != j.end())
            c.timeout_s = it->get<double>();
    }
    catch (const nlohmann::json::exception &e)
    {
        throw ConfigError(std::string("run configuration: ") + e.what());
    }
}

double RunReport::compute_sum_s() const noexcept
{
    double s = 0.0;
    for (const auto &t : steps)
        s += t.compute_s;
    return s;
}

void to_json(nlohmann::json &j, const RunReport &r)
{
    auto steps = nlohmann::json::array();
    for (const auto &s : r.steps)
        steps.push_back({{"step", s.step},
                         {"perceived_write_s", s.perceived_write_s},
                         {"compute_s", s.compute_s}});
    j = nlohmann::json{
        {"mode", to_string(r.config.engine.mode)},
        {"io_form", io_form_label(r.config.engine.mode)},
        {"config", r.config},
        {"steps", steps},
        {"totals",
         {{"wall_s", r.wall_s},
          {"init_s", r.init_s},
          {"io_sum_s", r.io_sum_s},
          {"compute_sum_s", r.compute_sum_s()},
          {"close_s", r.close_s}}},
        {"skipped_steps", r.skipped_steps},
        {"artifact", r.artifact.string()},
        {"failure", r.failure ? nlohmann::json(*r.failure) : nlohmann::json()},
        {"extra", r.extra},
    };
}

void from_json(const nlohmann::json &j, RunReport &r)
{
    try
    {
        from_json(j.at("config"), r.config);
        r.steps.clear();
        for (const auto &s : j.at("steps"))
            r.steps.push_back({s.at("step").get<std::uint64_t>(),
                               s.at("perceived_write_s").get<double>(),
                               s.at("compute_s").get<double>()});
        const auto &t = j.at("totals");
        r.wall_s = t.at("wall_s").get<double>();
        r.init_s = t.at("init_s").get<double>();
        r.io_sum_s = t.at("io_sum_s").get<double>();
        r.close_s = t.value("close_s", 0.0);
        r.skipped_steps = j.value("skipped_steps", std::vector<std::uint64_t>{});
        r.artifact = j.at("artifact").get<std::string>();
        if (const auto &f = j.at("failure"); !f.is_null())
            r.failure = f.get<std::string>();
        r.extra = j.value("extra", nlohmann::json::object());
    }
    catch (const nlohmann::json::exception &e)
    {
        throw FormatError(std::string("bad run report: ") + e.what());
    }
}

std::string steps_csv(const RunReport &r)
{
    std::ostringstream out;
    out << "step,perceived_write_s,compute_s\n";
    char line[96];
    for (const auto &s : r.steps)
    {
        std::snprintf(line, sizeof line, "%llu,%.17g,%.17g\n",
                      static_cast<unsigned long long>(s.step), s.perceived_write_s, s.compute_s);
        out << line;
    }
    return out.str();
}

void write_report(const RunReport &r)
{
    std::filesystem::create_directories(r.config.out);
    {
        std::ofstream f(r.config.out / "report.json");
        f << nlohmann::json(r).dump(2) << '\n';
        if (!f)
            throw IOError("cannot write " + (r.config.out / "report.json").string());
    }
    std::ofstream f(r.config.out / "steps.csv");
    f << steps_csv(r);
    if (!f)
        throw IOError("cannot write " + (r.config.out / "steps.csv").string());
}

RunReport load_report(const std::filesystem::path &run_dir)
{
    const auto path = std::filesystem::is_directory(run_dir) ? run_dir / "report.json" : run_dir;
    std::ifstream f(path);
    if (!f)
        throw OpenError("cannot open " + path.string());
    nlohmann::json j;
    try
    {
        f >> j;
    }
    catch (const nlohmann::json::exception &e)
    {
        throw FormatError(path.string() + ": " + e.what());
    }
    RunReport r;
    from_json(j, r);
    return r;
}

} // end namespace miniio::harness
