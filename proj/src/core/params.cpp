/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/core/params.hpp"
#include "miniio/core/error.hpp"

namespace miniio
{

std::string_view to_string(Mode m) noexcept
{
    switch (m)
    {
    case Mode::SerialFunnel:
        return "serial_funnel";
    case Mode::FilePerProcess:
        return "file_per_process";
    case Mode::SharedTwoPhase:
        return "shared_two_phase";
    case Mode::AggregatedSubfile:
        return "aggregated_subfile";
    case Mode::Staging:
        return "staging";
    }
    return "aggregated_subfile";
}

std::string_view io_form_label(Mode m) noexcept
{
    switch (m)
    {
    case Mode::SerialFunnel:
        return "2";
    case Mode::FilePerProcess:
        return "102";
    case Mode::SharedTwoPhase:
        return "11";
    case Mode::AggregatedSubfile:
        return "adios2";
    case Mode::Staging:
        return "sst";
    }
    return "adios2";
}

Mode mode_from_string(std::string_view name)
{
    for (auto m : {Mode::SerialFunnel, Mode::FilePerProcess, Mode::SharedTwoPhase,
                   Mode::AggregatedSubfile, Mode::Staging})
        if (name == to_string(m) || name == io_form_label(m))
            return m;
    throw ConfigError("unknown mode \"" + std::string(name) + "\"");
}

std::string_view to_string(QueueFullPolicy p) noexcept
{
    return p == QueueFullPolicy::Block ? "block" : "discard";
}

std::string_view to_string(Dataplane d) noexcept
{
    return d == Dataplane::Tcp ? "tcp" : "shm";
}

QueueFullPolicy queue_policy_from_string(std::string_view name)
{
    if (name == "block")
        return QueueFullPolicy::Block;
    if (name == "discard")
        return QueueFullPolicy::Discard;
    throw ConfigError("unknown queue_full_policy \"" + std::string(name) + "\"");
}

Dataplane dataplane_from_string(std::string_view name)
{
    if (name == "tcp")
        return Dataplane::Tcp;
    if (name == "shm")
        return Dataplane::Shm;
    throw ConfigError("unknown dataplane \"" + std::string(name) + "\"");
}

void EngineParams::validate() const
{
    if (aggregation_ratio < 0)
        throw ConfigError("aggregation_ratio must be positive");
    if (drain && !bb_dir)
        throw ConfigError("drain requires bb_dir");
    if (queue_limit < 0)
        throw ConfigError("queue_limit must be non-negative");
    if (pfs_bw_mbps && !(*pfs_bw_mbps > 0.0))
        throw ConfigError("pfs_bw_mbps must be positive");
    if (rendezvous_readers < 0)
        throw ConfigError("rendezvous_readers must be non-negative");
    if (two_phase_writers < 0)
        throw ConfigError("two_phase_writers must be non-negative");
    codec.validate();

    const bool carries_payloads =
        mode == Mode::AggregatedSubfile || mode == Mode::Staging;
    if (!carries_payloads && codec.codec != Codec::None)
        throw ConfigError(std::string(to_string(mode)) +
                          " writes canonical raw bytes; codec must be none");
    if (mode != Mode::AggregatedSubfile && bb_dir)
        throw ConfigError("burst buffer placement requires aggregated_subfile");
}

void to_json(nlohmann::json &j, const EngineParams &p)
{
    j = nlohmann::json{
        {"mode", to_string(p.mode)},
        {"aggregation_ratio", p.aggregation_ratio},
        {"pfs_dir", p.pfs_dir.string()},
        {"bb_dir", p.bb_dir ? nlohmann::json(p.bb_dir->string()) : nlohmann::json()},
        {"drain", p.drain},
        {"drain_wait", p.drain_wait},
        {"codec", to_string(p.codec.codec)},
        {"level", p.codec.level},
        {"shuffle", p.codec.shuffle},
        {"queue_limit", p.queue_limit},
        {"queue_full_policy", to_string(p.queue_full_policy)},
        {"dataplane", to_string(p.dataplane)},
        {"control_endpoint", p.control_endpoint},
        {"step_timeout_ms", p.step_timeout_ms},
        {"rendezvous_readers", p.rendezvous_readers},
        {"pfs_bw_mbps", p.pfs_bw_mbps ? nlohmann::json(*p.pfs_bw_mbps) : nlohmann::json()},
        {"pfs_op_latency_us", p.pfs_op_latency_us ? nlohmann::json(*p.pfs_op_latency_us)
                                                  : nlohmann::json()},
        {"comm_latency_us", p.comm_latency_us ? nlohmann::json(*p.comm_latency_us)
                                              : nlohmann::json()},
        {"two_phase_writers", p.two_phase_writers},
    };
}

namespace
{
template <class T>
void take(const nlohmann::json &j, const char *key, T &out)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return;
    try
    {
        out = it->get<T>();
    }
    catch (const nlohmann::json::exception &)
    {
        throw ConfigError(std::string("engine key \"") + key + "\" has wrong type");
    }
}

template <class T>
void take_opt(const nlohmann::json &j, const char *key, std::optional<T> &out)
{
    auto it = j.find(key);
    if (it == j.end())
        return;
    if (it->is_null())
    {
        out.reset();
        return;
    }
    T v{};
    take(j, key, v);
    out = v;
}
} // end anonymous namespace

void from_json(const nlohmann::json &j, EngineParams &p)
{
    if (!j.is_object())
        throw ConfigError("engine configuration must be an object");
    std::string s;
    if (j.contains("mode"))
    {
        take(j, "mode", s);
        p.mode = mode_from_string(s);
    }
    take(j, "aggregation_ratio", p.aggregation_ratio);
    if (j.contains("pfs_dir"))
    {
        take(j, "pfs_dir", s);
        p.pfs_dir = s;
    }
    if (j.contains("bb_dir"))
    {
        std::optional<std::string> bb;
        take_opt(j, "bb_dir", bb);
        if (bb && !bb->empty())
            p.bb_dir = *bb;
        else
            p.bb_dir.reset();
    }
    take(j, "drain", p.drain);
    take(j, "drain_wait", p.drain_wait);
    if (j.contains("codec"))
    {
        take(j, "codec", s);
        p.codec.codec = codec_from_string(s);
        if (!j.contains("level"))
            p.codec.level = CodecSpec::default_level(p.codec.codec);
        if (p.codec.codec != Codec::None && !j.contains("shuffle"))
            p.codec.shuffle = true;
    }
    take(j, "level", p.codec.level);
    take(j, "shuffle", p.codec.shuffle);
    p.codec = p.codec.normalized();
    take(j, "queue_limit", p.queue_limit);
    if (j.contains("queue_full_policy"))
    {
        take(j, "queue_full_policy", s);
        p.queue_full_policy = queue_policy_from_string(s);
    }
    if (j.contains("dataplane"))
    {
        take(j, "dataplane", s);
        p.dataplane = dataplane_from_string(s);
    }
    take(j, "control_endpoint", p.control_endpoint);
    take(j, "step_timeout_ms", p.step_timeout_ms);
    take(j, "rendezvous_readers", p.rendezvous_readers);
    take_opt(j, "pfs_bw_mbps", p.pfs_bw_mbps);
    take_opt(j, "pfs_op_latency_us", p.pfs_op_latency_us);
    take_opt(j, "comm_latency_us", p.comm_latency_us);
    take(j, "two_phase_writers", p.two_phase_writers);
}

} // end namespace miniio
