/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/verify.hpp"
#include "miniio/container/flat_file.hpp"
#include "miniio/container/layout.hpp"
#include "miniio/container/reader.hpp"
#include "miniio/core/error.hpp"
#include "miniio/harness/part_file.hpp"
#include "miniio/harness/report.hpp"

#include <cstring>
#include <functional>
#include <sstream>

namespace miniio::harness
{

namespace
{

double load_value(Dtype dt, const std::byte *p)
{
    switch (dt.tag())
    {
    case DtypeTag::F32:
    {
        float f;
        std::memcpy(&f, p, 4);
        return f;
    }
    case DtypeTag::F64:
    {
        double d;
        std::memcpy(&d, p, 8);
        return d;
    }
    default:
        return 0.0;
    }
}

std::optional<Mismatch> compare(const WorkloadSpec &spec, int v, std::uint64_t t,
                                std::span<const std::byte> got)
{
    const auto want = oracle_var(spec, v, t);
    const auto es = spec.dtype.elem_size();
    if (got.size() != want.size())
        return Mismatch{variable_name(v), t, 0, 0.0, 0.0,
                        "holds " + std::to_string(got.size()) + " bytes, expected " +
                            std::to_string(want.size())};
    if (std::memcmp(got.data(), want.data(), want.size()) == 0)
        return std::nullopt;
    std::size_t i = 0;
    while (got[i] == want[i])
        ++i;
    const auto e = i / es;
    return Mismatch{variable_name(v), t, e, load_value(spec.dtype, want.data() + e * es),
                    load_value(spec.dtype, got.data() + e * es), ""};
}

/// Variables must match the workload's by name, type and shape.
std::optional<std::string> check_defs(const std::vector<VariableDef> &have,
                                      const WorkloadSpec &spec)
{
    const auto want = workload_defs(spec);
    if (have.size() != want.size())
        return "artifact has " + std::to_string(have.size()) + " variables, workload has " +
               std::to_string(want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        if (have[i].name != want[i].name || have[i].dtype != want[i].dtype ||
            have[i].shape != want[i].shape)
            return "variable " + std::to_string(i) + " is \"" + have[i].name +
                   "\", the workload expects \"" + want[i].name + "\" of the same type and shape";
    return std::nullopt;
}

using Fetch = std::function<std::vector<std::byte>(std::uint64_t pos, int v, std::string &note)>;

VerifyResult check_steps(VerifyResult res, const WorkloadSpec &spec,
                         const std::vector<std::uint64_t> &ids, const Fetch &fetch)
{
    for (std::uint64_t pos = 0; pos < ids.size(); ++pos)
    {
        for (int v = 0; v < spec.nvars; ++v)
        {
            std::string note;
            const auto got = fetch(pos, v, note);
            if (auto m = compare(spec, v, ids[pos], got))
            {
                if (m->detail.empty())
                    m->detail = note;
                res.mismatch = m;
                res.message = m->describe();
                return res;
            }
            if (!note.empty())
            {
                res.mismatch = Mismatch{variable_name(v), ids[pos], 0, 0.0, 0.0, note};
                res.message = res.mismatch->describe();
                return res;
            }
            res.bytes_checked += got.size();
        }
        ++res.steps_checked;
    }
    res.ok = true;
    std::ostringstream msg;
    msg << "verified " << res.steps_checked << " steps, " << res.bytes_checked << " bytes ("
        << res.kind << ")";
    res.message = msg.str();
    return res;
}

std::vector<std::uint64_t> all_steps(std::uint64_t n)
{
    std::vector<std::uint64_t> ids(n);
    for (std::uint64_t i = 0; i < n; ++i)
        ids[i] = i;
    return ids;
}

VerifyResult fail(VerifyResult res, std::string why)
{
    res.ok = false;
    res.message = std::move(why);
    return res;
}

VerifyResult verify_container(const std::filesystem::path &dir, const WorkloadSpec &spec)
{
    VerifyResult res;
    res.kind = "container";
    const container::Reader reader(dir);
    if (auto bad = check_defs(reader.variables(), spec))
        return fail(res, *bad);
    const auto ids = reader.steps();
    if (ids != all_steps(spec.steps))
        return fail(res, "container holds " + std::to_string(ids.size()) +
                             " steps, expected steps 0.." + std::to_string(spec.steps - 1));
    return check_steps(res, spec, ids, [&](std::uint64_t pos, int v, std::string &note) {
        const auto name = variable_name(v);
        try
        {
            return reader.read(name, ids[pos]);
        }
        catch (const CorruptBlock &e)
        {
            note = e.what();
        }
        // reassemble without checksums so the first bad element can be named
        const auto &def = reader.variable(name);
        const auto whole = Selection::whole(def.shape);
        std::vector<std::byte> out(def.nbytes());
        for (const auto &rec : reader.step_index(ids[pos]).blocks)
        {
            if (rec.var != name)
                continue;
            try
            {
                const auto raw = reader.read_block_unchecked(rec);
                copy_region(raw.data(), rec.selection, out.data(), whole, rec.selection,
                            def.dtype.elem_size());
            }
            catch (const Error &e)
            {
                note = "block of rank " + std::to_string(rec.writer_rank) +
                       " cannot be decoded: " + e.what();
            }
        }
        return out;
    });
}

VerifyResult verify_flat(const std::filesystem::path &path, const WorkloadSpec &spec)
{
    VerifyResult res;
    res.kind = "flat";
    const container::FlatFileReader reader(path);
    const auto &h = reader.header();
    if (auto bad = check_defs(h.variables, spec))
        return fail(res, *bad);
    std::vector<std::uint64_t> ids;
    for (std::uint64_t i = 0; i < h.steps; ++i)
        ids.push_back(h.step_id(i));
    if (h.step_ids)
    {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] >= spec.steps || (i > 0 && ids[i] <= ids[i - 1]))
                return fail(res, "flat file step ids are not increasing steps of the workload");
    }
    else if (ids.size() != spec.steps)
        return fail(res, "flat file holds " + std::to_string(ids.size()) + " steps, expected " +
                             std::to_string(spec.steps));
    if (std::filesystem::file_size(path) < reader.layout().total_size())
        return fail(res, "flat file is truncated");
    return check_steps(res, spec, ids, [&](std::uint64_t pos, int v, std::string &) {
        return reader.read_var(pos, static_cast<std::size_t>(v));
    });
}

VerifyResult verify_parts(const std::filesystem::path &path, const WorkloadSpec &spec)
{
    VerifyResult res;
    res.kind = "parts";
    const PartSet parts(path);
    if (auto bad = check_defs(parts.variables(), spec))
        return fail(res, *bad);
    if (static_cast<int>(parts.parts()) != spec.ranks)
        return fail(res, "found " + std::to_string(parts.parts()) + " part files for " +
                             std::to_string(spec.ranks) + " ranks");
    if (parts.steps() != spec.steps)
        return fail(res, "part files hold " + std::to_string(parts.steps()) +
                             " complete steps, expected " + std::to_string(spec.steps));
    return check_steps(res, spec, all_steps(spec.steps),
                       [&](std::uint64_t pos, int v, std::string &) {
                           return parts.assemble(pos, static_cast<std::size_t>(v));
                       });
}

} // end anonymous namespace

std::string Mismatch::describe() const
{
    std::ostringstream out;
    out.precision(9);
    out << "mismatch in \"" << var << "\" step " << step << " element " << index;
    if (detail.empty() || expected != got)
        out << ": expected " << expected << ", got " << got;
    if (!detail.empty())
        out << " (" << detail << ")";
    return out.str();
}

std::vector<std::byte> oracle_var(const WorkloadSpec &spec, int v, std::uint64_t t)
{
    const auto whole = Selection::whole({spec.nz, spec.ny, spec.nx});
    return fill(spec, v, t, whole);
}

void write_oracle_flat(const WorkloadSpec &spec, const std::filesystem::path &path)
{
    container::FlatHeader h;
    h.steps = spec.steps;
    h.variables = workload_defs(spec);
    auto w = container::FlatFileWriter::create(path, h);
    for (std::uint64_t t = 0; t < spec.steps; ++t)
        for (int v = 0; v < spec.nvars; ++v)
            w.write_var(t, static_cast<std::size_t>(v), oracle_var(spec, v, t));
    w.sync();
}

VerifyResult verify(const std::filesystem::path &artifact, const WorkloadSpec &spec)
{
    try
    {
        if (std::filesystem::is_directory(artifact))
        {
            if (std::filesystem::exists(artifact / "report.json"))
                return verify_run(artifact);
            if (std::filesystem::exists(artifact / container::kInfoFile))
                return verify_container(artifact, spec);
            return fail({}, artifact.string() + " is neither a run directory nor a container");
        }
        if (container::FlatFileReader::is_flat_file(artifact))
            return verify_flat(artifact, spec);
        // a part file, or the <dir>/<stem> prefix of a set
        return verify_parts(artifact, spec);
    }
    catch (const Error &e)
    {
        return fail({}, e.what());
    }
}

VerifyResult verify_run(const std::filesystem::path &run_dir)
{
    const auto rep = load_report(run_dir);
    if (rep.failure)
    {
        VerifyResult res;
        res.kind = "run";
        return fail(res, "run failed: " + *rep.failure);
    }
    if (rep.artifact.empty() || (std::filesystem::is_directory(rep.artifact) &&
                                     std::filesystem::exists(rep.artifact / "report.json")))
        return fail({}, "report names no artifact");
    auto res = verify(rep.artifact, rep.config.workload);
    res.kind = "run/" + res.kind;
    return res;
}

} // end namespace miniio::harness
