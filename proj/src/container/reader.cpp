/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/reader.hpp"
#include "miniio/codecs/block.hpp"
#include "miniio/container/flat_file.hpp"
#include "miniio/core/error.hpp"

#include <chrono>
#include <cstring>
#include <string>

namespace miniio::container
{

namespace
{
using Clock = std::chrono::steady_clock;
}

Reader::Reader(std::filesystem::path dir) : m_Dir(std::move(dir))
{
    const auto info_path = m_Dir / kInfoFile;
    if (!std::filesystem::is_regular_file(info_path))
        throw OpenError(m_Dir.string() + " is not a container (no " + kInfoFile + ")");
    const auto raw = read_whole_file(info_path);
    m_Info = ContainerInfo::parse(std::string(reinterpret_cast<const char *>(raw.data()),
                                              raw.size()));
    refresh();
}

const VariableDef &Reader::variable(const std::string &name) const
{
    for (const auto &v : m_Info.variables)
        if (v.name == name)
            return v;
    throw IndexError("container has no variable \"" + name + "\"");
}

std::vector<std::uint64_t> Reader::steps() const
{
    std::vector<std::uint64_t> out;
    out.reserve(m_Steps.size());
    for (const auto &s : m_Steps)
        out.push_back(s.step);
    return out;
}

const StepIndex &Reader::step_index(std::uint64_t step) const
{
    const auto it = m_ByStep.find(step);
    if (it == m_ByStep.end())
        throw IndexError("step " + std::to_string(step) + " is not in the container");
    return m_Steps[it->second];
}

std::size_t Reader::refresh()
{
    const auto path = m_Dir / kIndexFile;
    if (!std::filesystem::exists(path))
        return 0;
    const File f(path, File::Mode::Read);
    const auto size = f.size();
    if (size <= m_IndexConsumed)
        return 0;
    const auto tail = f.read_at(m_IndexConsumed, static_cast<std::size_t>(size - m_IndexConsumed));
    const std::string_view text(reinterpret_cast<const char *>(tail.data()), tail.size());
    std::size_t added = 0, pos = 0;
    while (true)
    {
        const auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos)
            break;
        auto idx = index_parse(text.substr(pos, nl - pos));
        if (idx.complete && !m_ByStep.contains(idx.step))
        {
            m_ByStep[idx.step] = m_Steps.size();
            m_Steps.push_back(std::move(idx));
            ++added;
        }
        pos = nl + 1;
    }
    m_IndexConsumed += pos;
    return added;
}

const File &Reader::subfile(int k) const
{
    auto it = m_Subfiles.find(k);
    if (it == m_Subfiles.end())
        it = m_Subfiles.emplace(k, File(data_file(m_Dir, k), File::Mode::Read)).first;
    return it->second;
}

codecs::Bytes Reader::read_stored(const BlockRecord &rec) const
{
    const auto &f = subfile(rec.subfile_id);
    if (rec.offset + rec.stored_nbytes > f.size())
        throw CorruptBlock("block of \"" + rec.var + "\" lies beyond the end of its sub-file",
                           rec.subfile_id, rec.offset);
    return f.read_at(rec.offset, static_cast<std::size_t>(rec.stored_nbytes));
}

codecs::Bytes Reader::read_block_unchecked(const BlockRecord &rec) const
{
    const auto &def = variable(rec.var);
    return codecs::decode(codecs::header_of(rec, def.dtype), read_stored(rec));
}

codecs::Bytes Reader::read(const std::string &var, std::uint64_t step, const Selection &sel) const
{
    const auto &def = variable(var);
    if (auto violation = validate_selection(sel, def))
        throw ShapeError("selection for \"" + var + "\": " + *violation);
    const auto &idx = step_index(step);
    const auto es = def.dtype.elem_size();
    const auto n = sel.element_count();
    codecs::Bytes out(n * es);
    // one byte per element; the ones buffer is laid out as each region
    codecs::Bytes covered(n, std::byte{0});
    codecs::Bytes ones;

    for (const auto &rec : idx.blocks)
    {
        if (rec.var != var)
            continue;
        const auto region = intersect(rec.selection, sel);
        if (!region)
            continue;
        const auto raw = codecs::decode_checked(rec, def.dtype, read_stored(rec));
        copy_region(raw.data(), rec.selection, out.data(), sel, *region, es);
        const auto rn = region->element_count();
        if (ones.size() < rn)
            ones.assign(rn, std::byte{1});
        copy_region(ones.data(), *region, covered.data(), sel, *region, 1);
    }
    if (const void *gap = std::memchr(covered.data(), 0, covered.size()))
    {
        const auto i = static_cast<const std::byte *>(gap) - covered.data();
        throw CoverageError("step " + std::to_string(step) + " of \"" + var +
                            "\" has no block covering element " + std::to_string(i) +
                            " of the selection");
    }
    return out;
}

ConsolidateReport consolidate(const std::filesystem::path &source,
                              const std::filesystem::path &out_path)
{
    ConsolidateReport report;
    const auto t_all = Clock::now();
    if (FlatFileReader::is_flat_file(source))
    {
        const FlatFileReader in(source);
        report.steps = in.header().steps;
        std::filesystem::copy_file(source, out_path,
                                   std::filesystem::copy_options::overwrite_existing);
        report.total_seconds =
            std::chrono::duration<double>(Clock::now() - t_all).count();
        return report;
    }

    const Reader in(source);
    FlatHeader header;
    const auto steps = in.steps();
    header.steps = steps.size();
    header.variables = in.variables();
    bool dense = true;
    for (std::size_t i = 0; i < steps.size(); ++i)
        dense = dense && steps[i] == i;
    if (!dense)
        header.step_ids = steps;
    auto out = FlatFileWriter::create(out_path, std::move(header));
    for (std::size_t pos = 0; pos < steps.size(); ++pos)
    {
        const auto t0 = Clock::now();
        for (std::size_t v = 0; v < in.variables().size(); ++v)
            out.write_var(pos, v, in.read(in.variables()[v].name, steps[pos]));
        report.step_seconds.push_back(
            std::chrono::duration<double>(Clock::now() - t0).count());
    }
    out.sync();
    report.steps = steps.size();
    report.total_seconds = std::chrono::duration<double>(Clock::now() - t_all).count();
    return report;
}

} // end namespace miniio::container
