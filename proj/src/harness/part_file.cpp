/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/harness/part_file.hpp"
#include "miniio/container/flat_file.hpp"
#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"
#include "miniio/net/socket.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>

namespace miniio::harness
{

namespace
{
constexpr std::size_t kPreamble = sizeof(kPartMagic) + 8;
constexpr std::string_view kPartInfix = ".part.";

PartHeader parse_header(const std::string &text, const std::filesystem::path &path)
{
    try
    {
        const auto j = nlohmann::json::parse(text);
        PartHeader h;
        h.format_version = j.at("format_version").get<int>();
        h.rank = j.at("rank").get<int>();
        h.world_size = j.at("world_size").get<int>();
        h.variables = defs_from_json(j.at("variables"));
        h.selection.start = j.at("selection").at("start").get<Dims>();
        h.selection.count = j.at("selection").at("count").get<Dims>();
        if (h.format_version != 1)
            throw FormatError("unsupported part file version " +
                              std::to_string(h.format_version));
        if (h.rank < 0 || h.rank >= h.world_size)
            throw FormatError("rank " + std::to_string(h.rank) + " outside world of " +
                              std::to_string(h.world_size));
        for (const auto &v : h.variables)
            if (auto bad = validate_selection(h.selection, v))
                throw FormatError("patch does not fit \"" + v.name + "\": " + *bad);
        return h;
    }
    catch (const nlohmann::json::exception &e)
    {
        throw FormatError(path.string() + ": bad part header: " + e.what());
    }
    catch (const ConfigError &e)
    {
        throw FormatError(path.string() + ": bad part header: " + e.what());
    }
}

/// Splits "<dir>/<stem>.part.<r>" into dir/stem; a bare prefix passes through.
std::filesystem::path stem_of(const std::filesystem::path &path)
{
    const auto name = path.filename().string();
    const auto at = name.rfind(kPartInfix);
    if (at == std::string::npos)
        return path;
    const auto tail = name.substr(at + kPartInfix.size());
    if (tail.empty() || !std::all_of(tail.begin(), tail.end(), ::isdigit))
        return path;
    return path.parent_path() / name.substr(0, at);
}
} // end anonymous namespace

std::string PartHeader::serialize() const
{
    nlohmann::ordered_json j;
    j["format_version"] = format_version;
    j["rank"] = rank;
    j["world_size"] = world_size;
    j["variables"] = defs_to_json(variables);
    j["selection"] = {{"start", selection.start}, {"count", selection.count}};
    return j.dump();
}

std::uint64_t PartHeader::step_bytes() const noexcept
{
    std::uint64_t n = 0;
    for (const auto &v : variables)
        n += selection.element_count() * v.dtype.elem_size();
    return n;
}

std::filesystem::path part_path(const std::filesystem::path &dir, const std::string &stem, int rank)
{
    return dir / (stem + std::string(kPartInfix) + std::to_string(rank));
}

PartWriter::PartWriter(const std::filesystem::path &path, PartHeader header,
                       std::shared_ptr<container::PfsThrottle> throttle)
: m_File(path, container::File::Mode::Create, std::move(throttle)), m_Header(std::move(header))
{
    const auto text = m_Header.serialize();
    std::vector<std::byte> head(kPreamble + text.size());
    std::memcpy(head.data(), kPartMagic, sizeof(kPartMagic));
    net::put_u64le(head.data() + 4, text.size());
    std::memcpy(head.data() + kPreamble, text.data(), text.size());
    m_File.append(head);
}

void PartWriter::append(std::span<const std::byte> patch) { m_File.append(patch); }

PartFile::PartFile(const std::filesystem::path &path)
: m_File(path, container::File::Mode::Read)
{
    const auto size = m_File.size();
    if (size < kPreamble)
        throw FormatError(path.string() + " is too short to be a part file");
    const auto pre = m_File.read_at(0, kPreamble);
    if (std::memcmp(pre.data(), kPartMagic, sizeof(kPartMagic)) != 0)
        throw FormatError(path.string() + " is not a part file");
    const auto hlen = net::get_u64le(pre.data() + 4);
    if (hlen > size - kPreamble)
        throw FormatError(path.string() + ": header runs past the end of the file");
    const auto text = m_File.read_at(kPreamble, static_cast<std::size_t>(hlen));
    m_Header = parse_header(std::string(reinterpret_cast<const char *>(text.data()), text.size()),
                            path);
    m_DataOffset = kPreamble + hlen;
    const auto per_step = m_Header.step_bytes();
    m_Steps = per_step ? (size - m_DataOffset) / per_step : 0;
}

std::vector<std::byte> PartFile::read_patch(std::uint64_t step, std::size_t var) const
{
    if (step >= m_Steps || var >= m_Header.variables.size())
        throw IndexError("part file has no step " + std::to_string(step) + " / variable " +
                         std::to_string(var));
    const auto n = m_Header.selection.element_count();
    std::uint64_t off = m_DataOffset + step * m_Header.step_bytes();
    for (std::size_t v = 0; v < var; ++v)
        off += n * m_Header.variables[v].dtype.elem_size();
    return m_File.read_at(off, static_cast<std::size_t>(n * m_Header.variables[var].dtype.elem_size()));
}

bool PartFile::is_part_file(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    char magic[4] = {};
    return in.read(magic, 4) && std::memcmp(magic, kPartMagic, 4) == 0;
}

PartSet::PartSet(const std::filesystem::path &path)
{
    const auto stem = stem_of(path);
    const auto dir = stem.parent_path().empty() ? std::filesystem::path(".") : stem.parent_path();
    const auto prefix = stem.filename().string() + std::string(kPartInfix);
    std::map<int, std::filesystem::path> found;
    std::error_code ec;
    for (const auto &e : std::filesystem::directory_iterator(dir, ec))
    {
        const auto name = e.path().filename().string();
        if (name.rfind(prefix, 0) != 0)
            continue;
        const auto tail = name.substr(prefix.size());
        if (tail.empty() || !std::all_of(tail.begin(), tail.end(), ::isdigit))
            continue;
        found[std::stoi(tail)] = e.path();
    }
    if (ec)
        throw FormatError("cannot list " + dir.string() + ": " + ec.message());
    if (found.empty())
        throw FormatError("no part files named " + (dir / prefix).string() + "*");

    for (const auto &[r, p] : found)
        m_Parts.push_back(std::make_unique<PartFile>(p));
    const auto &first = m_Parts.front()->header();
    const int world = first.world_size;
    if (static_cast<int>(m_Parts.size()) != world)
        throw FormatError("found " + std::to_string(m_Parts.size()) + " part files for a world of " +
                          std::to_string(world));
    m_Variables = first.variables;
    m_Steps = m_Parts.front()->steps();
    for (std::size_t i = 0; i < m_Parts.size(); ++i)
    {
        const auto &h = m_Parts[i]->header();
        if (h.rank != static_cast<int>(i) || h.world_size != world)
            throw FormatError("part file of rank " + std::to_string(i) + " names rank " +
                              std::to_string(h.rank) + " of " + std::to_string(h.world_size));
        if (h.variables != m_Variables)
            throw FormatError("part file of rank " + std::to_string(i) +
                              " disagrees on the variable definitions");
        m_Steps = std::min(m_Steps, m_Parts[i]->steps());
    }
}

std::vector<std::byte> PartSet::assemble(std::uint64_t step, std::size_t var) const
{
    const auto &def = m_Variables.at(var);
    const auto whole = Selection::whole(def.shape);
    const auto es = def.dtype.elem_size();
    std::vector<std::byte> out(def.nbytes());
    std::vector<std::byte> covered(def.element_count(), std::byte{0});
    std::vector<std::byte> ones;
    for (const auto &part : m_Parts)
    {
        const auto &sel = part->header().selection;
        const auto patch = part->read_patch(step, var);
        copy_region(patch.data(), sel, out.data(), whole, sel, es);
        if (ones.size() < sel.element_count())
            ones.assign(sel.element_count(), std::byte{1});
        copy_region(ones.data(), sel, covered.data(), whole, sel, 1);
    }
    if (const void *gap = std::memchr(covered.data(), 0, covered.size()))
        throw CoverageError("step " + std::to_string(step) + " of \"" + def.name +
                            "\": no part covers element " +
                            std::to_string(static_cast<const std::byte *>(gap) - covered.data()));
    return out;
}

StitchReport stitch(const std::filesystem::path &parts, const std::filesystem::path &out_path)
{
    const auto t0 = std::chrono::steady_clock::now();
    PartSet set(parts);
    container::FlatHeader header;
    header.steps = set.steps();
    header.variables = set.variables();
    auto out = container::FlatFileWriter::create(out_path, header);
    for (std::uint64_t s = 0; s < set.steps(); ++s)
        for (std::size_t v = 0; v < set.variables().size(); ++v)
            out.write_var(s, v, set.assemble(s, v));
    out.sync();
    StitchReport rep;
    rep.steps = set.steps();
    rep.parts = set.parts();
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

} // end namespace miniio::harness
