/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/container/flat_file.hpp"
#include "miniio/core/def_json.hpp"
#include "miniio/core/error.hpp"
#include "miniio/net/socket.hpp"

#include <cstring>

namespace miniio::container
{

std::string FlatHeader::serialize() const
{
    nlohmann::ordered_json j;
    j["format_version"] = format_version;
    j["steps"] = steps;
    j["variables"] = defs_to_json(variables);
    if (step_ids)
        j["step_ids"] = *step_ids;
    return j.dump();
}

std::uint64_t FlatHeader::step_bytes() const noexcept
{
    std::uint64_t n = 0;
    for (const auto &v : variables)
        n += v.nbytes();
    return n;
}

FlatLayout::FlatLayout(FlatHeader header)
: m_Header(std::move(header)), m_HeaderText(m_Header.serialize()),
  m_DataOffset(sizeof(kFlatMagic) + 8 + m_HeaderText.size())
{
    m_VarPrefix.push_back(0);
    for (const auto &v : m_Header.variables)
        m_VarPrefix.push_back(m_VarPrefix.back() + v.nbytes());
}

std::uint64_t FlatLayout::var_offset(std::uint64_t step_pos, std::size_t var) const
{
    if (step_pos >= m_Header.steps || var >= m_Header.variables.size())
        throw IndexError("flat file has no step position " + std::to_string(step_pos) +
                         " / variable " + std::to_string(var));
    return m_DataOffset + step_pos * m_VarPrefix.back() + m_VarPrefix[var];
}

std::uint64_t FlatLayout::total_size() const noexcept
{
    return m_DataOffset + m_Header.steps * m_VarPrefix.back();
}

std::size_t FlatLayout::var_index(const std::string &name) const
{
    for (std::size_t i = 0; i < m_Header.variables.size(); ++i)
        if (m_Header.variables[i].name == name)
            return i;
    throw FormatError("flat file has no variable \"" + name + "\"");
}

FlatFileWriter FlatFileWriter::create(const std::filesystem::path &path, FlatHeader header,
                                      std::shared_ptr<PfsThrottle> throttle)
{
    FlatLayout layout(std::move(header));
    File file(path, File::Mode::Create, std::move(throttle));
    const auto text = layout.header().serialize();
    std::vector<std::byte> head(sizeof(kFlatMagic) + 8 + text.size());
    std::memcpy(head.data(), kFlatMagic, sizeof(kFlatMagic));
    net::put_u64le(head.data() + 4, text.size());
    std::memcpy(head.data() + 12, text.data(), text.size());
    file.write_at(0, head);
    return FlatFileWriter(std::move(file), std::move(layout));
}

FlatFileWriter FlatFileWriter::attach(const std::filesystem::path &path, FlatHeader header,
                                      std::shared_ptr<PfsThrottle> throttle)
{
    return FlatFileWriter(File(path, File::Mode::ReadWrite, std::move(throttle)),
                          FlatLayout(std::move(header)));
}

void FlatFileWriter::write_var(std::uint64_t step_pos, std::size_t var,
                               std::span<const std::byte> data)
{
    const auto &def = m_Layout.header().variables.at(var);
    if (data.size() != def.nbytes())
        throw ShapeError("variable \"" + def.name + "\" expects " +
                         std::to_string(def.nbytes()) + " bytes, got " +
                         std::to_string(data.size()));
    m_File.write_at(m_Layout.var_offset(step_pos, var), data);
}

void FlatFileWriter::write_at(std::uint64_t offset, std::span<const std::byte> data)
{
    m_File.write_at(offset, data);
}

FlatLayout FlatFileReader::read_layout(const File &file)
{
    if (file.size() < 12)
        throw FormatError(file.path().string() + " is too short for a flat file");
    std::byte head[12];
    file.read_at(0, head);
    if (std::memcmp(head, kFlatMagic, 4) != 0)
        throw FormatError(file.path().string() + " lacks the CFF1 magic");
    const auto len = net::get_u64le(head + 4);
    if (len > file.size() - 12)
        throw FormatError(file.path().string() + " header length exceeds file");
    auto text = file.read_at(12, static_cast<std::size_t>(len));

    FlatHeader header;
    try
    {
        const auto j = nlohmann::json::parse(reinterpret_cast<const char *>(text.data()),
                                             reinterpret_cast<const char *>(text.data()) +
                                                 text.size());
        header.format_version = j.at("format_version").get<int>();
        header.steps = j.at("steps").get<std::uint64_t>();
        header.variables = defs_from_json(j.at("variables"));
        if (j.contains("step_ids"))
            header.step_ids = j.at("step_ids").get<std::vector<std::uint64_t>>();
    }
    catch (const nlohmann::json::exception &e)
    {
        throw FormatError(file.path().string() + ": bad header: " + e.what());
    }
    if (header.format_version != 1)
        throw FormatError("unsupported flat file version " +
                          std::to_string(header.format_version));
    FlatLayout layout(std::move(header));
    if (layout.data_offset() != 12 + len)
        throw FormatError(file.path().string() + ": header is not in canonical form");
    if (file.size() < layout.total_size())
        throw FormatError(file.path().string() + " is truncated: " +
                          std::to_string(file.size()) + " of " +
                          std::to_string(layout.total_size()) + " bytes");
    return layout;
}

FlatFileReader::FlatFileReader(const std::filesystem::path &path)
: m_File(path, File::Mode::Read), m_Layout(read_layout(m_File))
{
}

std::vector<std::byte> FlatFileReader::read_var(std::uint64_t step_pos, std::size_t var) const
{
    const auto &def = m_Layout.header().variables.at(var);
    return m_File.read_at(m_Layout.var_offset(step_pos, var),
                          static_cast<std::size_t>(def.nbytes()));
}

bool FlatFileReader::is_flat_file(const std::filesystem::path &path)
{
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec))
        return false;
    try
    {
        File f(path, File::Mode::Read);
        if (f.size() < 4)
            return false;
        std::byte magic[4];
        f.read_at(0, magic);
        return std::memcmp(magic, kFlatMagic, 4) == 0;
    }
    catch (const Error &)
    {
        return false;
    }
}

} // end namespace miniio::container
