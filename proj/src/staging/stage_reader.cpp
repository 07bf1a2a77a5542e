/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 */

#include "miniio/staging/stage_reader.hpp"
#include "miniio/codecs/block.hpp"
#include "miniio/core/error.hpp"

#include <cstring>

namespace miniio::staging
{

namespace
{
[[noreturn]] void throw_err(const net::Frame &f, const std::string &context)
{
    throw ProtocolError(context + ": writer replied " + parse_err(f.text()));
}
} // end anonymous namespace

StageReader::StageReader(const std::string &endpoint, std::chrono::milliseconds timeout)
: m_Timeout(timeout)
{
    const auto ep = resolve_endpoint(endpoint);
    m_Control = net::Socket::connect(ep, timeout);
    HelloR hello;
    hello.host = local_host();
    m_Control.send_frame(tag(MsgType::HelloR), hello.dump());
    const auto reply = m_Control.recv_frame(timeout);
    if (!reply)
        throw ProtocolError("writer closed the control connection during the handshake");
    if (reply->type == tag(MsgType::Err))
        throw_err(*reply, "handshake refused");
    if (reply->type != tag(MsgType::HelloW))
        throw ProtocolError("expected HELLO_W, got message type " + std::to_string(reply->type));
    m_Hello = HelloW::parse(reply->text());
    if (m_Hello.version != kProtocolVersion)
        throw ProtocolError("writer speaks protocol version " + std::to_string(m_Hello.version));
    if (static_cast<int>(m_Hello.dataplane.endpoints.size()) != m_Hello.world_size)
        throw ProtocolError("HELLO_W lists " +
                            std::to_string(m_Hello.dataplane.endpoints.size()) +
                            " data endpoints for " + std::to_string(m_Hello.world_size) +
                            " ranks");

    HelloR data_hello;
    data_hello.role = "data";
    data_hello.host = hello.host;
    data_hello.reader_id = m_Hello.reader_id;
    for (const auto &dep : m_Hello.dataplane.endpoints)
    {
        m_Data.push_back(net::Socket::connect(dep, timeout));
        m_Data.back().send_frame(tag(MsgType::HelloR), data_hello.dump());
    }
    HelloR ready = data_hello;
    ready.role = "ready";
    m_Control.send_frame(tag(MsgType::HelloR), ready.dump());
}

StageReader::~StageReader() { close(); }

const VariableDef &StageReader::variable(const std::string &name) const
{
    for (const auto &v : m_Hello.variables)
        if (v.name == name)
            return v;
    throw IndexError("stream has no variable \"" + name + "\"");
}

std::optional<StepIndex> StageReader::begin_step(std::chrono::milliseconds timeout)
{
    if (m_Current)
        throw ProtocolError("begin_step while step " + std::to_string(m_Current->step) +
                            " is still held");
    if (m_Ended)
        return std::nullopt;
    const auto f = m_Control.recv_frame(timeout);
    if (!f)
        throw ProtocolError("writer went away without closing the stream");
    switch (static_cast<MsgType>(f->type))
    {
    case MsgType::StepAnnounce:
        try
        {
            m_Current = index_parse(f->text());
        }
        catch (const ParseError &e)
        {
            throw ProtocolError(std::string("bad STEP_ANNOUNCE: ") + e.what());
        }
        return m_Current;
    case MsgType::Close:
        m_Ended = true;
        return std::nullopt;
    case MsgType::Err:
        throw_err(*f, "stream aborted");
    default:
        throw ProtocolError("unexpected message type " + std::to_string(f->type) +
                            " on the control connection");
    }
}

codecs::Bytes StageReader::fetch(const BlockRecord &rec, const VariableDef &def)
{
    const int rank = rec.writer_rank;
    if (rank < 0 || rank >= m_Hello.world_size)
        throw ProtocolError("announced block names rank " + std::to_string(rank));
    if (m_Hello.dataplane.kind == Dataplane::Shm)
    {
        auto it = m_Mapped.find(rank);
        if (it == m_Mapped.end())
            it = m_Mapped
                     .emplace(rank, ShmSegment::open(
                                        m_Hello.dataplane.segment_name(rank, m_Current->step)))
                     .first;
        const auto seg = it->second.bytes();
        if (rec.offset + rec.stored_nbytes > seg.size())
            throw CorruptBlock("block of \"" + rec.var + "\" lies beyond its segment",
                               rec.subfile_id, rec.offset);
        return codecs::decode_checked(rec, def.dtype, seg.subspan(rec.offset, rec.stored_nbytes));
    }

    auto &sock = m_Data[static_cast<std::size_t>(rank)];
    GetReq req{m_Current->step, rec.var, rank};
    sock.send_frame(tag(MsgType::GetReq), req.dump());
    const auto f = sock.recv_frame(m_Timeout);
    if (!f)
        throw ProtocolError("writer rank " + std::to_string(rank) + " closed the data connection");
    if (f->type == tag(MsgType::Err))
        throw_err(*f, "GET_REQ for \"" + rec.var + "\"");
    if (f->type != tag(MsgType::Data))
        throw ProtocolError("expected DATA, got message type " + std::to_string(f->type));
    const auto payload = parse_data(*f);
    if (payload.header != codecs::header_of(rec, def.dtype))
        throw ProtocolError("DATA header disagrees with the announced block of \"" + rec.var +
                            "\"");
    return codecs::decode_checked(rec, def.dtype, payload.body);
}

codecs::Bytes StageReader::get(const std::string &var, const Selection &sel)
{
    if (!m_Current)
        throw ProtocolError("get(\"" + var + "\") outside a step");
    const auto &def = variable(var);
    if (auto violation = validate_selection(sel, def))
        throw ShapeError("selection for \"" + var + "\": " + *violation);
    bool announced = false;
    for (const auto &rec : m_Current->blocks)
        announced = announced || rec.var == var;
    if (!announced)
        throw ProtocolError("variable \"" + var + "\" was not announced in step " +
                            std::to_string(m_Current->step));

    const auto es = def.dtype.elem_size();
    const auto n = sel.element_count();
    codecs::Bytes out(n * es);
    codecs::Bytes covered(n, std::byte{0});
    codecs::Bytes ones;
    for (const auto &rec : m_Current->blocks)
    {
        if (rec.var != var)
            continue;
        const auto region = intersect(rec.selection, sel);
        if (!region)
            continue;
        const auto raw = fetch(rec, def);
        copy_region(raw.data(), rec.selection, out.data(), sel, *region, es);
        const auto rn = region->element_count();
        if (ones.size() < rn)
            ones.assign(rn, std::byte{1});
        copy_region(ones.data(), *region, covered.data(), sel, *region, 1);
    }
    if (const void *gap = std::memchr(covered.data(), 0, covered.size()))
    {
        const auto i = static_cast<const std::byte *>(gap) - covered.data();
        throw CoverageError("step " + std::to_string(m_Current->step) + " of \"" + var +
                            "\" has no block covering element " + std::to_string(i) +
                            " of the selection");
    }
    return out;
}

void StageReader::end_step()
{
    if (!m_Current)
        throw ProtocolError("end_step without a current step");
    m_Mapped.clear();
    const auto msg = release_payload(m_Current->step);
    m_Current.reset();
    for (auto &s : m_Data)
        s.send_frame(tag(MsgType::StepRelease), msg);
}

void StageReader::close()
{
    m_Mapped.clear();
    m_Current.reset();
    for (auto &s : m_Data)
        s.close();
    m_Data.clear();
    m_Control.close();
}

} // end namespace miniio::staging
