#include "radarfuse/recording_io.hpp"

#include <fstream>
#include <iterator>
#include <limits>

#include "byte_codec.hpp"

namespace radarfuse {

namespace {

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorKind::contract, std::string("recording: ") + what + " does not fit the u32 header field");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_recording(const Recording& rec) {
    const std::size_t n_nodes = rec.frames.size();
    for (std::size_t j = 0; j < n_nodes; ++j) {
        const auto& f = rec.frames[j];
        if (f.node != j || f.fast_bins != rec.fast_bins || f.pulses != rec.pulses ||
            f.samples.size() != rec.fast_bins * rec.pulses) {
            fail(ErrorKind::dimension, "recording: frame " + std::to_string(j) + " disagrees with the recording header");
        }
    }
    detail::ByteWriter w;
    w.reserve(24 + n_nodes * rec.fast_bins * rec.pulses * 8 + rec.labels.size() * 16);
    w.magic("RDR1");
    w.u32(checked_u32(n_nodes, "node count"));
    w.u32(checked_u32(rec.fast_bins, "fast-bin count"));
    w.u32(checked_u32(rec.pulses, "pulse count"));
    w.u32(checked_u32(rec.participants, "participant count"));
    for (const auto& f : rec.frames) {
        for (const auto& y : f.samples) {
            w.f32(y.real());
            w.f32(y.imag());
        }
    }
    w.u32(checked_u32(rec.labels.size(), "label count"));
    for (const auto& l : rec.labels) {
        w.u32(l.start);
        w.u32(l.length);
        w.u32(l.activity);
        w.u32(l.participant);
    }
    return w.take();
}

Recording decode_recording(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("RDR1");
    const std::size_t header_at = r.offset();
    const std::uint32_t n_nodes = r.u32();
    const std::uint32_t fast = r.u32();
    const std::uint32_t pulses = r.u32();
    const std::uint32_t participants = r.u32();
    if (n_nodes == 0) throw ParseError(header_at, "node count must be at least 1");
    if (fast == 0 || pulses == 0) throw ParseError(header_at, "frame extents must be positive");

    Recording rec;
    rec.fast_bins = fast;
    rec.pulses = pulses;
    rec.participants = participants;
    const std::size_t per_frame = static_cast<std::size_t>(fast) * pulses;
    r.require(static_cast<std::size_t>(n_nodes) * per_frame * 8, "frame payload for " + std::to_string(n_nodes) + " nodes");
    rec.frames.resize(n_nodes);
    for (std::uint32_t j = 0; j < n_nodes; ++j) {
        auto& f = rec.frames[j];
        f.node = j;
        f.fast_bins = fast;
        f.pulses = pulses;
        f.samples.resize(per_frame);
        for (auto& y : f.samples) {
            const float re = r.f32();
            const float im = r.f32();
            y = {re, im};
        }
    }

    const std::uint32_t count = r.u32();
    r.require(static_cast<std::size_t>(count) * 16, "label table of " + std::to_string(count) + " entries");
    rec.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::size_t at = r.offset();
        WindowLabel l;
        l.start = r.u32();
        l.length = r.u32();
        l.activity = r.u32();
        l.participant = r.u32();
        if (l.length == 0 || static_cast<std::size_t>(l.start) + l.length > pulses) {
            throw ParseError(at, "label " + std::to_string(i) + " window exceeds " + std::to_string(pulses) + " pulses");
        }
        if (l.activity >= kActivityClasses) {
            throw ParseError(at, "label " + std::to_string(i) + " has class id " + std::to_string(l.activity));
        }
        if (l.participant >= participants) {
            throw ParseError(at, "label " + std::to_string(i) + " names participant " + std::to_string(l.participant) +
                                     " but the header declares " + std::to_string(participants));
        }
        rec.labels.push_back(l);
    }
    if (r.remaining() != 0) {
        throw ParseError(r.offset(), std::to_string(r.remaining()) + " unexpected trailing bytes");
    }
    return rec;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string() + " for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "failed reading " + path.string());
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

void save_recording(const Recording& recording, const std::filesystem::path& path) {
    write_file_bytes(path, encode_recording(recording));
}

Recording load_recording(const std::filesystem::path& path) { return decode_recording(read_file_bytes(path)); }

}  // namespace radarfuse
