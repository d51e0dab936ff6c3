#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bfn/autodiff/params.hpp"
#include "bfn/binary_io.hpp"
#include "bfn/error.hpp"

namespace bfn::ad {

inline constexpr char kCheckpointMagic[4] = {'B', 'F', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint8_t kDtypeF64 = 1;

struct CheckpointEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;
};

inline std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    io::Writer w;
    w.raw(std::string(kCheckpointMagic, 4));
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        if (e.name.size() > 0xFFFF) throw validation_error("parameter name too long");
        std::size_t expect = 1;
        for (auto d : e.dims) expect *= d;
        if (expect != e.data.size()) throw shape_error("checkpoint entry " + e.name + " dims disagree with data");
        w.u16(static_cast<std::uint16_t>(e.name.size()));
        w.raw(e.name);
        w.u8(kDtypeF64);
        w.u32(static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) w.u32(d);
        for (double v : e.data) w.f64(v);
    }
    w.seal();
    return w.buffer();
}

inline std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::string(reinterpret_cast<const char*>(bytes.data()), 4) != std::string(kCheckpointMagic, 4)) {
        throw bad_magic_error("not a BFNC checkpoint");
    }
    if (bytes.size() < 16) throw truncated_error("checkpoint too short");
    const auto body = bytes.first(bytes.size() - 4);
    io::Reader tail(bytes.last(4));
    const bool crc_ok = io::crc32(body) == tail.u32();

    io::Reader r(body);
    (void)r.str(4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) throw bad_version_error("unsupported checkpoint version " + std::to_string(version));
    std::vector<CheckpointEntry> out;
    try {
        const std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            CheckpointEntry e;
            e.name = r.str(r.u16());
            const std::uint8_t dtype = r.u8();
            if (dtype != kDtypeF64) throw format_error("bad_dtype", "unsupported dtype in " + e.name);
            const std::uint32_t ndim = r.u32();
            std::size_t n = 1;
            for (std::uint32_t d = 0; d < ndim; ++d) {
                e.dims.push_back(r.u32());
                n *= e.dims.back();
            }
            r.need(n * 8);
            e.data.resize(n);
            for (auto& v : e.data) v = r.f64();
            out.push_back(std::move(e));
        }
        if (r.remaining() != 0) throw format_error("trailing_bytes", "checkpoint has trailing bytes");
    } catch (const error&) {
        if (!crc_ok) {
            try {
                throw;
            } catch (const truncated_error&) {
                throw;
            } catch (...) {
                throw checksum_error("checkpoint checksum mismatch");
            }
        }
        throw;
    }
    if (!crc_ok) throw checksum_error("checkpoint checksum mismatch");
    return out;
}

inline std::vector<CheckpointEntry> to_entries(const ParamStore& store) {
    std::vector<CheckpointEntry> out;
    for (const auto& p : store.entries()) {
        out.push_back({p.name, {static_cast<std::uint32_t>(p.tensor.rows()), static_cast<std::uint32_t>(p.tensor.cols())},
                       p.tensor.value()});
    }
    return out;
}

/// Copies checkpoint values into `store`, matching by name; shapes must agree.
inline void load_into(ParamStore& store, const std::vector<CheckpointEntry>& entries) {
    for (auto& p : store.entries()) {
        const CheckpointEntry* hit = nullptr;
        for (const auto& e : entries)
            if (e.name == p.name) hit = &e;
        if (!hit) throw validation_error("checkpoint lacks parameter " + p.name);
        if (hit->data.size() != p.tensor.size()) throw shape_error("checkpoint shape mismatch for " + p.name);
        p.tensor.mutable_value() = hit->data;
    }
}

/// Text stored as one f64 per byte under a reserved name, keeping the
/// single-dtype layout.
inline CheckpointEntry text_entry(const std::string& name, const std::string& text) {
    CheckpointEntry e{name, {static_cast<std::uint32_t>(text.size())}, {}};
    e.data.reserve(text.size());
    for (unsigned char c : text) e.data.push_back(static_cast<double>(c));
    return e;
}

inline std::string entry_text(const CheckpointEntry& e) {
    std::string s;
    s.reserve(e.data.size());
    for (double v : e.data) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    return s;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
    io::write_file_atomic(path, encode_checkpoint(entries));
}

inline std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace bfn::ad
