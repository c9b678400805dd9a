#include "calica/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "calica/image.hpp"

namespace calica::nn {

namespace {

constexpr char kMagic[8] = {'C', 'A', 'L', 'I', 'C', 'A', '0', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

struct Reader {
    const std::vector<std::uint8_t>& b;
    size_t pos = 0;

    std::uint32_t u32() {
        if (b.size() - pos < 4)
            throw ParseError("malformed checkpoint: truncated at byte " + std::to_string(pos));
        std::uint32_t v = static_cast<std::uint32_t>(b[pos]) |
                          (static_cast<std::uint32_t>(b[pos + 1]) << 8) |
                          (static_cast<std::uint32_t>(b[pos + 2]) << 16) |
                          (static_cast<std::uint32_t>(b[pos + 3]) << 24);
        pos += 4;
        return v;
    }

    void bytes(void* dst, size_t n) {
        if (b.size() - pos < n)
            throw ParseError("malformed checkpoint: truncated at byte " + std::to_string(pos));
        std::memcpy(dst, b.data() + pos, n);
        pos += n;
    }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const CheckpointEntry& e : entries) {
        put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out.insert(out.end(), e.name.begin(), e.name.end());
        put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
        size_t count = 1;
        for (int d : e.shape) {
            put_u32(out, static_cast<std::uint32_t>(d));
            count *= static_cast<size_t>(d);
        }
        if (count != e.data.size())
            throw UserError("checkpoint entry '" + e.name + "': shape/data mismatch");
        for (float v : e.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

std::vector<CheckpointEntry> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw ParseError("not a CALICA01 checkpoint (bad magic)");
    Reader r{bytes, 8};
    std::uint32_t count = r.u32();
    if (count > 1u << 20) throw ParseError("malformed checkpoint: implausible entry count");
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        std::uint32_t name_len = r.u32();
        if (name_len > 4096) throw ParseError("malformed checkpoint: name too long");
        e.name.resize(name_len);
        r.bytes(e.name.data(), name_len);
        std::uint32_t rank = r.u32();
        if (rank > 8) throw ParseError("malformed checkpoint: rank too large");
        size_t total = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t dim = r.u32();
            if (dim == 0 || dim > 1u << 28)
                throw ParseError("malformed checkpoint: bad dimension in '" + e.name + "'");
            e.shape.push_back(static_cast<int>(dim));
            total *= dim;
        }
        if (total > 1u << 28) throw ParseError("malformed checkpoint: entry too large");
        e.data.resize(total);
        for (size_t j = 0; j < total; ++j) {
            std::uint32_t u = r.u32();
            e.data[j] = std::bit_cast<float>(u);
        }
        entries.push_back(std::move(e));
    }
    if (r.pos != bytes.size())
        throw ParseError("malformed checkpoint: " + std::to_string(bytes.size() - r.pos) +
                         " trailing bytes");
    return entries;
}

void save_checkpoint(const std::vector<CheckpointEntry>& entries,
                     const std::filesystem::path& path) {
    write_file_bytes(path, encode_checkpoint(entries));
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file_bytes(path));
}

}  // namespace calica::nn
