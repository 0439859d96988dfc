#include "dualinf/idx.hpp"

#include <fstream>

#include "dualinf/errors.hpp"

namespace dualinf::idx {

namespace {

constexpr std::uint32_t kMagicImages = 0x00000803;
constexpr std::uint32_t kMagicLabels = 0x00000801;

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxData parse(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4) throw FormatError("idx: input shorter than the 4-byte magic word");
    const std::uint32_t magic = read_be32(bytes.data());
    std::size_t ndims;
    if (magic == kMagicImages) {
        ndims = 3;
    } else if (magic == kMagicLabels) {
        ndims = 1;
    } else {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw FormatError(std::string("idx: unknown magic word ") + buf);
    }
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) throw FormatError("idx: truncated dimension header");
    IdxData d;
    std::int64_t count = 1;
    for (std::size_t i = 0; i < ndims; ++i) {
        const auto extent = static_cast<std::int64_t>(read_be32(bytes.data() + 4 + 4 * i));
        d.shape.push_back(extent);
        count *= extent;
    }
    const std::size_t expected = header + static_cast<std::size_t>(count);
    if (bytes.size() < expected)
        throw FormatError("idx: payload truncated, expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(bytes.size()));
    d.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                  bytes.begin() + static_cast<std::ptrdiff_t>(expected));
    return d;
}

std::vector<std::uint8_t> serialize(const IdxData& d) {
    std::vector<std::uint8_t> out;
    if (d.shape.size() == 3) {
        write_be32(out, kMagicImages);
    } else if (d.shape.size() == 1) {
        write_be32(out, kMagicLabels);
    } else {
        throw FormatError("idx: only rank-1 labels or rank-3 images are supported");
    }
    std::int64_t count = 1;
    for (auto e : d.shape) {
        write_be32(out, static_cast<std::uint32_t>(e));
        count *= e;
    }
    if (count != static_cast<std::int64_t>(d.data.size()))
        throw FormatError("idx: shape/payload mismatch");
    out.insert(out.end(), d.data.begin(), d.data.end());
    return out;
}

IdxData read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return parse(bytes);
}

void write_file(const std::string& path, const IdxData& d) {
    const auto bytes = serialize(d);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("idx: cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("idx: short write to " + path);
}

}  // namespace dualinf::idx
