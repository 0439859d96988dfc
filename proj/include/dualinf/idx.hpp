#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dualinf::idx {

// IDX container (big-endian header, unsigned-byte payload). Magic
// 0x00000803 carries N x H x W images, 0x00000801 carries N labels.

struct IdxData {
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> data;
};

IdxData parse(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize(const IdxData& d);

IdxData read_file(const std::string& path);
void write_file(const std::string& path, const IdxData& d);

}  // namespace dualinf::idx
