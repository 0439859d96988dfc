#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dualinf/errors.hpp"
#include "dualinf/idx.hpp"

using namespace dualinf;
namespace fs = std::filesystem;

namespace {

idx::IdxData small_images() {
    idx::IdxData d;
    d.shape = {2, 3, 4};
    d.data.resize(24);
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] = static_cast<std::uint8_t>(i * 7);
    return d;
}

}  // namespace

TEST_CASE("idx image round-trip") {
    const auto d = small_images();
    const auto bytes = idx::serialize(d);
    CHECK(bytes.size() == 16 + 24);
    // magic for u8 rank-3
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 0);
    CHECK(bytes[2] == 0x08);
    CHECK(bytes[3] == 0x03);
    const auto back = idx::parse(bytes);
    CHECK(back.shape == d.shape);
    CHECK(back.data == d.data);
}

TEST_CASE("idx label round-trip") {
    idx::IdxData d;
    d.shape = {5};
    d.data = {0, 1, 2, 3, 9};
    const auto bytes = idx::serialize(d);
    CHECK(bytes[3] == 0x01);
    const auto back = idx::parse(bytes);
    CHECK(back.shape == d.shape);
    CHECK(back.data == d.data);
}

TEST_CASE("idx unknown magic throws") {
    auto bytes = idx::serialize(small_images());
    bytes[3] = 0x99;
    CHECK_THROWS_AS(idx::parse(bytes), FormatError);
}

TEST_CASE("idx truncated payload throws") {
    auto bytes = idx::serialize(small_images());
    bytes.resize(bytes.size() - 5);
    CHECK_THROWS_AS(idx::parse(bytes), FormatError);
}

TEST_CASE("idx file round-trip and missing file") {
    const auto dir = fs::temp_directory_path() / "dualinf_idx_test";
    fs::create_directories(dir);
    const auto path = (dir / "t.idx").string();
    const auto d = small_images();
    idx::write_file(path, d);
    const auto back = idx::read_file(path);
    CHECK(back.shape == d.shape);
    CHECK(back.data == d.data);
    CHECK_THROWS_AS(idx::read_file((dir / "absent.idx").string()), IoError);
    fs::remove_all(dir);
}
