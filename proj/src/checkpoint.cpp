#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "dualinf/errors.hpp"
#include "dualinf/trainer.hpp"

// Checkpoint file layout:
//   8 bytes magic "DAICKPT1"
//   u32 LE header length, then UTF-8 JSON header (epoch, step, rng state,
//     optimizer step counts, full train config, array name/shape/offset table)
//   raw little-endian f32 payload
//   u32 LE CRC32 over header+payload

namespace dualinf::train {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'A', 'I', 'C', 'K', 'P', 'T', '1'};

struct ArrayRef {
    std::string name;
    Shape shape;
    const std::vector<float>* data;
};

void collect_store(const nets::ParamStore& store, const std::string& prefix,
                   std::vector<ArrayRef>& out) {
    for (const auto& [name, t] : store.items)
        out.push_back({prefix + "/" + name, t.shape(), &t.data()});
}

void collect_moments(const nets::ParamStore& store, Adam& opt, const std::string& prefix,
                     std::vector<ArrayRef>& out) {
    auto& m = opt.moments_m();
    auto& v = opt.moments_v();
    for (std::size_t i = 0; i < store.items.size(); ++i) {
        if (!store.items[i].second.requires_grad()) continue;
        const Shape flat{static_cast<i64>(m[i].size())};
        out.push_back({prefix + "_m/" + store.items[i].first, flat, &m[i]});
        out.push_back({prefix + "_v/" + store.items[i].first, flat, &v[i]});
    }
}

std::uint32_t read_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

}  // namespace

void Trainer::save(const std::string& path) const {
    auto& self = const_cast<Trainer&>(*this);
    std::vector<ArrayRef> arrays;
    collect_store(self.models_.gen_params, "g", arrays);
    collect_store(self.models_.disc_params, "d", arrays);
    collect_moments(self.models_.gen_params, self.g_opt_, "g", arrays);
    collect_moments(self.models_.disc_params, self.d_opt_, "d", arrays);

    json header;
    header["version"] = std::string(kMagic, 8);
    header["epoch"] = epoch_;
    header["step"] = step_;
    const auto st = self.rng_.save_state();
    header["rng"] = std::vector<std::uint64_t>(st.begin(), st.end());
    header["g_opt_steps"] = g_opt_.step_count();
    header["d_opt_steps"] = d_opt_.step_count();
    header["config"] = json::parse(train_config_to_json(cfg_));
    json table = json::array();
    i64 offset = 0;
    for (const auto& a : arrays) {
        table.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
        offset += static_cast<i64>(a.data->size());
    }
    header["arrays"] = table;
    header["payload_floats"] = offset;
    const std::string header_text = header.dump();

    std::string blob;
    blob.reserve(12 + header_text.size() + static_cast<std::size_t>(offset) * 4);
    blob.append(kMagic, 8);
    write_u32(blob, static_cast<std::uint32_t>(header_text.size()));
    blob += header_text;
    for (const auto& a : arrays)
        blob.append(reinterpret_cast<const char*>(a.data->data()), a.data->size() * 4);
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(blob.data() + 8), static_cast<uInt>(blob.size() - 8)));
    write_u32(blob, crc);

    // atomic: write a temp file in the same directory, then rename
    namespace fs = std::filesystem;
    const auto tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("checkpoint: cannot write " + tmp);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) throw IoError("checkpoint: short write to " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: rename to " + path + " failed: " + ec.message());
}

Trainer Trainer::from_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path + " (train first?)");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, 8) != 0)
        throw FormatError("checkpoint: bad or incompatible magic in " + path +
                          " (expected DAICKPT1)");
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    const std::uint32_t header_len = read_u32(bytes + 8);
    if (blob.size() < 16 + static_cast<std::size_t>(header_len))
        throw FormatError("checkpoint: truncated header in " + path);
    const std::uint32_t stored_crc = read_u32(bytes + blob.size() - 4);
    const auto computed_crc = static_cast<std::uint32_t>(
        crc32(0, bytes + 8, static_cast<uInt>(blob.size() - 12)));
    if (stored_crc != computed_crc)
        throw FormatError("checkpoint: checksum mismatch in " + path +
                          " (file corrupt or tampered)");

    json header;
    try {
        header = json::parse(blob.substr(12, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header JSON: ") + e.what());
    }
    if (header.at("version").get<std::string>() != std::string(kMagic, 8))
        throw FormatError("checkpoint: version mismatch in " + path);

    Trainer t(train_config_from_json(header.at("config").dump()));
    t.epoch_ = header.at("epoch").get<i64>();
    t.step_ = header.at("step").get<i64>();
    const auto rs = header.at("rng").get<std::vector<std::uint64_t>>();
    std::array<std::uint64_t, 6> state{};
    if (rs.size() != state.size()) throw FormatError("checkpoint: bad rng state length");
    std::copy(rs.begin(), rs.end(), state.begin());
    t.rng_.restore_state(state);
    t.g_opt_.set_step_count(header.at("g_opt_steps").get<i64>());
    t.d_opt_.set_step_count(header.at("d_opt_steps").get<i64>());

    const i64 payload_floats = header.at("payload_floats").get<i64>();
    const std::size_t payload_off = 12 + header_len;
    if (blob.size() != payload_off + static_cast<std::size_t>(payload_floats) * 4 + 4)
        throw FormatError("checkpoint: payload length mismatch in " + path);
    const auto* payload = reinterpret_cast<const float*>(blob.data() + payload_off);

    std::vector<ArrayRef> arrays;
    collect_store(t.models_.gen_params, "g", arrays);
    collect_store(t.models_.disc_params, "d", arrays);
    collect_moments(t.models_.gen_params, t.g_opt_, "g", arrays);
    collect_moments(t.models_.disc_params, t.d_opt_, "d", arrays);

    for (const auto& entry : header.at("arrays")) {
        const auto name = entry.at("name").get<std::string>();
        const auto offset = entry.at("offset").get<i64>();
        bool found = false;
        for (auto& a : arrays) {
            if (a.name != name) continue;
            auto* dst = const_cast<std::vector<float>*>(a.data);
            if (offset + static_cast<i64>(dst->size()) > payload_floats)
                throw FormatError("checkpoint: array " + name + " overruns payload");
            std::copy_n(payload + offset, dst->size(), dst->begin());
            found = true;
            break;
        }
        if (!found)
            throw FormatError("checkpoint: unknown array " + name +
                              " (config/model mismatch)");
    }
    return t;
}

}  // namespace dualinf::train
