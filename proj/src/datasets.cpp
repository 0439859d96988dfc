#include "dualinf/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "dualinf/errors.hpp"

namespace dualinf::data {

namespace fs = std::filesystem;
using nlohmann::json;

Palette default_palette() {
    return {{{0, 0, 0}},
            {{255, 255, 255}},
            {{255, 0, 0}},
            {{0, 255, 0}},
            {{0, 0, 255}},
            {{255, 255, 0}},
            {{255, 0, 255}},
            {{0, 255, 255}}};
}

namespace {

float byte_to_unit(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

}  // namespace

TensorF Dataset::images(const std::vector<i64>& indices) const {
    const i64 m = image_numel();
    std::vector<float> out(indices.size() * static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const i64 idx = indices[i];
        if (idx < 0 || idx >= size())
            throw ContractError("dataset: index " + std::to_string(idx) + " out of range");
        std::copy_n(pixels.data() + idx * m, static_cast<std::size_t>(m),
                    out.data() + static_cast<i64>(i) * m);
    }
    return TensorF({static_cast<i64>(indices.size()), channels, height, width}, std::move(out));
}

Dataset make_mnist_cb(const idx::IdxData& images, const idx::IdxData& labels,
                      const Palette& palette, std::uint64_t seed) {
    if (palette.size() < 2) throw ConfigError("mnist-cb: palette needs at least 2 colors");
    if (images.shape.size() != 3) throw FormatError("mnist-cb: expected rank-3 image data");
    const i64 n = images.shape[0], h = images.shape[1], w = images.shape[2];
    if (h != 28 || w != 28) throw FormatError("mnist-cb: expected 28x28 grayscale inputs");
    if (labels.shape.size() != 1 || labels.shape[0] != n)
        throw FormatError("mnist-cb: image/label count mismatch");

    Dataset ds;
    ds.kind = "mnist_cb";
    ds.num_classes = 10;
    ds.seed = seed;
    ds.palette = palette;
    ds.pixels.assign(static_cast<std::size_t>(n) * 3 * 32 * 32, 0.0f);
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.styles.resize(static_cast<std::size_t>(n));
    Rng rng(seed);
    const auto ncolors = static_cast<std::uint64_t>(palette.size());
    const i64 pad = 2;
    for (i64 i = 0; i < n; ++i) {
        const int bg = static_cast<int>(rng.next_below(ncolors));
        int fg = static_cast<int>(rng.next_below(ncolors - 1));
        if (fg >= bg) ++fg;
        ds.labels[static_cast<std::size_t>(i)] = labels.data[static_cast<std::size_t>(i)];
        auto& style = ds.styles[static_cast<std::size_t>(i)];
        style.background_color = bg;
        style.foreground_color = fg;
        const std::uint8_t* src = images.data.data() + i * h * w;
        float* dst = ds.pixels.data() + i * 3 * 32 * 32;
        for (i64 r = 0; r < 32; ++r) {
            for (i64 c = 0; c < 32; ++c) {
                bool stroke = false;
                const i64 sr = r - pad, sc = c - pad;
                if (sr >= 0 && sr < h && sc >= 0 && sc < w)
                    stroke = static_cast<float>(src[sr * w + sc]) / 255.0f > 0.5f;
                const auto& color = palette[static_cast<std::size_t>(stroke ? fg : bg)];
                for (i64 ch = 0; ch < 3; ++ch)
                    dst[(ch * 32 + r) * 32 + c] = byte_to_unit(color[static_cast<std::size_t>(ch)]);
            }
        }
    }
    return ds;
}

namespace {

struct Placed {
    double cy, cx, r;
};

// Shape 0=circle 1=square 2=triangle, drawn filled at the given center/radius.
void rasterize_shape(float* img /* [3,32,32] */, int shape, const std::array<std::uint8_t, 3>& color,
                     double cy, double cx, double r) {
    for (i64 y = 0; y < 32; ++y) {
        for (i64 x = 0; x < 32; ++x) {
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            bool inside = false;
            switch (shape) {
                case 0: inside = dy * dy + dx * dx <= r * r; break;
                case 1: inside = std::abs(dy) <= r && std::abs(dx) <= r; break;
                default:
                    // upward triangle in the 2r x 2r box
                    inside = dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
                    break;
            }
            if (!inside) continue;
            for (i64 ch = 0; ch < 3; ++ch)
                img[(ch * 32 + y) * 32 + x] = byte_to_unit(color[static_cast<std::size_t>(ch)]);
        }
    }
}

}  // namespace

Dataset make_shapes(const ShapesConfig& config, std::uint64_t seed) {
    const std::array<std::array<std::uint8_t, 3>, 3> colors{{{255, 60, 60}, {60, 255, 60}, {80, 120, 255}}};
    if (config.num_shape_classes < 1 || config.num_shape_classes > 3 ||
        config.num_color_classes < 1 || config.num_color_classes > 3)
        throw ConfigError("shapes: shape/color class counts must be in 1..3");
    const std::array<double, 3> radius{2.0, 3.0, 5.0};

    Dataset ds;
    ds.kind = "shapes";
    ds.num_classes = config.num_shape_classes * config.num_color_classes;
    ds.seed = seed;
    ds.palette = default_palette();
    ds.pixels.assign(static_cast<std::size_t>(config.num_samples) * 3 * 32 * 32, -1.0f);  // black
    ds.labels.resize(static_cast<std::size_t>(config.num_samples));
    ds.styles.resize(static_cast<std::size_t>(config.num_samples));
    Rng rng(seed);
    for (i64 i = 0; i < config.num_samples; ++i) {
        const int shape = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(config.num_shape_classes)));
        const int color = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(config.num_color_classes)));
        const int quadrant = static_cast<int>(rng.next_below(4));
        const int scale = static_cast<int>(rng.next_below(3));
        const int max_count = config.max_count_by_scale[static_cast<std::size_t>(scale)];
        if (max_count < 1) throw ConfigError("shapes: max count must be >= 1 per scale");
        const int count = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_count)));

        const double r = radius[static_cast<std::size_t>(scale)];
        const double row0 = quadrant >= 2 ? 16.0 : 0.0;
        const double col0 = (quadrant % 2) ? 16.0 : 0.0;
        std::vector<Placed> placed;
        bool sample_ok = false;
        for (int restart = 0; restart < 50 && !sample_ok; ++restart) {
            placed.clear();
            sample_ok = true;
            for (int k = 0; k < count && sample_ok; ++k) {
                bool ok = false;
                for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
                    const double cy = row0 + r + rng.uniform() * (16.0 - 2.0 * r);
                    const double cx = col0 + r + rng.uniform() * (16.0 - 2.0 * r);
                    ok = true;
                    for (const auto& p : placed) {
                        const double dy = p.cy - cy, dx = p.cx - cx;
                        if (std::sqrt(dy * dy + dx * dx) < p.r + r + 1.0) {
                            ok = false;
                            break;
                        }
                    }
                    if (ok) placed.push_back({cy, cx, r});
                }
                sample_ok = ok;
            }
        }
        if (!sample_ok)
            throw ConfigError("shapes: could not place " + std::to_string(count) +
                              " non-overlapping copies at scale " + std::to_string(scale));
        float* img = ds.pixels.data() + i * 3 * 32 * 32;
        for (const auto& p : placed)
            rasterize_shape(img, shape, colors[static_cast<std::size_t>(color)], p.cy, p.cx, p.r);
        ds.labels[static_cast<std::size_t>(i)] = shape * config.num_color_classes + color;
        auto& style = ds.styles[static_cast<std::size_t>(i)];
        style.position = quadrant;
        style.scale = scale;
        style.count = count;
    }
    return ds;
}

PairBatch pair_batch_at(const Dataset& split, const std::vector<i64>& indices, Rng& rng) {
    if (split.size() == 0) throw ContractError("pair batch: empty split");
    if (split.num_classes < 2) throw ContractError("pair batch: needs K >= 2 classes");
    PairBatch batch;
    batch.images = split.images(indices);
    batch.labels.reserve(indices.size());
    std::vector<i64> mismatched;
    mismatched.reserve(indices.size());
    for (const i64 idx : indices) {
        const i64 label = split.labels[static_cast<std::size_t>(idx)];
        batch.labels.push_back(label);
        batch.styles.push_back(split.styles[static_cast<std::size_t>(idx)]);
        // uniform over the K-1 other labels
        i64 other = static_cast<i64>(rng.next_below(static_cast<std::uint64_t>(split.num_classes - 1)));
        if (other >= label) ++other;
        mismatched.push_back(other);
    }
    batch.matched_content = one_hot<float>(batch.labels, split.num_classes);
    batch.mismatched_content = one_hot<float>(mismatched, split.num_classes);
    return batch;
}

PairBatch sample_pair_batch(const Dataset& split, i64 batch_size, Rng& rng, bool with_replacement) {
    if (!with_replacement && batch_size > split.size())
        throw ContractError("pair batch: batch size " + std::to_string(batch_size) +
                            " exceeds split size " + std::to_string(split.size()) +
                            " without replacement");
    std::vector<i64> indices;
    indices.reserve(static_cast<std::size_t>(batch_size));
    if (with_replacement) {
        for (i64 i = 0; i < batch_size; ++i)
            indices.push_back(static_cast<i64>(rng.next_below(static_cast<std::uint64_t>(split.size()))));
    } else {
        std::vector<i64> perm(static_cast<std::size_t>(split.size()));
        std::iota(perm.begin(), perm.end(), 0);
        for (i64 i = split.size() - 1; i > 0; --i)
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i + 1)))]);
        indices.assign(perm.begin(), perm.begin() + batch_size);
    }
    return pair_batch_at(split, indices, rng);
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction, std::uint64_t seed) {
    std::vector<i64> perm(static_cast<std::size_t>(ds.size()));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    for (i64 i = ds.size() - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(i + 1)))]);
    const i64 n_train = static_cast<i64>(std::llround(train_fraction * static_cast<double>(ds.size())));
    auto build = [&](i64 from, i64 to) {
        Dataset out = ds;
        out.pixels.clear();
        out.labels.clear();
        out.styles.clear();
        const i64 m = ds.image_numel();
        for (i64 i = from; i < to; ++i) {
            const i64 src = perm[static_cast<std::size_t>(i)];
            out.pixels.insert(out.pixels.end(), ds.pixels.begin() + src * m,
                              ds.pixels.begin() + (src + 1) * m);
            out.labels.push_back(ds.labels[static_cast<std::size_t>(src)]);
            out.styles.push_back(ds.styles[static_cast<std::size_t>(src)]);
        }
        return out;
    };
    return {build(0, n_train), build(n_train, ds.size())};
}

Dataset take(const Dataset& ds, i64 n) {
    if (n > ds.size()) throw ContractError("take: dataset has only " + std::to_string(ds.size()));
    Dataset out = ds;
    out.pixels.assign(ds.pixels.begin(), ds.pixels.begin() + n * ds.image_numel());
    out.labels.assign(ds.labels.begin(), ds.labels.begin() + n);
    out.styles.assign(ds.styles.begin(), ds.styles.begin() + n);
    return out;
}

namespace {

json style_to_json(const StyleAttributes& in) {
    return json{{"bg", in.background_color},
                {"fg", in.foreground_color},
                {"pos", in.position},
                {"scale", in.scale},
                {"count", in.count}};
}

StyleAttributes style_from_json(const json& in) {
    StyleAttributes out;
    out.background_color = in.at("bg").get<int>();
    out.foreground_color = in.at("fg").get<int>();
    out.position = in.at("pos").get<int>();
    out.scale = in.at("scale").get<int>();
    out.count = in.at("count").get<int>();
    return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    json manifest;
    manifest["kind"] = ds.kind;
    manifest["count"] = ds.size();
    manifest["shape"] = {ds.channels, ds.height, ds.width};
    manifest["num_classes"] = ds.num_classes;
    manifest["seed"] = ds.seed;
    json pal = json::array();
    for (const auto& c : ds.palette) pal.push_back({c[0], c[1], c[2]});
    manifest["palette"] = pal;
    manifest["labels"] = ds.labels;
    json styles = json::array();
    for (const auto& s : ds.styles) styles.push_back(style_to_json(s));
    manifest["styles"] = styles;

    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("dataset: cannot write manifest in " + dir);
    mf << manifest.dump(2) << "\n";

    std::ofstream pf(fs::path(dir) / "images.f32", std::ios::binary | std::ios::trunc);
    if (!pf) throw IoError("dataset: cannot write images.f32 in " + dir);
    pf.write(reinterpret_cast<const char*>(ds.pixels.data()),
             static_cast<std::streamsize>(ds.pixels.size() * sizeof(float)));
    if (!pf) throw IoError("dataset: short write in " + dir);
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw IoError("dataset: cannot open " + dir + "/manifest.json (run make-dataset first?)");
    json manifest = json::parse(mf);
    Dataset ds;
    ds.kind = manifest.at("kind").get<std::string>();
    const auto shape = manifest.at("shape").get<std::vector<i64>>();
    ds.channels = shape.at(0);
    ds.height = shape.at(1);
    ds.width = shape.at(2);
    ds.num_classes = manifest.at("num_classes").get<i64>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    for (const auto& c : manifest.at("palette")) {
        ds.palette.push_back({c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(),
                              c.at(2).get<std::uint8_t>()});
    }
    ds.labels = manifest.at("labels").get<std::vector<i64>>();
    for (const auto& s : manifest.at("styles")) ds.styles.push_back(style_from_json(s));

    std::ifstream pf(fs::path(dir) / "images.f32", std::ios::binary);
    if (!pf) throw IoError("dataset: cannot open " + dir + "/images.f32");
    const std::size_t expected = static_cast<std::size_t>(ds.size() * ds.image_numel());
    ds.pixels.resize(expected);
    pf.read(reinterpret_cast<char*>(ds.pixels.data()),
            static_cast<std::streamsize>(expected * sizeof(float)));
    if (static_cast<std::size_t>(pf.gcount()) != expected * sizeof(float))
        throw IoError("dataset: images.f32 in " + dir + " is truncated");
    return ds;
}

namespace {

// 5x7 glyphs for digits 0-9, one row per byte (low 5 bits).
constexpr std::uint8_t kDigitFont[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

bool glyph_on(int digit, double gy, double gx) {
    const int iy = static_cast<int>(std::floor(gy));
    const int ix = static_cast<int>(std::floor(gx));
    if (iy < 0 || iy >= 7 || ix < 0 || ix >= 5) return false;
    return (kDigitFont[digit][iy] >> (4 - ix)) & 1;
}

}  // namespace

std::pair<idx::IdxData, idx::IdxData> make_synth_digits(i64 n, std::uint64_t seed) {
    idx::IdxData images;
    images.shape = {n, 28, 28};
    images.data.assign(static_cast<std::size_t>(n) * 28 * 28, 0);
    idx::IdxData labels;
    labels.shape = {n};
    labels.data.resize(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (i64 i = 0; i < n; ++i) {
        const int digit = static_cast<int>(rng.next_below(10));
        labels.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(digit);
        const double sy = rng.uniform(2.2, 3.2);
        const double sx = rng.uniform(2.2, 3.2);
        const double theta = rng.uniform(-0.22, 0.22);
        const double ty = 14.0 + rng.uniform(-2.5, 2.5);
        const double tx = 14.0 + rng.uniform(-2.5, 2.5);
        const double shade = rng.uniform(0.75, 1.0);
        const double ct = std::cos(theta), st = std::sin(theta);
        std::uint8_t* img = images.data.data() + i * 28 * 28;
        for (int y = 0; y < 28; ++y) {
            for (int x = 0; x < 28; ++x) {
                // inverse affine into glyph space; 2x2 supersampling softens edges
                int hits = 0;
                for (int oy = 0; oy < 2; ++oy)
                    for (int ox = 0; ox < 2; ++ox) {
                        const double py = y + 0.25 + 0.5 * oy - ty;
                        const double px = x + 0.25 + 0.5 * ox - tx;
                        const double ry = ct * py + st * px;
                        const double rx = -st * py + ct * px;
                        if (glyph_on(digit, ry / sy + 3.5, rx / sx + 2.5)) ++hits;
                    }
                if (hits)
                    img[y * 28 + x] =
                        static_cast<std::uint8_t>(std::lround(255.0 * shade * hits / 4.0));
            }
        }
    }
    return {std::move(images), std::move(labels)};
}

}  // namespace dualinf::data
