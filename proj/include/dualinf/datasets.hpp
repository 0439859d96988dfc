#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dualinf/idx.hpp"
#include "dualinf/rng.hpp"
#include "dualinf/tensor.hpp"

namespace dualinf::data {

// Ground-truth style factors. -1 marks a field the dataset does not carry.
struct StyleAttributes {
    int background_color = -1;  // palette index 0..7
    int foreground_color = -1;  // palette index 0..7
    int position = -1;          // quadrant 0..3 (0=TL, 1=TR, 2=BL, 3=BR)
    int scale = -1;             // 0=small 1=medium 2=large
    int count = -1;             // 1..3

    bool operator==(const StyleAttributes&) const = default;
};

using Palette = std::vector<std::array<std::uint8_t, 3>>;

// black, white, red, green, blue, yellow, magenta, cyan
Palette default_palette();

struct Dataset {
    std::string kind;                     // "mnist_cb" or "shapes"
    i64 channels = 3, height = 32, width = 32;
    i64 num_classes = 0;
    std::uint64_t seed = 0;
    Palette palette;
    std::vector<float> pixels;            // [n, c, h, w], values in [-1, 1]
    std::vector<i64> labels;
    std::vector<StyleAttributes> styles;

    i64 size() const { return static_cast<i64>(labels.size()); }
    i64 image_numel() const { return channels * height * width; }
    // Gather rows into a [n, c, h, w] tensor.
    TensorF images(const std::vector<i64>& indices) const;
    TensorF image(i64 index) const { return images({index}); }
};

// Colorized digits: pad 28x28 grayscale to 32x32, threshold the stroke at
// gray > 0.5, paint background and stroke with two distinct palette colors.
Dataset make_mnist_cb(const idx::IdxData& images, const idx::IdxData& labels,
                      const Palette& palette, std::uint64_t seed);

struct ShapesConfig {
    i64 num_samples = 10000;
    int num_shape_classes = 3;  // circle, square, triangle
    int num_color_classes = 3;  // red, green, blue
    // Max copies per scale class; index 0=small 1=medium 2=large. A request
    // that cannot be placed without overlap raises a generation error.
    std::array<int, 3> max_count_by_scale{3, 2, 1};
};

// Known-style dataset: content = shape class x color class, style = quadrant,
// scale, copy count. All copies land inside the chosen quadrant.
Dataset make_shapes(const ShapesConfig& config, std::uint64_t seed);

struct PairBatch {
    TensorF images;              // [n, 3, 32, 32]
    TensorF matched_content;     // one-hot [n, k]
    TensorF mismatched_content;  // one-hot [n, k], argmax differs per row
    std::vector<i64> labels;
    std::vector<StyleAttributes> styles;
};

PairBatch pair_batch_at(const Dataset& split, const std::vector<i64>& indices, Rng& rng);
PairBatch sample_pair_batch(const Dataset& split, i64 batch_size, Rng& rng,
                            bool with_replacement = true);

// Deterministic head/tail split after a seeded shuffle.
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction,
                                          std::uint64_t seed);
// First n samples.
Dataset take(const Dataset& ds, i64 n);

// Directory layout: images.f32 (raw little-endian f32) + manifest.json.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

// MNIST-like synthetic digit source (5x7 glyphs under random affine jitter)
// written in the same IDX format as the real files.
std::pair<idx::IdxData, idx::IdxData> make_synth_digits(i64 n, std::uint64_t seed);

}  // namespace dualinf::data
