#pragma once

#include <string>
#include <vector>

#include "dualinf/datasets.hpp"
#include "dualinf/nets.hpp"
#include "dualinf/rng.hpp"
#include "dualinf/tensor.hpp"

namespace dualinf::eval {

// ---- image grids (PPM P6 with 2-pixel white gutters) ----
// images: [N, 3, H, W] in [-1, 1], laid out row-major over `cols` columns.
void write_image_grid(const TensorF& images, i64 cols, const std::string& path);
std::uint8_t denorm_byte(float v);  // round((v+1)*127.5) half-up, clamped

// ---- Gaussian feature statistics and Fréchet distance ----
struct GaussianStats {
    std::vector<double> mean;  // [d]
    std::vector<double> cov;   // [d*d], symmetric
    i64 dim() const { return static_cast<i64>(mean.size()); }
};

GaussianStats gaussian_stats(const TensorF& features);  // [N, d], N >= 2

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), eigenvalues
// clamped at 1e-6 * lambda_max before square roots.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Symmetric eigendecomposition (cyclic Jacobi); exposed for oracle tests.
// a is row-major [n*n]; outputs eigenvalues and row-major eigenvectors
// (rows are eigenvectors).
void jacobi_eigh(std::vector<double> a, i64 n, std::vector<double>& values,
                 std::vector<double>& vectors);

// exp( mean_n KL(p(y|x_n) || mean_m p(y|x_m)) ), rows must sum to 1 +- 1e-5
double inception_score_analog(const TensorF& probs);

// ---- probes ----
enum class ProbeTarget { Content, Style };

// Composite style class carried by a dataset sample: shapes use quadrant x
// scale (12 classes); MNIST-CB uses the background color (8 classes).
i64 style_class(const data::Dataset& ds, const data::StyleAttributes& s);
i64 style_class_count(const data::Dataset& ds);

// Small supervised classifier used as a measurement instrument; exposes a
// penultimate 64-dim feature vector for Fréchet statistics.
struct Probe {
    nets::Conv c1, c2;
    nets::Linear feat;  // -> 64
    nets::Linear head;  // 64 -> classes
    i64 num_classes = 0;
    float slope = 0.2f;
    double heldout_accuracy = 0.0;

    TensorF features(const TensorF& images) const;  // [N, 64]
    TensorF logits(const TensorF& images) const;
    std::vector<i64> predict(const TensorF& images) const;
};

struct ProbeConfig {
    i64 epochs = 6;
    i64 batch_size = 64;
    float lr = 1e-3f;
    double accuracy_bar = 0.95;  // 0.90 for style targets
    double heldout_fraction = 0.1;
};

Probe train_probe(const data::Dataset& ds, ProbeTarget target, std::uint64_t seed,
                  ProbeConfig cfg = {});  // throws ProbeError below the bar

// ---- generation metrics ----
// Fraction of n generated images whose probe prediction matches the
// requested content label (labels cycle 0..K-1).
double content_accuracy(nets::Models& models, const Probe& content_probe, i64 n, Rng& rng);

// Fréchet distance between probe features of real samples and generated
// samples (n of each).
double fid_analog(nets::Models& models, const Probe& probe, const data::Dataset& real,
                  i64 n, Rng& rng);

// Mean probe posterior diversity of n generated images.
double is_analog(nets::Models& models, const Probe& probe, i64 n, Rng& rng);

struct SwapScores {
    double style_swap = 0.0;            // x_AB carries B's style
    double content_preservation = 0.0;  // x_AB keeps A's content
};

// x_AB = generate(z_hat_B, c_hat_A) from encoder means (eps = 0).
SwapScores swap_score(nets::Models& models, const Probe& content_probe,
                      const Probe& style_probe, const data::Dataset& ds, i64 n_pairs,
                      Rng& rng);

// Grid cell (i, j) = generate(lerp(z_src, z_tgt, j/(s-1)), lerp(c_src, c_tgt,
// i/(s-1))) from encoder means; returns [steps*steps, 3, 32, 32] row-major.
TensorF interpolation_grid(nets::Models& models, const TensorF& x_src, const TensorF& x_tgt,
                           i64 steps, Rng& rng);

// One CSV row per sample: id, label, style truth, z-mean and c-mean/logit
// components.
void dump_latents(nets::Models& models, const data::Dataset& ds, const std::string& path,
                  Rng& rng);

struct EvalReport {
    double is_analog = 0.0;
    double fid_analog = 0.0;
    double content_accuracy = 0.0;
    double style_swap_score = 0.0;
    double content_preservation_score = 0.0;
    i64 sample_count = 0;
    std::uint64_t seed = 0;
    i64 epoch = 0;
};

std::string report_to_json(const EvalReport& r);

}  // namespace dualinf::eval
