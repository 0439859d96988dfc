#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dualinf/rng.hpp"
#include "dualinf/tensor.hpp"

namespace dualinf::nets {

enum class PriorMode { Gaussian, Categorical };
enum class Kind { Z, C };

PriorMode prior_mode_from_string(const std::string& s);
std::string to_string(PriorMode m);

struct NetworkSpec {
    i64 z_dim = 16;
    i64 c_dim = 16;          // 10 in categorical mode (equals K), 16 in gaussian mode
    i64 num_classes = 10;    // K, width of the content one-hot
    i64 base_channels = 8;   // conv widths are base, 2*base, 4*base
    i64 feature_width = 128;
    float leaky_slope = 0.2f;
    float temperature = 0.67f;  // relaxed-categorical sampling
    PriorMode prior = PriorMode::Gaussian;
    bool straight_through = false;  // hard categorical sample, soft gradient
};

// Named registry of trainable tensors; names must be unique. Running
// batch-norm statistics are registered too (requires_grad=false) so they
// travel with checkpoints but are skipped by the optimizer.
struct ParamStore {
    std::vector<std::pair<std::string, TensorF>> items;

    void add(const std::string& name, TensorF t);
    TensorF* find(const std::string& name);
    i64 total_elements() const;
};

struct Linear {
    TensorF weight;  // [in, out]
    TensorF bias;    // [out]
    Linear() = default;
    Linear(i64 in, i64 out, Rng& rng);
    TensorF forward(const TensorF& x) const;
    void register_params(ParamStore& store, const std::string& prefix);
};

struct Conv {
    TensorF weight;  // [out_c, in_c, k, k]
    TensorF bias;    // [out_c]
    i64 stride = 1, padding = 0;
    Conv() = default;
    Conv(i64 in_c, i64 out_c, i64 k, i64 stride, i64 padding, Rng& rng);
    TensorF forward(const TensorF& x) const;
    void register_params(ParamStore& store, const std::string& prefix);
};

struct ConvT {
    TensorF weight;  // [in_c, out_c, k, k]
    TensorF bias;    // [out_c]
    i64 stride = 1, padding = 0;
    ConvT() = default;
    ConvT(i64 in_c, i64 out_c, i64 k, i64 stride, i64 padding, Rng& rng);
    TensorF forward(const TensorF& x) const;
    void register_params(ParamStore& store, const std::string& prefix);
};

// Channel-wise batch normalization over [N, C, H, W] (or [N, C]) with
// running statistics for inference mode.
struct BatchNorm {
    TensorF gamma, beta;                // [C], trained
    TensorF running_mean, running_var;  // [C], updated in train mode only
    float momentum = 0.1f, eps = 1e-5f;
    bool train_mode = true;
    BatchNorm() = default;
    explicit BatchNorm(i64 channels);
    TensorF forward(const TensorF& x);
    void register_params(ParamStore& store, const std::string& prefix);
};

// One latent draw plus the distribution parameters behind it. Unused
// fields stay empty (gaussian carries mean/log_variance, categorical
// carries logits, deterministic carries only the sample).
struct LatentCode {
    TensorF sample;
    TensorF mean;
    TensorF log_variance;
    TensorF logits;
    std::string mode;  // "gaussian" | "relaxed-categorical" | "deterministic"
};

TensorF gaussian_reparam(const TensorF& mean, const TensorF& log_variance, Rng& rng,
                         bool zero_noise = false);
TensorF relaxed_categorical_sample(const TensorF& logits, float temperature, Rng& rng,
                                   bool straight_through, bool zero_noise = false);

// c ~ p(c|phi): learned gaussian (or relaxed-categorical) conditioned on the
// content one-hot; deterministic mode passes the embedding straight through.
struct CondAugmenter {
    NetworkSpec spec;
    Linear gauss_head;  // K -> 2*c_dim (mean, logvar)
    Linear cat_head;    // K -> K logits
    bool deterministic = false;
    CondAugmenter() = default;
    CondAugmenter(const NetworkSpec& spec, Rng& rng);
    LatentCode forward(const TensorF& content_one_hot, Rng& rng, bool zero_noise = false) const;
    void register_params(ParamStore& store, const std::string& prefix);
};

// Shared conv trunk used by the encoder and all discriminators:
// 3 (or 6) x 32 x 32 -> feature vector of spec.feature_width.
struct ConvTrunk {
    Conv c1, c2, c3;
    BatchNorm n2, n3;
    Linear head;
    float slope = 0.2f;
    bool normalize = true;  // discriminator trunks skip normalization entirely
    ConvTrunk() = default;
    ConvTrunk(i64 in_channels, const NetworkSpec& spec, bool normalize, Rng& rng);
    TensorF forward(const TensorF& x);
    void register_params(ParamStore& store, const std::string& prefix);
    void set_train(bool train);
};

struct Encoder {
    NetworkSpec spec;
    ConvTrunk trunk;
    Linear z_head;        // feat -> 2*z_dim
    Linear c_gauss_head;  // feat -> 2*c_dim
    Linear c_cat_head;    // feat -> K logits
    Encoder() = default;
    Encoder(const NetworkSpec& spec, Rng& rng);
    std::pair<LatentCode, LatentCode> forward(const TensorF& x, Rng& rng,
                                              bool zero_noise = false);
    void register_params(ParamStore& store, const std::string& prefix);
    void set_train(bool train);
};

struct Generator {
    NetworkSpec spec;
    Linear project;  // z_dim + c_dim -> 4*base * 4 * 4
    BatchNorm n0, n1, n2;
    ConvT t1, t2, t3;
    Generator() = default;
    Generator(const NetworkSpec& spec, Rng& rng);
    TensorF forward(const TensorF& z, const TensorF& c);
    void register_params(ParamStore& store, const std::string& prefix);
    void set_train(bool train);
};

// Logit outputs; apply sigmoid for probabilities. The trunk is shared
// between the unconditional and conditional heads.
struct DiscImage {
    NetworkSpec spec;
    ConvTrunk trunk;
    Linear uncond_head;  // feat -> 1
    Linear cond_h1;      // feat + K -> feat/2
    Linear cond_h2;      // feat/2 -> 1
    DiscImage() = default;
    DiscImage(const NetworkSpec& spec, Rng& rng);
    std::pair<TensorF, TensorF> forward(const TensorF& x, const TensorF& content);
    void register_params(ParamStore& store, const std::string& prefix);
    void set_train(bool train);
};

// One network scores both (x, z) and (x, c) joint pairs; the roles differ
// only by the input projection and a 2-valued kind tag.
struct DiscJoint {
    NetworkSpec spec;
    ConvTrunk trunk;
    Linear proj_z;  // z_dim -> 64
    Linear proj_c;  // c_dim -> 64
    Linear h1;      // feat + 64 + 2 -> feat/2
    Linear h2;      // feat/2 -> 1
    DiscJoint() = default;
    DiscJoint(const NetworkSpec& spec, Rng& rng);
    TensorF forward(const TensorF& x, const TensorF& latent, Kind kind);
    // Same computation with an explicit [N, 2] tag tensor (gradient probes).
    TensorF forward_with_tag(const TensorF& x, const TensorF& latent, Kind kind,
                             const TensorF& tag);
    void register_params(ParamStore& store, const std::string& prefix);
    void set_train(bool train);
};

// Scores a channel-concatenated image pair; real pair is (x, x).
struct DiscCycle {
    NetworkSpec spec;
    ConvTrunk trunk;  // 6 input channels
    Linear head;
    DiscCycle() = default;
    DiscCycle(const NetworkSpec& spec, Rng& rng);
    TensorF forward(const TensorF& x, const TensorF& x_other);
    void register_params(ParamStore& store, const std::string& prefix);
    void set_train(bool train);
};

// The full ensemble, with generator-side and discriminator-side parameters
// registered in separate stores for alternating updates.
struct Models {
    NetworkSpec spec;
    CondAugmenter augmenter;
    Encoder encoder;
    Generator generator;
    DiscImage disc_image;
    DiscJoint disc_joint;
    DiscCycle disc_cycle;
    ParamStore gen_params;   // augmenter + encoder + generator
    ParamStore disc_params;  // the three discriminators
    Models() = default;
    Models(const NetworkSpec& spec, Rng& rng);
    void set_train(bool train);
};

}  // namespace dualinf::nets
