#pragma once

#include "dualinf/tensor.hpp"

namespace dualinf::obj {

enum class Phase { D, G };
enum class CycleVariant { Adversarial, L1, L2 };

CycleVariant cycle_variant_from_string(const std::string& s);
std::string to_string(CycleVariant v);

// Mean over the batch of BCE against a constant target, computed from
// logits: softplus(x) - target * x.
TensorF bce_with_logits(const TensorF& logits, float target);

struct T2iFlags {
    bool image_loss = true;  // false drops the unconditional image head terms
    bool minimax_g = false;  // literal minimax generator instead of non-saturating
};

// Logit outputs of disc_image on the three pairings plus the image head.
struct T2iScores {
    TensorF real_cond;      // (x_a, matched)
    TensorF mismatch_cond;  // (x_a, mismatched)
    TensorF fake_cond;      // (x_tilde, matched)
    TensorF real_uncond;    // x_a, image head
    TensorF fake_uncond;    // x_tilde, image head
};

// Matching-aware pair loss with the 1/2-weighted mismatch and fake terms,
// plus the unconditional image terms when flags.image_loss.
std::pair<TensorF, TensorF> loss_t2i(const T2iScores& s, Phase phase, const T2iFlags& flags);
// first = pair (cond-head) term, second = image (uncond-head) term

// Logit outputs of disc_joint on the four joint pairs.
struct DualScores {
    TensorF enc_z;  // (x, z_hat)
    TensorF enc_c;  // (x, c_hat)
    TensorF gen_z;  // (x_tilde, z)
    TensorF gen_c;  // (x_tilde, c)
};

std::pair<TensorF, TensorF> loss_dual(const DualScores& s, Phase phase);
// first = z term, second = c term

// Adversarial variant consumes disc_cycle logits on (x,x) and (x,x');
// l1/l2 variants consume the images directly and contribute 0 in phase D.
struct CycleInputs {
    TensorF real_logit;  // disc_cycle(x, x)
    TensorF fake_logit;  // disc_cycle(x, x')
    TensorF x;
    TensorF x_prime;
};

TensorF loss_cycle(const CycleInputs& in, Phase phase, CycleVariant variant);

// Batch mean of 0.5 * sum_i (mu_i^2 + exp(logvar_i) - 1 - logvar_i).
TensorF kl_gaussian_std(const TensorF& mean, const TensorF& log_variance);

// Mean negative log-softmax at the true label.
TensorF content_cross_entropy(const TensorF& logits, const TensorF& label_one_hot);

struct LossParts {
    Phase phase = Phase::D;
    TensorF t2i_pair, t2i_image, dual_z, dual_c, cycle;
    TensorF kl_pc, kl_qz, kl_qc, content_ce;  // generator phase only
};

struct ObjConfig {
    bool use_t2i = true, use_dual = true, use_cycle = true;
    T2iFlags t2i;
    CycleVariant cycle_variant = CycleVariant::Adversarial;
    float lambda_c = 4.0f;   // weight on KL(p(c|phi) || N(0,I))
    float lambda_kl = 1.0f;  // weight on the encoder posterior KLs
    float lambda_ce = 1.0f;  // weight on content cross-entropy
};

// Combine per-term scalars into the discriminator and generator totals.
// Undefined tensors count as zero; phases must match their slot.
std::pair<TensorF, TensorF> assemble_full(const LossParts& d_parts, const LossParts& g_parts,
                                          const ObjConfig& config);

}  // namespace dualinf::obj
