#include "dualinf/objectives.hpp"

#include "dualinf/errors.hpp"

namespace dualinf::obj {

CycleVariant cycle_variant_from_string(const std::string& s) {
    if (s == "adv" || s == "adversarial") return CycleVariant::Adversarial;
    if (s == "l1") return CycleVariant::L1;
    if (s == "l2") return CycleVariant::L2;
    throw ConfigError("unknown cycle variant '" + s + "' (expected adv|l1|l2)");
}

std::string to_string(CycleVariant v) {
    switch (v) {
        case CycleVariant::Adversarial: return "adv";
        case CycleVariant::L1: return "l1";
        default: return "l2";
    }
}

TensorF bce_with_logits(const TensorF& logits, float target) {
    if (!logits.defined()) throw ContractError("bce: missing score tensor");
    if (target == 1.0f) return mean(softplus(neg(logits)));
    if (target == 0.0f) return mean(softplus(logits));
    return mean(softplus(logits) - mul_scalar(logits, target));
}

std::pair<TensorF, TensorF> loss_t2i(const T2iScores& s, Phase phase, const T2iFlags& flags) {
    TensorF pair_term, image_term;
    if (phase == Phase::D) {
        pair_term = bce_with_logits(s.real_cond, 1.0f) +
                    mul_scalar(bce_with_logits(s.mismatch_cond, 0.0f) +
                                   bce_with_logits(s.fake_cond, 0.0f),
                               0.5f);
        if (flags.image_loss)
            image_term = bce_with_logits(s.real_uncond, 1.0f) +
                         bce_with_logits(s.fake_uncond, 0.0f);
    } else {
        if (flags.minimax_g) {
            pair_term = neg(bce_with_logits(s.fake_cond, 0.0f));
            if (flags.image_loss) image_term = neg(bce_with_logits(s.fake_uncond, 0.0f));
        } else {
            pair_term = bce_with_logits(s.fake_cond, 1.0f);
            if (flags.image_loss) image_term = bce_with_logits(s.fake_uncond, 1.0f);
        }
    }
    if (!image_term.defined()) image_term = TensorF::scalar(0.0f);
    return {std::move(pair_term), std::move(image_term)};
}

std::pair<TensorF, TensorF> loss_dual(const DualScores& s, Phase phase) {
    // D drives encoder pairs toward 1 and generator pairs toward 0;
    // G plays the reverse on the same four scores.
    const float enc_target = phase == Phase::D ? 1.0f : 0.0f;
    const float gen_target = phase == Phase::D ? 0.0f : 1.0f;
    auto z_term = bce_with_logits(s.enc_z, enc_target) + bce_with_logits(s.gen_z, gen_target);
    auto c_term = bce_with_logits(s.enc_c, enc_target) + bce_with_logits(s.gen_c, gen_target);
    return {std::move(z_term), std::move(c_term)};
}

TensorF loss_cycle(const CycleInputs& in, Phase phase, CycleVariant variant) {
    if (variant == CycleVariant::Adversarial) {
        if (phase == Phase::D)
            return bce_with_logits(in.real_logit, 1.0f) + bce_with_logits(in.fake_logit, 0.0f);
        return bce_with_logits(in.fake_logit, 1.0f);
    }
    if (phase == Phase::D) return TensorF::scalar(0.0f);
    if (!in.x.defined() || !in.x_prime.defined())
        throw ContractError("cycle loss: pixel variant needs both images");
    if (in.x.shape() != in.x_prime.shape())
        throw ShapeError("cycle loss: image shapes differ");
    auto diff = in.x - in.x_prime;
    return variant == CycleVariant::L1 ? mean(abs_(diff)) : mean(square(diff));
}

TensorF kl_gaussian_std(const TensorF& mean_, const TensorF& log_variance) {
    if (mean_.shape() != log_variance.shape())
        throw ShapeError("kl: mean/logvar shape mismatch");
    auto per_elem = square(mean_) + exp_(log_variance) - log_variance;
    auto per_row = add_scalar(sum(per_elem, {mean_.rank() - 1}, false),
                              -static_cast<float>(mean_.shape().back()));
    return mul_scalar(mean(per_row), 0.5f);
}

TensorF content_cross_entropy(const TensorF& logits, const TensorF& label_one_hot) {
    if (logits.shape() != label_one_hot.shape())
        throw ShapeError("cross entropy: logits vs labels shape mismatch");
    auto picked = sum(log_softmax_lastdim(logits) * label_one_hot, {logits.rank() - 1}, false);
    return neg(mean(picked));
}

namespace {

TensorF add_term(TensorF acc, const TensorF& term, float weight = 1.0f) {
    if (!term.defined() || weight == 0.0f) return acc;  // truly excluded, not weight-0
    auto w = weight == 1.0f ? term : mul_scalar(term, weight);
    if (!acc.defined()) return w;
    return acc + w;
}

}  // namespace

std::pair<TensorF, TensorF> assemble_full(const LossParts& d_parts, const LossParts& g_parts,
                                          const ObjConfig& config) {
    if (d_parts.phase != Phase::D || g_parts.phase != Phase::G)
        throw ContractError("assemble_full: loss parts carry the wrong phase");
    TensorF d_total, g_total;
    if (config.use_t2i) {
        d_total = add_term(d_total, d_parts.t2i_pair);
        g_total = add_term(g_total, g_parts.t2i_pair);
        if (config.t2i.image_loss) {
            d_total = add_term(d_total, d_parts.t2i_image);
            g_total = add_term(g_total, g_parts.t2i_image);
        }
    }
    if (config.use_dual) {
        d_total = add_term(d_total, d_parts.dual_z);
        d_total = add_term(d_total, d_parts.dual_c);
        g_total = add_term(g_total, g_parts.dual_z);
        g_total = add_term(g_total, g_parts.dual_c);
    }
    if (config.use_cycle) {
        d_total = add_term(d_total, d_parts.cycle);
        g_total = add_term(g_total, g_parts.cycle);
    }
    g_total = add_term(g_total, g_parts.kl_pc, config.lambda_c);
    g_total = add_term(g_total, g_parts.kl_qz, config.lambda_kl);
    g_total = add_term(g_total, g_parts.kl_qc, config.lambda_kl);
    g_total = add_term(g_total, g_parts.content_ce, config.lambda_ce);
    if (!d_total.defined()) d_total = TensorF::scalar(0.0f);
    if (!g_total.defined()) g_total = TensorF::scalar(0.0f);
    return {std::move(d_total), std::move(g_total)};
}

}  // namespace dualinf::obj
