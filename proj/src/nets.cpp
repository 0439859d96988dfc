#include "dualinf/nets.hpp"

#include <cmath>

#include "dualinf/errors.hpp"

namespace dualinf::nets {

PriorMode prior_mode_from_string(const std::string& s) {
    if (s == "gaussian") return PriorMode::Gaussian;
    if (s == "categorical") return PriorMode::Categorical;
    throw ConfigError("unknown prior mode '" + s + "' (expected gaussian|categorical)");
}

std::string to_string(PriorMode m) {
    return m == PriorMode::Gaussian ? "gaussian" : "categorical";
}

void ParamStore::add(const std::string& name, TensorF t) {
    for (const auto& [n, unused] : items)
        if (n == name) throw ContractError("duplicate parameter name: " + name);
    items.emplace_back(name, std::move(t));
}

TensorF* ParamStore::find(const std::string& name) {
    for (auto& [n, t] : items)
        if (n == name) return &t;
    return nullptr;
}

i64 ParamStore::total_elements() const {
    i64 total = 0;
    for (const auto& [n, t] : items) total += t.numel();
    return total;
}

namespace {

TensorF init_normal(Shape shape, float stddev, Rng& rng) {
    i64 n = 1;
    for (const i64 d : shape) n *= d;
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = stddev * static_cast<float>(rng.normal());
    return TensorF(std::move(shape), std::move(v), true);
}

TensorF constant_rows(i64 n, std::vector<float> row) {
    const i64 w = static_cast<i64>(row.size());
    std::vector<float> v;
    v.reserve(static_cast<std::size_t>(n * w));
    for (i64 i = 0; i < n; ++i) v.insert(v.end(), row.begin(), row.end());
    return TensorF({n, w}, std::move(v));
}

}  // namespace

Linear::Linear(i64 in, i64 out, Rng& rng)
    : weight(init_normal({in, out}, 1.0f / std::sqrt(static_cast<float>(in)), rng)),
      bias(TensorF::zeros({out}, true)) {}

TensorF Linear::forward(const TensorF& x) const {
    return matmul(x, weight) + reshape(bias, {1, bias.shape()[0]});
}

void Linear::register_params(ParamStore& store, const std::string& prefix) {
    store.add(prefix + ".weight", weight);
    store.add(prefix + ".bias", bias);
}

Conv::Conv(i64 in_c, i64 out_c, i64 k, i64 stride_, i64 padding_, Rng& rng)
    : weight(init_normal({out_c, in_c, k, k},
                         std::sqrt(2.0f / static_cast<float>(in_c * k * k)), rng)),
      bias(TensorF::zeros({out_c}, true)),
      stride(stride_),
      padding(padding_) {}

TensorF Conv::forward(const TensorF& x) const {
    return conv2d(x, weight, stride, padding) + reshape(bias, {1, bias.shape()[0], 1, 1});
}

void Conv::register_params(ParamStore& store, const std::string& prefix) {
    store.add(prefix + ".weight", weight);
    store.add(prefix + ".bias", bias);
}

ConvT::ConvT(i64 in_c, i64 out_c, i64 k, i64 stride_, i64 padding_, Rng& rng)
    : weight(init_normal({in_c, out_c, k, k},
                         std::sqrt(2.0f / static_cast<float>(in_c * k * k)), rng)),
      bias(TensorF::zeros({out_c}, true)),
      stride(stride_),
      padding(padding_) {}

TensorF ConvT::forward(const TensorF& x) const {
    return conv_transpose2d(x, weight, stride, padding) +
           reshape(bias, {1, bias.shape()[0], 1, 1});
}

void ConvT::register_params(ParamStore& store, const std::string& prefix) {
    store.add(prefix + ".weight", weight);
    store.add(prefix + ".bias", bias);
}

BatchNorm::BatchNorm(i64 channels)
    : gamma(TensorF::full({channels}, 1.0f, true)),
      beta(TensorF::zeros({channels}, true)),
      running_mean(TensorF::zeros({channels})),
      running_var(TensorF::full({channels}, 1.0f)) {}

TensorF BatchNorm::forward(const TensorF& x) {
    const i64 rank = static_cast<i64>(x.shape().size());
    if (rank != 2 && rank != 4) throw ShapeError("batchnorm: expected rank 2 or 4 input");
    const i64 c = x.shape()[1];
    if (c != gamma.shape()[0])
        throw ShapeError("batchnorm: channel mismatch " + std::to_string(c) + " vs " +
                         std::to_string(gamma.shape()[0]));
    Shape stat_shape = rank == 4 ? Shape{1, c, 1, 1} : Shape{1, c};
    const std::vector<i64> axes = rank == 4 ? std::vector<i64>{0, 2, 3} : std::vector<i64>{0};
    TensorF m, v;
    if (train_mode) {
        m = mean(x, axes, true);
        v = mean(square(x - m), axes, true);
        // exponential moving averages, off the tape
        const auto& mv = m.data();
        const auto& vv = v.data();
        auto& rm = running_mean.data();
        auto& rv = running_var.data();
        for (i64 i = 0; i < c; ++i) {
            rm[static_cast<std::size_t>(i)] =
                (1.0f - momentum) * rm[static_cast<std::size_t>(i)] +
                momentum * mv[static_cast<std::size_t>(i)];
            rv[static_cast<std::size_t>(i)] =
                (1.0f - momentum) * rv[static_cast<std::size_t>(i)] +
                momentum * vv[static_cast<std::size_t>(i)];
        }
    } else {
        m = reshape(running_mean, stat_shape);
        v = reshape(running_var, stat_shape);
    }
    auto xhat = (x - m) / sqrt_(add_scalar(v, eps));
    return xhat * reshape(gamma, stat_shape) + reshape(beta, stat_shape);
}

void BatchNorm::register_params(ParamStore& store, const std::string& prefix) {
    store.add(prefix + ".gamma", gamma);
    store.add(prefix + ".beta", beta);
    store.add(prefix + ".running_mean", running_mean);
    store.add(prefix + ".running_var", running_var);
}

TensorF gaussian_reparam(const TensorF& mean_, const TensorF& log_variance, Rng& rng,
                         bool zero_noise) {
    if (mean_.shape() != log_variance.shape())
        throw ShapeError("reparam: mean/logvar shape mismatch");
    if (zero_noise) return mean_;
    auto eps = randn<float>(mean_.shape(), rng);
    return mean_ + exp_(mul_scalar(log_variance, 0.5f)) * eps;
}

TensorF relaxed_categorical_sample(const TensorF& logits, float temperature, Rng& rng,
                                   bool straight_through, bool zero_noise) {
    if (temperature <= 0.0f) throw ConfigError("relaxed categorical: temperature must be > 0");
    TensorF noisy = logits;
    if (!zero_noise) {
        // Gumbel noise g = -log(-log u)
        auto u = rand_uniform<float>(logits.shape(), rng, 1e-6f, 1.0f - 1e-6f);
        noisy = logits - log_(neg(log_(u)));
    }
    auto soft = softmax_lastdim(mul_scalar(noisy, 1.0f / temperature));
    if (!straight_through) return soft;
    // hard one-hot forward, soft gradient: hard + (soft - detach(soft))
    auto hard = one_hot<float>(argmax_lastdim(soft), logits.shape().back());
    return hard + (soft - soft.detach());
}

CondAugmenter::CondAugmenter(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    gauss_head = Linear(spec.num_classes, 2 * spec.c_dim, rng);
    cat_head = Linear(spec.num_classes, spec.num_classes, rng);
}

LatentCode CondAugmenter::forward(const TensorF& content_one_hot, Rng& rng,
                                  bool zero_noise) const {
    if (content_one_hot.shape().size() != 2 ||
        content_one_hot.shape()[1] != spec.num_classes)
        throw ShapeError("cond_augment: expected [N, " + std::to_string(spec.num_classes) +
                         "] content input");
    LatentCode out;
    if (deterministic) {
        out.mode = "deterministic";
        out.sample = content_one_hot;
        return out;
    }
    if (spec.prior == PriorMode::Gaussian) {
        auto both = gauss_head.forward(content_one_hot);
        out.mode = "gaussian";
        out.mean = slice(both, 1, 0, spec.c_dim);
        out.log_variance = slice(both, 1, spec.c_dim, spec.c_dim);
        out.sample = gaussian_reparam(out.mean, out.log_variance, rng, zero_noise);
    } else {
        out.mode = "relaxed-categorical";
        out.logits = cat_head.forward(content_one_hot);
        out.sample = relaxed_categorical_sample(out.logits, spec.temperature, rng,
                                                spec.straight_through, zero_noise);
    }
    return out;
}

void CondAugmenter::register_params(ParamStore& store, const std::string& prefix) {
    if (deterministic) return;
    if (spec.prior == PriorMode::Gaussian)
        gauss_head.register_params(store, prefix + ".gauss");
    else
        cat_head.register_params(store, prefix + ".cat");
}

ConvTrunk::ConvTrunk(i64 in_channels, const NetworkSpec& spec, bool normalize_, Rng& rng)
    : slope(spec.leaky_slope), normalize(normalize_) {
    const i64 b = spec.base_channels;
    c1 = Conv(in_channels, b, 4, 2, 1, rng);       // 32 -> 16
    c2 = Conv(b, 2 * b, 4, 2, 1, rng);             // 16 -> 8
    c3 = Conv(2 * b, 4 * b, 4, 2, 1, rng);         // 8 -> 4
    if (normalize) {
        n2 = BatchNorm(2 * b);
        n3 = BatchNorm(4 * b);
    }
    head = Linear(4 * b * 4 * 4, spec.feature_width, rng);
}

TensorF ConvTrunk::forward(const TensorF& x) {
    if (x.shape().size() != 4 || x.shape()[1] != c1.weight.shape()[1] ||
        x.shape()[2] != 32 || x.shape()[3] != 32)
        throw ShapeError("trunk: expected [N, " + std::to_string(c1.weight.shape()[1]) +
                         ", 32, 32] input");
    auto h = leaky_relu(c1.forward(x), slope);
    h = c2.forward(h);
    if (normalize) h = n2.forward(h);
    h = leaky_relu(h, slope);
    h = c3.forward(h);
    if (normalize) h = n3.forward(h);
    h = leaky_relu(h, slope);
    h = reshape(h, {x.shape()[0], -1});
    return leaky_relu(head.forward(h), slope);
}

void ConvTrunk::register_params(ParamStore& store, const std::string& prefix) {
    c1.register_params(store, prefix + ".c1");
    c2.register_params(store, prefix + ".c2");
    c3.register_params(store, prefix + ".c3");
    if (normalize) {
        n2.register_params(store, prefix + ".n2");
        n3.register_params(store, prefix + ".n3");
    }
    head.register_params(store, prefix + ".head");
}

void ConvTrunk::set_train(bool train) {
    n2.train_mode = train;
    n3.train_mode = train;
}

Encoder::Encoder(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    trunk = ConvTrunk(3, spec, true, rng);
    z_head = Linear(spec.feature_width, 2 * spec.z_dim, rng);
    c_gauss_head = Linear(spec.feature_width, 2 * spec.c_dim, rng);
    c_cat_head = Linear(spec.feature_width, spec.num_classes, rng);
}

std::pair<LatentCode, LatentCode> Encoder::forward(const TensorF& x, Rng& rng,
                                                   bool zero_noise) {
    auto feat = trunk.forward(x);
    LatentCode zc;
    zc.mode = "gaussian";
    auto zb = z_head.forward(feat);
    zc.mean = slice(zb, 1, 0, spec.z_dim);
    zc.log_variance = slice(zb, 1, spec.z_dim, spec.z_dim);
    zc.sample = gaussian_reparam(zc.mean, zc.log_variance, rng, zero_noise);
    LatentCode cc;
    if (spec.prior == PriorMode::Gaussian) {
        cc.mode = "gaussian";
        auto cb = c_gauss_head.forward(feat);
        cc.mean = slice(cb, 1, 0, spec.c_dim);
        cc.log_variance = slice(cb, 1, spec.c_dim, spec.c_dim);
        cc.sample = gaussian_reparam(cc.mean, cc.log_variance, rng, zero_noise);
    } else {
        cc.mode = "relaxed-categorical";
        cc.logits = c_cat_head.forward(feat);
        cc.sample = relaxed_categorical_sample(cc.logits, spec.temperature, rng,
                                               spec.straight_through, zero_noise);
    }
    return {std::move(zc), std::move(cc)};
}

void Encoder::register_params(ParamStore& store, const std::string& prefix) {
    trunk.register_params(store, prefix + ".trunk");
    z_head.register_params(store, prefix + ".z");
    if (spec.prior == PriorMode::Gaussian)
        c_gauss_head.register_params(store, prefix + ".c_gauss");
    else
        c_cat_head.register_params(store, prefix + ".c_cat");
}

void Encoder::set_train(bool train) { trunk.set_train(train); }

Generator::Generator(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    const i64 b = spec.base_channels;
    project = Linear(spec.z_dim + spec.c_dim, 4 * b * 4 * 4, rng);
    n0 = BatchNorm(4 * b);
    t1 = ConvT(4 * b, 2 * b, 4, 2, 1, rng);  // 4 -> 8
    n1 = BatchNorm(2 * b);
    t2 = ConvT(2 * b, b, 4, 2, 1, rng);      // 8 -> 16
    n2 = BatchNorm(b);
    t3 = ConvT(b, 3, 4, 2, 1, rng);          // 16 -> 32
}

TensorF Generator::forward(const TensorF& z, const TensorF& c) {
    if (z.shape().size() != 2 || z.shape()[1] != spec.z_dim)
        throw ShapeError("generate: z must be [N, " + std::to_string(spec.z_dim) + "]");
    if (c.shape().size() != 2 || c.shape()[1] != spec.c_dim)
        throw ShapeError("generate: c must be [N, " + std::to_string(spec.c_dim) + "]");
    if (z.shape()[0] != c.shape()[0])
        throw ShapeError("generate: z and c batch extents differ");
    const i64 b = spec.base_channels;
    auto h = project.forward(concat<float>({z, c}, 1));
    h = reshape(h, {z.shape()[0], 4 * b, 4, 4});
    h = leaky_relu(n0.forward(h), spec.leaky_slope);
    h = leaky_relu(n1.forward(t1.forward(h)), spec.leaky_slope);
    h = leaky_relu(n2.forward(t2.forward(h)), spec.leaky_slope);
    return tanh_(t3.forward(h));
}

void Generator::register_params(ParamStore& store, const std::string& prefix) {
    project.register_params(store, prefix + ".project");
    n0.register_params(store, prefix + ".n0");
    t1.register_params(store, prefix + ".t1");
    n1.register_params(store, prefix + ".n1");
    t2.register_params(store, prefix + ".t2");
    n2.register_params(store, prefix + ".n2");
    t3.register_params(store, prefix + ".t3");
}

void Generator::set_train(bool train) {
    n0.train_mode = train;
    n1.train_mode = train;
    n2.train_mode = train;
}

DiscImage::DiscImage(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    trunk = ConvTrunk(3, spec, false, rng);
    uncond_head = Linear(spec.feature_width, 1, rng);
    cond_h1 = Linear(spec.feature_width + spec.num_classes, spec.feature_width / 2, rng);
    cond_h2 = Linear(spec.feature_width / 2, 1, rng);
}

std::pair<TensorF, TensorF> DiscImage::forward(const TensorF& x, const TensorF& content) {
    if (content.shape().size() != 2 || content.shape()[1] != spec.num_classes)
        throw ShapeError("disc_image: content must be [N, " +
                         std::to_string(spec.num_classes) + "]");
    auto feat = trunk.forward(x);
    auto uncond = uncond_head.forward(feat);
    auto joint = concat<float>({feat, content}, 1);
    auto cond = cond_h2.forward(leaky_relu(cond_h1.forward(joint), spec.leaky_slope));
    return {std::move(uncond), std::move(cond)};
}

void DiscImage::register_params(ParamStore& store, const std::string& prefix) {
    trunk.register_params(store, prefix + ".trunk");
    uncond_head.register_params(store, prefix + ".uncond");
    cond_h1.register_params(store, prefix + ".cond_h1");
    cond_h2.register_params(store, prefix + ".cond_h2");
}

void DiscImage::set_train(bool train) { trunk.set_train(train); }

DiscJoint::DiscJoint(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    trunk = ConvTrunk(3, spec, false, rng);
    proj_z = Linear(spec.z_dim, 64, rng);
    proj_c = Linear(spec.c_dim, 64, rng);
    h1 = Linear(spec.feature_width + 64 + 2, spec.feature_width / 2, rng);
    h2 = Linear(spec.feature_width / 2, 1, rng);
}

TensorF DiscJoint::forward(const TensorF& x, const TensorF& latent, Kind kind) {
    const std::vector<float> row = kind == Kind::Z ? std::vector<float>{1.0f, 0.0f}
                                                   : std::vector<float>{0.0f, 1.0f};
    return forward_with_tag(x, latent, kind, constant_rows(x.shape()[0], row));
}

TensorF DiscJoint::forward_with_tag(const TensorF& x, const TensorF& latent, Kind kind,
                                    const TensorF& tag) {
    const i64 want = kind == Kind::Z ? spec.z_dim : spec.c_dim;
    if (latent.shape().size() != 2 || latent.shape()[1] != want)
        throw ContractError("disc_joint: latent dim " +
                            std::to_string(latent.shape().size() == 2 ? latent.shape()[1] : -1) +
                            " does not match kind (want " + std::to_string(want) + ")");
    if (tag.shape() != Shape{x.shape()[0], 2})
        throw ContractError("disc_joint: tag must be [N, 2]");
    auto feat = trunk.forward(x);
    auto proj = kind == Kind::Z ? proj_z.forward(latent) : proj_c.forward(latent);
    auto joint = concat<float>({feat, leaky_relu(proj, spec.leaky_slope), tag}, 1);
    return h2.forward(leaky_relu(h1.forward(joint), spec.leaky_slope));
}

void DiscJoint::register_params(ParamStore& store, const std::string& prefix) {
    trunk.register_params(store, prefix + ".trunk");
    proj_z.register_params(store, prefix + ".proj_z");
    proj_c.register_params(store, prefix + ".proj_c");
    h1.register_params(store, prefix + ".h1");
    h2.register_params(store, prefix + ".h2");
}

void DiscJoint::set_train(bool train) { trunk.set_train(train); }

DiscCycle::DiscCycle(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    trunk = ConvTrunk(6, spec, false, rng);
    head = Linear(spec.feature_width, 1, rng);
}

TensorF DiscCycle::forward(const TensorF& x, const TensorF& x_other) {
    if (x.shape() != x_other.shape())
        throw ShapeError("disc_cycle: image shapes differ");
    return head.forward(trunk.forward(concat<float>({x, x_other}, 1)));
}

void DiscCycle::register_params(ParamStore& store, const std::string& prefix) {
    trunk.register_params(store, prefix + ".trunk");
    head.register_params(store, prefix + ".head");
}

void DiscCycle::set_train(bool train) { trunk.set_train(train); }

Models::Models(const NetworkSpec& spec_, Rng& rng) : spec(spec_) {
    augmenter = CondAugmenter(spec, rng);
    encoder = Encoder(spec, rng);
    generator = Generator(spec, rng);
    disc_image = DiscImage(spec, rng);
    disc_joint = DiscJoint(spec, rng);
    disc_cycle = DiscCycle(spec, rng);
    augmenter.register_params(gen_params, "aug");
    encoder.register_params(gen_params, "enc");
    generator.register_params(gen_params, "gen");
    disc_image.register_params(disc_params, "d_img");
    disc_joint.register_params(disc_params, "d_joint");
    disc_cycle.register_params(disc_params, "d_cycle");
}

void Models::set_train(bool train) {
    encoder.set_train(train);
    generator.set_train(train);
    disc_image.set_train(train);
    disc_joint.set_train(train);
    disc_cycle.set_train(train);
}

}  // namespace dualinf::nets
