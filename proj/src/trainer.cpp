#include "dualinf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "json.hpp"

#include "dualinf/errors.hpp"

namespace dualinf::train {

using nlohmann::json;

Adam::Adam(const nets::ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
    m_.resize(store.items.size());
    v_.resize(store.items.size());
    for (std::size_t i = 0; i < store.items.size(); ++i) {
        if (!store.items[i].second.requires_grad()) continue;
        const auto n = store.items[i].second.data().size();
        m_[i].assign(n, 0.0f);
        v_[i].assign(n, 0.0f);
    }
}

void Adam::step(nets::ParamStore& store, float lr) {
    if (m_.size() != store.items.size())
        throw ContractError("adam: state built for a different parameter set");
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
    for (std::size_t i = 0; i < store.items.size(); ++i) {
        auto& p = store.items[i].second;
        if (!p.requires_grad()) continue;
        if (!p.has_grad()) continue;  // untouched this phase
        auto& theta = p.data();
        const auto g = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        if (m.size() != theta.size())
            throw ContractError("adam: shape drift on " + store.items[i].first);
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const float gk = g.data()[k];
            m[k] = cfg_.beta1 * m[k] + (1.0f - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0f - cfg_.beta2) * gk * gk;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            theta[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
        p.zero_grad();
    }
}

float lr_schedule(float lr0, i64 epoch, i64 halving_period_epochs) {
    if (epoch < 0) throw ContractError("lr_schedule: negative epoch");
    if (halving_period_epochs < 1) throw ConfigError("lr_schedule: period must be >= 1");
    return lr0 * std::pow(0.5f, static_cast<float>(epoch / halving_period_epochs));
}

namespace {

json adam_to_json(const AdamConfig& a) {
    return json{{"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}

json net_to_json(const nets::NetworkSpec& n) {
    return json{{"z_dim", n.z_dim},
                {"c_dim", n.c_dim},
                {"num_classes", n.num_classes},
                {"base_channels", n.base_channels},
                {"feature_width", n.feature_width},
                {"leaky_slope", n.leaky_slope},
                {"temperature", n.temperature},
                {"prior", nets::to_string(n.prior)},
                {"straight_through", n.straight_through}};
}

json obj_to_json(const obj::ObjConfig& o) {
    return json{{"use_t2i", o.use_t2i},
                {"use_dual", o.use_dual},
                {"use_cycle", o.use_cycle},
                {"image_loss", o.t2i.image_loss},
                {"minimax_g", o.t2i.minimax_g},
                {"cycle_variant", obj::to_string(o.cycle_variant)},
                {"lambda_c", o.lambda_c},
                {"lambda_kl", o.lambda_kl},
                {"lambda_ce", o.lambda_ce}};
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr0"] = cfg.lr0;
    j["lr_halving_period"] = cfg.lr_halving_period;
    j["adam"] = adam_to_json(cfg.adam);
    j["net"] = net_to_json(cfg.net);
    j["objectives"] = obj_to_json(cfg.objectives);
    j["deterministic_embedding"] = cfg.deterministic_embedding;
    j["dataset_dir"] = cfg.dataset_dir;
    j["out_dir"] = cfg.out_dir;
    j["checkpoint_every_epochs"] = cfg.checkpoint_every_epochs;
    j["max_train_samples"] = cfg.max_train_samples;
    return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    TrainConfig cfg;
    maybe(j, "seed", cfg.seed);
    maybe(j, "epochs", cfg.epochs);
    maybe(j, "batch_size", cfg.batch_size);
    maybe(j, "lr0", cfg.lr0);
    maybe(j, "lr_halving_period", cfg.lr_halving_period);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        maybe(a, "beta1", cfg.adam.beta1);
        maybe(a, "beta2", cfg.adam.beta2);
        maybe(a, "eps", cfg.adam.eps);
    }
    if (j.contains("net")) {
        const auto& n = j.at("net");
        maybe(n, "z_dim", cfg.net.z_dim);
        maybe(n, "c_dim", cfg.net.c_dim);
        maybe(n, "num_classes", cfg.net.num_classes);
        maybe(n, "base_channels", cfg.net.base_channels);
        maybe(n, "feature_width", cfg.net.feature_width);
        maybe(n, "leaky_slope", cfg.net.leaky_slope);
        maybe(n, "temperature", cfg.net.temperature);
        maybe(n, "straight_through", cfg.net.straight_through);
        if (n.contains("prior"))
            cfg.net.prior = nets::prior_mode_from_string(n.at("prior").get<std::string>());
    }
    if (j.contains("objectives")) {
        const auto& o = j.at("objectives");
        maybe(o, "use_t2i", cfg.objectives.use_t2i);
        maybe(o, "use_dual", cfg.objectives.use_dual);
        maybe(o, "use_cycle", cfg.objectives.use_cycle);
        maybe(o, "image_loss", cfg.objectives.t2i.image_loss);
        maybe(o, "minimax_g", cfg.objectives.t2i.minimax_g);
        maybe(o, "lambda_c", cfg.objectives.lambda_c);
        maybe(o, "lambda_kl", cfg.objectives.lambda_kl);
        maybe(o, "lambda_ce", cfg.objectives.lambda_ce);
        if (o.contains("cycle_variant"))
            cfg.objectives.cycle_variant =
                obj::cycle_variant_from_string(o.at("cycle_variant").get<std::string>());
    }
    maybe(j, "deterministic_embedding", cfg.deterministic_embedding);
    maybe(j, "dataset_dir", cfg.dataset_dir);
    maybe(j, "out_dir", cfg.out_dir);
    maybe(j, "checkpoint_every_epochs", cfg.checkpoint_every_epochs);
    maybe(j, "max_train_samples", cfg.max_train_samples);
    if (cfg.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (cfg.lr0 <= 0.0f) throw ConfigError("config: lr0 must be > 0");
    if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return train_config_from_json(text);
}

const char* MetricsLog::header() {
    return "epoch,step,lr,t2i_d,t2i_g,dual_d,dual_g,cycle_d,cycle_g,kl_pc,kl_qz,kl_qc,content_ce";
}

void MetricsLog::open(const std::string& path, bool append) {
    const bool fresh = !append || !std::filesystem::exists(path);
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("metrics: cannot open " + path);
    if (fresh) out_ << header() << "\n";
}

void MetricsLog::row(i64 epoch, i64 step, const StepMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%lld,%lld,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g",
                  static_cast<long long>(epoch), static_cast<long long>(step),
                  static_cast<double>(m.lr), static_cast<double>(m.t2i_d),
                  static_cast<double>(m.t2i_g), static_cast<double>(m.dual_d),
                  static_cast<double>(m.dual_g), static_cast<double>(m.cycle_d),
                  static_cast<double>(m.cycle_g), static_cast<double>(m.kl_pc),
                  static_cast<double>(m.kl_qz), static_cast<double>(m.kl_qc),
                  static_cast<double>(m.content_ce));
    out_ << buf << "\n";
    out_.flush();
}

namespace {

Rng trainer_rng(const TrainConfig& cfg) { return Rng(cfg.seed ^ 0x7261696e65724aULL); }

Rng init_rng(const TrainConfig& cfg) { return Rng(cfg.seed); }

float finite_item(const TensorF& t, const char* name) {
    const float v = t.item();
    if (!std::isfinite(v))
        throw NumericError(std::string("training aborted: non-finite ") + name);
    return v;
}

void zero_grads(nets::ParamStore& store) {
    for (auto& [name, t] : store.items) t.zero_grad();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg)
    : cfg_(std::move(cfg)), rng_(trainer_rng(cfg_)) {
    Rng init = init_rng(cfg_);
    models_ = nets::Models(cfg_.net, init);
    models_.augmenter.deterministic = cfg_.deterministic_embedding;
    d_opt_ = Adam(models_.disc_params, cfg_.adam);
    g_opt_ = Adam(models_.gen_params, cfg_.adam);
}

StepMetrics Trainer::train_step(const data::PairBatch& batch, float lr) {
    const auto& ocfg = cfg_.objectives;
    auto& m = models_;
    const i64 n = batch.images.shape()[0];

    StepMetrics out;
    out.lr = lr;

    // ---- phase 1: discriminators, generator-side tensors detached ----
    zero_grads(m.gen_params);
    zero_grads(m.disc_params);
    obj::LossParts d_parts;
    d_parts.phase = obj::Phase::D;

    const bool need_fake = ocfg.use_t2i || ocfg.use_dual;
    const bool need_enc =
        ocfg.use_dual ||
        (ocfg.use_cycle && ocfg.cycle_variant == obj::CycleVariant::Adversarial);
    nets::LatentCode c_prior;
    TensorF z_prior, x_fake, z_hat_d, c_hat_d;
    if (need_fake) {
        c_prior = m.augmenter.forward(batch.matched_content, rng_);
        z_prior = randn<float>({n, cfg_.net.z_dim}, rng_);
        x_fake = m.generator.forward(z_prior, c_prior.sample).detach();
    }
    if (need_enc) {
        auto [z_hat, c_hat] = m.encoder.forward(batch.images, rng_);
        z_hat_d = z_hat.sample.detach();
        c_hat_d = c_hat.sample.detach();
    }

    if (ocfg.use_t2i) {
        obj::T2iScores s;
        auto [ru, rc] = m.disc_image.forward(batch.images, batch.matched_content);
        auto [mu_, mc] = m.disc_image.forward(batch.images, batch.mismatched_content);
        auto [fu, fc] = m.disc_image.forward(x_fake, batch.matched_content);
        s.real_cond = rc;
        s.mismatch_cond = mc;
        s.fake_cond = fc;
        s.real_uncond = ru;
        s.fake_uncond = fu;
        auto [pair_term, image_term] = obj::loss_t2i(s, obj::Phase::D, ocfg.t2i);
        d_parts.t2i_pair = pair_term;
        d_parts.t2i_image = image_term;
    }
    if (ocfg.use_dual) {
        obj::DualScores s;
        s.enc_z = m.disc_joint.forward(batch.images, z_hat_d, nets::Kind::Z);
        s.enc_c = m.disc_joint.forward(batch.images, c_hat_d, nets::Kind::C);
        s.gen_z = m.disc_joint.forward(x_fake, z_prior, nets::Kind::Z);
        s.gen_c = m.disc_joint.forward(x_fake, c_prior.sample.detach(), nets::Kind::C);
        auto [z_term, c_term] = obj::loss_dual(s, obj::Phase::D);
        d_parts.dual_z = z_term;
        d_parts.dual_c = c_term;
    }
    if (ocfg.use_cycle && ocfg.cycle_variant == obj::CycleVariant::Adversarial) {
        auto x_rec = m.generator.forward(z_hat_d, c_hat_d).detach();
        obj::CycleInputs in;
        in.real_logit = m.disc_cycle.forward(batch.images, batch.images);
        in.fake_logit = m.disc_cycle.forward(batch.images, x_rec);
        d_parts.cycle = obj::loss_cycle(in, obj::Phase::D, ocfg.cycle_variant);
    }

    obj::LossParts g_placeholder;
    g_placeholder.phase = obj::Phase::G;
    auto [d_total, unused_g] = obj::assemble_full(d_parts, g_placeholder, ocfg);
    finite_item(d_total, "discriminator total");
    if (d_total.requires_grad()) {
        backward(d_total);
        d_opt_.step(m.disc_params, lr);
    }
    out.t2i_d = d_parts.t2i_pair.defined()
                    ? d_parts.t2i_pair.item() +
                          (d_parts.t2i_image.defined() ? d_parts.t2i_image.item() : 0.0f)
                    : 0.0f;
    out.dual_d = (d_parts.dual_z.defined() ? d_parts.dual_z.item() : 0.0f) +
                 (d_parts.dual_c.defined() ? d_parts.dual_c.item() : 0.0f);
    out.cycle_d = d_parts.cycle.defined() ? d_parts.cycle.item() : 0.0f;

    // ---- phase 2: generator and encoder, fresh forward passes ----
    zero_grads(m.gen_params);
    zero_grads(m.disc_params);
    obj::LossParts g_parts;
    g_parts.phase = obj::Phase::G;

    auto c_prior_g = m.augmenter.forward(batch.matched_content, rng_);
    auto z_prior_g = randn<float>({n, cfg_.net.z_dim}, rng_);
    auto x_fake_g = m.generator.forward(z_prior_g, c_prior_g.sample);
    auto [z_hat_g, c_hat_g] = m.encoder.forward(batch.images, rng_);

    if (ocfg.use_t2i) {
        obj::T2iScores s;
        auto [fu, fc] = m.disc_image.forward(x_fake_g, batch.matched_content);
        s.fake_cond = fc;
        s.fake_uncond = fu;
        auto [pair_term, image_term] = obj::loss_t2i(s, obj::Phase::G, ocfg.t2i);
        g_parts.t2i_pair = pair_term;
        g_parts.t2i_image = image_term;
    }
    if (ocfg.use_dual) {
        obj::DualScores s;
        s.enc_z = m.disc_joint.forward(batch.images, z_hat_g.sample, nets::Kind::Z);
        s.enc_c = m.disc_joint.forward(batch.images, c_hat_g.sample, nets::Kind::C);
        s.gen_z = m.disc_joint.forward(x_fake_g, z_prior_g, nets::Kind::Z);
        s.gen_c = m.disc_joint.forward(x_fake_g, c_prior_g.sample, nets::Kind::C);
        auto [z_term, c_term] = obj::loss_dual(s, obj::Phase::G);
        g_parts.dual_z = z_term;
        g_parts.dual_c = c_term;
    }
    if (ocfg.use_cycle) {
        auto x_rec = m.generator.forward(z_hat_g.sample, c_hat_g.sample);
        obj::CycleInputs in;
        if (ocfg.cycle_variant == obj::CycleVariant::Adversarial)
            in.fake_logit = m.disc_cycle.forward(batch.images, x_rec);
        in.x = batch.images;
        in.x_prime = x_rec;
        g_parts.cycle = obj::loss_cycle(in, obj::Phase::G, ocfg.cycle_variant);
    }
    // regularizers toward the priors
    if (c_prior_g.mode == "gaussian")
        g_parts.kl_pc = obj::kl_gaussian_std(c_prior_g.mean, c_prior_g.log_variance);
    g_parts.kl_qz = obj::kl_gaussian_std(z_hat_g.mean, z_hat_g.log_variance);
    if (c_hat_g.mode == "gaussian")
        g_parts.kl_qc = obj::kl_gaussian_std(c_hat_g.mean, c_hat_g.log_variance);
    else if (c_hat_g.mode == "relaxed-categorical")
        g_parts.content_ce = obj::content_cross_entropy(c_hat_g.logits, batch.matched_content);

    obj::LossParts d_placeholder;
    d_placeholder.phase = obj::Phase::D;
    auto [unused_d, g_total] = obj::assemble_full(d_placeholder, g_parts, ocfg);
    finite_item(g_total, "generator total");
    if (g_total.requires_grad()) {
        backward(g_total);
        g_opt_.step(m.gen_params, lr);
        zero_grads(m.disc_params);  // drop gradients that flowed through the critics
    }
    out.t2i_g = g_parts.t2i_pair.defined()
                    ? g_parts.t2i_pair.item() +
                          (g_parts.t2i_image.defined() ? g_parts.t2i_image.item() : 0.0f)
                    : 0.0f;
    out.dual_g = (g_parts.dual_z.defined() ? g_parts.dual_z.item() : 0.0f) +
                 (g_parts.dual_c.defined() ? g_parts.dual_c.item() : 0.0f);
    out.cycle_g = g_parts.cycle.defined() ? g_parts.cycle.item() : 0.0f;
    out.kl_pc = g_parts.kl_pc.defined() ? g_parts.kl_pc.item() : 0.0f;
    out.kl_qz = g_parts.kl_qz.defined() ? g_parts.kl_qz.item() : 0.0f;
    out.kl_qc = g_parts.kl_qc.defined() ? g_parts.kl_qc.item() : 0.0f;
    out.content_ce = g_parts.content_ce.defined() ? g_parts.content_ce.item() : 0.0f;
    return out;
}

void Trainer::train(const data::Dataset& split, MetricsLog* log,
                    const std::function<void(Trainer&, i64)>& on_epoch_end) {
    if (split.size() < 1) throw ContractError("train: empty split");
    const i64 steps_per_epoch = std::max<i64>(1, split.size() / cfg_.batch_size);
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    for (; epoch_ < cfg_.epochs; ++epoch_) {
        const float lr = lr_schedule(cfg_.lr0, epoch_, cfg_.lr_halving_period);
        for (i64 s = 0; s < steps_per_epoch; ++s) {
            auto batch = data::sample_pair_batch(split, cfg_.batch_size, rng_);
            auto metrics = train_step(batch, lr);
            ++step_;
            if (log) log->row(epoch_, step_, metrics);
        }
        const bool last = epoch_ + 1 == cfg_.epochs;
        if (last || (cfg_.checkpoint_every_epochs > 0 &&
                     (epoch_ + 1) % cfg_.checkpoint_every_epochs == 0)) {
            const auto path =
                (fs::path(cfg_.out_dir) / ("checkpoint_" + std::to_string(epoch_ + 1) + ".ckpt"))
                    .string();
            // stored epoch is epoch_ + 1: a resumed run starts at the next one
            ++epoch_;
            save(path);
            --epoch_;
        }
        if (on_epoch_end) on_epoch_end(*this, epoch_);
    }
}

}  // namespace dualinf::train
