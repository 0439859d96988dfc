#include "dualinf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "dualinf/errors.hpp"
#include "dualinf/trainer.hpp"

namespace dualinf::eval {

GaussianStats gaussian_stats(const TensorF& features) {
    if (features.rank() != 2) throw ShapeError("gaussian_stats: expected [N, d]");
    const i64 n = features.shape()[0], d = features.shape()[1];
    if (n < 2) throw ContractError("gaussian_stats: need at least 2 samples");
    GaussianStats out;
    out.mean.assign(static_cast<std::size_t>(d), 0.0);
    out.cov.assign(static_cast<std::size_t>(d * d), 0.0);
    const float* f = features.data().data();
    for (i64 i = 0; i < n; ++i)
        for (i64 j = 0; j < d; ++j) out.mean[static_cast<std::size_t>(j)] += f[i * d + j];
    for (auto& m : out.mean) m /= static_cast<double>(n);
    for (i64 i = 0; i < n; ++i) {
        for (i64 j = 0; j < d; ++j) {
            const double cj = f[i * d + j] - out.mean[static_cast<std::size_t>(j)];
            for (i64 k = j; k < d; ++k) {
                const double ck = f[i * d + k] - out.mean[static_cast<std::size_t>(k)];
                out.cov[static_cast<std::size_t>(j * d + k)] += cj * ck;
            }
        }
    }
    for (i64 j = 0; j < d; ++j)
        for (i64 k = j; k < d; ++k) {
            const double v = out.cov[static_cast<std::size_t>(j * d + k)] / (n - 1.0);
            out.cov[static_cast<std::size_t>(j * d + k)] = v;
            out.cov[static_cast<std::size_t>(k * d + j)] = v;
        }
    return out;
}

void jacobi_eigh(std::vector<double> a, i64 n, std::vector<double>& values,
                 std::vector<double>& vectors) {
    if (static_cast<i64>(a.size()) != n * n) throw ContractError("jacobi: bad matrix size");
    vectors.assign(static_cast<std::size_t>(n * n), 0.0);
    for (i64 i = 0; i < n; ++i) vectors[static_cast<std::size_t>(i * n + i)] = 1.0;
    auto at = [&](i64 r, i64 c) -> double& { return a[static_cast<std::size_t>(r * n + c)]; };
    auto vt = [&](i64 r, i64 c) -> double& {
        return vectors[static_cast<std::size_t>(r * n + c)];
    };
    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (i64 p = 0; p < n; ++p)
            for (i64 q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-24) {
            values.resize(static_cast<std::size_t>(n));
            for (i64 i = 0; i < n; ++i) values[static_cast<std::size_t>(i)] = at(i, i);
            return;
        }
        for (i64 p = 0; p < n; ++p) {
            for (i64 q = p + 1; q < n; ++q) {
                if (std::abs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (i64 k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (i64 k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
                for (i64 k = 0; k < n; ++k) {
                    const double vpk = vt(p, k), vqk = vt(q, k);
                    vt(p, k) = c * vpk - s * vqk;
                    vt(q, k) = s * vpk + c * vqk;
                }
            }
        }
    }
    throw NumericError("jacobi: eigendecomposition did not converge");
}

namespace {

// B = Q diag(f(lambda)) Q^T from the rows-are-eigenvectors convention
std::vector<double> rebuild(const std::vector<double>& values,
                            const std::vector<double>& vectors, i64 n,
                            double (*f)(double), double clamp_floor) {
    double lmax = 0.0;
    for (const double v : values) lmax = std::max(lmax, v);
    const double floor_v = clamp_floor * lmax;
    std::vector<double> out(static_cast<std::size_t>(n * n), 0.0);
    for (i64 e = 0; e < n; ++e) {
        double lam = values[static_cast<std::size_t>(e)];
        if (lam < floor_v) lam = 0.0;  // near-singular sample covariances
        const double w = f(lam);
        for (i64 i = 0; i < n; ++i)
            for (i64 j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i * n + j)] +=
                    w * vectors[static_cast<std::size_t>(e * n + i)] *
                    vectors[static_cast<std::size_t>(e * n + j)];
    }
    return out;
}

std::vector<double> sym_sqrt(const std::vector<double>& m, i64 n) {
    std::vector<double> values, vectors;
    jacobi_eigh(m, n, values, vectors);
    return rebuild(values, vectors, n, [](double x) { return std::sqrt(std::max(x, 0.0)); },
                   1e-6);
}

std::vector<double> matmul_d(const std::vector<double>& a, const std::vector<double>& b,
                             i64 n) {
    std::vector<double> out(static_cast<std::size_t>(n * n), 0.0);
    for (i64 i = 0; i < n; ++i)
        for (i64 k = 0; k < n; ++k) {
            const double aik = a[static_cast<std::size_t>(i * n + k)];
            if (aik == 0.0) continue;
            for (i64 j = 0; j < n; ++j)
                out[static_cast<std::size_t>(i * n + j)] +=
                    aik * b[static_cast<std::size_t>(k * n + j)];
        }
    return out;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    const i64 d = a.dim();
    if (d != b.dim())
        throw ContractError("frechet: dim mismatch " + std::to_string(d) + " vs " +
                            std::to_string(b.dim()));
    double mean_term = 0.0;
    for (i64 i = 0; i < d; ++i) {
        const double diff = a.mean[static_cast<std::size_t>(i)] - b.mean[static_cast<std::size_t>(i)];
        mean_term += diff * diff;
    }
    const auto sqrt_a = sym_sqrt(a.cov, d);
    auto inner = matmul_d(matmul_d(sqrt_a, b.cov, d), sqrt_a, d);
    // symmetrize against accumulation noise before the second eigensolve
    for (i64 i = 0; i < d; ++i)
        for (i64 j = i + 1; j < d; ++j) {
            const double v = 0.5 * (inner[static_cast<std::size_t>(i * d + j)] +
                                    inner[static_cast<std::size_t>(j * d + i)]);
            inner[static_cast<std::size_t>(i * d + j)] = v;
            inner[static_cast<std::size_t>(j * d + i)] = v;
        }
    std::vector<double> values, vectors;
    jacobi_eigh(inner, d, values, vectors);
    double tr_sqrt_inner = 0.0;
    for (const double v : values) tr_sqrt_inner += std::sqrt(std::max(v, 0.0));
    double trace_term = 0.0;
    for (i64 i = 0; i < d; ++i)
        trace_term += a.cov[static_cast<std::size_t>(i * d + i)] +
                      b.cov[static_cast<std::size_t>(i * d + i)];
    const double result = mean_term + trace_term - 2.0 * tr_sqrt_inner;
    return std::max(result, 0.0);
}

double inception_score_analog(const TensorF& probs) {
    if (probs.rank() != 2) throw ShapeError("is_analog: expected [N, K]");
    const i64 n = probs.shape()[0], k = probs.shape()[1];
    const float* p = probs.data().data();
    std::vector<double> marginal(static_cast<std::size_t>(k), 0.0);
    for (i64 i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (i64 j = 0; j < k; ++j) row_sum += p[i * k + j];
        if (std::abs(row_sum - 1.0) > 1e-5)
            throw ContractError("is_analog: row " + std::to_string(i) +
                                " sums to " + std::to_string(row_sum));
        for (i64 j = 0; j < k; ++j) marginal[static_cast<std::size_t>(j)] += p[i * k + j];
    }
    for (auto& m : marginal) m /= static_cast<double>(n);
    double mean_kl = 0.0;
    for (i64 i = 0; i < n; ++i) {
        double kl = 0.0;
        for (i64 j = 0; j < k; ++j) {
            const double pij = p[i * k + j];
            if (pij > 1e-12)
                kl += pij * (std::log(pij) - std::log(std::max(marginal[static_cast<std::size_t>(j)], 1e-12)));
        }
        mean_kl += kl;
    }
    return std::exp(mean_kl / static_cast<double>(n));
}

i64 style_class(const data::Dataset& ds, const data::StyleAttributes& s) {
    if (ds.kind == "shapes") {
        if (s.position < 0 || s.scale < 0)
            throw ContractError("style_class: sample carries no quadrant/scale truth");
        return s.position * 3 + s.scale;  // quadrant x scale, 12 classes
    }
    if (ds.kind == "mnist_cb") {
        if (s.background_color < 0)
            throw ContractError("style_class: sample carries no background color");
        return s.background_color;
    }
    throw ContractError("style_class: dataset kind '" + ds.kind + "' has no style truth");
}

i64 style_class_count(const data::Dataset& ds) {
    if (ds.kind == "shapes") return 12;
    if (ds.kind == "mnist_cb") return static_cast<i64>(ds.palette.size());
    throw ContractError("style_class_count: dataset kind '" + ds.kind + "' has no style truth");
}

TensorF Probe::features(const TensorF& images) const {
    auto h = leaky_relu(c1.forward(images), slope);
    h = leaky_relu(c2.forward(h), slope);
    h = reshape(h, {images.shape()[0], -1});
    return leaky_relu(feat.forward(h), slope);
}

TensorF Probe::logits(const TensorF& images) const { return head.forward(features(images)); }

std::vector<i64> Probe::predict(const TensorF& images) const {
    return argmax_lastdim(logits(images));
}

namespace {

std::vector<i64> probe_targets(const data::Dataset& ds, ProbeTarget target) {
    if (target == ProbeTarget::Content) return ds.labels;
    std::vector<i64> out;
    out.reserve(static_cast<std::size_t>(ds.size()));
    for (const auto& s : ds.styles) out.push_back(style_class(ds, s));
    return out;
}

}  // namespace

Probe train_probe(const data::Dataset& ds, ProbeTarget target, std::uint64_t seed,
                  ProbeConfig cfg) {
    Rng rng(seed ^ 0x70726f6265ULL);
    const i64 classes = target == ProbeTarget::Content ? ds.num_classes : style_class_count(ds);
    Probe probe;
    probe.num_classes = classes;
    probe.c1 = nets::Conv(3, 8, 4, 2, 1, rng);    // 32 -> 16
    probe.c2 = nets::Conv(8, 16, 4, 2, 1, rng);   // 16 -> 8
    probe.feat = nets::Linear(16 * 8 * 8, 64, rng);
    probe.head = nets::Linear(64, classes, rng);
    if (target == ProbeTarget::Style) cfg.accuracy_bar = std::min(cfg.accuracy_bar, 0.90);

    auto [train_split, held_split] = data::split_dataset(ds, 1.0 - cfg.heldout_fraction, seed);
    if (train_split.size() < cfg.batch_size || held_split.size() < 1)
        throw ContractError("train_probe: dataset too small for a held-out split");
    const auto train_targets = probe_targets(train_split, target);
    const auto held_targets = probe_targets(held_split, target);

    nets::ParamStore params;
    probe.c1.register_params(params, "c1");
    probe.c2.register_params(params, "c2");
    probe.feat.register_params(params, "feat");
    probe.head.register_params(params, "head");
    train::AdamConfig adam_cfg;
    adam_cfg.beta1 = 0.9f;
    train::Adam opt(params, adam_cfg);

    const i64 steps = train_split.size() / cfg.batch_size;
    for (i64 epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (i64 s = 0; s < steps; ++s) {
            std::vector<i64> idx(static_cast<std::size_t>(cfg.batch_size));
            std::vector<i64> lab(static_cast<std::size_t>(cfg.batch_size));
            for (i64 i = 0; i < cfg.batch_size; ++i) {
                const i64 j = static_cast<i64>(
                    rng.next_below(static_cast<std::uint64_t>(train_split.size())));
                idx[static_cast<std::size_t>(i)] = j;
                lab[static_cast<std::size_t>(i)] = train_targets[static_cast<std::size_t>(j)];
            }
            auto x = train_split.images(idx);
            auto y = one_hot<float>(lab, classes);
            auto logit = probe.logits(x);
            auto loss = neg(mean(sum(log_softmax_lastdim(logit) * y, {1}, false)));
            backward(loss);
            opt.step(params, cfg.lr);
        }
    }

    // held-out accuracy in chunks
    i64 correct = 0;
    const i64 chunk = 128;
    for (i64 at = 0; at < held_split.size(); at += chunk) {
        const i64 m = std::min(chunk, held_split.size() - at);
        std::vector<i64> idx(static_cast<std::size_t>(m));
        std::iota(idx.begin(), idx.end(), at);
        const auto pred = probe.predict(held_split.images(idx));
        for (i64 i = 0; i < m; ++i)
            if (pred[static_cast<std::size_t>(i)] == held_targets[static_cast<std::size_t>(at + i)])
                ++correct;
    }
    probe.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(held_split.size());
    if (probe.heldout_accuracy < cfg.accuracy_bar) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "probe for %s reached held-out accuracy %.3f, below the %.2f bar",
                      target == ProbeTarget::Content ? "content" : "style",
                      probe.heldout_accuracy, cfg.accuracy_bar);
        throw ProbeError(msg);
    }
    return probe;
}

namespace {

// Generate n images with cycling content labels; returns images + labels.
std::pair<TensorF, std::vector<i64>> generate_labeled(nets::Models& models, i64 n, Rng& rng) {
    if (n < 1) throw ContractError("generation metric: n must be >= 1");
    const i64 k = models.spec.num_classes;
    const i64 chunk = 64;
    std::vector<TensorF> parts;
    std::vector<i64> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (i64 at = 0; at < n; at += chunk) {
        const i64 m = std::min(chunk, n - at);
        std::vector<i64> lab(static_cast<std::size_t>(m));
        for (i64 i = 0; i < m; ++i) lab[static_cast<std::size_t>(i)] = (at + i) % k;
        auto c = models.augmenter.forward(one_hot<float>(lab, k), rng);
        auto z = randn<float>({m, models.spec.z_dim}, rng);
        parts.push_back(models.generator.forward(z, c.sample).detach());
        labels.insert(labels.end(), lab.begin(), lab.end());
    }
    return {parts.size() == 1 ? parts[0] : concat<float>(parts, 0), std::move(labels)};
}

}  // namespace

double content_accuracy(nets::Models& models, const Probe& content_probe, i64 n, Rng& rng) {
    auto [images, labels] = generate_labeled(models, n, rng);
    const auto pred = content_probe.predict(images);
    i64 correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(n);
}

double fid_analog(nets::Models& models, const Probe& probe, const data::Dataset& real,
                  i64 n, Rng& rng) {
    if (n < 2) throw ContractError("fid_analog: need n >= 2");
    const i64 n_real = std::min<i64>(n, real.size());
    std::vector<i64> idx(static_cast<std::size_t>(n_real));
    for (auto& v : idx) v = static_cast<i64>(rng.next_below(static_cast<std::uint64_t>(real.size())));
    auto real_feat = probe.features(real.images(idx)).detach();
    auto [fake_images, labels] = generate_labeled(models, n, rng);
    auto fake_feat = probe.features(fake_images).detach();
    return frechet_distance(gaussian_stats(real_feat), gaussian_stats(fake_feat));
}

double is_analog(nets::Models& models, const Probe& probe, i64 n, Rng& rng) {
    auto [images, labels] = generate_labeled(models, n, rng);
    auto probs = softmax_lastdim(probe.logits(images)).detach();
    return inception_score_analog(probs);
}

SwapScores swap_score(nets::Models& models, const Probe& content_probe,
                      const Probe& style_probe, const data::Dataset& ds, i64 n_pairs,
                      Rng& rng) {
    if (n_pairs < 1) throw ContractError("swap_score: need n_pairs >= 1");
    if (ds.size() < 2) throw ContractError("swap_score: dataset too small");
    SwapScores out;
    const i64 chunk = 64;
    i64 style_hits = 0, content_hits = 0;
    for (i64 at = 0; at < n_pairs; at += chunk) {
        const i64 m = std::min(chunk, n_pairs - at);
        std::vector<i64> ia(static_cast<std::size_t>(m)), ib(static_cast<std::size_t>(m));
        for (i64 i = 0; i < m; ++i) {
            ia[static_cast<std::size_t>(i)] =
                static_cast<i64>(rng.next_below(static_cast<std::uint64_t>(ds.size())));
            ib[static_cast<std::size_t>(i)] =
                static_cast<i64>(rng.next_below(static_cast<std::uint64_t>(ds.size())));
        }
        auto [za, ca] = models.encoder.forward(ds.images(ia), rng, /*zero_noise=*/true);
        auto [zb, cb] = models.encoder.forward(ds.images(ib), rng, /*zero_noise=*/true);
        auto x_ab = models.generator.forward(zb.sample, ca.sample).detach();
        const auto style_pred = style_probe.predict(x_ab);
        const auto content_pred = content_probe.predict(x_ab);
        for (i64 i = 0; i < m; ++i) {
            if (style_pred[static_cast<std::size_t>(i)] ==
                style_class(ds, ds.styles[static_cast<std::size_t>(ib[static_cast<std::size_t>(i)])]))
                ++style_hits;
            if (content_pred[static_cast<std::size_t>(i)] ==
                ds.labels[static_cast<std::size_t>(ia[static_cast<std::size_t>(i)])])
                ++content_hits;
        }
    }
    out.style_swap = static_cast<double>(style_hits) / static_cast<double>(n_pairs);
    out.content_preservation = static_cast<double>(content_hits) / static_cast<double>(n_pairs);
    return out;
}

TensorF interpolation_grid(nets::Models& models, const TensorF& x_src, const TensorF& x_tgt,
                           i64 steps, Rng& rng) {
    if (steps < 2) throw ContractError("interpolation_grid: steps must be >= 2");
    if (x_src.shape() != x_tgt.shape() || x_src.shape()[0] != 1)
        throw ShapeError("interpolation_grid: expected matching [1, 3, 32, 32] images");
    auto [zs, cs] = models.encoder.forward(x_src, rng, /*zero_noise=*/true);
    auto [zt, ct] = models.encoder.forward(x_tgt, rng, /*zero_noise=*/true);
    std::vector<TensorF> cells;
    cells.reserve(static_cast<std::size_t>(steps * steps));
    for (i64 i = 0; i < steps; ++i) {
        const float tc = static_cast<float>(i) / static_cast<float>(steps - 1);
        auto c = mul_scalar(cs.sample, 1.0f - tc) + mul_scalar(ct.sample, tc);
        for (i64 j = 0; j < steps; ++j) {
            const float tz = static_cast<float>(j) / static_cast<float>(steps - 1);
            auto z = mul_scalar(zs.sample, 1.0f - tz) + mul_scalar(zt.sample, tz);
            cells.push_back(models.generator.forward(z, c).detach());
        }
    }
    return concat<float>(cells, 0);
}

void dump_latents(nets::Models& models, const data::Dataset& ds, const std::string& path,
                  Rng& rng) {
    if (ds.size() < 1) throw ContractError("dump_latents: empty dataset");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("dump_latents: cannot write " + path);
    out << "id,label,bg,fg,pos,scale,count";
    for (i64 i = 0; i < models.spec.z_dim; ++i) out << ",z" << i;
    for (i64 i = 0; i < models.spec.c_dim; ++i) out << ",c" << i;
    out << "\n";
    const i64 chunk = 128;
    char buf[64];
    for (i64 at = 0; at < ds.size(); at += chunk) {
        const i64 m = std::min(chunk, ds.size() - at);
        std::vector<i64> idx(static_cast<std::size_t>(m));
        std::iota(idx.begin(), idx.end(), at);
        auto [zc, cc] = models.encoder.forward(ds.images(idx), rng, /*zero_noise=*/true);
        const auto& z = zc.mean.data();
        const auto& c = cc.mode == "gaussian" ? cc.mean.data() : cc.logits.data();
        for (i64 i = 0; i < m; ++i) {
            const auto& s = ds.styles[static_cast<std::size_t>(at + i)];
            out << (at + i) << "," << ds.labels[static_cast<std::size_t>(at + i)] << ","
                << s.background_color << "," << s.foreground_color << "," << s.position << ","
                << s.scale << "," << s.count;
            for (i64 k = 0; k < models.spec.z_dim; ++k) {
                std::snprintf(buf, sizeof(buf), ",%.6g",
                              static_cast<double>(z[static_cast<std::size_t>(i * models.spec.z_dim + k)]));
                out << buf;
            }
            for (i64 k = 0; k < models.spec.c_dim; ++k) {
                std::snprintf(buf, sizeof(buf), ",%.6g",
                              static_cast<double>(c[static_cast<std::size_t>(i * models.spec.c_dim + k)]));
                out << buf;
            }
            out << "\n";
        }
    }
    if (!out) throw IoError("dump_latents: write to " + path + " failed");
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["is_analog"] = r.is_analog;
    j["fid_analog"] = r.fid_analog;
    j["content_accuracy"] = r.content_accuracy;
    j["style_swap_score"] = r.style_swap_score;
    j["content_preservation_score"] = r.content_preservation_score;
    j["sample_count"] = r.sample_count;
    j["seed"] = r.seed;
    j["epoch"] = r.epoch;
    return j.dump(2);
}

}  // namespace dualinf::eval
