// Acceptance suite: one pass/fail line per criterion, exit 0 only if all
// eight pass. Progress streams to stderr; the verdict lines go to stdout.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dualinf/datasets.hpp"
#include "dualinf/errors.hpp"
#include "dualinf/eval.hpp"
#include "dualinf/objectives.hpp"
#include "dualinf/tensor.hpp"
#include "dualinf/trainer.hpp"

using namespace dualinf;
namespace fs = std::filesystem;

namespace {

struct Fail : std::runtime_error {
    explicit Fail(const std::string& msg) : std::runtime_error(msg) {}
};

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

void progress(const std::string& msg) {
    std::fprintf(stderr, "[acceptance] %s\n", msg.c_str());
    std::fflush(stderr);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient checks

// Reduce an op's output through fixed sign-mixed weights of magnitude near 1
// so every output element keeps an O(1) influence on the scalar loss; f32
// central differences resolve only 3-4 digits.
TensorF unit_weights(const Shape& shape, Rng& rng) {
    auto w = rand_uniform<float>(shape, rng, 0.75f, 1.5f);
    for (auto& v : w.data())
        if (rng.uniform() < 0.5) v = -v;
    return TensorF(shape, w.data(), false);
}

double check_weighted(const std::function<TensorF(const TensorF&)>& op, const TensorF& x0,
                      Rng& rng) {
    auto probe = op(TensorF(x0.shape(), x0.data(), false));
    const auto w = unit_weights(probe.shape(), rng);
    return grad_check<float>([&op, w](const TensorF& x) { return sum(op(x) * w); }, x0,
                             1e-3f);
}

struct GradCase {
    const char* name;
    std::function<double(Rng&)> run;  // one random instance -> max rel err
};

std::vector<GradCase> primitive_cases() {
    auto unary = [](std::function<TensorF(const TensorF&)> op, float lo, float hi) {
        return [op, lo, hi](Rng& rng) {
            Shape shape{1 + static_cast<i64>(rng.next_below(2)),
                        1 + static_cast<i64>(rng.next_below(4))};
            return check_weighted(op, rand_uniform<float>(shape, rng, lo, hi), rng);
        };
    };
    std::vector<GradCase> cases;
    cases.push_back({"exp", unary([](const TensorF& x) { return exp_(x); }, -0.5f, 1.0f)});
    cases.push_back({"log", unary([](const TensorF& x) { return log_(x); }, 0.5f, 3.0f)});
    cases.push_back({"sqrt", unary([](const TensorF& x) { return sqrt_(x); }, 0.5f, 3.0f)});
    cases.push_back({"tanh", unary([](const TensorF& x) { return tanh_(x); }, -1.0f, 1.0f)});
    cases.push_back(
        {"sigmoid", unary([](const TensorF& x) { return sigmoid(x); }, -1.0f, 1.0f)});
    cases.push_back(
        {"softplus", unary([](const TensorF& x) { return softplus(x); }, -1.0f, 1.0f)});
    cases.push_back({"neg", unary([](const TensorF& x) { return neg(x); }, -2.0f, 2.0f)});
    cases.push_back(
        {"square", unary([](const TensorF& x) { return square(x); }, 0.3f, 2.0f)});
    cases.push_back({"abs", unary([](const TensorF& x) { return abs_(x); }, 0.3f, 2.0f)});
    cases.push_back({"leaky_relu+",
                     unary([](const TensorF& x) { return leaky_relu(x, 0.2f); }, 0.3f, 2.0f)});
    cases.push_back({"leaky_relu-", unary([](const TensorF& x) { return leaky_relu(x, 0.2f); },
                                          -2.0f, -0.3f)});
    cases.push_back({"add", [](Rng& rng) {
                         auto other = rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f);
                         const TensorF o(other.shape(), other.data(), false);
                         return check_weighted([o](const TensorF& x) { return x + o; },
                                               rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f),
                                               rng);
                     }});
    cases.push_back({"mul", [](Rng& rng) {
                         auto other = rand_uniform<float>({2, 3}, rng, 0.5f, 1.5f);
                         const TensorF o(other.shape(), other.data(), false);
                         return check_weighted([o](const TensorF& x) { return x * o; },
                                               rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f),
                                               rng);
                     }});
    cases.push_back({"div", [](Rng& rng) {
                         auto other = rand_uniform<float>({2, 3}, rng, 0.5f, 1.5f);
                         const TensorF o(other.shape(), other.data(), false);
                         return check_weighted([o](const TensorF& x) { return x / o; },
                                               rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f),
                                               rng);
                     }});
    cases.push_back(
        {"softmax", unary([](const TensorF& x) { return softmax_lastdim(x); }, -1.0f, 1.0f)});
    cases.push_back({"log_softmax", unary([](const TensorF& x) { return log_softmax_lastdim(x); },
                                          -1.0f, 1.0f)});
    cases.push_back({"sum_axis", [](Rng& rng) {
                         return check_weighted(
                             [](const TensorF& x) { return sum(x, {1}, false); },
                             rand_uniform<float>({2, 3, 2}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"mean_axis", [](Rng& rng) {
                         return check_weighted(
                             [](const TensorF& x) { return mean(x, {0}, false); },
                             rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"reshape", [](Rng& rng) {
                         return check_weighted(
                             [](const TensorF& x) { return reshape(x, {6}); },
                             rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"transpose", [](Rng& rng) {
                         return check_weighted(
                             [](const TensorF& x) { return transpose(x, {1, 0}); },
                             rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"broadcast", [](Rng& rng) {
                         return check_weighted(
                             [](const TensorF& x) { return broadcast_to(x, {2, 3, 2}); },
                             rand_uniform<float>({1, 3, 2}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"slice", [](Rng& rng) {
                         return check_weighted(
                             [](const TensorF& x) { return slice(x, 1, 1, 2); },
                             rand_uniform<float>({2, 4}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"concat", [](Rng& rng) {
                         auto other = rand_uniform<float>({2, 2}, rng, -1.0f, 1.0f);
                         const TensorF o(other.shape(), other.data(), false);
                         return check_weighted(
                             [o](const TensorF& x) { return concat<float>({x, o}, 1); },
                             rand_uniform<float>({2, 2}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"matmul", [](Rng& rng) {
                         auto b = rand_uniform<float>({3, 2}, rng, -0.8f, 0.8f);
                         const TensorF bc(b.shape(), b.data(), false);
                         return check_weighted(
                             [bc](const TensorF& x) { return matmul(x, bc); },
                             rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f), rng);
                     }});
    cases.push_back({"conv2d", [](Rng& rng) {
                         auto x = rand_uniform<float>({1, 2, 4, 4}, rng, 0.4f, 1.0f);
                         const TensorF xc(x.shape(), x.data(), false);
                         return grad_check<float>(
                             [xc](const TensorF& k) { return sum(conv2d(xc, k, 2, 0)); },
                             rand_uniform<float>({1, 2, 2, 2}, rng, 0.1f, 0.4f), 1e-3f);
                     }});
    cases.push_back({"conv_transpose2d", [](Rng& rng) {
                         auto x = rand_uniform<float>({1, 2, 2, 2}, rng, 0.4f, 1.0f);
                         const TensorF xc(x.shape(), x.data(), false);
                         return grad_check<float>(
                             [xc](const TensorF& k) {
                                 return sum(conv_transpose2d(xc, k, 2, 0));
                             },
                             rand_uniform<float>({2, 1, 2, 2}, rng, 0.1f, 0.4f), 1e-3f);
                     }});
    return cases;
}

// Composite losses: logits sit where |sigmoid - target| >= 0.5 so each input
// element keeps an O(1) gradient against f32 finite-difference noise.
std::vector<GradCase> composite_cases() {
    std::vector<GradCase> cases;
    auto toward1 = [](Rng& rng, Shape s) { return rand_uniform<float>(s, rng, -1.5f, -0.3f); };
    auto toward0 = [](Rng& rng, Shape s) { return rand_uniform<float>(s, rng, 0.3f, 1.5f); };

    cases.push_back({"loss_t2i(D)", [toward1, toward0](Rng& rng) {
        auto x0 = concat<float>({toward1(rng, {1, 1}), toward0(rng, {1, 4})}, 1);
        return grad_check<float>(
            [](const TensorF& x) {
                obj::T2iScores s;
                s.real_cond = slice(x, 1, 0, 1);
                s.mismatch_cond = slice(x, 1, 1, 1);
                s.fake_cond = slice(x, 1, 2, 1);
                s.real_uncond = neg(slice(x, 1, 3, 1));  // pushes toward target 1
                s.fake_uncond = slice(x, 1, 4, 1);
                auto [pair_term, image_term] = obj::loss_t2i(s, obj::Phase::D, {});
                return pair_term + image_term;
            },
            x0, 1e-3f);
    }});
    cases.push_back({"loss_t2i(G)", [toward1](Rng& rng) {
        auto x0 = toward1(rng, {2, 2});
        return grad_check<float>(
            [](const TensorF& x) {
                obj::T2iScores s;
                s.fake_cond = slice(x, 1, 0, 1);
                s.fake_uncond = slice(x, 1, 1, 1);
                auto [pair_term, image_term] = obj::loss_t2i(s, obj::Phase::G, {});
                return pair_term + image_term;
            },
            x0, 1e-3f);
    }});
    cases.push_back({"loss_dual(D)", [toward1, toward0](Rng& rng) {
        auto x0 = concat<float>({toward1(rng, {1, 2}), toward0(rng, {1, 2})}, 1);
        return grad_check<float>(
            [](const TensorF& x) {
                obj::DualScores s;
                s.enc_z = slice(x, 1, 0, 1);
                s.enc_c = slice(x, 1, 1, 1);
                s.gen_z = slice(x, 1, 2, 1);
                s.gen_c = slice(x, 1, 3, 1);
                auto [z_term, c_term] = obj::loss_dual(s, obj::Phase::D);
                return z_term + c_term;
            },
            x0, 1e-3f);
    }});
    cases.push_back({"loss_dual(G)", [toward1, toward0](Rng& rng) {
        auto x0 = concat<float>({toward0(rng, {1, 2}), toward1(rng, {1, 2})}, 1);
        return grad_check<float>(
            [](const TensorF& x) {
                obj::DualScores s;
                s.enc_z = slice(x, 1, 0, 1);
                s.enc_c = slice(x, 1, 1, 1);
                s.gen_z = slice(x, 1, 2, 1);
                s.gen_c = slice(x, 1, 3, 1);
                auto [z_term, c_term] = obj::loss_dual(s, obj::Phase::G);
                return z_term + c_term;
            },
            x0, 1e-3f);
    }});
    cases.push_back({"loss_cycle(adv)", [toward1, toward0](Rng& rng) {
        auto x0 = concat<float>({toward1(rng, {1, 1}), toward0(rng, {1, 1})}, 1);
        return grad_check<float>(
            [](const TensorF& x) {
                obj::CycleInputs in;
                in.real_logit = slice(x, 1, 0, 1);
                in.fake_logit = slice(x, 1, 1, 1);
                auto d = obj::loss_cycle(in, obj::Phase::D, obj::CycleVariant::Adversarial);
                obj::CycleInputs g;
                g.fake_logit = slice(x, 1, 0, 1);
                return d + obj::loss_cycle(g, obj::Phase::G, obj::CycleVariant::Adversarial);
            },
            x0, 1e-3f);
    }});
    cases.push_back({"loss_cycle(l1)", [](Rng& rng) {
        auto x0 = rand_uniform<float>({1, 4}, rng, 0.4f, 1.5f);
        return grad_check<float>(
            [](const TensorF& x) {
                obj::CycleInputs in;
                in.x = x;
                in.x_prime = TensorF::zeros({1, 4});
                return obj::loss_cycle(in, obj::Phase::G, obj::CycleVariant::L1);
            },
            x0, 1e-3f);
    }});
    cases.push_back({"loss_cycle(l2)", [](Rng& rng) {
        auto x0 = rand_uniform<float>({1, 4}, rng, 0.4f, 1.5f);
        return grad_check<float>(
            [](const TensorF& x) {
                obj::CycleInputs in;
                in.x = x;
                in.x_prime = TensorF::zeros({1, 4});
                return obj::loss_cycle(in, obj::Phase::G, obj::CycleVariant::L2);
            },
            x0, 1e-3f);
    }});
    cases.push_back({"kl_gaussian_std", [](Rng& rng) {
        auto x0 = rand_uniform<float>({2, 6}, rng, 0.5f, 1.2f);
        return grad_check<float>(
            [](const TensorF& x) {
                return obj::kl_gaussian_std(slice(x, 1, 0, 3), slice(x, 1, 3, 3));
            },
            x0, 1e-3f);
    }});
    cases.push_back({"content_cross_entropy", [](Rng& rng) {
        auto x0 = rand_uniform<float>({2, 3}, rng, -1.0f, 1.0f);
        return grad_check<float>(
            [](const TensorF& x) {
                return obj::content_cross_entropy(x, one_hot<float>({0, 1}, 3));
            },
            x0, 1e-3f);
    }});
    return cases;
}

std::string criterion_1() {
    const double t0 = now_s();
    Rng rng(101);
    double worst = 0.0;
    std::string worst_name = "-";
    auto run_cases = [&](const std::vector<GradCase>& cases) {
        for (const auto& c : cases) {
            for (int trial = 0; trial < 10; ++trial) {
                const double err = c.run(rng);
                if (err > worst) {
                    worst = err;
                    worst_name = c.name;
                }
            }
        }
    };
    run_cases(primitive_cases());
    run_cases(composite_cases());
    const double elapsed = now_s() - t0;
    if (worst >= 1e-3)
        throw Fail(fmt("worst rel err %.2e (%s) >= 1e-3", worst, worst_name.c_str()));
    if (elapsed >= 120.0) throw Fail(fmt("suite took %.0fs >= 120s", elapsed));
    return fmt("worst rel err %.1e (%s), %.1fs", worst, worst_name.c_str(), elapsed);
}

// ---------------------------------------------------------------------------
// criterion 2: closed-form loss values

void expect_near(double got, double want, double tol, const char* what) {
    if (std::abs(got - want) > tol)
        throw Fail(fmt("%s: got %.9g, want %.9g (tol %g)", what, got, want, tol));
}

std::string criterion_2() {
    const double ln2 = std::log(2.0);
    {
        obj::T2iScores s;
        s.real_cond = TensorF::zeros({4, 1});
        s.mismatch_cond = TensorF::zeros({4, 1});
        s.fake_cond = TensorF::zeros({4, 1});
        obj::T2iFlags flags;
        flags.image_loss = false;
        auto [pair_term, image_term] = obj::loss_t2i(s, obj::Phase::D, flags);
        expect_near(pair_term.item(), 2.0 * ln2, 1e-6, "t2i pair at score 0.5");
        expect_near(image_term.item(), 0.0, 1e-6, "t2i image term when disabled");
    }
    {
        obj::DualScores s;
        s.enc_z = TensorF::zeros({4, 1});
        s.enc_c = TensorF::zeros({4, 1});
        s.gen_z = TensorF::zeros({4, 1});
        s.gen_c = TensorF::zeros({4, 1});
        auto [z_term, c_term] = obj::loss_dual(s, obj::Phase::D);
        expect_near(z_term.item() + c_term.item(), 4.0 * ln2, 1e-6,
                    "dual z+c at score 0.5");
    }
    expect_near(obj::kl_gaussian_std(TensorF::zeros({1, 1}), TensorF::zeros({1, 1})).item(),
                0.0, 1e-6, "kl at standard normal");
    expect_near(obj::kl_gaussian_std(TensorF::full({1, 1}, 1.0f), TensorF::zeros({1, 1})).item(),
                0.5, 1e-6, "kl at mu=1");
    expect_near(obj::kl_gaussian_std(TensorF::zeros({1, 1}), TensorF::full({1, 1}, 1.0f)).item(),
                0.5 * (std::exp(1.0) - 2.0), 1e-6, "kl at logvar=1");
    expect_near(
        obj::content_cross_entropy(TensorF::zeros({3, 10}), one_hot<float>({0, 5, 9}, 10)).item(),
        std::log(10.0), 1e-6, "uniform cross-entropy");
    {
        auto stats = [](std::vector<double> mean, double diag, i64 d) {
            eval::GaussianStats g;
            g.mean = std::move(mean);
            g.cov.assign(static_cast<std::size_t>(d * d), 0.0);
            for (i64 i = 0; i < d; ++i) g.cov[static_cast<std::size_t>(i * d + i)] = diag;
            return g;
        };
        auto a = stats({0, 0, 0}, 1.0, 3);
        expect_near(eval::frechet_distance(a, a), 0.0, 1e-6, "frechet identical");
        expect_near(eval::frechet_distance(stats({1, 0, 0}, 1.0, 3), a), 1.0, 1e-6,
                    "frechet unit mean shift");
        expect_near(eval::frechet_distance(stats({0, 0, 0}, 4.0, 3), a), 3.0, 1e-6,
                    "frechet 4I vs I in dim 3");
    }
    return "all closed forms within 1e-6";
}

// ---------------------------------------------------------------------------
// criterion 3: reduction to direct transcriptions of Eqs. (1) and (2)

double mean_neg_log_sigmoid(const TensorF& logits) {
    double acc = 0.0;
    for (const float v : logits.data()) acc += std::log1p(std::exp(-static_cast<double>(v)));
    return acc / static_cast<double>(logits.data().size());
}

double mean_neg_log_one_minus_sigmoid(const TensorF& logits) {
    double acc = 0.0;
    for (const float v : logits.data()) acc += std::log1p(std::exp(static_cast<double>(v)));
    return acc / static_cast<double>(logits.data().size());
}

std::string criterion_3() {
    auto [imgs, labs] = data::make_synth_digits(64, 33);
    auto ds = data::make_mnist_cb(imgs, labs, data::default_palette(), 33);

    nets::NetworkSpec spec;  // gaussian conditioning augmentation, c_dim 16
    spec.base_channels = 4;
    spec.feature_width = 32;
    Rng init(5);
    nets::Models models(spec, init);
    models.set_train(false);  // frozen batch statistics keep both sides identical

    obj::ObjConfig cfg;
    cfg.use_dual = false;
    cfg.use_cycle = false;
    cfg.t2i.image_loss = false;
    cfg.lambda_kl = 0.0f;
    cfg.lambda_ce = 0.0f;

    Rng rng(17);
    const i64 batch = 8;
    auto pb = data::pair_batch_at(ds, {0, 1, 2, 3, 4, 5, 6, 7}, rng);

    for (const bool deterministic : {false, true}) {
        models.augmenter.deterministic = deterministic;
        auto c = models.augmenter.forward(pb.matched_content, rng);
        auto z = randn<float>({batch, spec.z_dim}, rng);
        auto x_fake = models.generator.forward(z, c.sample);

        obj::T2iScores d_scores;
        d_scores.real_cond = models.disc_image.forward(pb.images, pb.matched_content).second;
        d_scores.mismatch_cond =
            models.disc_image.forward(pb.images, pb.mismatched_content).second;
        d_scores.fake_cond =
            models.disc_image.forward(x_fake.detach(), pb.matched_content).second;
        obj::T2iScores g_scores;
        g_scores.fake_cond = models.disc_image.forward(x_fake, pb.matched_content).second;

        obj::LossParts d_parts, g_parts;
        d_parts.phase = obj::Phase::D;
        auto [d_pair, d_image] = obj::loss_t2i(d_scores, obj::Phase::D, cfg.t2i);
        d_parts.t2i_pair = d_pair;
        d_parts.t2i_image = d_image;
        g_parts.phase = obj::Phase::G;
        auto [g_pair, g_image] = obj::loss_t2i(g_scores, obj::Phase::G, cfg.t2i);
        g_parts.t2i_pair = g_pair;
        g_parts.t2i_image = g_image;
        if (!deterministic) g_parts.kl_pc = obj::kl_gaussian_std(c.mean, c.log_variance);
        auto [d_total, g_total] = obj::assemble_full(d_parts, g_parts, cfg);

        // Direct double-precision transcription of the matching-aware loss:
        // L_D = E[-log D(x, c)] + 1/2 (E[-log(1 - D(x_mis, c))] +
        //       E[-log(1 - D(x_fake, c))]); L_G = E[-log D(x_fake, c)], plus
        // lambda_c KL(N(mu, sigma) || N(0, I)) when c is sampled.
        const double direct_d =
            mean_neg_log_sigmoid(d_scores.real_cond) +
            0.5 * (mean_neg_log_one_minus_sigmoid(d_scores.mismatch_cond) +
                   mean_neg_log_one_minus_sigmoid(d_scores.fake_cond));
        double direct_g = mean_neg_log_sigmoid(g_scores.fake_cond);
        if (!deterministic) {
            const auto& mu = c.mean.data();
            const auto& lv = c.log_variance.data();
            double kl = 0.0;
            for (std::size_t i = 0; i < mu.size(); ++i)
                kl += 0.5 * (static_cast<double>(mu[i]) * mu[i] + std::exp(static_cast<double>(lv[i])) -
                             1.0 - lv[i]);
            direct_g += static_cast<double>(cfg.lambda_c) * kl / static_cast<double>(batch);
        }

        const char* tag = deterministic ? "deterministic-embedding form" : "sampled form";
        const double tol_d = 1e-6 * std::max(1.0, std::abs(direct_d));
        const double tol_g = 1e-6 * std::max(1.0, std::abs(direct_g));
        if (std::abs(d_total.item() - direct_d) > tol_d)
            throw Fail(fmt("%s D: library %.9g vs transcription %.9g", tag,
                           d_total.item(), direct_d));
        if (std::abs(g_total.item() - direct_g) > tol_g)
            throw Fail(fmt("%s G: library %.9g vs transcription %.9g", tag,
                           g_total.item(), direct_g));
    }
    return "matches direct transcriptions of both forms within 1e-6";
}

// ---------------------------------------------------------------------------
// criteria 4-6 share the colorized-digit dataset and content probe

struct DeskRun {
    double fid_epoch1 = 0.0;
    double fid_final = 0.0;
    double content_acc_final = 0.0;
};

train::TrainConfig desk_config(i64 num_classes, std::uint64_t seed) {
    train::TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 30;
    cfg.batch_size = 64;
    cfg.net.prior = nets::PriorMode::Categorical;
    cfg.net.num_classes = num_classes;
    cfg.net.c_dim = num_classes;
    return cfg;
}

DeskRun run_desk(train::TrainConfig cfg, const data::Dataset& ds, const eval::Probe& probe,
                 const char* tag) {
    train::Trainer trainer(cfg);
    DeskRun out;
    const double t0 = now_s();
    trainer.train(ds, nullptr, [&](train::Trainer& tr, i64 epoch) {
        const bool first = epoch == 0, last = epoch == cfg.epochs - 1;
        if (first || last) {
            tr.models().set_train(false);
            Rng erng(1234);
            const double fid = eval::fid_analog(tr.models(), probe, ds, 1024, erng);
            if (first) out.fid_epoch1 = fid;
            if (last) {
                out.fid_final = fid;
                out.content_acc_final =
                    eval::content_accuracy(tr.models(), probe, 1024, erng);
            }
            tr.models().set_train(true);
        }
        if (epoch % 5 == 4 || epoch == 0)
            progress(fmt("%s: epoch %lld/%lld (%.0fs)", tag, static_cast<long long>(epoch + 1),
                         static_cast<long long>(cfg.epochs), now_s() - t0));
    });
    return out;
}

data::Dataset g_mnist_cb;       // 10k colorized digits, built once
eval::Probe g_content_probe;    // content probe at the 0.95 bar

std::string criterion_4() {
    progress("building the 10k colorized-digit dataset");
    auto [imgs, labs] = data::make_synth_digits(10000, 42);
    g_mnist_cb = data::make_mnist_cb(imgs, labs, data::default_palette(), 42);

    progress("training the content probe (0.95 held-out bar)");
    eval::ProbeConfig pcfg;
    pcfg.epochs = 10;
    g_content_probe = eval::train_probe(g_mnist_cb, eval::ProbeTarget::Content, 7, pcfg);
    progress(fmt("content probe held-out accuracy %.3f", g_content_probe.heldout_accuracy));

    auto run = run_desk(desk_config(10, 2024), g_mnist_cb, g_content_probe, "criterion 4");
    if (run.content_acc_final < 0.80)
        throw Fail(fmt("content accuracy %.3f < 0.80", run.content_acc_final));
    if (run.fid_final > 0.5 * run.fid_epoch1)
        throw Fail(fmt("fid %.2f -> %.2f, less than a 50%% drop", run.fid_epoch1,
                       run.fid_final));
    return fmt("content acc %.3f, fid %.2f -> %.2f (-%.0f%%)", run.content_acc_final,
               run.fid_epoch1, run.fid_final,
               100.0 * (1.0 - run.fid_final / run.fid_epoch1));
}

std::string criterion_5() {
    progress("building the 10k shapes dataset");
    data::ShapesConfig scfg;
    auto ds = data::make_shapes(scfg, 42);

    progress("training shapes probes");
    eval::ProbeConfig pcfg;
    pcfg.epochs = 10;
    auto content = eval::train_probe(ds, eval::ProbeTarget::Content, 7, pcfg);
    auto style = eval::train_probe(ds, eval::ProbeTarget::Style, 7, pcfg);
    progress(fmt("probes: content %.3f, style %.3f", content.heldout_accuracy,
                 style.heldout_accuracy));

    auto cfg = desk_config(ds.num_classes, 2025);
    train::Trainer trainer(cfg);
    const double t0 = now_s();
    trainer.train(ds, nullptr, [&](train::Trainer&, i64 epoch) {
        if (epoch % 5 == 4 || epoch == 0)
            progress(fmt("criterion 5: epoch %lld/%lld (%.0fs)",
                         static_cast<long long>(epoch + 1),
                         static_cast<long long>(cfg.epochs), now_s() - t0));
    });
    trainer.models().set_train(false);
    Rng erng(77);
    const auto trained = eval::swap_score(trainer.models(), content, style, ds, 1024, erng);

    Rng fresh_init(9);
    nets::Models untrained(cfg.net, fresh_init);
    untrained.set_train(false);
    Rng urng(77);
    const auto chance = eval::swap_score(untrained, content, style, ds, 1024, urng);
    progress(fmt("swap trained (%.3f, %.3f) vs untrained chance (%.3f, %.3f)",
                 trained.style_swap, trained.content_preservation, chance.style_swap,
                 chance.content_preservation));

    if (trained.style_swap < 0.55)
        throw Fail(fmt("style swap %.3f < 0.55", trained.style_swap));
    if (trained.content_preservation < 0.75)
        throw Fail(fmt("content preservation %.3f < 0.75", trained.content_preservation));
    if (trained.style_swap < 3.0 * chance.style_swap)
        throw Fail(fmt("style swap %.3f < 3x chance %.3f", trained.style_swap,
                       chance.style_swap));
    if (trained.content_preservation < 3.0 * chance.content_preservation)
        throw Fail(fmt("content preservation %.3f < 3x chance %.3f",
                       trained.content_preservation, chance.content_preservation));
    return fmt("style swap %.3f (chance %.3f), content preservation %.3f (chance %.3f)",
               trained.style_swap, chance.style_swap, trained.content_preservation,
               chance.content_preservation);
}

std::string criterion_6() {
    // Direction-only ablation at a reduced budget: 3k samples, 8 epochs.
    auto subset = data::take(g_mnist_cb, 3000);
    double mean_adv = 0.0, mean_l2 = 0.0;
    for (const std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
        for (const bool l2 : {false, true}) {
            auto cfg = desk_config(10, seed);
            cfg.epochs = 8;
            cfg.objectives.cycle_variant =
                l2 ? obj::CycleVariant::L2 : obj::CycleVariant::Adversarial;
            train::Trainer trainer(cfg);
            trainer.train(subset, nullptr);
            trainer.models().set_train(false);
            Rng erng(555);
            const double fid =
                eval::fid_analog(trainer.models(), g_content_probe, g_mnist_cb, 1024, erng);
            progress(fmt("criterion 6: seed %llu %s fid %.2f",
                         static_cast<unsigned long long>(seed), l2 ? "l2" : "adv", fid));
            (l2 ? mean_l2 : mean_adv) += fid / 3.0;
        }
    }
    if (!(mean_l2 > mean_adv))
        throw Fail(fmt("mean fid l2 %.2f not worse than adversarial %.2f", mean_l2,
                       mean_adv));
    return fmt("mean fid: adversarial %.2f < l2 %.2f", mean_adv, mean_l2);
}

// ---------------------------------------------------------------------------
// criterion 7: bitwise-deterministic logs and exact resume

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Fail("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string criterion_7() {
    auto [imgs, labs] = data::make_synth_digits(200, 8);
    auto ds = data::make_mnist_cb(imgs, labs, data::default_palette(), 8);

    const auto dir = fs::temp_directory_path() / "dualinf_acceptance_c7";
    fs::remove_all(dir);
    fs::create_directories(dir);

    train::TrainConfig cfg;
    cfg.seed = 31;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.net.prior = nets::PriorMode::Categorical;
    cfg.net.c_dim = 10;
    cfg.net.base_channels = 4;
    cfg.net.feature_width = 32;
    cfg.net.z_dim = 4;
    cfg.checkpoint_every_epochs = 1;

    auto run_to = [&](const char* name, train::TrainConfig c) {
        c.out_dir = (dir / name).string();
        train::MetricsLog log;
        log.open((fs::path(c.out_dir) / "metrics.csv").string(), false);
        train::Trainer trainer(c);
        fs::create_directories(c.out_dir);
        trainer.train(ds, &log);
        return fs::path(c.out_dir) / "metrics.csv";
    };
    const auto a = slurp(run_to("a", cfg));
    const auto b = slurp(run_to("b", cfg));
    if (a != b) throw Fail("two identical runs produced different metrics CSVs");

    // stop after epoch 1, resume from its checkpoint, and append
    auto c_short = cfg;
    c_short.epochs = 1;
    c_short.out_dir = (dir / "c").string();
    fs::create_directories(c_short.out_dir);
    train::MetricsLog log;
    log.open((fs::path(c_short.out_dir) / "metrics.csv").string(), false);
    {
        train::Trainer trainer(c_short);
        trainer.train(ds, &log);
    }
    auto resumed = train::Trainer::from_checkpoint(
        (fs::path(c_short.out_dir) / "checkpoint_1.ckpt").string());
    resumed.config().epochs = 2;
    train::MetricsLog log2;
    log2.open((fs::path(c_short.out_dir) / "metrics.csv").string(), true);
    resumed.train(ds, &log2);
    const auto c = slurp(fs::path(c_short.out_dir) / "metrics.csv");
    fs::remove_all(dir);
    if (a != c) throw Fail("resumed log differs from the uninterrupted run");
    return "byte-identical logs for repeat and for stop/resume";
}

// ---------------------------------------------------------------------------
// criterion 8: Fréchet distance vs an independent eigendecomposition oracle

double frechet_oracle(const eval::GaussianStats& a, const eval::GaussianStats& b) {
    const auto d = static_cast<Eigen::Index>(a.dim());
    Eigen::VectorXd mu_a(d), mu_b(d);
    Eigen::MatrixXd sa(d, d), sb(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        mu_a(i) = a.mean[static_cast<std::size_t>(i)];
        mu_b(i) = b.mean[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < d; ++j) {
            sa(i, j) = a.cov[static_cast<std::size_t>(i * d + j)];
            sb(i, j) = b.cov[static_cast<std::size_t>(i * d + j)];
        }
    }
    auto psd_sqrt = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        return Eigen::MatrixXd(es.eigenvectors() * lam.asDiagonal() *
                               es.eigenvectors().transpose());
    };
    const Eigen::MatrixXd root_a = psd_sqrt(sa);
    return (mu_a - mu_b).squaredNorm() + (sa + sb - 2.0 * psd_sqrt(root_a * sb * root_a)).trace();
}

std::string criterion_8() {
    Rng rng(88);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const i64 d = 2 + static_cast<i64>(rng.next_below(7));
        auto random_stats = [&]() {
            eval::GaussianStats g;
            g.mean.resize(static_cast<std::size_t>(d));
            for (auto& m : g.mean) m = rng.uniform(-2.0, 2.0);
            std::vector<double> a(static_cast<std::size_t>(d * d));
            for (auto& v : a) v = rng.uniform(-1.0, 1.0);
            g.cov.assign(static_cast<std::size_t>(d * d), 0.0);
            for (i64 i = 0; i < d; ++i)
                for (i64 j = 0; j < d; ++j) {
                    double s = i == j ? 1e-3 : 0.0;
                    for (i64 k = 0; k < d; ++k)
                        s += a[static_cast<std::size_t>(k * d + i)] *
                             a[static_cast<std::size_t>(k * d + j)];
                    g.cov[static_cast<std::size_t>(i * d + j)] = s;
                }
            return g;
        };
        const auto ga = random_stats();
        const auto gb = random_stats();
        worst = std::max(worst,
                         std::abs(eval::frechet_distance(ga, gb) - frechet_oracle(ga, gb)));
    }
    if (worst > 1e-4) throw Fail(fmt("worst deviation %.2e > 1e-4", worst));
    return fmt("20 PSD pairs, worst deviation %.1e", worst);
}

}  // namespace

int main() {
    struct Entry {
        int num;
        const char* name;
        std::function<std::string()> run;
    };
    const std::vector<Entry> entries{
        {1, "gradient checks", criterion_1},
        {2, "closed-form losses", criterion_2},
        {3, "equation reduction", criterion_3},
        {4, "colorized-digit desk run", criterion_4},
        {5, "shapes disentanglement", criterion_5},
        {6, "cycle-loss ablation direction", criterion_6},
        {7, "determinism and resume", criterion_7},
        {8, "frechet oracle equivalence", criterion_8},
    };
    bool all_passed = true;
    std::vector<std::string> lines;
    for (const auto& e : entries) {
        progress(fmt("criterion %d (%s) starting", e.num, e.name));
        std::string line;
        try {
            const auto detail = e.run();
            line = fmt("criterion %d (%s): PASS — %s", e.num, e.name, detail.c_str());
        } catch (const std::exception& ex) {
            all_passed = false;
            line = fmt("criterion %d (%s): FAIL — %s", e.num, e.name, ex.what());
        }
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
    }
    return all_passed ? 0 : 1;
}
