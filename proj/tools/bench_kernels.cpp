#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "dualinf/kernels.hpp"
#include "dualinf/rng.hpp"

using namespace dualinf;
using kernels::i64;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

template <typename F>
double time_ms(F&& f, int reps) {
    f();  // warm up
    const double t0 = now_ms();
    for (int i = 0; i < reps; ++i) f();
    return (now_ms() - t0) / reps;
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
    return m;
}

}  // namespace

int main() {
    Rng rng(12);
    std::printf("%-28s %10s %10s %8s %12s\n", "kernel", "serial_ms", "fast_ms", "speedup",
                "max_abs_diff");

    {
        const i64 m = 256, n = 256, k = 256;
        auto a = random_vec(static_cast<std::size_t>(m * k), rng);
        auto b = random_vec(static_cast<std::size_t>(k * n), rng);
        std::vector<float> c_ref(static_cast<std::size_t>(m * n), 0.0f);
        std::vector<float> c_fast(static_cast<std::size_t>(m * n), 0.0f);
        const double ts = time_ms(
            [&] {
                kernels::gemm_serial<float>(false, false, m, n, k, 1.0f, a.data(), k,
                                            b.data(), n, 0.0f, c_ref.data(), n);
            },
            3);
        const double tf = time_ms(
            [&] {
                kernels::gemm_f32(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n,
                                  0.0f, c_fast.data(), n);
            },
            10);
        std::printf("%-28s %10.3f %10.3f %7.1fx %12.2e\n", "gemm 256x256x256", ts, tf,
                    ts / tf, max_abs_diff(c_ref, c_fast));
    }

    {
        const auto d = kernels::conv2d_dims(16, 16, 32, 32, 32, 4, 4, 2, 1);
        auto x = random_vec(static_cast<std::size_t>(d.n * d.c_in * d.h * d.w), rng);
        auto w = random_vec(static_cast<std::size_t>(d.c_out * d.c_in * d.kh * d.kw), rng);
        std::vector<float> y_ref(static_cast<std::size_t>(d.n * d.c_out * d.h_out * d.w_out));
        std::vector<float> y_fast(y_ref.size());
        const double ts = time_ms(
            [&] { kernels::conv2d_forward_serial(x.data(), w.data(), y_ref.data(), d); }, 3);
        const double tf = time_ms(
            [&] { kernels::conv2d_forward(x.data(), w.data(), y_fast.data(), d); }, 10);
        std::printf("%-28s %10.3f %10.3f %7.1fx %12.2e\n", "conv2d 16x16x32x32 k4s2", ts,
                    tf, ts / tf, max_abs_diff(y_ref, y_fast));
    }

    {
        const auto d = kernels::convt2d_dims(16, 32, 8, 8, 16, 4, 4, 2, 1);
        auto x = random_vec(static_cast<std::size_t>(d.n * d.c_in * d.h * d.w), rng);
        auto w = random_vec(static_cast<std::size_t>(d.c_in * d.c_out * d.kh * d.kw), rng);
        std::vector<float> y_ref(static_cast<std::size_t>(d.n * d.c_out * d.h_out * d.w_out));
        std::vector<float> y_fast(y_ref.size());
        const double ts = time_ms(
            [&] { kernels::convt2d_forward_serial(x.data(), w.data(), y_ref.data(), d); },
            3);
        const double tf = time_ms(
            [&] { kernels::convt2d_forward(x.data(), w.data(), y_fast.data(), d); }, 10);
        std::printf("%-28s %10.3f %10.3f %7.1fx %12.2e\n", "convt2d 16x32x8x8 k4s2", ts, tf,
                    ts / tf, max_abs_diff(y_ref, y_fast));
    }

    return 0;
}
