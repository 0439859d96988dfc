#include "dualinf/kernels.hpp"

#include <cblas.h>
#include <omp.h>

#include <cstring>

namespace dualinf::kernels {

void gemm_f32(bool ta, bool tb, i64 m, i64 n, i64 k, float alpha,
              const float* a, i64 lda, const float* b, i64 ldb, float beta,
              float* c, i64 ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                static_cast<int>(ldc));
}

void gemm_f64(bool ta, bool tb, i64 m, i64 n, i64 k, double alpha,
              const double* a, i64 lda, const double* b, i64 ldb, double beta,
              double* c, i64 ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, static_cast<int>(m),
                static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
                static_cast<int>(ldc));
}

Conv2dDims conv2d_dims(i64 n, i64 c_in, i64 h, i64 w, i64 c_out, i64 kh,
                       i64 kw, i64 stride, i64 pad) {
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (kh > h + 2 * pad || kw > w + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                         " exceeds padded input " + std::to_string(h + 2 * pad) + "x" +
                         std::to_string(w + 2 * pad));
    Conv2dDims d{n, c_in, h, w, c_out, kh, kw, stride, pad, 0, 0};
    d.h_out = (h + 2 * pad - kh) / stride + 1;
    d.w_out = (w + 2 * pad - kw) / stride + 1;
    if (d.h_out <= 0 || d.w_out <= 0)
        throw ShapeError("conv2d: non-positive output extent " + std::to_string(d.h_out) + "x" +
                         std::to_string(d.w_out));
    return d;
}

ConvT2dDims convt2d_dims(i64 n, i64 c_in, i64 h, i64 w, i64 c_out, i64 kh,
                         i64 kw, i64 stride, i64 pad) {
    if (stride < 1) throw ShapeError("convt2d: stride must be >= 1");
    ConvT2dDims d{n, c_in, h, w, c_out, kh, kw, stride, pad, 0, 0};
    d.h_out = (h - 1) * stride - 2 * pad + kh;
    d.w_out = (w - 1) * stride - 2 * pad + kw;
    if (d.h_out <= 0 || d.w_out <= 0)
        throw ShapeError("convt2d: non-positive output extent " + std::to_string(d.h_out) + "x" +
                         std::to_string(d.w_out));
    return d;
}

namespace {

// src [c, h, w] -> dst [c*kh*kw, h_out*w_out] for the given conv geometry.
template <typename T>
void im2col(const T* src, T* dst, i64 c, i64 h, i64 w, i64 kh, i64 kw,
            i64 stride, i64 pad, i64 h_out, i64 w_out) {
    const i64 cols = h_out * w_out;
    for (i64 ch = 0; ch < c; ++ch) {
        for (i64 ki = 0; ki < kh; ++ki) {
            for (i64 kj = 0; kj < kw; ++kj) {
                T* row = dst + ((ch * kh + ki) * kw + kj) * cols;
                for (i64 oh = 0; oh < h_out; ++oh) {
                    const i64 ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= h) {
                        std::memset(row + oh * w_out, 0, static_cast<std::size_t>(w_out) * sizeof(T));
                        continue;
                    }
                    for (i64 ow = 0; ow < w_out; ++ow) {
                        const i64 iw = ow * stride - pad + kj;
                        row[oh * w_out + ow] = (iw < 0 || iw >= w) ? T(0) : src[(ch * h + ih) * w + iw];
                    }
                }
            }
        }
    }
}

// Transpose of im2col: accumulates dst [c, h, w] += scattered src columns.
template <typename T>
void col2im(const T* src, T* dst, i64 c, i64 h, i64 w, i64 kh, i64 kw,
            i64 stride, i64 pad, i64 h_out, i64 w_out) {
    const i64 cols = h_out * w_out;
    for (i64 ch = 0; ch < c; ++ch) {
        for (i64 ki = 0; ki < kh; ++ki) {
            for (i64 kj = 0; kj < kw; ++kj) {
                const T* row = src + ((ch * kh + ki) * kw + kj) * cols;
                for (i64 oh = 0; oh < h_out; ++oh) {
                    const i64 ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= h) continue;
                    for (i64 ow = 0; ow < w_out; ++ow) {
                        const i64 iw = ow * stride - pad + kj;
                        if (iw < 0 || iw >= w) continue;
                        dst[(ch * h + ih) * w + iw] += row[oh * w_out + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d) {
    const i64 kdim = d.c_in * d.kh * d.kw;
    const i64 cols = d.h_out * d.w_out;
#pragma omp parallel
    {
        std::vector<T> buf(static_cast<std::size_t>(kdim * cols));
#pragma omp for schedule(static)
        for (i64 n = 0; n < d.n; ++n) {
            im2col(x + n * d.c_in * d.h * d.w, buf.data(), d.c_in, d.h, d.w, d.kh,
                   d.kw, d.stride, d.pad, d.h_out, d.w_out);
            gemm<T>(false, false, d.c_out, cols, kdim, T(1), w, kdim, buf.data(),
                    cols, T(0), y + n * d.c_out * cols, cols);
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const Conv2dDims& d) {
    const i64 kdim = d.c_in * d.kh * d.kw;
    const i64 cols = d.h_out * d.w_out;
    const i64 in_sz = d.c_in * d.h * d.w;
#pragma omp parallel
    {
        std::vector<T> buf(static_cast<std::size_t>(kdim * cols));
#pragma omp for schedule(static)
        for (i64 n = 0; n < d.n; ++n) {
            gemm<T>(true, false, kdim, cols, d.c_out, T(1), w, kdim,
                    dy + n * d.c_out * cols, cols, T(0), buf.data(), cols);
            T* out = dx + n * in_sz;
            std::memset(out, 0, static_cast<std::size_t>(in_sz) * sizeof(T));
            col2im(buf.data(), out, d.c_in, d.h, d.w, d.kh, d.kw, d.stride, d.pad,
                   d.h_out, d.w_out);
        }
    }
}

template <typename T>
void conv2d_backward_kernel(const T* x, const T* dy, T* dw, const Conv2dDims& d) {
    const i64 kdim = d.c_in * d.kh * d.kw;
    const i64 cols = d.h_out * d.w_out;
    std::memset(dw, 0, static_cast<std::size_t>(d.c_out * kdim) * sizeof(T));
    std::vector<T> buf(static_cast<std::size_t>(kdim * cols));
    // Serial over the batch: dw accumulation order stays fixed.
    for (i64 n = 0; n < d.n; ++n) {
        im2col(x + n * d.c_in * d.h * d.w, buf.data(), d.c_in, d.h, d.w, d.kh,
               d.kw, d.stride, d.pad, d.h_out, d.w_out);
        gemm<T>(false, true, d.c_out, kdim, cols, T(1), dy + n * d.c_out * cols,
                cols, buf.data(), cols, T(1), dw, kdim);
    }
}

// convt uses the im2col geometry of the conv that maps output back to input.
template <typename T>
void convt2d_forward(const T* x, const T* w, T* y, const ConvT2dDims& d) {
    const i64 kdim = d.c_out * d.kh * d.kw;
    const i64 cols = d.h * d.w;
    const i64 out_sz = d.c_out * d.h_out * d.w_out;
#pragma omp parallel
    {
        std::vector<T> buf(static_cast<std::size_t>(kdim * cols));
#pragma omp for schedule(static)
        for (i64 n = 0; n < d.n; ++n) {
            gemm<T>(true, false, kdim, cols, d.c_in, T(1), w, kdim,
                    x + n * d.c_in * cols, cols, T(0), buf.data(), cols);
            T* out = y + n * out_sz;
            std::memset(out, 0, static_cast<std::size_t>(out_sz) * sizeof(T));
            col2im(buf.data(), out, d.c_out, d.h_out, d.w_out, d.kh, d.kw,
                   d.stride, d.pad, d.h, d.w);
        }
    }
}

template <typename T>
void convt2d_backward_input(const T* dy, const T* w, T* dx, const ConvT2dDims& d) {
    const i64 kdim = d.c_out * d.kh * d.kw;
    const i64 cols = d.h * d.w;
#pragma omp parallel
    {
        std::vector<T> buf(static_cast<std::size_t>(kdim * cols));
#pragma omp for schedule(static)
        for (i64 n = 0; n < d.n; ++n) {
            im2col(dy + n * d.c_out * d.h_out * d.w_out, buf.data(), d.c_out,
                   d.h_out, d.w_out, d.kh, d.kw, d.stride, d.pad, d.h, d.w);
            gemm<T>(false, false, d.c_in, cols, kdim, T(1), w, kdim, buf.data(),
                    cols, T(0), dx + n * d.c_in * cols, cols);
        }
    }
}

template <typename T>
void convt2d_backward_kernel(const T* x, const T* dy, T* dw, const ConvT2dDims& d) {
    const i64 kdim = d.c_out * d.kh * d.kw;
    const i64 cols = d.h * d.w;
    std::memset(dw, 0, static_cast<std::size_t>(d.c_in * kdim) * sizeof(T));
    std::vector<T> buf(static_cast<std::size_t>(kdim * cols));
    for (i64 n = 0; n < d.n; ++n) {
        im2col(dy + n * d.c_out * d.h_out * d.w_out, buf.data(), d.c_out, d.h_out,
               d.w_out, d.kh, d.kw, d.stride, d.pad, d.h, d.w);
        gemm<T>(false, true, d.c_in, kdim, cols, T(1), x + n * d.c_in * cols,
                cols, buf.data(), cols, T(1), dw, kdim);
    }
}

template <typename T>
void conv2d_forward_serial(const T* x, const T* w, T* y, const Conv2dDims& d) {
    for (i64 n = 0; n < d.n; ++n)
        for (i64 f = 0; f < d.c_out; ++f)
            for (i64 oh = 0; oh < d.h_out; ++oh)
                for (i64 ow = 0; ow < d.w_out; ++ow) {
                    T acc = 0;
                    for (i64 c = 0; c < d.c_in; ++c)
                        for (i64 ki = 0; ki < d.kh; ++ki)
                            for (i64 kj = 0; kj < d.kw; ++kj) {
                                const i64 ih = oh * d.stride - d.pad + ki;
                                const i64 iw = ow * d.stride - d.pad + kj;
                                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                                acc += x[((n * d.c_in + c) * d.h + ih) * d.w + iw] *
                                       w[((f * d.c_in + c) * d.kh + ki) * d.kw + kj];
                            }
                    y[((n * d.c_out + f) * d.h_out + oh) * d.w_out + ow] = acc;
                }
}

template <typename T>
void convt2d_forward_serial(const T* x, const T* w, T* y, const ConvT2dDims& d) {
    const i64 out_sz = d.n * d.c_out * d.h_out * d.w_out;
    std::memset(y, 0, static_cast<std::size_t>(out_sz) * sizeof(T));
    for (i64 n = 0; n < d.n; ++n)
        for (i64 c = 0; c < d.c_in; ++c)
            for (i64 ih = 0; ih < d.h; ++ih)
                for (i64 iw = 0; iw < d.w; ++iw) {
                    const T v = x[((n * d.c_in + c) * d.h + ih) * d.w + iw];
                    for (i64 f = 0; f < d.c_out; ++f)
                        for (i64 ki = 0; ki < d.kh; ++ki)
                            for (i64 kj = 0; kj < d.kw; ++kj) {
                                const i64 oh = ih * d.stride - d.pad + ki;
                                const i64 ow = iw * d.stride - d.pad + kj;
                                if (oh < 0 || oh >= d.h_out || ow < 0 || ow >= d.w_out) continue;
                                y[((n * d.c_out + f) * d.h_out + oh) * d.w_out + ow] +=
                                    v * w[((c * d.c_out + f) * d.kh + ki) * d.kw + kj];
                            }
                }
}

#define DUALINF_INSTANTIATE(T)                                                        \
    template void conv2d_forward<T>(const T*, const T*, T*, const Conv2dDims&);       \
    template void conv2d_backward_input<T>(const T*, const T*, T*, const Conv2dDims&);\
    template void conv2d_backward_kernel<T>(const T*, const T*, T*, const Conv2dDims&);\
    template void convt2d_forward<T>(const T*, const T*, T*, const ConvT2dDims&);     \
    template void convt2d_backward_input<T>(const T*, const T*, T*, const ConvT2dDims&);\
    template void convt2d_backward_kernel<T>(const T*, const T*, T*, const ConvT2dDims&);\
    template void conv2d_forward_serial<T>(const T*, const T*, T*, const Conv2dDims&);\
    template void convt2d_forward_serial<T>(const T*, const T*, T*, const ConvT2dDims&);

DUALINF_INSTANTIATE(float)
DUALINF_INSTANTIATE(double)

#undef DUALINF_INSTANTIATE

}  // namespace dualinf::kernels
