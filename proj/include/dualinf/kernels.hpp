#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualinf/errors.hpp"

// Dense compute kernels. Each kernel has an OpenMP-parallel implementation
// (the one the tensor ops call) and a plain serial reference used by tests
// and the benchmark. Parallel loops only ever split over independently
// written outputs, so results match the serial path bit-for-bit at any
// thread count, except where a BLAS gemm is involved (deterministic for a
// fixed build and thread count, compared against the reference within a
// small tolerance).

namespace dualinf::kernels {

using i64 = std::int64_t;

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm_f32(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, float alpha,
              const float* a, i64 lda, const float* b, i64 ldb, float beta,
              float* c, i64 ldc);
void gemm_f64(bool trans_a, bool trans_b, i64 m, i64 n, i64 k, double alpha,
              const double* a, i64 lda, const double* b, i64 ldb, double beta,
              double* c, i64 ldc);

template <typename T>
inline void gemm(bool ta, bool tb, i64 m, i64 n, i64 k, T alpha, const T* a,
                 i64 lda, const T* b, i64 ldb, T beta, T* c, i64 ldc) {
    if constexpr (sizeof(T) == sizeof(float)) {
        gemm_f32(ta, tb, m, n, k, alpha, reinterpret_cast<const float*>(a), lda,
                 reinterpret_cast<const float*>(b), ldb, beta,
                 reinterpret_cast<float*>(c), ldc);
    } else {
        gemm_f64(ta, tb, m, n, k, alpha, reinterpret_cast<const double*>(a), lda,
                 reinterpret_cast<const double*>(b), ldb, beta,
                 reinterpret_cast<double*>(c), ldc);
    }
}

template <typename T>
void gemm_serial(bool ta, bool tb, i64 m, i64 n, i64 k, T alpha, const T* a,
                 i64 lda, const T* b, i64 ldb, T beta, T* c, i64 ldc) {
    for (i64 i = 0; i < m; ++i) {
        for (i64 j = 0; j < n; ++j) {
            T acc = 0;
            for (i64 t = 0; t < k; ++t) {
                const T av = ta ? a[t * lda + i] : a[i * lda + t];
                const T bv = tb ? b[j * ldb + t] : b[t * ldb + j];
                acc += av * bv;
            }
            c[i * ldc + j] = alpha * acc + beta * c[i * ldc + j];
        }
    }
}

struct Conv2dDims {
    i64 n, c_in, h, w;      // input  [n, c_in, h, w]
    i64 c_out, kh, kw;      // kernel [c_out, c_in, kh, kw]
    i64 stride, pad;
    i64 h_out, w_out;       // output [n, c_out, h_out, w_out]
};

Conv2dDims conv2d_dims(i64 n, i64 c_in, i64 h, i64 w, i64 c_out, i64 kh,
                       i64 kw, i64 stride, i64 pad);

// Transposed convolution: input [n, c_in, h, w], kernel [c_in, c_out, kh, kw],
// output [n, c_out, (h-1)*stride - 2*pad + kh, ...].
struct ConvT2dDims {
    i64 n, c_in, h, w;
    i64 c_out, kh, kw;
    i64 stride, pad;
    i64 h_out, w_out;
};

ConvT2dDims convt2d_dims(i64 n, i64 c_in, i64 h, i64 w, i64 c_out, i64 kh,
                         i64 kw, i64 stride, i64 pad);

// Cross-correlation with zero padding.
template <typename T>
void conv2d_forward(const T* x, const T* w, T* y, const Conv2dDims& d);
template <typename T>
void conv2d_backward_input(const T* dy, const T* w, T* dx, const Conv2dDims& d);
template <typename T>
void conv2d_backward_kernel(const T* x, const T* dy, T* dw, const Conv2dDims& d);

template <typename T>
void convt2d_forward(const T* x, const T* w, T* y, const ConvT2dDims& d);
template <typename T>
void convt2d_backward_input(const T* dy, const T* w, T* dx, const ConvT2dDims& d);
template <typename T>
void convt2d_backward_kernel(const T* x, const T* dy, T* dw, const ConvT2dDims& d);

// Direct-loop references.
template <typename T>
void conv2d_forward_serial(const T* x, const T* w, T* y, const Conv2dDims& d);
template <typename T>
void convt2d_forward_serial(const T* x, const T* w, T* y, const ConvT2dDims& d);

}  // namespace dualinf::kernels
