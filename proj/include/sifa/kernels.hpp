#pragma once

#include <cstddef>

namespace sifa::kernels {

// Global cap on OpenMP worker count. The kernels are written so that every
// output element accumulates in a fixed order regardless of how the work is
// split, so results are bit-identical for any thread count. A cap of 1 gives
// a fully single-threaded run.
void set_threads(int n);
int threads();

// Convolution geometry. Padding is explicit and may be asymmetric; the
// builders use TF-style SAME padding so the layer stacks preserve the stated
// size arithmetic exactly.
struct ConvGeom {
    int kh = 3, kw = 3;
    int sh = 1, sw = 1;
    int dh = 1, dw = 1;
    int pt = 0, pl = 0, pb = 0, pr = 0;

    int eff_kh() const { return (kh - 1) * dh + 1; }
    int eff_kw() const { return (kw - 1) * dw + 1; }
    int out_h(int h) const { return (h + pt + pb - eff_kh()) / sh + 1; }
    int out_w(int w) const { return (w + pl + pr - eff_kw()) / sw + 1; }
};

// SAME padding for the given stride: output size is ceil(in/stride).
void same_pad(int in, int k, int s, int d, int& begin, int& end);

// ---------------------------------------------------------------------------
// GEMM family (row-major). Accumulation order over the contraction index is
// fixed per output element, independent of the parallel split.
// ---------------------------------------------------------------------------

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// C[M,N] (+)= A[M,S] * B[N,S]^T   (dot products of rows)
template <typename T>
void gemm_abt(int M, int N, int S, const T* A, const T* B, T* C, bool accumulate);

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_atb(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

// ---------------------------------------------------------------------------
// Convolution, one image at a time (weights OC x IC x KH x KW).
// Batched entry points loop images internally.
// ---------------------------------------------------------------------------

// col[IC*KH*KW, OH*OW] from x[IC, H, W]
template <typename T>
void im2col(const T* x, int ic, int h, int w, const ConvGeom& g, T* col);

// gx[IC, H, W] from col gradients (gather form, race-free)
template <typename T>
void col2im(const T* col, int ic, int h, int w, const ConvGeom& g, T* gx);

// y[N, OC, OH, OW] = conv(x[N, IC, H, W], w, b); b may be null
template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y,
                    int n, int ic, int h, int wd, int oc, const ConvGeom& g);

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx,
                           int n, int ic, int h, int wd, int oc, const ConvGeom& g);

// Accumulates into gw / gb (callers zero them at step start).
template <typename T>
void conv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                             int n, int ic, int h, int wd, int oc, const ConvGeom& g);

// ---------------------------------------------------------------------------
// Transposed convolution (weights IC x OC x KH x KW). Output size is
// (in-1)*s - pt - pb + eff_k; the builders pick k=4, s=2, p=1 so it is an
// exact x2 upsampling.
// ---------------------------------------------------------------------------

struct TConvGeom {
    int kh = 4, kw = 4;
    int sh = 2, sw = 2;
    int pt = 1, pl = 1, pb = 1, pr = 1;

    int out_h(int h) const { return (h - 1) * sh - pt - pb + kh; }
    int out_w(int w) const { return (w - 1) * sw - pl - pr + kw; }
};

template <typename T>
void tconv2d_forward(const T* x, const T* w, const T* b, T* y,
                     int n, int ic, int h, int wd, int oc, const TConvGeom& g);

template <typename T>
void tconv2d_backward_input(const T* gy, const T* w, T* gx,
                            int n, int ic, int h, int wd, int oc, const TConvGeom& g);

template <typename T>
void tconv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                              int n, int ic, int h, int wd, int oc, const TConvGeom& g);

// ---------------------------------------------------------------------------
// Pooling / resampling
// ---------------------------------------------------------------------------

// 2x2 stride-2 max pool; argmax stores the winning index within each window
// (0..3, first maximum wins). h and w must be even.
template <typename T>
void maxpool2_forward(const T* x, T* y, unsigned char* argmax, int n, int c, int h, int w);

template <typename T>
void maxpool2_backward(const T* gy, const unsigned char* argmax, T* gx, int n, int c, int h, int w);

// Bilinear upsample by an integer factor, half-pixel centers.
template <typename T>
void upsample_bilinear_forward(const T* x, T* y, int n, int c, int h, int w, int factor);

template <typename T>
void upsample_bilinear_backward(const T* gy, T* gx, int n, int c, int h, int w, int factor);

// ---------------------------------------------------------------------------
// Serial reference implementations: naive loops, kept for validating the
// OpenMP kernels and for the benchmark target.
// ---------------------------------------------------------------------------
namespace serial {

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y,
                    int n, int ic, int h, int wd, int oc, const ConvGeom& g);

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx,
                           int n, int ic, int h, int wd, int oc, const ConvGeom& g);

template <typename T>
void conv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                             int n, int ic, int h, int wd, int oc, const ConvGeom& g);

template <typename T>
void tconv2d_forward(const T* x, const T* w, const T* b, T* y,
                     int n, int ic, int h, int wd, int oc, const TConvGeom& g);

template <typename T>
void tconv2d_backward_input(const T* gy, const T* w, T* gx,
                            int n, int ic, int h, int wd, int oc, const TConvGeom& g);

template <typename T>
void tconv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                              int n, int ic, int h, int wd, int oc, const TConvGeom& g);

template <typename T>
void maxpool2_forward(const T* x, T* y, unsigned char* argmax, int n, int c, int h, int w);

template <typename T>
void upsample_bilinear_forward(const T* x, T* y, int n, int c, int h, int w, int factor);

} // namespace serial

} // namespace sifa::kernels
