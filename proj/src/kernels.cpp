#include "sifa/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <memory>
#include <utility>
#include <vector>

namespace sifa::kernels {

namespace {

std::atomic<int> g_threads{0}; // 0 = library default

inline int pool_threads(size_t work) {
    int cap = g_threads.load(std::memory_order_relaxed);
    int avail = omp_get_max_threads();
    int t = cap > 0 ? std::min(cap, avail) : avail;
    // Tiny ops run inline; the fork/join overhead would dominate.
    if (work < (1u << 14)) return 1;
    return t;
}

template <typename T>
std::unique_ptr<T[]> alloc(size_t n) {
    return std::unique_ptr<T[]>(new T[n]);
}

} // namespace

void set_threads(int n) { g_threads.store(n, std::memory_order_relaxed); }

int threads() {
    int cap = g_threads.load(std::memory_order_relaxed);
    return cap > 0 ? std::min(cap, omp_get_max_threads()) : omp_get_max_threads();
}

void same_pad(int in, int k, int s, int d, int& begin, int& end) {
    int eff = (k - 1) * d + 1;
    int out = (in + s - 1) / s;
    int total = std::max((out - 1) * s + eff - in, 0);
    begin = total / 2;
    end = total - begin;
}

// ---------------------------------------------------------------------------
// GEMM. The contraction loop is sequential per output element with a single
// accumulator, so any (m, n) work split yields the same bits.
// ---------------------------------------------------------------------------

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    constexpr int NB = 64;
    const int nblocks = (N + NB - 1) / NB;
    const int nt = pool_threads(static_cast<size_t>(M) * N * K / 16);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int m = 0; m < M; ++m) {
        for (int nb = 0; nb < nblocks; ++nb) {
            const int n0 = nb * NB;
            const int nlen = std::min(NB, N - n0);
            T acc[NB];
            if (accumulate) {
                for (int j = 0; j < nlen; ++j) acc[j] = C[static_cast<size_t>(m) * N + n0 + j];
            } else {
                for (int j = 0; j < nlen; ++j) acc[j] = T(0);
            }
            const T* arow = A + static_cast<size_t>(m) * K;
            for (int k = 0; k < K; ++k) {
                const T a = arow[k];
                const T* brow = B + static_cast<size_t>(k) * N + n0;
#pragma omp simd
                for (int j = 0; j < nlen; ++j) acc[j] += a * brow[j];
            }
            T* crow = C + static_cast<size_t>(m) * N + n0;
            for (int j = 0; j < nlen; ++j) crow[j] = acc[j];
        }
    }
}

template <typename T>
void gemm_abt(int M, int N, int S, const T* A, const T* B, T* C, bool accumulate) {
    const int nt = pool_threads(static_cast<size_t>(M) * N * S / 16);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int m = 0; m < M; ++m) {
        for (int n = 0; n < N; ++n) {
            const T* arow = A + static_cast<size_t>(m) * S;
            const T* brow = B + static_cast<size_t>(n) * S;
            T acc = T(0);
#pragma omp simd reduction(+ : acc)
            for (int s = 0; s < S; ++s) acc += arow[s] * brow[s];
            T& c = C[static_cast<size_t>(m) * N + n];
            c = accumulate ? c + acc : acc;
        }
    }
}

template <typename T>
void gemm_atb(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    constexpr int NB = 64;
    const int nblocks = (N + NB - 1) / NB;
    const int nt = pool_threads(static_cast<size_t>(M) * N * K / 16);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int m = 0; m < M; ++m) {
        for (int nb = 0; nb < nblocks; ++nb) {
            const int n0 = nb * NB;
            const int nlen = std::min(NB, N - n0);
            T acc[NB];
            if (accumulate) {
                for (int j = 0; j < nlen; ++j) acc[j] = C[static_cast<size_t>(m) * N + n0 + j];
            } else {
                for (int j = 0; j < nlen; ++j) acc[j] = T(0);
            }
            for (int k = 0; k < K; ++k) {
                const T a = A[static_cast<size_t>(k) * M + m];
                const T* brow = B + static_cast<size_t>(k) * N + n0;
#pragma omp simd
                for (int j = 0; j < nlen; ++j) acc[j] += a * brow[j];
            }
            T* crow = C + static_cast<size_t>(m) * N + n0;
            for (int j = 0; j < nlen; ++j) crow[j] = acc[j];
        }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* x, int ic, int h, int w, const ConvGeom& g, T* col) {
    const int oh = g.out_h(h), ow = g.out_w(w);
    const int rows = ic * g.kh * g.kw;
    const size_t s = static_cast<size_t>(oh) * ow;
    const int nt = pool_threads(static_cast<size_t>(rows) * s / 4);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int r = 0; r < rows; ++r) {
        const int kw_ = r % g.kw;
        const int kh_ = (r / g.kw) % g.kh;
        const int c = r / (g.kw * g.kh);
        const T* xc = x + static_cast<size_t>(c) * h * w;
        T* out = col + static_cast<size_t>(r) * s;
        for (int i = 0; i < oh; ++i) {
            const int ih = i * g.sh - g.pt + kh_ * g.dh;
            T* orow = out + static_cast<size_t>(i) * ow;
            if (ih < 0 || ih >= h) {
                for (int j = 0; j < ow; ++j) orow[j] = T(0);
                continue;
            }
            const T* xrow = xc + static_cast<size_t>(ih) * w;
            for (int j = 0; j < ow; ++j) {
                const int iw = j * g.sw - g.pl + kw_ * g.dw;
                orow[j] = (iw >= 0 && iw < w) ? xrow[iw] : T(0);
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int ic, int h, int w, const ConvGeom& g, T* gx) {
    const int oh = g.out_h(h), ow = g.out_w(w);
    const size_t s = static_cast<size_t>(oh) * ow;
    const int nt = pool_threads(static_cast<size_t>(ic) * h * w * g.kh * g.kw / 4);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int c = 0; c < ic; ++c) {
        for (int ih = 0; ih < h; ++ih) {
            T* grow = gx + (static_cast<size_t>(c) * h + ih) * w;
            for (int iw = 0; iw < w; ++iw) {
                T acc = T(0);
                for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                    const int th = ih + g.pt - kh_ * g.dh;
                    if (th < 0 || th % g.sh != 0) continue;
                    const int i = th / g.sh;
                    if (i >= oh) continue;
                    for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                        const int tw = iw + g.pl - kw_ * g.dw;
                        if (tw < 0 || tw % g.sw != 0) continue;
                        const int j = tw / g.sw;
                        if (j >= ow) continue;
                        const size_t r = (static_cast<size_t>(c) * g.kh + kh_) * g.kw + kw_;
                        acc += col[r * s + static_cast<size_t>(i) * ow + j];
                    }
                }
                grow[iw] = acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y,
                    int n, int ic, int h, int wd, int oc, const ConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    const size_t s = static_cast<size_t>(oh) * ow;
    const int k = ic * g.kh * g.kw;
    auto col = alloc<T>(static_cast<size_t>(k) * s);
    for (int i = 0; i < n; ++i) {
        const T* xi = x + static_cast<size_t>(i) * ic * h * wd;
        T* yi = y + static_cast<size_t>(i) * oc * s;
        im2col(xi, ic, h, wd, g, col.get());
        gemm(oc, static_cast<int>(s), k, w, col.get(), yi, false);
        if (b) {
            for (int c = 0; c < oc; ++c) {
                T* row = yi + static_cast<size_t>(c) * s;
                const T bc = b[c];
                for (size_t j = 0; j < s; ++j) row[j] += bc;
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx,
                           int n, int ic, int h, int wd, int oc, const ConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    const size_t s = static_cast<size_t>(oh) * ow;
    const int k = ic * g.kh * g.kw;
    auto colg = alloc<T>(static_cast<size_t>(k) * s);
    for (int i = 0; i < n; ++i) {
        const T* gyi = gy + static_cast<size_t>(i) * oc * s;
        T* gxi = gx + static_cast<size_t>(i) * ic * h * wd;
        gemm_atb(k, static_cast<int>(s), oc, w, gyi, colg.get(), false);
        col2im(colg.get(), ic, h, wd, g, gxi);
    }
}

template <typename T>
void conv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                             int n, int ic, int h, int wd, int oc, const ConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    const size_t s = static_cast<size_t>(oh) * ow;
    const int k = ic * g.kh * g.kw;
    auto col = alloc<T>(static_cast<size_t>(k) * s);
    for (int i = 0; i < n; ++i) {
        const T* xi = x + static_cast<size_t>(i) * ic * h * wd;
        const T* gyi = gy + static_cast<size_t>(i) * oc * s;
        im2col(xi, ic, h, wd, g, col.get());
        gemm_abt(oc, k, static_cast<int>(s), gyi, col.get(), gw, true);
        if (gb) {
            const int nt = pool_threads(static_cast<size_t>(oc) * s / 4);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
            for (int c = 0; c < oc; ++c) {
                const T* row = gyi + static_cast<size_t>(c) * s;
                T acc = T(0);
#pragma omp simd reduction(+ : acc)
                for (size_t j = 0; j < s; ++j) acc += row[j];
                gb[c] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Transposed convolution. Forward and the two backward passes are expressed
// as GEMMs against a column buffer in the *input* frame plus race-free
// gathers, mirroring the convolution layout.
// ---------------------------------------------------------------------------

namespace {

// colg[(oc,kh,kw), (ih,iw)] = src(oc, ih*sh - pt + kh, iw*sw - pl + kw), 0 outside.
template <typename T>
void im2col_tconv(const T* src, int oc, int oh, int ow, int ih, int iw,
                  const TConvGeom& g, T* colg) {
    const int rows = oc * g.kh * g.kw;
    const size_t s = static_cast<size_t>(ih) * iw;
    const int nt = pool_threads(static_cast<size_t>(rows) * s / 4);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
    for (int r = 0; r < rows; ++r) {
        const int kw_ = r % g.kw;
        const int kh_ = (r / g.kw) % g.kh;
        const int c = r / (g.kw * g.kh);
        const T* sc = src + static_cast<size_t>(c) * oh * ow;
        T* out = colg + static_cast<size_t>(r) * s;
        for (int i = 0; i < ih; ++i) {
            const int y = i * g.sh - g.pt + kh_;
            T* orow = out + static_cast<size_t>(i) * iw;
            if (y < 0 || y >= oh) {
                for (int j = 0; j < iw; ++j) orow[j] = T(0);
                continue;
            }
            const T* srow = sc + static_cast<size_t>(y) * ow;
            for (int j = 0; j < iw; ++j) {
                const int xcol = j * g.sw - g.pl + kw_;
                orow[j] = (xcol >= 0 && xcol < ow) ? srow[xcol] : T(0);
            }
        }
    }
}

// y(oc, oh, ow) = sum over (kh,kw) of col[(oc,kh,kw), (ih,iw)] for the
// unique (ih,iw) that maps there, plus bias.
template <typename T>
void col2im_tconv(const T* col, const T* b, T* y, int oc, int oh, int ow,
                  int ih, int iw, const TConvGeom& g) {
    const size_t s = static_cast<size_t>(ih) * iw;
    const int nt = pool_threads(static_cast<size_t>(oc) * oh * ow * 4);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int c = 0; c < oc; ++c) {
        for (int y_ = 0; y_ < oh; ++y_) {
            T* orow = y + (static_cast<size_t>(c) * oh + y_) * ow;
            for (int x_ = 0; x_ < ow; ++x_) {
                T acc = b ? b[c] : T(0);
                for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                    const int th = y_ + g.pt - kh_;
                    if (th < 0 || th % g.sh != 0) continue;
                    const int i = th / g.sh;
                    if (i >= ih) continue;
                    for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                        const int tw = x_ + g.pl - kw_;
                        if (tw < 0 || tw % g.sw != 0) continue;
                        const int j = tw / g.sw;
                        if (j >= iw) continue;
                        const size_t r = (static_cast<size_t>(c) * g.kh + kh_) * g.kw + kw_;
                        acc += col[r * s + static_cast<size_t>(i) * iw + j];
                    }
                }
                orow[x_] = acc;
            }
        }
    }
}

} // namespace

template <typename T>
void tconv2d_forward(const T* x, const T* w, const T* b, T* y,
                     int n, int ic, int h, int wd, int oc, const TConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    const int rows = oc * g.kh * g.kw;
    const size_t s = static_cast<size_t>(h) * wd;
    auto col = alloc<T>(static_cast<size_t>(rows) * s);
    for (int i = 0; i < n; ++i) {
        const T* xi = x + static_cast<size_t>(i) * ic * s;
        T* yi = y + static_cast<size_t>(i) * oc * oh * ow;
        gemm_atb(rows, static_cast<int>(s), ic, w, xi, col.get(), false);
        col2im_tconv(col.get(), b, yi, oc, oh, ow, h, wd, g);
    }
}

template <typename T>
void tconv2d_backward_input(const T* gy, const T* w, T* gx,
                            int n, int ic, int h, int wd, int oc, const TConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    const int rows = oc * g.kh * g.kw;
    const size_t s = static_cast<size_t>(h) * wd;
    auto colg = alloc<T>(static_cast<size_t>(rows) * s);
    for (int i = 0; i < n; ++i) {
        const T* gyi = gy + static_cast<size_t>(i) * oc * oh * ow;
        T* gxi = gx + static_cast<size_t>(i) * ic * s;
        im2col_tconv(gyi, oc, oh, ow, h, wd, g, colg.get());
        gemm(ic, static_cast<int>(s), rows, w, colg.get(), gxi, false);
    }
}

template <typename T>
void tconv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                              int n, int ic, int h, int wd, int oc, const TConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    const int rows = oc * g.kh * g.kw;
    const size_t s = static_cast<size_t>(h) * wd;
    auto colg = alloc<T>(static_cast<size_t>(rows) * s);
    for (int i = 0; i < n; ++i) {
        const T* xi = x + static_cast<size_t>(i) * ic * s;
        const T* gyi = gy + static_cast<size_t>(i) * oc * oh * ow;
        im2col_tconv(gyi, oc, oh, ow, h, wd, g, colg.get());
        gemm_abt(ic, rows, static_cast<int>(s), xi, colg.get(), gw, true);
        if (gb) {
            const size_t os = static_cast<size_t>(oh) * ow;
            const int nt = pool_threads(static_cast<size_t>(oc) * os / 4);
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
            for (int c = 0; c < oc; ++c) {
                const T* row = gyi + static_cast<size_t>(c) * os;
                T acc = T(0);
#pragma omp simd reduction(+ : acc)
                for (size_t j = 0; j < os; ++j) acc += row[j];
                gb[c] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pooling / resampling
// ---------------------------------------------------------------------------

template <typename T>
void maxpool2_forward(const T* x, T* y, unsigned char* argmax, int n, int c, int h, int w) {
    const int oh = h / 2, ow = w / 2;
    const int planes = n * c;
    const int nt = pool_threads(static_cast<size_t>(planes) * oh * ow * 4);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int p = 0; p < planes; ++p) {
        for (int i = 0; i < oh; ++i) {
            const T* x0 = x + (static_cast<size_t>(p) * h + 2 * i) * w;
            const T* x1 = x0 + w;
            T* yrow = y + (static_cast<size_t>(p) * oh + i) * ow;
            unsigned char* arow = argmax + (static_cast<size_t>(p) * oh + i) * ow;
            for (int j = 0; j < ow; ++j) {
                const T v[4] = {x0[2 * j], x0[2 * j + 1], x1[2 * j], x1[2 * j + 1]};
                int best = 0;
                for (int t = 1; t < 4; ++t)
                    if (v[t] > v[best]) best = t;
                yrow[j] = v[best];
                arow[j] = static_cast<unsigned char>(best);
            }
        }
    }
}

template <typename T>
void maxpool2_backward(const T* gy, const unsigned char* argmax, T* gx, int n, int c, int h, int w) {
    const int oh = h / 2, ow = w / 2;
    const int planes = n * c;
    const int nt = pool_threads(static_cast<size_t>(planes) * h * w);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int p = 0; p < planes; ++p) {
        for (int i = 0; i < oh; ++i) {
            const T* grow = gy + (static_cast<size_t>(p) * oh + i) * ow;
            const unsigned char* arow = argmax + (static_cast<size_t>(p) * oh + i) * ow;
            T* g0 = gx + (static_cast<size_t>(p) * h + 2 * i) * w;
            T* g1 = g0 + w;
            for (int j = 0; j < 2 * ow; ++j) {
                g0[j] = T(0);
                g1[j] = T(0);
            }
            for (int j = 0; j < ow; ++j) {
                const int a = arow[j];
                T* dst = (a < 2) ? g0 : g1;
                dst[2 * j + (a & 1)] = grow[j];
            }
        }
    }
}

namespace {

// Half-pixel source coordinates for one axis.
template <typename T>
void upsample_axis(int in, int factor, std::vector<int>& i0, std::vector<int>& i1,
                   std::vector<T>& w0, std::vector<T>& w1) {
    const int out = in * factor;
    i0.resize(out);
    i1.resize(out);
    w0.resize(out);
    w1.resize(out);
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) / factor - 0.5;
        double fl = std::floor(src);
        int a = static_cast<int>(fl);
        double t = src - fl;
        int b = a + 1;
        if (a < 0) a = 0;
        if (b > in - 1) b = in - 1;
        if (a > in - 1) a = in - 1;
        i0[o] = a;
        i1[o] = b;
        w0[o] = static_cast<T>(1.0 - t);
        w1[o] = static_cast<T>(t);
    }
}

} // namespace

template <typename T>
void upsample_bilinear_forward(const T* x, T* y, int n, int c, int h, int w, int factor) {
    std::vector<int> r0, r1, c0, c1;
    std::vector<T> wr0, wr1, wc0, wc1;
    upsample_axis<T>(h, factor, r0, r1, wr0, wr1);
    upsample_axis<T>(w, factor, c0, c1, wc0, wc1);
    const int oh = h * factor, ow = w * factor;
    const int planes = n * c;
    const int nt = pool_threads(static_cast<size_t>(planes) * oh * ow * 2);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int p = 0; p < planes; ++p) {
        for (int i = 0; i < oh; ++i) {
            const T* xp = x + static_cast<size_t>(p) * h * w;
            const T* top = xp + static_cast<size_t>(r0[i]) * w;
            const T* bot = xp + static_cast<size_t>(r1[i]) * w;
            const T a = wr0[i], b = wr1[i];
            T* yrow = y + (static_cast<size_t>(p) * oh + i) * ow;
            for (int j = 0; j < ow; ++j) {
                yrow[j] = a * (wc0[j] * top[c0[j]] + wc1[j] * top[c1[j]]) +
                          b * (wc0[j] * bot[c0[j]] + wc1[j] * bot[c1[j]]);
            }
        }
    }
}

template <typename T>
void upsample_bilinear_backward(const T* gy, T* gx, int n, int c, int h, int w, int factor) {
    std::vector<int> r0, r1, c0, c1;
    std::vector<T> wr0, wr1, wc0, wc1;
    upsample_axis<T>(h, factor, r0, r1, wr0, wr1);
    upsample_axis<T>(w, factor, c0, c1, wc0, wc1);
    const int oh = h * factor, ow = w * factor;
    // Invert the interpolation tables: which outputs touch each input index.
    std::vector<std::vector<std::pair<int, T>>> rows(h), cols(w);
    for (int i = 0; i < oh; ++i) {
        if (wr0[i] != T(0) || r0[i] == r1[i]) rows[r0[i]].push_back({i, wr0[i]});
        if (r1[i] != r0[i] && wr1[i] != T(0)) rows[r1[i]].push_back({i, wr1[i]});
    }
    for (int j = 0; j < ow; ++j) {
        if (wc0[j] != T(0) || c0[j] == c1[j]) cols[c0[j]].push_back({j, wc0[j]});
        if (c1[j] != c0[j] && wc1[j] != T(0)) cols[c1[j]].push_back({j, wc1[j]});
    }
    const int planes = n * c;
    const int nt = pool_threads(static_cast<size_t>(planes) * oh * ow * 2);
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
    for (int p = 0; p < planes; ++p) {
        for (int ih = 0; ih < h; ++ih) {
            const T* gp = gy + static_cast<size_t>(p) * oh * ow;
            T* grow = gx + (static_cast<size_t>(p) * h + ih) * w;
            for (int iw = 0; iw < w; ++iw) {
                T acc = T(0);
                for (const auto& [oi, rw] : rows[ih]) {
                    const T* gyrow = gp + static_cast<size_t>(oi) * ow;
                    for (const auto& [oj, cw] : cols[iw]) acc += rw * cw * gyrow[oj];
                }
                grow[iw] = acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Serial references
// ---------------------------------------------------------------------------

namespace serial {

template <typename T>
void gemm(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    for (int m = 0; m < M; ++m) {
        for (int n = 0; n < N; ++n) {
            T acc = accumulate ? C[static_cast<size_t>(m) * N + n] : T(0);
            for (int k = 0; k < K; ++k)
                acc += A[static_cast<size_t>(m) * K + k] * B[static_cast<size_t>(k) * N + n];
            C[static_cast<size_t>(m) * N + n] = acc;
        }
    }
}

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y,
                    int n, int ic, int h, int wd, int oc, const ConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    for (int img = 0; img < n; ++img) {
        const T* xi = x + static_cast<size_t>(img) * ic * h * wd;
        T* yi = y + static_cast<size_t>(img) * oc * oh * ow;
        for (int c = 0; c < oc; ++c) {
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    T acc = b ? b[c] : T(0);
                    for (int q = 0; q < ic; ++q) {
                        for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                            const int ih = i * g.sh - g.pt + kh_ * g.dh;
                            if (ih < 0 || ih >= h) continue;
                            for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                                const int iw = j * g.sw - g.pl + kw_ * g.dw;
                                if (iw < 0 || iw >= wd) continue;
                                acc += xi[(static_cast<size_t>(q) * h + ih) * wd + iw] *
                                       w[((static_cast<size_t>(c) * ic + q) * g.kh + kh_) * g.kw + kw_];
                            }
                        }
                    }
                    yi[(static_cast<size_t>(c) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const T* gy, const T* w, T* gx,
                           int n, int ic, int h, int wd, int oc, const ConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    std::memset(gx, 0, static_cast<size_t>(n) * ic * h * wd * sizeof(T));
    for (int img = 0; img < n; ++img) {
        const T* gyi = gy + static_cast<size_t>(img) * oc * oh * ow;
        T* gxi = gx + static_cast<size_t>(img) * ic * h * wd;
        for (int c = 0; c < oc; ++c) {
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    const T gv = gyi[(static_cast<size_t>(c) * oh + i) * ow + j];
                    for (int q = 0; q < ic; ++q) {
                        for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                            const int ih = i * g.sh - g.pt + kh_ * g.dh;
                            if (ih < 0 || ih >= h) continue;
                            for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                                const int iw = j * g.sw - g.pl + kw_ * g.dw;
                                if (iw < 0 || iw >= wd) continue;
                                gxi[(static_cast<size_t>(q) * h + ih) * wd + iw] +=
                                    gv * w[((static_cast<size_t>(c) * ic + q) * g.kh + kh_) * g.kw + kw_];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                             int n, int ic, int h, int wd, int oc, const ConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    for (int img = 0; img < n; ++img) {
        const T* xi = x + static_cast<size_t>(img) * ic * h * wd;
        const T* gyi = gy + static_cast<size_t>(img) * oc * oh * ow;
        for (int c = 0; c < oc; ++c) {
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    const T gv = gyi[(static_cast<size_t>(c) * oh + i) * ow + j];
                    if (gb) gb[c] += gv;
                    for (int q = 0; q < ic; ++q) {
                        for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                            const int ih = i * g.sh - g.pt + kh_ * g.dh;
                            if (ih < 0 || ih >= h) continue;
                            for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                                const int iw = j * g.sw - g.pl + kw_ * g.dw;
                                if (iw < 0 || iw >= wd) continue;
                                gw[((static_cast<size_t>(c) * ic + q) * g.kh + kh_) * g.kw + kw_] +=
                                    gv * xi[(static_cast<size_t>(q) * h + ih) * wd + iw];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void tconv2d_forward(const T* x, const T* w, const T* b, T* y,
                     int n, int ic, int h, int wd, int oc, const TConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    for (int img = 0; img < n; ++img) {
        const T* xi = x + static_cast<size_t>(img) * ic * h * wd;
        T* yi = y + static_cast<size_t>(img) * oc * oh * ow;
        for (int c = 0; c < oc; ++c)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j)
                    yi[(static_cast<size_t>(c) * oh + i) * ow + j] = b ? b[c] : T(0);
        for (int q = 0; q < ic; ++q) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < wd; ++j) {
                    const T xv = xi[(static_cast<size_t>(q) * h + i) * wd + j];
                    for (int c = 0; c < oc; ++c) {
                        for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                            const int y_ = i * g.sh - g.pt + kh_;
                            if (y_ < 0 || y_ >= oh) continue;
                            for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                                const int x_ = j * g.sw - g.pl + kw_;
                                if (x_ < 0 || x_ >= ow) continue;
                                yi[(static_cast<size_t>(c) * oh + y_) * ow + x_] +=
                                    xv * w[((static_cast<size_t>(q) * oc + c) * g.kh + kh_) * g.kw + kw_];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void tconv2d_backward_input(const T* gy, const T* w, T* gx,
                            int n, int ic, int h, int wd, int oc, const TConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    for (int img = 0; img < n; ++img) {
        const T* gyi = gy + static_cast<size_t>(img) * oc * oh * ow;
        T* gxi = gx + static_cast<size_t>(img) * ic * h * wd;
        for (int q = 0; q < ic; ++q) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < wd; ++j) {
                    T acc = T(0);
                    for (int c = 0; c < oc; ++c) {
                        for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                            const int y_ = i * g.sh - g.pt + kh_;
                            if (y_ < 0 || y_ >= oh) continue;
                            for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                                const int x_ = j * g.sw - g.pl + kw_;
                                if (x_ < 0 || x_ >= ow) continue;
                                acc += gyi[(static_cast<size_t>(c) * oh + y_) * ow + x_] *
                                       w[((static_cast<size_t>(q) * oc + c) * g.kh + kh_) * g.kw + kw_];
                            }
                        }
                    }
                    gxi[(static_cast<size_t>(q) * h + i) * wd + j] = acc;
                }
            }
        }
    }
}

template <typename T>
void tconv2d_backward_weights(const T* x, const T* gy, T* gw, T* gb,
                              int n, int ic, int h, int wd, int oc, const TConvGeom& g) {
    const int oh = g.out_h(h), ow = g.out_w(wd);
    for (int img = 0; img < n; ++img) {
        const T* xi = x + static_cast<size_t>(img) * ic * h * wd;
        const T* gyi = gy + static_cast<size_t>(img) * oc * oh * ow;
        if (gb) {
            for (int c = 0; c < oc; ++c)
                for (int i = 0; i < oh; ++i)
                    for (int j = 0; j < ow; ++j)
                        gb[c] += gyi[(static_cast<size_t>(c) * oh + i) * ow + j];
        }
        for (int q = 0; q < ic; ++q) {
            for (int i = 0; i < h; ++i) {
                for (int j = 0; j < wd; ++j) {
                    const T xv = xi[(static_cast<size_t>(q) * h + i) * wd + j];
                    for (int c = 0; c < oc; ++c) {
                        for (int kh_ = 0; kh_ < g.kh; ++kh_) {
                            const int y_ = i * g.sh - g.pt + kh_;
                            if (y_ < 0 || y_ >= oh) continue;
                            for (int kw_ = 0; kw_ < g.kw; ++kw_) {
                                const int x_ = j * g.sw - g.pl + kw_;
                                if (x_ < 0 || x_ >= ow) continue;
                                gw[((static_cast<size_t>(q) * oc + c) * g.kh + kh_) * g.kw + kw_] +=
                                    xv * gyi[(static_cast<size_t>(c) * oh + y_) * ow + x_];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void maxpool2_forward(const T* x, T* y, unsigned char* argmax, int n, int c, int h, int w) {
    const int oh = h / 2, ow = w / 2;
    for (int p = 0; p < n * c; ++p) {
        for (int i = 0; i < oh; ++i) {
            for (int j = 0; j < ow; ++j) {
                const T v[4] = {x[(static_cast<size_t>(p) * h + 2 * i) * w + 2 * j],
                                x[(static_cast<size_t>(p) * h + 2 * i) * w + 2 * j + 1],
                                x[(static_cast<size_t>(p) * h + 2 * i + 1) * w + 2 * j],
                                x[(static_cast<size_t>(p) * h + 2 * i + 1) * w + 2 * j + 1]};
                int best = 0;
                for (int t = 1; t < 4; ++t)
                    if (v[t] > v[best]) best = t;
                y[(static_cast<size_t>(p) * oh + i) * ow + j] = v[best];
                argmax[(static_cast<size_t>(p) * oh + i) * ow + j] = static_cast<unsigned char>(best);
            }
        }
    }
}

template <typename T>
void upsample_bilinear_forward(const T* x, T* y, int n, int c, int h, int w, int factor) {
    const int oh = h * factor, ow = w * factor;
    for (int p = 0; p < n * c; ++p) {
        const T* xp = x + static_cast<size_t>(p) * h * w;
        for (int i = 0; i < oh; ++i) {
            double sr = (i + 0.5) / factor - 0.5;
            int r0 = static_cast<int>(std::floor(sr));
            double tr = sr - r0;
            int r1 = std::min(std::max(r0 + 1, 0), h - 1);
            r0 = std::min(std::max(r0, 0), h - 1);
            for (int j = 0; j < ow; ++j) {
                double sc = (j + 0.5) / factor - 0.5;
                int q0 = static_cast<int>(std::floor(sc));
                double tc = sc - q0;
                int q1 = std::min(std::max(q0 + 1, 0), w - 1);
                q0 = std::min(std::max(q0, 0), w - 1);
                double v = (1 - tr) * ((1 - tc) * xp[static_cast<size_t>(r0) * w + q0] +
                                       tc * xp[static_cast<size_t>(r0) * w + q1]) +
                           tr * ((1 - tc) * xp[static_cast<size_t>(r1) * w + q0] +
                                 tc * xp[static_cast<size_t>(r1) * w + q1]);
                y[(static_cast<size_t>(p) * oh + i) * ow + j] = static_cast<T>(v);
            }
        }
    }
}

} // namespace serial

// Explicit instantiations: float drives training, double drives the
// finite-difference validation suite.
#define SIFA_INSTANTIATE(T)                                                                            \
    template void gemm<T>(int, int, int, const T*, const T*, T*, bool);                               \
    template void gemm_abt<T>(int, int, int, const T*, const T*, T*, bool);                           \
    template void gemm_atb<T>(int, int, int, const T*, const T*, T*, bool);                           \
    template void im2col<T>(const T*, int, int, int, const ConvGeom&, T*);                            \
    template void col2im<T>(const T*, int, int, int, const ConvGeom&, T*);                            \
    template void conv2d_forward<T>(const T*, const T*, const T*, T*, int, int, int, int, int,        \
                                    const ConvGeom&);                                                 \
    template void conv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int,           \
                                           const ConvGeom&);                                          \
    template void conv2d_backward_weights<T>(const T*, const T*, T*, T*, int, int, int, int, int,     \
                                             const ConvGeom&);                                        \
    template void tconv2d_forward<T>(const T*, const T*, const T*, T*, int, int, int, int, int,       \
                                     const TConvGeom&);                                               \
    template void tconv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int,          \
                                            const TConvGeom&);                                        \
    template void tconv2d_backward_weights<T>(const T*, const T*, T*, T*, int, int, int, int, int,    \
                                              const TConvGeom&);                                      \
    template void maxpool2_forward<T>(const T*, T*, unsigned char*, int, int, int, int);              \
    template void maxpool2_backward<T>(const T*, const unsigned char*, T*, int, int, int, int);       \
    template void upsample_bilinear_forward<T>(const T*, T*, int, int, int, int, int);                \
    template void upsample_bilinear_backward<T>(const T*, T*, int, int, int, int, int);               \
    template void serial::gemm<T>(int, int, int, const T*, const T*, T*, bool);                       \
    template void serial::conv2d_forward<T>(const T*, const T*, const T*, T*, int, int, int, int,     \
                                            int, const ConvGeom&);                                    \
    template void serial::conv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int,   \
                                                   const ConvGeom&);                                  \
    template void serial::conv2d_backward_weights<T>(const T*, const T*, T*, T*, int, int, int, int,  \
                                                     int, const ConvGeom&);                           \
    template void serial::tconv2d_forward<T>(const T*, const T*, const T*, T*, int, int, int, int,    \
                                             int, const TConvGeom&);                                  \
    template void serial::tconv2d_backward_input<T>(const T*, const T*, T*, int, int, int, int, int,  \
                                                    const TConvGeom&);                                \
    template void serial::tconv2d_backward_weights<T>(const T*, const T*, T*, T*, int, int, int, int, \
                                                      int, const TConvGeom&);                         \
    template void serial::maxpool2_forward<T>(const T*, T*, unsigned char*, int, int, int, int);      \
    template void serial::upsample_bilinear_forward<T>(const T*, T*, int, int, int, int, int);

SIFA_INSTANTIATE(float)
SIFA_INSTANTIATE(double)

#undef SIFA_INSTANTIATE

} // namespace sifa::kernels
