#include "sifa/layers.hpp"

#include <cmath>
#include <cstring>

namespace sifa {

namespace {

void check_4d(const Tensor& x, const char* who) {
    if (x.empty()) throw InvalidInput(std::string(who) + ": empty input");
}

} // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_c, int out_c, int k, int stride, int dilation, bool bias)
    : in_c(in_c), out_c(out_c), k(k), stride(stride), dilation(dilation), has_bias(bias) {
    w.name = name + ".w";
    w.value = Tensor::zeros(out_c, in_c, k, k);
    w.grad = Tensor::zeros(out_c, in_c, k, k);
    if (has_bias) {
        b.name = name + ".b";
        b.value = Tensor::zeros(1, out_c, 1, 1);
        b.grad = Tensor::zeros(1, out_c, 1, 1);
    }
}

kernels::ConvGeom Conv2d::geom_for(int h, int wd) const {
    kernels::ConvGeom g;
    g.kh = g.kw = k;
    g.sh = g.sw = stride;
    g.dh = g.dw = dilation;
    kernels::same_pad(h, k, stride, dilation, g.pt, g.pb);
    kernels::same_pad(wd, k, stride, dilation, g.pl, g.pr);
    return g;
}

Tensor Conv2d::forward(const Tensor& x, Ctx* ctx) {
    check_4d(x, "Conv2d");
    if (x.c() != in_c)
        throw ShapeError("Conv2d " + w.name + ": expected " + std::to_string(in_c) +
                         " input channels, got " + std::to_string(x.c()));
    const auto g = geom_for(x.h(), x.w());
    Tensor y(x.n(), out_c, g.out_h(x.h()), g.out_w(x.w()));
    kernels::conv2d_forward(x.data(), w.value.data(), has_bias ? b.value.data() : nullptr,
                            y.data(), x.n(), in_c, x.h(), x.w(), out_c, g);
    if (ctx) ctx->saved.push_back(x);
    return y;
}

Tensor Conv2d::backward(const Tensor& gy, const Ctx& ctx, bool accum_params) {
    const Tensor& x = ctx.saved.at(0);
    const auto g = geom_for(x.h(), x.w());
    if (accum_params) {
        kernels::conv2d_backward_weights(x.data(), gy.data(), w.grad.data(),
                                         has_bias ? b.grad.data() : nullptr,
                                         x.n(), in_c, x.h(), x.w(), out_c, g);
    }
    Tensor gx(x.n(), x.c(), x.h(), x.w());
    kernels::conv2d_backward_input(gy.data(), w.value.data(), gx.data(),
                                   x.n(), in_c, x.h(), x.w(), out_c, g);
    return gx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&w);
    if (has_bias) out.push_back(&b);
}

void Conv2d::init(Rng& rng) {
    for (size_t i = 0; i < w.value.size(); ++i)
        w.value.data()[i] = static_cast<float>(rng.gaussian(0.0, 0.02));
    if (has_bias) b.value.fill(0.0f);
}

// ---------------------------------------------------------------------------
// ConvTranspose2d
// ---------------------------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride, int pad)
    : in_c(in_c), out_c(out_c), k(k), stride(stride), pad(pad) {
    w.name = name + ".w";
    w.value = Tensor::zeros(in_c, out_c, k, k);
    w.grad = Tensor::zeros(in_c, out_c, k, k);
    b.name = name + ".b";
    b.value = Tensor::zeros(1, out_c, 1, 1);
    b.grad = Tensor::zeros(1, out_c, 1, 1);
    geom.kh = geom.kw = k;
    geom.sh = geom.sw = stride;
    geom.pt = geom.pb = geom.pl = geom.pr = pad;
}

Tensor ConvTranspose2d::forward(const Tensor& x, Ctx* ctx) {
    check_4d(x, "ConvTranspose2d");
    if (x.c() != in_c)
        throw ShapeError("ConvTranspose2d " + w.name + ": expected " + std::to_string(in_c) +
                         " input channels, got " + std::to_string(x.c()));
    Tensor y(x.n(), out_c, geom.out_h(x.h()), geom.out_w(x.w()));
    kernels::tconv2d_forward(x.data(), w.value.data(), b.value.data(), y.data(),
                             x.n(), in_c, x.h(), x.w(), out_c, geom);
    if (ctx) ctx->saved.push_back(x);
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& gy, const Ctx& ctx, bool accum_params) {
    const Tensor& x = ctx.saved.at(0);
    if (accum_params) {
        kernels::tconv2d_backward_weights(x.data(), gy.data(), w.grad.data(), b.grad.data(),
                                          x.n(), in_c, x.h(), x.w(), out_c, geom);
    }
    Tensor gx(x.n(), x.c(), x.h(), x.w());
    kernels::tconv2d_backward_input(gy.data(), w.value.data(), gx.data(),
                                    x.n(), in_c, x.h(), x.w(), out_c, geom);
    return gx;
}

void ConvTranspose2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&w);
    out.push_back(&b);
}

void ConvTranspose2d::init(Rng& rng) {
    for (size_t i = 0; i < w.value.size(); ++i)
        w.value.data()[i] = static_cast<float>(rng.gaussian(0.0, 0.02));
    b.value.fill(0.0f);
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::string name, int channels) : channels(channels) {
    gamma.name = name + ".gamma";
    gamma.value = Tensor::zeros(1, channels, 1, 1);
    gamma.grad = Tensor::zeros(1, channels, 1, 1);
    beta.name = name + ".beta";
    beta.value = Tensor::zeros(1, channels, 1, 1);
    beta.grad = Tensor::zeros(1, channels, 1, 1);
    running_mean = Tensor::zeros(1, channels, 1, 1);
    running_var = Tensor::zeros(1, channels, 1, 1);
    running_var.fill(1.0f);
    gamma.value.fill(1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, Ctx* ctx) {
    check_4d(x, "BatchNorm2d");
    const int n = x.n(), hw = x.h() * x.w();
    const size_t plane = static_cast<size_t>(hw);
    Tensor y = Tensor::like(x);

    if (!train_) {
        for (int c = 0; c < channels; ++c) {
            const float m = running_mean.data()[c];
            const float inv = 1.0f / std::sqrt(running_var.data()[c] + static_cast<float>(eps));
            const float g = gamma.value.data()[c], bt = beta.value.data()[c];
            for (int i = 0; i < n; ++i) {
                const float* xp = x.data() + (static_cast<size_t>(i) * channels + c) * plane;
                float* yp = y.data() + (static_cast<size_t>(i) * channels + c) * plane;
                for (size_t j = 0; j < plane; ++j) yp[j] = g * (xp[j] - m) * inv + bt;
            }
        }
        return y;
    }

    Tensor xhat = Tensor::like(x);
    Tensor invstd = Tensor::zeros(1, channels, 1, 1);
    const double count = static_cast<double>(n) * hw;
    for (int c = 0; c < channels; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            const float* xp = x.data() + (static_cast<size_t>(i) * channels + c) * plane;
            for (size_t j = 0; j < plane; ++j) {
                sum += xp[j];
                sq += static_cast<double>(xp[j]) * xp[j];
            }
        }
        const double mean = sum / count;
        const double var = std::max(sq / count - mean * mean, 0.0);
        const double inv = 1.0 / std::sqrt(var + eps);
        invstd.data()[c] = static_cast<float>(inv);
        running_mean.data()[c] = static_cast<float>((1.0 - momentum) * running_mean.data()[c] + momentum * mean);
        running_var.data()[c] = static_cast<float>((1.0 - momentum) * running_var.data()[c] + momentum * var);
        const float g = gamma.value.data()[c], bt = beta.value.data()[c];
        const float mf = static_cast<float>(mean), invf = static_cast<float>(inv);
        for (int i = 0; i < n; ++i) {
            const float* xp = x.data() + (static_cast<size_t>(i) * channels + c) * plane;
            float* hp = xhat.data() + (static_cast<size_t>(i) * channels + c) * plane;
            float* yp = y.data() + (static_cast<size_t>(i) * channels + c) * plane;
            for (size_t j = 0; j < plane; ++j) {
                const float h = (xp[j] - mf) * invf;
                hp[j] = h;
                yp[j] = g * h + bt;
            }
        }
    }
    if (ctx) {
        ctx->saved.push_back(std::move(xhat));
        ctx->saved.push_back(std::move(invstd));
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy, const Ctx& ctx, bool accum_params) {
    const Tensor& xhat = ctx.saved.at(0);
    const Tensor& invstd = ctx.saved.at(1);
    const int n = gy.n(), hw = gy.h() * gy.w();
    const size_t plane = static_cast<size_t>(hw);
    const double count = static_cast<double>(n) * hw;
    Tensor gx = Tensor::like(gy);
    for (int c = 0; c < channels; ++c) {
        double sg = 0.0, sgx = 0.0;
        for (int i = 0; i < n; ++i) {
            const float* gp = gy.data() + (static_cast<size_t>(i) * channels + c) * plane;
            const float* hp = xhat.data() + (static_cast<size_t>(i) * channels + c) * plane;
            for (size_t j = 0; j < plane; ++j) {
                sg += gp[j];
                sgx += static_cast<double>(gp[j]) * hp[j];
            }
        }
        if (accum_params) {
            beta.grad.data()[c] += static_cast<float>(sg);
            gamma.grad.data()[c] += static_cast<float>(sgx);
        }
        const float g = gamma.value.data()[c];
        const float inv = invstd.data()[c];
        const float a = static_cast<float>(sg / count);
        const float bcoef = static_cast<float>(sgx / count);
        for (int i = 0; i < n; ++i) {
            const float* gp = gy.data() + (static_cast<size_t>(i) * channels + c) * plane;
            const float* hp = xhat.data() + (static_cast<size_t>(i) * channels + c) * plane;
            float* op = gx.data() + (static_cast<size_t>(i) * channels + c) * plane;
            for (size_t j = 0; j < plane; ++j) op[j] = g * inv * (gp[j] - a - hp[j] * bcoef);
        }
    }
    return gx;
}

void BatchNorm2d::collect_params(std::vector<Param*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

void BatchNorm2d::collect_buffers(std::vector<Tensor*>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

void BatchNorm2d::init(Rng&) {
    gamma.value.fill(1.0f);
    beta.value.fill(0.0f);
    running_mean.fill(0.0f);
    running_var.fill(1.0f);
}

// ---------------------------------------------------------------------------
// InstanceNorm2d
// ---------------------------------------------------------------------------

Tensor InstanceNorm2d::forward(const Tensor& x, Ctx* ctx) {
    check_4d(x, "InstanceNorm2d");
    const int n = x.n(), c = x.c(), hw = x.h() * x.w();
    const size_t plane = static_cast<size_t>(hw);
    Tensor y = Tensor::like(x);
    Tensor invstd = Tensor::zeros(n, c, 1, 1);
    for (int p = 0; p < n * c; ++p) {
        const float* xp = x.data() + static_cast<size_t>(p) * plane;
        double sum = 0.0, sq = 0.0;
        for (size_t j = 0; j < plane; ++j) {
            sum += xp[j];
            sq += static_cast<double>(xp[j]) * xp[j];
        }
        const double mean = sum / hw;
        const double var = std::max(sq / hw - mean * mean, 0.0);
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        invstd.data()[p] = inv;
        const float mf = static_cast<float>(mean);
        float* yp = y.data() + static_cast<size_t>(p) * plane;
        for (size_t j = 0; j < plane; ++j) yp[j] = (xp[j] - mf) * inv;
    }
    if (ctx) {
        ctx->saved.push_back(y); // y == xhat (no affine)
        ctx->saved.push_back(std::move(invstd));
    }
    return y;
}

Tensor InstanceNorm2d::backward(const Tensor& gy, const Ctx& ctx, bool) {
    const Tensor& xhat = ctx.saved.at(0);
    const Tensor& invstd = ctx.saved.at(1);
    const int n = gy.n(), c = gy.c(), hw = gy.h() * gy.w();
    const size_t plane = static_cast<size_t>(hw);
    Tensor gx = Tensor::like(gy);
    for (int p = 0; p < n * c; ++p) {
        const float* gp = gy.data() + static_cast<size_t>(p) * plane;
        const float* hp = xhat.data() + static_cast<size_t>(p) * plane;
        double sg = 0.0, sgx = 0.0;
        for (size_t j = 0; j < plane; ++j) {
            sg += gp[j];
            sgx += static_cast<double>(gp[j]) * hp[j];
        }
        const float a = static_cast<float>(sg / hw);
        const float bcoef = static_cast<float>(sgx / hw);
        const float inv = invstd.data()[p];
        float* op = gx.data() + static_cast<size_t>(p) * plane;
        for (size_t j = 0; j < plane; ++j) op[j] = inv * (gp[j] - a - hp[j] * bcoef);
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor Activation::forward(const Tensor& x, Ctx* ctx) {
    Tensor y = Tensor::like(x);
    const size_t n = x.size();
    const float* xp = x.data();
    float* yp = y.data();
    switch (act) {
        case Act::relu:
            for (size_t i = 0; i < n; ++i) yp[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
            break;
        case Act::lrelu:
            for (size_t i = 0; i < n; ++i) yp[i] = xp[i] > 0.0f ? xp[i] : slope * xp[i];
            break;
        case Act::tanh:
            for (size_t i = 0; i < n; ++i) yp[i] = std::tanh(xp[i]);
            break;
        case Act::none:
            std::memcpy(yp, xp, n * sizeof(float));
            break;
    }
    if (ctx) {
        if (act == Act::tanh) {
            ctx->saved.push_back(y);
        } else if (act != Act::none) {
            ctx->saved.push_back(x);
        }
    }
    return y;
}

Tensor Activation::backward(const Tensor& gy, const Ctx& ctx, bool) {
    Tensor gx = Tensor::like(gy);
    const size_t n = gy.size();
    const float* gp = gy.data();
    float* op = gx.data();
    switch (act) {
        case Act::relu: {
            const float* xp = ctx.saved.at(0).data();
            for (size_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0f ? gp[i] : 0.0f;
            break;
        }
        case Act::lrelu: {
            const float* xp = ctx.saved.at(0).data();
            for (size_t i = 0; i < n; ++i) op[i] = xp[i] > 0.0f ? gp[i] : slope * gp[i];
            break;
        }
        case Act::tanh: {
            const float* yp = ctx.saved.at(0).data();
            for (size_t i = 0; i < n; ++i) op[i] = gp[i] * (1.0f - yp[i] * yp[i]);
            break;
        }
        case Act::none:
            std::memcpy(op, gp, n * sizeof(float));
            break;
    }
    return gx;
}

// ---------------------------------------------------------------------------
// MaxPool2 / BilinearUpsample
// ---------------------------------------------------------------------------

Tensor MaxPool2::forward(const Tensor& x, Ctx* ctx) {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
        throw ShapeError("MaxPool2: input extent must be even, got " + x.shape_str());
    Tensor y(x.n(), x.c(), x.h() / 2, x.w() / 2);
    std::vector<unsigned char> argmax(y.size());
    kernels::maxpool2_forward(x.data(), y.data(), argmax.data(), x.n(), x.c(), x.h(), x.w());
    if (ctx) {
        ctx->bytes = std::move(argmax);
        Tensor dims(0, 0, 0, 0);
        ctx->saved.push_back(Tensor(x.n(), x.c(), 1, 1)); // records input shape only
        ctx->saved.back().fill(static_cast<float>(x.h()));
        ctx->saved.back().data()[0] = static_cast<float>(x.h());
        ctx->saved.back().data()[1 % ctx->saved.back().size()] = static_cast<float>(x.w());
    }
    return y;
}

Tensor MaxPool2::backward(const Tensor& gy, const Ctx& ctx, bool) {
    const int h = gy.h() * 2, w = gy.w() * 2;
    Tensor gx(gy.n(), gy.c(), h, w);
    kernels::maxpool2_backward(gy.data(), ctx.bytes.data(), gx.data(), gy.n(), gy.c(), h, w);
    return gx;
}

Tensor BilinearUpsample::forward(const Tensor& x, Ctx* ctx) {
    Tensor y(x.n(), x.c(), x.h() * factor, x.w() * factor);
    kernels::upsample_bilinear_forward(x.data(), y.data(), x.n(), x.c(), x.h(), x.w(), factor);
    (void)ctx;
    return y;
}

Tensor BilinearUpsample::backward(const Tensor& gy, const Ctx&, bool) {
    const int h = gy.h() / factor, w = gy.w() / factor;
    Tensor gx(gy.n(), gy.c(), h, w);
    kernels::upsample_bilinear_backward(gy.data(), gx.data(), gy.n(), gy.c(), h, w, factor);
    return gx;
}

// ---------------------------------------------------------------------------
// ResidualBlock
// ---------------------------------------------------------------------------

std::unique_ptr<Layer> make_norm(Norm norm, const std::string& name, int channels) {
    switch (norm) {
        case Norm::batch: return std::make_unique<BatchNorm2d>(name, channels);
        case Norm::instance: return std::make_unique<InstanceNorm2d>(channels);
        case Norm::none: return nullptr;
    }
    return nullptr;
}

std::unique_ptr<Layer> make_act(Act act) {
    if (act == Act::none) return nullptr;
    return std::make_unique<Activation>(act);
}

ResidualBlock::ResidualBlock(std::string name, int in_c, int out_c, int dilation, Norm norm)
    : in_c(in_c), out_c(out_c), dilation(dilation) {
    body.push_back(std::make_unique<Conv2d>(name + ".conv1", in_c, out_c, 3, 1, dilation));
    if (auto n1 = make_norm(norm, name + ".norm1", out_c)) body.push_back(std::move(n1));
    body.push_back(std::make_unique<Activation>(Act::relu));
    body.push_back(std::make_unique<Conv2d>(name + ".conv2", out_c, out_c, 3, 1, dilation));
    if (auto n2 = make_norm(norm, name + ".norm2", out_c)) body.push_back(std::move(n2));
    if (in_c != out_c) projection = std::make_unique<Conv2d>(name + ".proj", in_c, out_c, 1, 1, 1);
}

Tensor ResidualBlock::forward(const Tensor& x, Ctx* ctx) {
    if (ctx) ctx->children.resize(body.size() + 1);
    Tensor h = x;
    for (size_t i = 0; i < body.size(); ++i)
        h = body[i]->forward(h, ctx ? &ctx->children[i] : nullptr);
    Tensor skip = projection ? projection->forward(x, ctx ? &ctx->children[body.size()] : nullptr) : x;
    h.add_(skip);
    // relu after the add; remember the pre-activation sign
    if (ctx) {
        ctx->saved.push_back(h);
    }
    float* p = h.data();
    for (size_t i = 0; i < h.size(); ++i) p[i] = p[i] > 0.0f ? p[i] : 0.0f;
    return h;
}

Tensor ResidualBlock::backward(const Tensor& gy, const Ctx& ctx, bool accum_params) {
    const Tensor& pre = ctx.saved.at(0);
    Tensor g = Tensor::like(gy);
    for (size_t i = 0; i < gy.size(); ++i)
        g.data()[i] = pre.data()[i] > 0.0f ? gy.data()[i] : 0.0f;

    Tensor gskip = g;
    Tensor gb = std::move(g);
    for (size_t i = body.size(); i-- > 0;)
        gb = body[i]->backward(gb, ctx.children[i], accum_params);
    if (projection)
        gskip = projection->backward(gskip, ctx.children[body.size()], accum_params);
    gb.add_(gskip);
    return gb;
}

void ResidualBlock::collect_params(std::vector<Param*>& out) {
    for (auto& l : body) l->collect_params(out);
    if (projection) projection->collect_params(out);
}

void ResidualBlock::collect_buffers(std::vector<Tensor*>& out) {
    for (auto& l : body) l->collect_buffers(out);
    if (projection) projection->collect_buffers(out);
}

void ResidualBlock::set_train(bool train) {
    for (auto& l : body) l->set_train(train);
    if (projection) projection->set_train(train);
}

void ResidualBlock::init(Rng& rng) {
    for (auto& l : body) l->init(rng);
    if (projection) projection->init(rng);
}

} // namespace sifa
