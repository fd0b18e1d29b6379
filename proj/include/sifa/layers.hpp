#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sifa/kernels.hpp"
#include "sifa/rng.hpp"
#include "sifa/tensor.hpp"

namespace sifa {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    void zero_grad() { grad.fill(0.0f); }
};

// Per-call activation record. Backward consumes the ctx produced by the
// matching forward, so a layer can be forwarded any number of times before
// its backwards run (each call owning its own ctx).
struct Ctx {
    std::vector<Tensor> saved;
    std::vector<unsigned char> bytes;
    std::vector<Ctx> children;
};

class Layer {
public:
    virtual ~Layer() = default;

    // ctx == nullptr runs inference-only (nothing saved).
    virtual Tensor forward(const Tensor& x, Ctx* ctx) = 0;

    // Returns grad wrt input; accumulates into param grads when accum_params.
    virtual Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) = 0;

    virtual void collect_params(std::vector<Param*>& out) { (void)out; }
    virtual void collect_buffers(std::vector<Tensor*>& out) { (void)out; }
    virtual void set_train(bool train) { (void)train; }
    virtual void init(Rng& rng) { (void)rng; }
    virtual std::string kind() const = 0;
};

enum class Norm { none, batch, instance };
enum class Act { none, relu, lrelu, tanh };

class Conv2d : public Layer {
public:
    Conv2d(std::string name, int in_c, int out_c, int k, int stride, int dilation, bool bias = true);

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;
    std::string kind() const override { return "conv"; }

    kernels::ConvGeom geom_for(int h, int w) const;

    int in_c, out_c, k, stride, dilation;
    bool has_bias;
    Param w, b;
};

class ConvTranspose2d : public Layer {
public:
    ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride, int pad);

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    void collect_params(std::vector<Param*>& out) override;
    void init(Rng& rng) override;
    std::string kind() const override { return "deconv"; }

    int in_c, out_c, k, stride, pad;
    Param w, b;
    kernels::TConvGeom geom;
};

class BatchNorm2d : public Layer {
public:
    BatchNorm2d(std::string name, int channels);

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    void collect_params(std::vector<Param*>& out) override;
    void collect_buffers(std::vector<Tensor*>& out) override;
    void set_train(bool train) override { train_ = train; }
    void init(Rng& rng) override;
    std::string kind() const override { return "batchnorm"; }

    int channels;
    Param gamma, beta;
    Tensor running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

private:
    bool train_ = true;
};

// No affine parameters, following the unpaired-translation convention.
class InstanceNorm2d : public Layer {
public:
    explicit InstanceNorm2d(int channels) : channels(channels) {}

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    std::string kind() const override { return "instancenorm"; }

    int channels;
    double eps = 1e-5;
};

class Activation : public Layer {
public:
    Activation(Act act, float slope = 0.2f) : act(act), slope(slope) {}

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    std::string kind() const override { return "act"; }

    Act act;
    float slope;
};

class MaxPool2 : public Layer {
public:
    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    std::string kind() const override { return "maxpool"; }
};

class BilinearUpsample : public Layer {
public:
    explicit BilinearUpsample(int factor) : factor(factor) {}

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    std::string kind() const override { return "upsample"; }

    int factor;
};

// conv-norm-relu-conv-norm with identity (or 1x1 projection) skip, ReLU
// after the add. Dilation > 1 gives the dilated variant.
class ResidualBlock : public Layer {
public:
    ResidualBlock(std::string name, int in_c, int out_c, int dilation, Norm norm);

    Tensor forward(const Tensor& x, Ctx* ctx) override;
    Tensor backward(const Tensor& gy, const Ctx& ctx, bool accum_params) override;
    void collect_params(std::vector<Param*>& out) override;
    void collect_buffers(std::vector<Tensor*>& out) override;
    void set_train(bool train) override;
    void init(Rng& rng) override;
    std::string kind() const override { return "residual"; }

    int in_c, out_c, dilation;
    std::vector<std::unique_ptr<Layer>> body; // conv1, norm1, relu, conv2, norm2
    std::unique_ptr<Layer> projection;        // null when in_c == out_c
};

std::unique_ptr<Layer> make_norm(Norm norm, const std::string& name, int channels);
std::unique_ptr<Layer> make_act(Act act);

} // namespace sifa
