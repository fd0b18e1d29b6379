#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <memory>
#include <string>

#include "sifa/errors.hpp"

namespace sifa {

// Dense NCHW float tensor. Rank is fixed at 4; lower-rank data uses size-1
// leading axes. Allocation is uninitialized unless zeroed explicitly -- the
// kernels always overwrite their outputs.
class Tensor {
public:
    Tensor() : dims_{0, 0, 0, 0}, size_(0) {}

    Tensor(int n, int c, int h, int w) : dims_{n, c, h, w} {
        size_ = static_cast<size_t>(n) * c * h * w;
        data_ = std::make_unique<float[]>(size_);
    }

    static Tensor zeros(int n, int c, int h, int w) {
        Tensor t(n, c, h, w);
        std::fill(t.data(), t.data() + t.size(), 0.0f);
        return t;
    }

    static Tensor like(const Tensor& other) {
        return Tensor(other.n(), other.c(), other.h(), other.w());
    }

    static Tensor zeros_like(const Tensor& other) {
        return zeros(other.n(), other.c(), other.h(), other.w());
    }

    Tensor(const Tensor& other) : dims_(other.dims_), size_(other.size_) {
        if (size_ > 0) {
            data_ = std::make_unique<float[]>(size_);
            std::memcpy(data_.get(), other.data_.get(), size_ * sizeof(float));
        }
    }

    Tensor& operator=(const Tensor& other) {
        if (this != &other) {
            dims_ = other.dims_;
            size_ = other.size_;
            data_.reset();
            if (size_ > 0) {
                data_ = std::make_unique<float[]>(size_);
                std::memcpy(data_.get(), other.data_.get(), size_ * sizeof(float));
            }
        }
        return *this;
    }

    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;

    int n() const { return dims_[0]; }
    int c() const { return dims_[1]; }
    int h() const { return dims_[2]; }
    int w() const { return dims_[3]; }
    size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    float* data() { return data_.get(); }
    const float* data() const { return data_.get(); }

    float& at(int n, int c, int h, int w) {
        return data_[((static_cast<size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
    }
    float at(int n, int c, int h, int w) const {
        return data_[((static_cast<size_t>(n) * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
    }

    bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

    std::string shape_str() const {
        return "[" + std::to_string(dims_[0]) + "," + std::to_string(dims_[1]) + "," +
               std::to_string(dims_[2]) + "," + std::to_string(dims_[3]) + "]";
    }

    void fill(float v) { std::fill(data(), data() + size(), v); }

    void add_(const Tensor& o) {
        if (!same_shape(o)) throw ShapeError("add_: shape mismatch " + shape_str() + " vs " + o.shape_str());
        for (size_t i = 0; i < size_; ++i) data_[i] += o.data_[i];
    }

    void scale_(float s) {
        for (size_t i = 0; i < size_; ++i) data_[i] *= s;
    }

private:
    std::array<int, 4> dims_;
    size_t size_ = 0;
    std::unique_ptr<float[]> data_;
};

// FNV-1a over the raw bytes; used by the parameter-isolation tests.
inline uint64_t byte_checksum(const float* p, size_t count) {
    uint64_t h = 1469598103934665603ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (size_t i = 0; i < count * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace sifa
