#pragma once

#include <stdexcept>
#include <string>

namespace sifa {

// Bad data fed to an operation (shape mismatch, out-of-range label, ...).
struct InvalidInput : std::runtime_error {
    explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

// Rejected configuration; `field` names the offending setting.
struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(std::string field_, const std::string& msg)
        : std::runtime_error(msg), field(std::move(field_)) {}
};

// Malformed on-disk data; `offset` is the byte position where parsing failed.
struct FormatError : std::runtime_error {
    long offset;
    FormatError(long offset_, const std::string& msg)
        : std::runtime_error(msg), offset(offset_) {}
};

// Non-finite value met during training; `component` names the loss term.
struct NumericalError : std::runtime_error {
    std::string component;
    NumericalError(std::string component_, const std::string& msg)
        : std::runtime_error(msg), component(std::move(component_)) {}
};

// Inconsistent network description; `layer_index` is the first bad layer.
struct SpecError : std::runtime_error {
    int layer_index;
    SpecError(int layer_index_, const std::string& msg)
        : std::runtime_error(msg), layer_index(layer_index_) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sifa
