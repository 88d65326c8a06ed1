#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fixy/errors.hpp"

namespace fixy {

/// Feature-map shape: height, width, channels.
struct Shape3 {
    int h = 0;
    int w = 0;
    int c = 0;

    std::size_t size() const { return static_cast<std::size_t>(h) * w * c; }
    bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& s);

/// Dense HWC tensor (channel innermost), the layout used by every simulator
/// and by the vector files.
template <typename T>
struct Tensor {
    Shape3 shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape3 s, T fill = T{}) : shape(s), data(s.size(), fill) {}

    T& at(int y, int x, int c) { return data[index(y, x, c)]; }
    const T& at(int y, int x, int c) const { return data[index(y, x, c)]; }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * shape.w + x) * shape.c + c;
    }
    bool operator==(const Tensor&) const = default;
};

using Activations = Tensor<std::int32_t>;
using RealMap = Tensor<float>;

/// Load an 8-bit image from a binary PGM (P5) or PPM (P6) file.
Activations read_pnm(const std::string& path);
/// Load a raw 8-bit HWC plane of the given shape.
Activations read_raw_u8(const std::string& path, Shape3 shape);
/// Write an activation tensor as raw bytes (row-major, channel innermost).
/// Signed values are stored two's-complement.
void write_raw_u8(const std::string& path, const Activations& t);
std::string to_bytes(const Activations& t);

RealMap to_real(const Activations& t, double scale = 1.0);

} // namespace fixy
