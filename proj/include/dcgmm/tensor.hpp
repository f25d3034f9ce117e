#pragma once

#include <cassert>
#include <cstdint>
#include <string>
#include <vector>

#include "dcgmm/errors.hpp"

namespace dcgmm {

// Dimensions of a rank-4 tensor: batch, height, width, channels.
struct Shape4 {
    int64_t n = 0;
    int64_t h = 0;
    int64_t w = 0;
    int64_t c = 0;

    int64_t size() const { return n * h * w * c; }
    bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

// Dense rank-4 array of 64-bit floats, row-major with channels fastest:
// flat index of (n,h,w,c) is ((n*H + h)*W + w)*C + c. This is the single
// currency passed between layers, both for bottom-up activities and for
// top-down control signals.
class Tensor4 {
public:
    Tensor4() = default;

    Tensor4(Shape4 dims, double value = 0.0) : dims_(dims) {
        if (dims.n < 0 || dims.h < 0 || dims.w < 0 || dims.c < 0)
            throw ConfigError("Tensor4: negative dimension in " + to_string(dims));
        data_.assign(static_cast<size_t>(dims.size()), value);
    }

    static Tensor4 filled(Shape4 dims, double value) { return Tensor4(dims, value); }

    const Shape4& dims() const { return dims_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    int64_t flat(int64_t n, int64_t h, int64_t w, int64_t c) const {
        assert(n >= 0 && n < dims_.n && h >= 0 && h < dims_.h &&
               w >= 0 && w < dims_.w && c >= 0 && c < dims_.c);
        return ((n * dims_.h + h) * dims_.w + w) * dims_.c + c;
    }

    double operator()(int64_t n, int64_t h, int64_t w, int64_t c) const {
        return data_[static_cast<size_t>(flat(n, h, w, c))];
    }
    double& operator()(int64_t n, int64_t h, int64_t w, int64_t c) {
        return data_[static_cast<size_t>(flat(n, h, w, c))];
    }

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    const std::vector<double>& values() const { return data_; }
    std::vector<double>& values() { return data_; }

    bool operator==(const Tensor4&) const = default;

private:
    Shape4 dims_;
    std::vector<double> data_;
};

// The channel vector at one spatial position: the c contiguous values
// A_{n,h,w,:}. Out-of-range indices are a programming error.
std::vector<double> slice_channel_vector(const Tensor4& t, int64_t n, int64_t h, int64_t w);

void write_channel_vector(Tensor4& t, int64_t n, int64_t h, int64_t w,
                          const std::vector<double>& v);

// Arithmetic mean over the h,w axes per (n,c) pair; result indexed n*C + c.
std::vector<double> reduce_mean_over_positions(const Tensor4& t);

// True when every element is finite.
bool all_finite(const Tensor4& t);

}  // namespace dcgmm
