#include "dcgmm/tensor.hpp"

#include <cmath>

namespace dcgmm {

std::string to_string(const Shape4& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.h) + "," +
           std::to_string(s.w) + "," + std::to_string(s.c) + ")";
}

std::vector<double> slice_channel_vector(const Tensor4& t, int64_t n, int64_t h, int64_t w) {
    const double* p = t.data() + t.flat(n, h, w, 0);
    return std::vector<double>(p, p + t.dims().c);
}

void write_channel_vector(Tensor4& t, int64_t n, int64_t h, int64_t w,
                          const std::vector<double>& v) {
    assert(static_cast<int64_t>(v.size()) == t.dims().c);
    double* p = t.data() + t.flat(n, h, w, 0);
    std::copy(v.begin(), v.end(), p);
}

std::vector<double> reduce_mean_over_positions(const Tensor4& t) {
    const Shape4& d = t.dims();
    if (d.h * d.w == 0)
        throw ShapeError("reduce_mean_over_positions: empty spatial extent in " + to_string(d));
    std::vector<double> out(static_cast<size_t>(d.n * d.c), 0.0);
    for (int64_t n = 0; n < d.n; ++n) {
        for (int64_t h = 0; h < d.h; ++h)
            for (int64_t w = 0; w < d.w; ++w) {
                const double* p = t.data() + t.flat(n, h, w, 0);
                for (int64_t c = 0; c < d.c; ++c) out[static_cast<size_t>(n * d.c + c)] += p[c];
            }
        const double inv = 1.0 / static_cast<double>(d.h * d.w);
        for (int64_t c = 0; c < d.c; ++c) out[static_cast<size_t>(n * d.c + c)] *= inv;
    }
    return out;
}

bool all_finite(const Tensor4& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace dcgmm
