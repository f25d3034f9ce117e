#include <algorithm>
#include <limits>

#include "dcgmm/layers.hpp"

namespace dcgmm {

namespace {

void check_window(int64_t extent, int64_t filter, int64_t stride, const char* axis,
                  const char* what) {
    if (filter < 1 || stride < 1)
        throw ConfigError(std::string(what) + ": filter/stride must be >= 1 on " + axis);
    if (extent < filter)
        throw ConfigError(std::string(what) + ": input extent " + std::to_string(extent) +
                          " smaller than filter " + std::to_string(filter) + " on " + axis);
    if ((extent - filter) % stride != 0)
        throw ConfigError(std::string(what) + ": (" + std::to_string(extent) + " - " +
                          std::to_string(filter) + ") not divisible by stride " +
                          std::to_string(stride) + " on " + axis);
}

}  // namespace

Shape4 fold_output_dims(const Shape4& input, const FoldingParams& p) {
    check_window(input.h, p.f_y, p.delta_y, "y", "folding");
    check_window(input.w, p.f_x, p.delta_x, "x", "folding");
    return Shape4{input.n, 1 + (input.h - p.f_y) / p.delta_y, 1 + (input.w - p.f_x) / p.delta_x,
                  input.c * p.f_x * p.f_y};
}

Tensor4 fold_forward(const Tensor4& input, const FoldingParams& p) {
    const Shape4 in = input.dims();
    const Shape4 out = fold_output_dims(in, p);
    Tensor4 result(out);
    const int64_t cin = in.c;
    for (int64_t n = 0; n < out.n; ++n)
        for (int64_t h = 0; h < out.h; ++h)
            for (int64_t w = 0; w < out.w; ++w) {
                double* dst = result.data() + result.flat(n, h, w, 0);
                for (int64_t dy = 0; dy < p.f_y; ++dy)
                    for (int64_t dx = 0; dx < p.f_x; ++dx) {
                        const double* src =
                            input.data() + input.flat(n, h * p.delta_y + dy, w * p.delta_x + dx, 0);
                        std::copy(src, src + cin, dst + (dy * p.f_x + dx) * cin);
                    }
            }
    return result;
}

namespace {

// Number of sliding windows covering each (y,x) input position.
std::vector<double> coverage_counts(const Shape4& in, int64_t fy, int64_t fx, int64_t dy,
                                    int64_t dx, int64_t out_h, int64_t out_w) {
    std::vector<double> counts(static_cast<size_t>(in.h * in.w), 0.0);
    for (int64_t h = 0; h < out_h; ++h)
        for (int64_t w = 0; w < out_w; ++w)
            for (int64_t yy = 0; yy < fy; ++yy)
                for (int64_t xx = 0; xx < fx; ++xx)
                    counts[static_cast<size_t>((h * dy + yy) * in.w + (w * dx + xx))] += 1.0;
    return counts;
}

Tensor4 fold_backward_impl(const Tensor4& control, const FoldingParams& p,
                           const Shape4& input_dims, bool average) {
    const Shape4 expected = fold_output_dims(input_dims, p);
    if (control.dims() != expected)
        throw ShapeError("fold backward: control dims " + to_string(control.dims()) +
                         " do not match fold output " + to_string(expected));
    Tensor4 result(input_dims, 0.0);
    const int64_t cin = input_dims.c;
    for (int64_t n = 0; n < expected.n; ++n)
        for (int64_t h = 0; h < expected.h; ++h)
            for (int64_t w = 0; w < expected.w; ++w) {
                const double* src = control.data() + control.flat(n, h, w, 0);
                for (int64_t dy = 0; dy < p.f_y; ++dy)
                    for (int64_t dx = 0; dx < p.f_x; ++dx) {
                        double* dst = result.data() +
                                      result.flat(n, h * p.delta_y + dy, w * p.delta_x + dx, 0);
                        const double* s = src + (dy * p.f_x + dx) * cin;
                        for (int64_t c = 0; c < cin; ++c) dst[c] += s[c];
                    }
            }
    if (average) {
        const auto counts = coverage_counts(input_dims, p.f_y, p.f_x, p.delta_y, p.delta_x,
                                            expected.h, expected.w);
        for (int64_t n = 0; n < input_dims.n; ++n)
            for (int64_t y = 0; y < input_dims.h; ++y)
                for (int64_t x = 0; x < input_dims.w; ++x) {
                    const double cnt = counts[static_cast<size_t>(y * input_dims.w + x)];
                    if (cnt <= 1.0) continue;
                    double* dst = result.data() + result.flat(n, y, x, 0);
                    for (int64_t c = 0; c < cin; ++c) dst[c] /= cnt;
                }
    }
    return result;
}

}  // namespace

Tensor4 fold_backward_control(const Tensor4& control, const FoldingParams& p,
                              const Shape4& input_dims) {
    return fold_backward_impl(control, p, input_dims, /*average=*/true);
}

Tensor4 fold_backward_grad(const Tensor4& grad_out, const FoldingParams& p,
                           const Shape4& input_dims) {
    return fold_backward_impl(grad_out, p, input_dims, /*average=*/false);
}

Shape4 pool_output_dims(const Shape4& input, const PoolingParams& p) {
    if (p.k_y != p.delta_y || p.k_x != p.delta_x)
        throw ConfigError("pooling: kernel must equal stride, got kernel (" +
                          std::to_string(p.k_y) + "," + std::to_string(p.k_x) + ") stride (" +
                          std::to_string(p.delta_y) + "," + std::to_string(p.delta_x) + ")");
    check_window(input.h, p.k_y, p.delta_y, "y", "pooling");
    check_window(input.w, p.k_x, p.delta_x, "x", "pooling");
    return Shape4{input.n, 1 + (input.h - p.k_y) / p.delta_y, 1 + (input.w - p.k_x) / p.delta_x,
                  input.c};
}

std::pair<Tensor4, std::vector<int64_t>> pool_forward_with_argmax(const Tensor4& input,
                                                                  const PoolingParams& p) {
    const Shape4 in = input.dims();
    const Shape4 out = pool_output_dims(in, p);
    Tensor4 result(out);
    std::vector<int64_t> argmax(static_cast<size_t>(out.size()));
    for (int64_t n = 0; n < out.n; ++n)
        for (int64_t h = 0; h < out.h; ++h)
            for (int64_t w = 0; w < out.w; ++w)
                for (int64_t c = 0; c < out.c; ++c) {
                    double best = -std::numeric_limits<double>::infinity();
                    int64_t best_at = -1;
                    for (int64_t yy = 0; yy < p.k_y; ++yy)
                        for (int64_t xx = 0; xx < p.k_x; ++xx) {
                            const int64_t idx =
                                input.flat(n, h * p.delta_y + yy, w * p.delta_x + xx, c);
                            const double v = input.data()[idx];
                            if (v > best) {
                                best = v;
                                best_at = idx;
                            }
                        }
                    const int64_t o = result.flat(n, h, w, c);
                    result.data()[o] = best;
                    argmax[static_cast<size_t>(o)] = best_at;
                }
    return {std::move(result), std::move(argmax)};
}

Tensor4 pool_forward(const Tensor4& input, const PoolingParams& p) {
    return pool_forward_with_argmax(input, p).first;
}

Tensor4 pool_backward_control(const Tensor4& control, const PoolingParams& p,
                              const Shape4& input_dims) {
    const Shape4 expected = pool_output_dims(input_dims, p);
    if (control.dims() != expected)
        throw ShapeError("pool backward: control dims " + to_string(control.dims()) +
                         " do not match pool output " + to_string(expected));
    Tensor4 result(input_dims);
    for (int64_t n = 0; n < input_dims.n; ++n)
        for (int64_t y = 0; y < input_dims.h; ++y)
            for (int64_t x = 0; x < input_dims.w; ++x) {
                const double* src = control.data() + control.flat(n, y / p.delta_y, x / p.delta_x, 0);
                double* dst = result.data() + result.flat(n, y, x, 0);
                std::copy(src, src + input_dims.c, dst);
            }
    return result;
}

Tensor4 pool_backward_grad(const Tensor4& grad_out, const std::vector<int64_t>& argmax,
                           const Shape4& input_dims) {
    Tensor4 result(input_dims, 0.0);
    if (static_cast<int64_t>(argmax.size()) != grad_out.size())
        throw ShapeError("pool_backward_grad: argmax record does not match gradient size");
    for (int64_t i = 0; i < grad_out.size(); ++i)
        result.data()[argmax[static_cast<size_t>(i)]] += grad_out.data()[i];
    return result;
}

}  // namespace dcgmm
