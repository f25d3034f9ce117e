#include <cmath>

#include "dcgmm/outlier.hpp"

namespace dcgmm {

Tensor4 OutlierStats::LayerStats::var_map() const {
    Tensor4 out = m2_map;
    if (count > 0)
        for (double& v : out.values()) v /= static_cast<double>(count);
    return out;
}

void OutlierStats::init_from(const Model& model) {
    layers.clear();
    const auto shapes = model.shapes(1);
    for (size_t i = 0; i < model.arch.layers.size(); ++i) {
        if (kind_of(model.arch.layers[i]) != LayerKind::gmm) continue;
        const Shape4& out = shapes[i + 1];
        LayerStats s;
        s.mean_map = Tensor4(Shape4{1, out.h, out.w, 1});
        s.m2_map = Tensor4(Shape4{1, out.h, out.w, 1});
        layers.push_back(std::move(s));
    }
}

void OutlierStats::accumulate(const std::vector<Tensor4>& loglik_maps) {
    if (loglik_maps.size() != layers.size())
        throw ShapeError("outlier stats: layer count mismatch");
    for (size_t l = 0; l < layers.size(); ++l) {
        LayerStats& s = layers[l];
        const Tensor4& map = loglik_maps[l];
        const Shape4 d = map.dims();
        if (d.h != s.mean_map.dims().h || d.w != s.mean_map.dims().w)
            throw ShapeError("outlier stats: position grid mismatch");
        for (int64_t n = 0; n < d.n; ++n) {
            const int64_t cnt = s.count + n + 1;
            for (int64_t y = 0; y < d.h; ++y)
                for (int64_t x = 0; x < d.w; ++x) {
                    const double v = map(n, y, x, 0);
                    double& mean = s.mean_map(0, y, x, 0);
                    double& m2 = s.m2_map(0, y, x, 0);
                    const double delta = v - mean;
                    mean += delta / static_cast<double>(cnt);
                    m2 += delta * (v - mean);
                }
        }
        s.count += d.n;
    }
}

OutlierStats collect_outlier_stats(const Model& model, const Tensor4& dataset, int64_t batch) {
    const Shape4 d = dataset.dims();
    if (d.n < 1) throw ConfigError("collect_outlier_stats: empty dataset");
    OutlierStats stats;
    stats.init_from(model);
    const int64_t stride = d.h * d.w * d.c;
    for (int64_t start = 0; start < d.n; start += batch) {
        const int64_t count = std::min(batch, d.n - start);
        Tensor4 chunk(Shape4{count, d.h, d.w, d.c});
        std::copy(dataset.data() + start * stride, dataset.data() + (start + count) * stride,
                  chunk.data());
        EstimationTrace trace = forward_estimation(model, chunk);
        stats.accumulate(trace.logliks);
    }
    return stats;
}

InlierVerdict is_inlier(const Model& model, const OutlierStats& stats, const Tensor4& samples,
                        double c) {
    if (stats.layers.size() != model.gmms.size())
        throw ShapeError("is_inlier: stats do not match model (layer count)");
    EstimationTrace trace = forward_estimation(model, samples);
    InlierVerdict verdict;
    verdict.masks.reserve(stats.layers.size());
    for (size_t l = 0; l < stats.layers.size(); ++l) {
        const Tensor4& map = trace.logliks[l];
        const OutlierStats::LayerStats& s = stats.layers[l];
        const Shape4 d = map.dims();
        if (d.h != s.mean_map.dims().h || d.w != s.mean_map.dims().w)
            throw ShapeError("is_inlier: stats position grid does not match model layer");
        Tensor4 mask(d.n > 0 ? Shape4{d.n, d.h, d.w, 1} : Shape4{0, d.h, d.w, 1});
        const Tensor4 var = s.var_map();
        for (int64_t n = 0; n < d.n; ++n)
            for (int64_t y = 0; y < d.h; ++y)
                for (int64_t x = 0; x < d.w; ++x) {
                    const double threshold =
                        s.mean_map(0, y, x, 0) - c * std::sqrt(var(0, y, x, 0));
                    mask(n, y, x, 0) = map(n, y, x, 0) >= threshold ? 1.0 : 0.0;
                }
        verdict.masks.push_back(std::move(mask));
    }
    const int64_t top_slot = model.gmm_slot(model.top_gmm_layer());
    const Tensor4& top_mask = verdict.masks[static_cast<size_t>(top_slot)];
    const Shape4 td = top_mask.dims();
    verdict.global.resize(static_cast<size_t>(td.n), true);
    for (int64_t n = 0; n < td.n; ++n)
        for (int64_t y = 0; y < td.h; ++y)
            for (int64_t x = 0; x < td.w; ++x)
                if (top_mask(n, y, x, 0) == 0.0) verdict.global[static_cast<size_t>(n)] = false;
    return verdict;
}

}  // namespace dcgmm
