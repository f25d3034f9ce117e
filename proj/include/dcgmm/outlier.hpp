#pragma once

#include <vector>

#include "dcgmm/model.hpp"

namespace dcgmm {

// Per-layer, per-position running statistics of the per-sample log-likelihood
// over a reference (training) set. Welford accumulation; variances are
// population variances so duplicating the dataset leaves them unchanged.
struct OutlierStats {
    struct LayerStats {
        Tensor4 mean_map;  // (1,h,w,1)
        Tensor4 m2_map;    // (1,h,w,1) sum of squared deviations
        int64_t count = 0;

        Tensor4 var_map() const;
    };
    std::vector<LayerStats> layers;  // parallel to Model::gmms

    bool empty() const { return layers.empty(); }

    void init_from(const Model& model);
    // Folds one batch of per-position log-likelihood maps into the stats.
    void accumulate(const std::vector<Tensor4>& loglik_maps);
};

// Single pass over the dataset with a trained model.
OutlierStats collect_outlier_stats(const Model& model, const Tensor4& dataset,
                                   int64_t batch = 256);

struct InlierVerdict {
    std::vector<bool> global;     // per sample, from the topmost GMM layer
    std::vector<Tensor4> masks;   // per GMM layer: (n,h,w,1), 1.0 = inlier
};

// Eq.-style threshold test: position (h,w) of layer L is an inlier when
// loglik >= mean - c*sqrt(var). The global verdict requires every position
// of the topmost GMM layer to pass (a single condition when h = w = 1).
InlierVerdict is_inlier(const Model& model, const OutlierStats& stats, const Tensor4& samples,
                        double c);

}  // namespace dcgmm
