#pragma once

#include <cstdint>
#include <vector>

#include "dcgmm/model.hpp"
#include "dcgmm/outlier.hpp"

namespace dcgmm {

struct TrainingConfig {
    int64_t epochs = 25;
    int64_t batch_size = 100;
    double lr_gmm = 0.011;        // per-layer learning rate for GMM parameters
    double lr_classifier = 0.05;
    double phase1_fraction = 0.4; // leading fraction of epochs that adapts centroids only
    LossMode loss_mode = LossMode::max_component;
    double sigma0 = 0.0;          // 0 = per-layer default 2*sqrt(K)/6
    double sigma_inf = 0.01;
    double anneal_decay = 0.9;
    double stagnation_threshold = 0.05;  // relative improvement below which sigma decays
    double stats_fraction = 0.2;  // trailing fraction of epochs feeding outlier stats
    double p_min = kPrecisionFloor;
    uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

struct TrainingHistory {
    struct Row {
        int64_t epoch = 0;
        int64_t layer = 0;   // 1-based architecture index
        double loss = 0.0;   // epoch mean per-sample layer log-likelihood
        double sigma = 0.0;  // annealing radius in effect during the epoch
    };
    std::vector<Row> rows;
    std::vector<double> epoch_seconds;
};

struct TrainResult {
    TrainingHistory history;
    OutlierStats stats;
};

// End-to-end SGD: every GMM layer maximizes its own log-likelihood against
// its own input in the same pass (gradients do not cross layer boundaries),
// the classifier, when present, minimizes cross-entropy simultaneously.
TrainResult train(Model& model, const Tensor4& dataset, const std::vector<int>& labels,
                  const TrainingConfig& cfg);

}  // namespace dcgmm
