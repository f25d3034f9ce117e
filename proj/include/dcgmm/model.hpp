#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dcgmm/architecture.hpp"
#include "dcgmm/layers.hpp"

namespace dcgmm {

// A DCGMM instance: the architecture plus the trainable state of every GMM
// layer and the optional top classifier.
struct Model {
    ArchitectureConfig arch;
    std::vector<GmmParams> gmms;                // one entry per G layer, bottom-up
    std::optional<ClassifierParams> classifier;
    std::string rng_state;                      // training RNG echo for checkpoints

    int64_t num_layers() const { return arch.num_layers(); }

    // -1 when the 1-based layer index is not a GMM layer.
    int64_t gmm_slot(int64_t layer) const;

    // 1-based index of the topmost GMM layer; throws ConfigError if none.
    int64_t top_gmm_layer() const;

    // 1-based index of the classifier layer, or -1.
    int64_t classifier_layer() const;

    // Output dims of every layer for a batch of n samples (index 0 = input).
    std::vector<Shape4> shapes(int64_t n = 1) const { return propagate_shapes(arch, n); }
};

// Fresh model with the initialization scheme used throughout: uniform weight
// logits, centroid entries from U[-0.01,0.01], unit precisions; classifier
// weights from U[-0.05,0.05] with zero bias.
Model init_model(const ArchitectureConfig& arch, uint64_t seed);

// Bottom-up estimation pass. activities[0] is the input; activities[l] the
// output of layer l. logliks holds one (n,h,w,1) map per GMM layer.
struct EstimationTrace {
    std::vector<Tensor4> activities;
    std::vector<Tensor4> logliks;  // parallel to Model::gmms
};

EstimationTrace forward_estimation(const Model& model, const Tensor4& input);

// Per-sample log-likelihood of the topmost GMM layer, reduced over its
// spatial positions by Eq. (5)'s spatial mean. Evaluates in batches.
std::vector<double> score_top_loglik(const Model& model, const Tensor4& data,
                                     int64_t batch = 256);

// Rows of `data` whose label is in `classes`.
Tensor4 select_rows(const Tensor4& data, const std::vector<int64_t>& rows);

}  // namespace dcgmm
