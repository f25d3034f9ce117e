#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dcgmm/rng.hpp"
#include "dcgmm/tensor.hpp"

namespace dcgmm {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Precisions are clipped from below after every update so each component
// stays a proper positive-definite Gaussian under SGD.
inline constexpr double kPrecisionFloor = 1e-3;

// ---------------------------------------------------------------------------
// Folding: the im2col half of a convolution. Every sliding window of the
// input is dumped into the channel dimension of one output position.
// ---------------------------------------------------------------------------

struct FoldingParams {
    int64_t f_y = 1;
    int64_t f_x = 1;
    int64_t delta_y = 1;
    int64_t delta_x = 1;
};

// Output dims for an input of the given dims; validates the divisibility
// rule (H_in - f_y) % delta_y == 0 and throws ConfigError on violation.
Shape4 fold_output_dims(const Shape4& input, const FoldingParams& p);

Tensor4 fold_forward(const Tensor4& input, const FoldingParams& p);

// Sampling-mode inverse: input positions that receive several window
// contributions are averaged over all of them.
Tensor4 fold_backward_control(const Tensor4& control, const FoldingParams& p,
                              const Shape4& input_dims);

// Adjoint of fold_forward (contributions summed, not averaged); used to pull
// likelihood gradients back through the layer during sharpening.
Tensor4 fold_backward_grad(const Tensor4& grad_out, const FoldingParams& p,
                           const Shape4& input_dims);

// ---------------------------------------------------------------------------
// Pooling: standard max-pooling; sampling mode is nearest-neighbor
// up-sampling. Kernel must equal stride (windows tile the input).
// ---------------------------------------------------------------------------

struct PoolingParams {
    int64_t k_y = 2;
    int64_t k_x = 2;
    int64_t delta_y = 2;
    int64_t delta_x = 2;
};

Shape4 pool_output_dims(const Shape4& input, const PoolingParams& p);

Tensor4 pool_forward(const Tensor4& input, const PoolingParams& p);

// As pool_forward but also records the flat input offset of each window
// maximum so gradients can be routed back to it.
std::pair<Tensor4, std::vector<int64_t>> pool_forward_with_argmax(const Tensor4& input,
                                                                  const PoolingParams& p);

Tensor4 pool_backward_control(const Tensor4& control, const PoolingParams& p,
                              const Shape4& input_dims);

// Max-subgradient: each output gradient entry is routed to the input
// position that won the window.
Tensor4 pool_backward_grad(const Tensor4& grad_out, const std::vector<int64_t>& argmax,
                           const Shape4& input_dims);

// ---------------------------------------------------------------------------
// GMM layer: K diagonal-covariance components shared across all spatial
// positions. All likelihood arithmetic is carried out in log space.
// ---------------------------------------------------------------------------

struct GmmParams {
    int64_t K = 0;
    Eigen::VectorXd pi_logits;  // K; weights are softmax(pi_logits)
    MatrixRM centroids;         // K x D
    MatrixRM precisions;        // K x D, diagonal precision entries (1/variance)

    int64_t dim() const { return centroids.cols(); }
    Eigen::VectorXd weights() const;  // softmax(pi_logits)
};

struct GmmGrads {
    Eigen::VectorXd d_pi_logits;
    MatrixRM d_centroids;
    MatrixRM d_precisions;
};

enum class LossMode { full, max_component };

// Gaussian neighborhood used to smooth the max-component loss during
// annealing. Components live on a ceil(sqrt(K)) grid in row-major order;
// row r holds the normalized weights applied when component r is the
// per-position best. sigma at or below 0.01 degenerates to a one-hot row,
// i.e. the pure max-component loss.
class SmoothingGrid {
public:
    SmoothingGrid() = default;
    SmoothingGrid(int64_t K, double sigma);

    double sigma() const { return sigma_; }
    int64_t components() const { return weights_.rows(); }
    const MatrixRM& weights() const { return weights_; }

    static double initial_sigma(int64_t K);  // 2 * (sqrt(K) / 6)

private:
    double sigma_ = 0.0;
    MatrixRM weights_;
};

struct GmmForward {
    Tensor4 activities;   // (n,h,w,K) responsibilities, rows sum to 1
    Tensor4 loglik_map;   // (n,h,w,1) log sum_k pi_k N_k
};

GmmForward gmm_forward(const Tensor4& input, const GmmParams& g);

// Per-layer log-likelihood: spatial mean over (h,w) of the per-position sum
// over samples. full evaluates the exact inner log-sum; max_component
// replaces it by the smoothing-grid average around the best component.
double gmm_loss(const Tensor4& input, const GmmParams& g, LossMode mode,
                const SmoothingGrid& smoothing);

struct GmmBackward {
    GmmGrads grads;
    Tensor4 d_input;
    double loss = 0.0;
};

// Analytic gradients of gmm_loss w.r.t. all parameter groups and the input.
GmmBackward gmm_grad(const Tensor4& input, const GmmParams& g, LossMode mode,
                     const SmoothingGrid& smoothing);

// Training-step evaluation sharing one pass over the component densities:
// parameter gradients and loss for the requested mode plus the estimation
// outputs (activities, log-likelihood map). No input gradient.
struct GmmTrainEval {
    GmmGrads grads;
    double loss = 0.0;
    Tensor4 activities;
    Tensor4 loglik_map;
};

GmmTrainEval gmm_train_eval(const Tensor4& input, const GmmParams& g, LossMode mode,
                            const SmoothingGrid& smoothing);

// Full-mode loss and its input gradient only; the sharpening inner loop.
std::pair<double, Tensor4> gmm_loglik_and_input_grad(const Tensor4& input, const GmmParams& g);

struct SampleOptions {
    int64_t top_s = 1;
    bool stochastic = false;
};

// Per position: restrict the selection weights to their S largest entries,
// renormalize, draw a component, then emit either mu (mean mode) or a draw
// from N(mu, Sigma). Without a selector the mixing weights pi are used and
// the output batch/posiitons are taken from `count` and `positions`.
Tensor4 gmm_sample_control(const std::optional<Tensor4>& selector, const GmmParams& g,
                           int64_t count, std::pair<int64_t, int64_t> positions,
                           const SampleOptions& opt, Rng& rng);

// ---------------------------------------------------------------------------
// Classifier layer: affine logits over the flattened input, trained with
// softmax cross-entropy; sampling mode approximately inverts the transform.
// ---------------------------------------------------------------------------

struct ClassifierParams {
    MatrixRM weights;        // D x M
    Eigen::VectorXd bias;    // M
};

MatrixRM classifier_forward(const Tensor4& input, const ClassifierParams& c);

// onehot (N x M) -> control of dims below_dims (N x H x W x C with HWC == D).
// Inverts logits = x*W + b as x ~ onehot*W^T - b, with b zero-extended (or
// truncated) to length D when M != D.
Tensor4 classifier_invert(const MatrixRM& onehot, const ClassifierParams& c,
                          const Shape4& below_dims);

struct ClassifierBackward {
    double loss = 0.0;
    MatrixRM d_weights;
    Eigen::VectorXd d_bias;
    Tensor4 d_input;
};

ClassifierBackward classifier_loss_and_grad(const Tensor4& input,
                                            const std::vector<int>& labels,
                                            const ClassifierParams& c);

MatrixRM onehot_rows(const std::vector<int>& labels, int64_t classes);

}  // namespace dcgmm
