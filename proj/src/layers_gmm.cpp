#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcgmm/layers.hpp"

namespace dcgmm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixRM>;
using MutMap = Eigen::Map<MatrixRM>;

// Per-component log-weights log softmax(pi_logits), computed stably.
VectorXd log_weights(const GmmParams& g) {
    const double m = g.pi_logits.maxCoeff();
    VectorXd shifted = g.pi_logits.array() - m;
    const double lse = std::log(shifted.array().exp().sum());
    return shifted.array() - lse;
}

void check_input(const Tensor4& input, const GmmParams& g) {
    if (input.dims().c != g.dim())
        throw ShapeError("gmm layer: input channels " + std::to_string(input.dims().c) +
                         " != component dimension " + std::to_string(g.dim()));
}

// Scores s_ik = log pi_k + log N_k(x_i) for all P = n*h*w positions.
MatrixRM score_matrix(ConstMap X, const GmmParams& g) {
    const int64_t K = g.K;
    // log N_k(x) = const_k - 0.5 * sum_d lambda_kd (x_d - mu_kd)^2,
    // expanded so the data-dependent parts are two matrix products.
    VectorXd logdet(K);
    VectorXd quad(K);
    for (int64_t k = 0; k < K; ++k) {
        logdet(k) = 0.5 * g.precisions.row(k).array().log().sum();
        quad(k) = (g.precisions.row(k).array() * g.centroids.row(k).array().square()).sum();
    }
    const MatrixRM lambda_mu = g.precisions.cwiseProduct(g.centroids);  // K x D
    MatrixRM S = X * lambda_mu.transpose();                             // P x K
    S.noalias() -= 0.5 * (X.cwiseProduct(X) * g.precisions.transpose());
    const double dconst = -0.5 * static_cast<double>(g.dim()) * kLog2Pi;
    const VectorXd bias = log_weights(g) + logdet - 0.5 * quad +
                          VectorXd::Constant(K, dconst);
    S.rowwise() += bias.transpose();
    return S;
}

// Row-wise log-sum-exp.
VectorXd row_lse(const MatrixRM& S) {
    VectorXd out(S.rows());
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        const double m = S.row(i).maxCoeff();
        out(i) = m + std::log((S.row(i).array() - m).exp().sum());
    }
    return out;
}

// Weight rows for the smoothed max-component loss: row i of the result is
// the smoothing-grid row of the per-position best component.
MatrixRM smoothing_rows(const MatrixRM& S, const SmoothingGrid& grid) {
    MatrixRM R(S.rows(), S.cols());
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        Eigen::Index best;
        S.row(i).maxCoeff(&best);
        R.row(i) = grid.weights().row(best);
    }
    return R;
}

}  // namespace

VectorXd GmmParams::weights() const {
    VectorXd lw = pi_logits.array() - pi_logits.maxCoeff();
    VectorXd w = lw.array().exp();
    return w / w.sum();
}

SmoothingGrid::SmoothingGrid(int64_t K, double sigma) : sigma_(sigma) {
    const int64_t side = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(K))));
    weights_.resize(K, K);
    weights_.setZero();
    const bool point = sigma <= 0.01;
    for (int64_t r = 0; r < K; ++r) {
        if (point) {
            weights_(r, r) = 1.0;
            continue;
        }
        double total = 0.0;
        for (int64_t k = 0; k < K; ++k) {
            const double dy = static_cast<double>(k / side - r / side);
            const double dx = static_cast<double>(k % side - r % side);
            const double w = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            weights_(r, k) = w;
            total += w;
        }
        weights_.row(r) /= total;
    }
}

double SmoothingGrid::initial_sigma(int64_t K) {
    return 2.0 * (std::sqrt(static_cast<double>(K)) / 6.0);
}

GmmForward gmm_forward(const Tensor4& input, const GmmParams& g) {
    check_input(input, g);
    const Shape4 in = input.dims();
    const int64_t P = in.n * in.h * in.w;
    ConstMap X(input.data(), P, in.c);
    const MatrixRM S = score_matrix(X, g);
    const VectorXd lse = row_lse(S);

    GmmForward out;
    out.activities = Tensor4(Shape4{in.n, in.h, in.w, g.K});
    out.loglik_map = Tensor4(Shape4{in.n, in.h, in.w, 1});
    MutMap A(out.activities.data(), P, g.K);
    A = (S.colwise() - lse).array().exp();
    std::copy(lse.data(), lse.data() + P, out.loglik_map.data());
    return out;
}

namespace {

double loss_from_scores(const MatrixRM& S, LossMode mode, const SmoothingGrid& smoothing,
                        double inv_hw) {
    if (mode == LossMode::full) return row_lse(S).sum() * inv_hw;
    double total = 0.0;
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        Eigen::Index best;
        S.row(i).maxCoeff(&best);
        total += smoothing.weights().row(best).dot(S.row(i));
    }
    return total * inv_hw;
}

}  // namespace

double gmm_loss(const Tensor4& input, const GmmParams& g, LossMode mode,
                const SmoothingGrid& smoothing) {
    check_input(input, g);
    const Shape4 in = input.dims();
    ConstMap X(input.data(), in.n * in.h * in.w, in.c);
    const MatrixRM S = score_matrix(X, g);
    return loss_from_scores(S, mode, smoothing, 1.0 / static_cast<double>(in.h * in.w));
}

GmmBackward gmm_grad(const Tensor4& input, const GmmParams& g, LossMode mode,
                     const SmoothingGrid& smoothing) {
    check_input(input, g);
    const Shape4 in = input.dims();
    const int64_t P = in.n * in.h * in.w;
    const double inv_hw = 1.0 / static_cast<double>(in.h * in.w);
    ConstMap X(input.data(), P, in.c);
    const MatrixRM S = score_matrix(X, g);

    // R_ik = dl_i/ds_ik: responsibilities for the full loss, fixed smoothing
    // rows around the per-position argmax for the annealed max loss. Both
    // variants have unit row sums, so the formulas below are shared.
    MatrixRM R;
    if (mode == LossMode::full) {
        const VectorXd lse = row_lse(S);
        R = (S.colwise() - lse).array().exp();
    } else {
        R = smoothing_rows(S, smoothing);
    }

    GmmBackward out;
    out.loss = loss_from_scores(S, mode, smoothing, inv_hw);

    const VectorXd r = R.colwise().sum();               // K, per-component mass
    const MatrixRM RtX = R.transpose() * X;             // K x D
    const MatrixRM RtX2 = R.transpose() * X.cwiseProduct(X);

    out.grads.d_centroids =
        inv_hw * g.precisions.cwiseProduct(RtX - r.asDiagonal() * g.centroids);

    MatrixRM moment = RtX2 - 2.0 * g.centroids.cwiseProduct(RtX) +
                      r.asDiagonal() * g.centroids.cwiseProduct(g.centroids);
    out.grads.d_precisions =
        0.5 * inv_hw * (r.replicate(1, g.dim()).cwiseQuotient(g.precisions) - moment);

    const VectorXd pi = g.weights();
    out.grads.d_pi_logits = inv_hw * (r - static_cast<double>(P) * pi);

    out.d_input = Tensor4(in);
    MutMap D(out.d_input.data(), P, in.c);
    const MatrixRM lambda_mu = g.precisions.cwiseProduct(g.centroids);
    D.noalias() = R * lambda_mu;
    D -= X.cwiseProduct(R * g.precisions);
    D *= inv_hw;
    return out;
}

namespace {

// Selection weights for one position: entries clamped at zero and restricted
// to the S largest raw values. Rows with no positive mass but some signal
// fall back to an argmax point mass; all-zero or non-finite rows have no
// usable signal and are rejected.
std::vector<double> selection_weights(const double* row, int64_t K, int64_t top_s) {
    std::vector<double> w(static_cast<size_t>(K), 0.0);
    bool any_nonzero = false;
    for (int64_t k = 0; k < K; ++k) {
        if (!std::isfinite(row[k])) throw InvalidControlError("selector row contains non-finite values");
        if (row[k] != 0.0) any_nonzero = true;
    }
    if (!any_nonzero) throw InvalidControlError("selector row is all-zero");

    std::vector<int64_t> order(static_cast<size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int64_t a, int64_t b) { return row[a] > row[b]; });
    const int64_t s = std::min<int64_t>(top_s, K);
    double total = 0.0;
    for (int64_t i = 0; i < s; ++i) {
        const double v = std::max(row[order[static_cast<size_t>(i)]], 0.0);
        w[static_cast<size_t>(order[static_cast<size_t>(i)])] = v;
        total += v;
    }
    if (total <= 0.0) w[static_cast<size_t>(order[0])] = 1.0;
    return w;
}

}  // namespace

Tensor4 gmm_sample_control(const std::optional<Tensor4>& selector, const GmmParams& g,
                           int64_t count, std::pair<int64_t, int64_t> positions,
                           const SampleOptions& opt, Rng& rng) {
    if (opt.top_s < 1 || opt.top_s > g.K)
        throw ConfigError("top-S width " + std::to_string(opt.top_s) + " outside [1, K=" +
                          std::to_string(g.K) + "]");
    int64_t n = count, h = positions.first, w = positions.second;
    if (selector) {
        const Shape4 sd = selector->dims();
        if (sd.c != g.K)
            throw ShapeError("selector channels " + std::to_string(sd.c) + " != K " +
                             std::to_string(g.K));
        n = sd.n;
        h = sd.h;
        w = sd.w;
    }
    const VectorXd pi = g.weights();
    Tensor4 out(Shape4{n, h, w, g.dim()});
    for (int64_t b = 0; b < n; ++b)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double* row = selector ? selector->data() + selector->flat(b, y, x, 0)
                                             : pi.data();
                const auto weights = selection_weights(row, g.K, opt.top_s);
                const int64_t z = static_cast<int64_t>(rng.multinomial(weights));
                double* dst = out.data() + out.flat(b, y, x, 0);
                for (int64_t d = 0; d < g.dim(); ++d) {
                    double v = g.centroids(z, d);
                    if (opt.stochastic) v += rng.normal() / std::sqrt(g.precisions(z, d));
                    dst[d] = v;
                }
            }
    return out;
}

}  // namespace dcgmm
