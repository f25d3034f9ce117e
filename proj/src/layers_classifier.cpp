#include <cmath>

#include "dcgmm/layers.hpp"

namespace dcgmm {

namespace {

using Eigen::VectorXd;
using ConstMap = Eigen::Map<const MatrixRM>;
using MutMap = Eigen::Map<MatrixRM>;

void check_flat_dim(const Tensor4& input, const ClassifierParams& c) {
    const Shape4 in = input.dims();
    if (in.h * in.w * in.c != c.weights.rows())
        throw ShapeError("classifier: flattened input size " +
                         std::to_string(in.h * in.w * in.c) + " != weight rows " +
                         std::to_string(c.weights.rows()));
}

}  // namespace

MatrixRM classifier_forward(const Tensor4& input, const ClassifierParams& c) {
    check_flat_dim(input, c);
    const Shape4 in = input.dims();
    ConstMap X(input.data(), in.n, in.h * in.w * in.c);
    MatrixRM logits = X * c.weights;
    logits.rowwise() += c.bias.transpose();
    return logits;
}

Tensor4 classifier_invert(const MatrixRM& onehot, const ClassifierParams& c,
                          const Shape4& below_dims) {
    const int64_t D = c.weights.rows();
    const int64_t M = c.weights.cols();
    if (onehot.cols() != M)
        throw ShapeError("classifier_invert: one-hot columns " + std::to_string(onehot.cols()) +
                         " != class count " + std::to_string(M));
    if (below_dims.h * below_dims.w * below_dims.c != D || below_dims.n != onehot.rows())
        throw ShapeError("classifier_invert: target dims " + to_string(below_dims) +
                         " incompatible with weight rows " + std::to_string(D));
    for (Eigen::Index i = 0; i < onehot.rows(); ++i) {
        int ones = 0;
        for (Eigen::Index j = 0; j < onehot.cols(); ++j) {
            const double v = onehot(i, j);
            if (v == 1.0)
                ++ones;
            else if (v != 0.0)
                throw InvalidLabelError("classifier_invert: row " + std::to_string(i) +
                                        " is not one-hot");
        }
        if (ones != 1)
            throw InvalidLabelError("classifier_invert: row " + std::to_string(i) +
                                    " is not one-hot");
    }
    VectorXd bias_d = VectorXd::Zero(D);
    bias_d.head(std::min(D, M)) = c.bias.head(std::min(D, M));
    Tensor4 out(below_dims);
    MutMap T(out.data(), below_dims.n, D);
    T.noalias() = onehot * c.weights.transpose();
    T.rowwise() -= bias_d.transpose();
    return out;
}

ClassifierBackward classifier_loss_and_grad(const Tensor4& input, const std::vector<int>& labels,
                                            const ClassifierParams& c) {
    check_flat_dim(input, c);
    const Shape4 in = input.dims();
    const int64_t N = in.n;
    const int64_t M = c.weights.cols();
    if (static_cast<int64_t>(labels.size()) != N)
        throw ShapeError("classifier: label count " + std::to_string(labels.size()) +
                         " != batch size " + std::to_string(N));
    for (int v : labels)
        if (v < 0 || v >= M)
            throw InvalidLabelError("label " + std::to_string(v) + " outside [0, " +
                                    std::to_string(M) + ")");

    MatrixRM logits = classifier_forward(input, c);
    MatrixRM probs(N, M);
    double loss = 0.0;
    for (int64_t i = 0; i < N; ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        probs.row(i) = (logits.row(i).array() - lse).exp();
        loss -= logits(i, labels[static_cast<size_t>(i)]) - lse;
    }
    loss /= static_cast<double>(N);

    MatrixRM dlogits = probs;
    for (int64_t i = 0; i < N; ++i) dlogits(i, labels[static_cast<size_t>(i)]) -= 1.0;
    dlogits /= static_cast<double>(N);

    ClassifierBackward out;
    out.loss = loss;
    ConstMap X(input.data(), N, in.h * in.w * in.c);
    out.d_weights = X.transpose() * dlogits;
    out.d_bias = dlogits.colwise().sum();
    out.d_input = Tensor4(in);
    MutMap D(out.d_input.data(), N, in.h * in.w * in.c);
    D.noalias() = dlogits * c.weights.transpose();
    return out;
}

MatrixRM onehot_rows(const std::vector<int>& labels, int64_t classes) {
    MatrixRM out(static_cast<int64_t>(labels.size()), classes);
    out.setZero();
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes)
            throw InvalidLabelError("label " + std::to_string(labels[i]) + " outside [0, " +
                                    std::to_string(classes) + ")");
        out(static_cast<int64_t>(i), labels[i]) = 1.0;
    }
    return out;
}

}  // namespace dcgmm
