#include "dcgmm/model.hpp"

#include "dcgmm/rng.hpp"

namespace dcgmm {

int64_t Model::gmm_slot(int64_t layer) const {
    int64_t slot = -1;
    for (int64_t l = 1; l <= num_layers(); ++l) {
        if (kind_of(arch.layers[static_cast<size_t>(l - 1)]) == LayerKind::gmm) ++slot;
        if (l == layer)
            return kind_of(arch.layers[static_cast<size_t>(l - 1)]) == LayerKind::gmm ? slot : -1;
    }
    return -1;
}

int64_t Model::top_gmm_layer() const {
    for (int64_t l = num_layers(); l >= 1; --l)
        if (kind_of(arch.layers[static_cast<size_t>(l - 1)]) == LayerKind::gmm) return l;
    throw ConfigError("architecture has no GMM layer");
}

int64_t Model::classifier_layer() const {
    for (int64_t l = 1; l <= num_layers(); ++l)
        if (kind_of(arch.layers[static_cast<size_t>(l - 1)]) == LayerKind::classifier) return l;
    return -1;
}

Model init_model(const ArchitectureConfig& arch, uint64_t seed) {
    validate_architecture(arch);
    Model model;
    model.arch = arch;
    Rng rng(seed);
    const auto shapes = propagate_shapes(arch, 1);
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const Shape4& in = shapes[i];
        if (kind_of(arch.layers[i]) == LayerKind::gmm) {
            const int64_t K = std::get<GmmSpec>(arch.layers[i]).K;
            const int64_t D = in.c;
            GmmParams g;
            g.K = K;
            g.pi_logits = Eigen::VectorXd::Zero(K);  // softmax gives 1/K
            g.centroids.resize(K, D);
            for (int64_t k = 0; k < K; ++k)
                for (int64_t d = 0; d < D; ++d) g.centroids(k, d) = rng.uniform(-0.01, 0.01);
            g.precisions = MatrixRM::Ones(K, D);
            model.gmms.push_back(std::move(g));
        } else if (kind_of(arch.layers[i]) == LayerKind::classifier) {
            const int64_t M = std::get<ClassifierSpec>(arch.layers[i]).M;
            const int64_t D = in.h * in.w * in.c;
            ClassifierParams c;
            c.weights.resize(D, M);
            for (int64_t d = 0; d < D; ++d)
                for (int64_t m = 0; m < M; ++m) c.weights(d, m) = rng.uniform(-0.05, 0.05);
            c.bias = Eigen::VectorXd::Zero(M);
            model.classifier = std::move(c);
        }
    }
    model.rng_state = rng.state();
    return model;
}

EstimationTrace forward_estimation(const Model& model, const Tensor4& input) {
    const Shape4 in = input.dims();
    if (in.h != model.arch.input.h || in.w != model.arch.input.w || in.c != model.arch.input.c)
        throw ShapeError("forward: input dims " + to_string(in) + " do not match architecture input " +
                         to_string(model.arch.input));
    EstimationTrace trace;
    trace.activities.reserve(model.arch.layers.size() + 1);
    trace.activities.push_back(input);
    for (size_t i = 0; i < model.arch.layers.size(); ++i) {
        const Tensor4& below = trace.activities.back();
        const LayerSpec& spec = model.arch.layers[i];
        switch (kind_of(spec)) {
            case LayerKind::folding:
                trace.activities.push_back(fold_forward(below, std::get<FoldingParams>(spec)));
                break;
            case LayerKind::pooling:
                trace.activities.push_back(pool_forward(below, std::get<PoolingParams>(spec)));
                break;
            case LayerKind::gmm: {
                const int64_t slot = static_cast<int64_t>(trace.logliks.size());
                GmmForward f = gmm_forward(below, model.gmms[static_cast<size_t>(slot)]);
                trace.activities.push_back(std::move(f.activities));
                trace.logliks.push_back(std::move(f.loglik_map));
                break;
            }
            case LayerKind::classifier: {
                // Logits are exposed through classifier_forward; the trace
                // stores them tensor-shaped so dims line up end to end.
                const MatrixRM logits =
                    classifier_forward(below, *model.classifier);
                Tensor4 t(Shape4{in.n, 1, 1, logits.cols()});
                for (int64_t r = 0; r < logits.rows(); ++r)
                    for (int64_t m = 0; m < logits.cols(); ++m) t(r, 0, 0, m) = logits(r, m);
                trace.activities.push_back(std::move(t));
                break;
            }
        }
    }
    return trace;
}

std::vector<double> score_top_loglik(const Model& model, const Tensor4& data, int64_t batch) {
    const Shape4 d = data.dims();
    std::vector<double> scores;
    scores.reserve(static_cast<size_t>(d.n));
    const int64_t top = model.top_gmm_layer();
    const int64_t slot = model.gmm_slot(top);
    for (int64_t start = 0; start < d.n; start += batch) {
        const int64_t count = std::min(batch, d.n - start);
        Tensor4 chunk(Shape4{count, d.h, d.w, d.c});
        std::copy(data.data() + start * d.h * d.w * d.c,
                  data.data() + (start + count) * d.h * d.w * d.c, chunk.data());
        EstimationTrace trace = forward_estimation(model, chunk);
        const Tensor4& map = trace.logliks[static_cast<size_t>(slot)];
        const Shape4 md = map.dims();
        for (int64_t i = 0; i < count; ++i) {
            double total = 0.0;
            for (int64_t y = 0; y < md.h; ++y)
                for (int64_t x = 0; x < md.w; ++x) total += map(i, y, x, 0);
            scores.push_back(total / static_cast<double>(md.h * md.w));
        }
    }
    return scores;
}

Tensor4 select_rows(const Tensor4& data, const std::vector<int64_t>& rows) {
    const Shape4 d = data.dims();
    const int64_t stride = d.h * d.w * d.c;
    Tensor4 out(Shape4{static_cast<int64_t>(rows.size()), d.h, d.w, d.c});
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy(data.data() + rows[i] * stride, data.data() + (rows[i] + 1) * stride,
                  out.data() + static_cast<int64_t>(i) * stride);
    return out;
}

}  // namespace dcgmm
