#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "dcgmm/rng.hpp"
#include "dcgmm/training.hpp"

namespace dcgmm {

void TrainingConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (lr_gmm <= 0.0 || lr_classifier <= 0.0) throw ConfigError("learning rates must be > 0");
    if (phase1_fraction < 0.0 || phase1_fraction >= 1.0)
        throw ConfigError("phase-1 fraction must lie in [0, 1)");
    if (sigma_inf <= 0.0 || anneal_decay <= 0.0 || anneal_decay > 1.0)
        throw ConfigError("invalid annealing parameters");
    if (p_min <= 0.0) throw ConfigError("p_min must be > 0");
    if (threads < 1) throw ConfigError("threads must be >= 1");
}

namespace {

struct GmmBatchResult {
    GmmGrads grads;
    double loss = 0.0;
};

struct ClassifierBatchResult {
    MatrixRM d_weights;
    Eigen::VectorXd d_bias;
    double loss = 0.0;
};

struct BatchResult {
    std::vector<GmmBatchResult> gmm;                 // per GMM slot
    std::optional<ClassifierBatchResult> classifier;
    std::vector<Tensor4> logliks;                    // per GMM slot, batch maps
};

void add_grads(GmmGrads& into, const GmmGrads& from) {
    into.d_pi_logits += from.d_pi_logits;
    into.d_centroids += from.d_centroids;
    into.d_precisions += from.d_precisions;
}

// Forward + gradients for one contiguous sample range of the batch. The
// per-layer losses sum over samples, so chunk results add exactly.
BatchResult process_chunk(const Model& model, const Tensor4& batch, int64_t begin, int64_t count,
                          const std::vector<int>& labels, LossMode mode,
                          const std::vector<SmoothingGrid>& grids) {
    const Shape4 d = batch.dims();
    const int64_t stride = d.h * d.w * d.c;
    Tensor4 chunk(Shape4{count, d.h, d.w, d.c});
    std::copy(batch.data() + begin * stride, batch.data() + (begin + count) * stride,
              chunk.data());

    BatchResult result;
    Tensor4 current = std::move(chunk);
    int64_t slot = 0;
    for (size_t i = 0; i < model.arch.layers.size(); ++i) {
        const LayerSpec& spec = model.arch.layers[i];
        switch (kind_of(spec)) {
            case LayerKind::folding:
                current = fold_forward(current, std::get<FoldingParams>(spec));
                break;
            case LayerKind::pooling:
                current = pool_forward(current, std::get<PoolingParams>(spec));
                break;
            case LayerKind::gmm: {
                const GmmParams& g = model.gmms[static_cast<size_t>(slot)];
                GmmBackward back = gmm_grad(current, g, mode, grids[static_cast<size_t>(slot)]);
                GmmForward fwd = gmm_forward(current, g);
                result.gmm.push_back({std::move(back.grads), back.loss});
                result.logliks.push_back(std::move(fwd.loglik_map));
                current = std::move(fwd.activities);
                ++slot;
                break;
            }
            case LayerKind::classifier: {
                std::vector<int> chunk_labels(labels.begin() + begin,
                                              labels.begin() + begin + count);
                ClassifierBackward back =
                    classifier_loss_and_grad(current, chunk_labels, *model.classifier);
                result.classifier = ClassifierBatchResult{std::move(back.d_weights),
                                                          std::move(back.d_bias), back.loss};
                break;
            }
        }
    }
    return result;
}

BatchResult process_batch(const Model& model, const Tensor4& batch, const std::vector<int>& labels,
                          LossMode mode, const std::vector<SmoothingGrid>& grids, int threads) {
    const int64_t n = batch.dims().n;
    const int64_t shards = std::min<int64_t>(threads, n);
    std::vector<BatchResult> partial(static_cast<size_t>(shards));
    if (shards <= 1) {
        partial[0] = process_chunk(model, batch, 0, n, labels, mode, grids);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<size_t>(shards));
        const int64_t per = (n + shards - 1) / shards;
        for (int64_t s = 0; s < shards; ++s) {
            const int64_t begin = s * per;
            const int64_t count = std::min(per, n - begin);
            if (count <= 0) break;
            pool.emplace_back([&, s, begin, count] {
                try {
                    partial[static_cast<size_t>(s)] =
                        process_chunk(model, batch, begin, count, labels, mode, grids);
                } catch (...) {
                    errors[static_cast<size_t>(s)] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (const auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Ordered reduction keeps results identical for a fixed shard count.
    BatchResult total = std::move(partial[0]);
    for (size_t s = 1; s < partial.size(); ++s) {
        BatchResult& p = partial[s];
        if (p.gmm.empty() && !p.classifier) continue;
        for (size_t g = 0; g < total.gmm.size(); ++g) {
            add_grads(total.gmm[g].grads, p.gmm[g].grads);
            total.gmm[g].loss += p.gmm[g].loss;
        }
        if (total.classifier) {
            const double w_prev = static_cast<double>(s) / static_cast<double>(s + 1);
            const double w_new = 1.0 - w_prev;
            total.classifier->d_weights =
                w_prev * total.classifier->d_weights + w_new * p.classifier->d_weights;
            total.classifier->d_bias =
                w_prev * total.classifier->d_bias + w_new * p.classifier->d_bias;
            total.classifier->loss = w_prev * total.classifier->loss + w_new * p.classifier->loss;
        }
        for (size_t g = 0; g < total.logliks.size(); ++g) {
            Tensor4& dst = total.logliks[g];
            Tensor4& src = p.logliks[g];
            Tensor4 merged(Shape4{dst.dims().n + src.dims().n, dst.dims().h, dst.dims().w, 1});
            std::copy(dst.values().begin(), dst.values().end(), merged.values().begin());
            std::copy(src.values().begin(), src.values().end(),
                      merged.values().begin() + dst.size());
            dst = std::move(merged);
        }
    }
    return total;
}

}  // namespace

TrainResult train(Model& model, const Tensor4& dataset, const std::vector<int>& labels,
                  const TrainingConfig& cfg) {
    cfg.validate();
    const Shape4 d = dataset.dims();
    if (d.n < 1) throw ConfigError("train: empty dataset");
    if (d.h != model.arch.input.h || d.w != model.arch.input.w || d.c != model.arch.input.c)
        throw ConfigError("train: dataset dims " + to_string(d) +
                          " do not match architecture input " + to_string(model.arch.input));
    if (!all_finite(dataset)) throw ConfigError("train: dataset contains non-finite values");
    const bool has_classifier = model.classifier.has_value();
    if (has_classifier && static_cast<int64_t>(labels.size()) != d.n)
        throw ConfigError("train: classifier requires one label per sample");

    // Layer indices (1-based) of the GMM slots, for history and diagnostics.
    std::vector<int64_t> gmm_layer_index;
    for (int64_t l = 1; l <= model.num_layers(); ++l)
        if (kind_of(model.arch.layers[static_cast<size_t>(l - 1)]) == LayerKind::gmm)
            gmm_layer_index.push_back(l);
    const size_t n_gmm = model.gmms.size();

    std::vector<double> sigma(n_gmm);
    std::vector<SmoothingGrid> grids(n_gmm);
    for (size_t g = 0; g < n_gmm; ++g) {
        sigma[g] = cfg.sigma0 > 0.0 ? cfg.sigma0 : SmoothingGrid::initial_sigma(model.gmms[g].K);
        sigma[g] = std::max(sigma[g], cfg.sigma_inf);
        grids[g] = SmoothingGrid(model.gmms[g].K, sigma[g]);
    }

    const int64_t phase1_epochs =
        static_cast<int64_t>(std::floor(cfg.phase1_fraction * static_cast<double>(cfg.epochs)));
    int64_t stats_epochs = 0;
    if (cfg.stats_fraction > 0.0)
        stats_epochs = std::max<int64_t>(
            1, std::llround(cfg.stats_fraction * static_cast<double>(cfg.epochs)));
    const int64_t stats_start = cfg.epochs - stats_epochs;

    Rng rng(cfg.seed);
    std::vector<int64_t> order(static_cast<size_t>(d.n));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.stats.init_from(model);
    std::vector<double> prev_loss(n_gmm, 0.0);
    const int64_t stride = d.h * d.w * d.c;

    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const bool phase2 = epoch >= phase1_epochs;
        const bool collect_stats = epoch >= stats_start;
        rng.shuffle(order);

        std::vector<double> epoch_loss(n_gmm, 0.0);
        for (int64_t start = 0; start < d.n; start += cfg.batch_size) {
            const int64_t count = std::min(cfg.batch_size, d.n - start);
            Tensor4 batch(Shape4{count, d.h, d.w, d.c});
            std::vector<int> batch_labels(static_cast<size_t>(count), 0);
            for (int64_t i = 0; i < count; ++i) {
                const int64_t row = order[static_cast<size_t>(start + i)];
                std::copy(dataset.data() + row * stride, dataset.data() + (row + 1) * stride,
                          batch.data() + i * stride);
                if (has_classifier) batch_labels[static_cast<size_t>(i)] =
                    labels[static_cast<size_t>(row)];
            }

            BatchResult res =
                process_batch(model, batch, batch_labels, cfg.loss_mode, grids, cfg.threads);

            // The layer loss sums over samples, so the step is scaled by the
            // batch size to keep the effective rate batch-size independent.
            const double step = cfg.lr_gmm / static_cast<double>(count);
            for (size_t g = 0; g < n_gmm; ++g) {
                if (!std::isfinite(res.gmm[g].loss))
                    throw DivergenceError("non-finite loss in GMM layer " +
                                          std::to_string(gmm_layer_index[g]) + " at epoch " +
                                          std::to_string(epoch));
                GmmParams& p = model.gmms[g];
                p.centroids += step * res.gmm[g].grads.d_centroids;
                if (phase2) {
                    p.precisions += step * res.gmm[g].grads.d_precisions;
                    p.precisions = p.precisions.cwiseMax(cfg.p_min);
                    p.pi_logits += step * res.gmm[g].grads.d_pi_logits;
                }
                epoch_loss[g] += res.gmm[g].loss;
            }
            if (has_classifier && res.classifier) {
                if (!std::isfinite(res.classifier->loss))
                    throw DivergenceError("non-finite classifier loss at epoch " +
                                          std::to_string(epoch));
                model.classifier->weights -= cfg.lr_classifier * res.classifier->d_weights;
                model.classifier->bias -= cfg.lr_classifier * res.classifier->d_bias;
            }
            if (collect_stats) result.stats.accumulate(res.logliks);
        }

        for (size_t g = 0; g < n_gmm; ++g) {
            const double mean_loss = epoch_loss[g] / static_cast<double>(d.n);
            result.history.rows.push_back(
                {epoch, gmm_layer_index[g], mean_loss, sigma[g]});
            if (epoch > 0) {
                const double improvement = (mean_loss - prev_loss[g]) /
                                           std::max(std::abs(prev_loss[g]), 1e-12);
                if (improvement < cfg.stagnation_threshold && sigma[g] > cfg.sigma_inf) {
                    sigma[g] = std::max(sigma[g] * cfg.anneal_decay, cfg.sigma_inf);
                    grids[g] = SmoothingGrid(model.gmms[g].K, sigma[g]);
                }
            }
            prev_loss[g] = mean_loss;
        }
        result.history.epoch_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    model.rng_state = rng.state();
    return result;
}

}  // namespace dcgmm
