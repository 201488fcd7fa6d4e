#ifndef MOVSEM_MOCO_HPP
#define MOVSEM_MOCO_HPP

#include "movsem/encoder.hpp"
#include "movsem/pipeline.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace movsem::moco {

// ---------------------------------------------------------------------------
// Negative queue: fixed-size ring of unit vectors.
// ---------------------------------------------------------------------------

class MomentumQueue {
  public:
    /// Initialized with random unit vectors so the loss is well-defined from
    /// the first step.
    MomentumQueue(std::size_t size, std::size_t dim, std::uint64_t seed);

    /// Overwrite the oldest entries with `count` unit-norm keys (row-major).
    void enqueue(std::span<const float> keys, std::size_t count);

    std::size_t size() const { return size_; }
    std::size_t dim() const { return dim_; }
    std::size_t cursor() const { return cursor_; }
    std::span<const float> data() const { return {values_.data(), values_.size()}; }
    std::span<const float> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

  private:
    std::size_t size_;
    std::size_t dim_;
    std::size_t cursor_ = 0;
    std::vector<float> values_;
};

// ---------------------------------------------------------------------------
// InfoNCE
// ---------------------------------------------------------------------------

/// Contrastive loss of a query embedding against one positive key and the
/// queued negatives, all compared by cosine similarity at temperature tau:
///   L = -sim(q,k)/tau + log(exp(sim(q,k)/tau) + sum_n exp(sim(q,n)/tau))
/// computed max-shifted. z_query stays on the tape (1 x d); the key and the
/// queue are constants. Zero-norm inputs are an error.
template <typename T>
num::Var<T> info_nce(num::Tape<T>& tape, num::Var<T> z_query, std::span<const T> z_key,
                     std::span<const T> queue, T temperature) {
    if (!(temperature > T(0))) throw ConfigError("info_nce: temperature must be positive");
    const std::size_t d = static_cast<std::size_t>(z_query.cols());
    if (z_key.size() != d || queue.size() % d != 0) {
        throw ShapeError("info_nce: key/queue dimension mismatch");
    }
    const std::size_t negatives = queue.size() / d;

    // normalize the constant side here; the query side through the tape
    std::vector<T> bank((negatives + 1) * d);
    T key_norm2 = 0;
    for (std::size_t j = 0; j < d; ++j) key_norm2 += z_key[j] * z_key[j];
    if (!(key_norm2 > T(1e-24))) throw NumericError("info_nce: zero-norm key");
    T inv = T(1) / std::sqrt(key_norm2);
    for (std::size_t j = 0; j < d; ++j) bank[j] = z_key[j] * inv;
    for (std::size_t n = 0; n < negatives; ++n) {
        T norm2 = 0;
        for (std::size_t j = 0; j < d; ++j) norm2 += queue[n * d + j] * queue[n * d + j];
        if (!(norm2 > T(1e-24))) throw NumericError("info_nce: zero-norm negative");
        T qinv = T(1) / std::sqrt(norm2);
        for (std::size_t j = 0; j < d; ++j) bank[(n + 1) * d + j] = queue[n * d + j] * qinv;
    }

    num::Var<T> q_unit = num::l2_normalize(z_query);
    num::Var<T> logits =
        num::scale(num::matmul_nt(q_unit, tape.constant(static_cast<int>(negatives + 1),
                                                        static_cast<int>(d), bank)),
                   T(1) / temperature);
    return num::sub(num::logsumexp_row(logits), num::pick(logits, 0, 0));
}

// ---------------------------------------------------------------------------
// Momentum (EMA) key-encoder update
// ---------------------------------------------------------------------------

/// key <- m * key + (1 - m) * query, element-wise over matching parameters.
void momentum_update(std::vector<num::Parameter<float>*> key_params,
                     std::vector<num::Parameter<float>*> query_params, double momentum);

// ---------------------------------------------------------------------------
// Pretraining loop
// ---------------------------------------------------------------------------

enum class AugmentKind { kCga, kRandomMask };

struct MocoConfig {
    std::size_t queue_size = 2048;
    double momentum = 0.999;
    double temperature = 0.05;
    double learning_rate = 1e-4;
    std::size_t batch = 128;
    std::size_t epochs = 20;
    std::size_t patience = 3;
    double view_drop = 0.3; // rho_a
    std::uint64_t seed = 42;
    unsigned threads = 1;
    AugmentKind augment = AugmentKind::kCga;
    enc::EncoderMode mode = enc::EncoderMode::kHierarchical;

    void validate() const;
};

struct LogRow {
    std::size_t epoch = 0;
    long step = 0; // -1 marks the per-epoch validation row
    double loss = 0.0;
    double lr = 0.0;
};

struct PretrainResult {
    std::vector<LogRow> log;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0; // 0-based index into val_loss
    std::size_t epochs_run = 0;
};

/// MoCo pretraining: two augmented views per trajectory, query encoder
/// trained by Adam on the InfoNCE loss, key encoder tracking by EMA, keys
/// enqueued after every step. Early-stops on validation loss. On return the
/// query net holds the best-validation parameters. Deterministic for a fixed
/// thread count (and fully so with threads <= 1).
PretrainResult pretrain(enc::EncoderNet<float>& query,
                        const std::vector<data::RawTrajectory>& train,
                        const std::vector<data::RawTrajectory>& val,
                        const pipe::FeaturePipeline& pipeline, const MocoConfig& cfg);

/// Forward-only embedding of one trajectory (no gradients).
std::vector<float> embed(enc::EncoderNet<float>& net, const pipe::FeaturePipeline& pipeline,
                         const data::RawTrajectory& traj, enc::EncoderMode mode);

/// Forward-only embeddings, row-major n x d_h.
std::vector<float> embed_all(enc::EncoderNet<float>& net, const pipe::FeaturePipeline& pipeline,
                             const std::vector<data::RawTrajectory>& trajs, enc::EncoderMode mode,
                             unsigned threads = 1);

} // namespace movsem::moco

#endif // MOVSEM_MOCO_HPP
