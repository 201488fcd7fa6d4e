#ifndef MOVSEM_TASKS_HPP
#define MOVSEM_TASKS_HPP

#include "movsem/measures.hpp"
#include "movsem/moco.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace movsem::eval {

// ---------------------------------------------------------------------------
// Retrieval benchmark (odd/even halves + filler database)
// ---------------------------------------------------------------------------

/// Split into odd-position points (1st, 3rd, ...) and even-position points
/// (2nd, 4th, ...); requires at least 4 points.
std::pair<data::RawTrajectory, data::RawTrajectory> odd_even_split(
    const data::RawTrajectory& traj);

struct RetrievalBench {
    std::vector<data::RawTrajectory> queries;  // odd halves
    std::vector<data::RawTrajectory> database; // even halves + fillers
    std::vector<std::size_t> ground_truth;     // per query, index into database
};

/// Sample `n_queries` sources, split each odd/even, and fill the database to
/// `database_size` with other trajectories from the pool. Deterministic
/// under seed; filler entries never reuse a query source.
RetrievalBench build_retrieval_bench(const std::vector<data::RawTrajectory>& pool,
                                     std::size_t n_queries, std::size_t database_size,
                                     std::uint64_t seed);

/// Mean 1-based rank of each query's ground truth when the database is
/// ordered by descending cosine similarity; ties resolve by database index.
/// Embeddings are row-major (n x dim).
double mean_rank(std::span<const float> query_embeddings,
                 std::span<const float> database_embeddings, std::size_t dim,
                 const std::vector<std::size_t>& ground_truth,
                 std::vector<std::size_t>* ranks_out = nullptr);

/// Embed a bench with the given encoder and report its mean rank.
double bench_mean_rank(enc::EncoderNet<float>& net, const pipe::FeaturePipeline& pipeline,
                       const RetrievalBench& bench, enc::EncoderMode mode, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Robustness sweeps
// ---------------------------------------------------------------------------

enum class Perturbation { kDownsample, kDistort };

struct SweepRow {
    double rate = 0.0;
    double rank = 0.0;
};

/// Perturb both the queries and the whole database at each rate and
/// re-evaluate the mean rank. Rate 0 reproduces the unperturbed bench.
std::vector<SweepRow> robustness_sweep(enc::EncoderNet<float>& net,
                                       const pipe::FeaturePipeline& pipeline,
                                       const RetrievalBench& bench, Perturbation kind,
                                       const std::vector<double>& rates, double distort_delta_m,
                                       std::uint64_t seed, enc::EncoderMode mode,
                                       unsigned threads = 1);

// ---------------------------------------------------------------------------
// Ranking metrics
// ---------------------------------------------------------------------------

/// |pred top-k  intersect  gt top-k| / k.
double hr_at_k(const std::vector<std::size_t>& pred_ranking,
               const std::vector<std::size_t>& gt_ranking, std::size_t k);

/// |pred top-20 intersect gt top-5| / 5.
double r5_at_20(const std::vector<std::size_t>& pred_ranking,
                const std::vector<std::size_t>& gt_ranking);

// ---------------------------------------------------------------------------
// Heuristic-measure approximation (fine-tuning)
// ---------------------------------------------------------------------------

/// Two affine layers with a ReLU between; pair distance is the Euclidean
/// distance between head outputs.
struct ApproxHead {
    num::Parameter<float> w1, b1, w2, b2;

    ApproxHead() = default;
    ApproxHead(int d_h, int d_out)
        : w1("head.w1", {d_h, d_h}),
          b1("head.b1", {d_h}),
          w2("head.w2", {d_h, d_out}),
          b2("head.b2", {d_out}) {}

    void init(std::uint64_t seed) {
        Rng rng(seed_stream(seed, 0xad42));
        w1.fill_xavier(rng);
        w2.fill_xavier(rng);
    }
    std::vector<num::Parameter<float>*> params() { return {&w1, &b1, &w2, &b2}; }

    template <typename T>
    num::Var<T> apply(num::Tape<T>& tape, num::Var<T> z);
};

template <>
inline num::Var<float> ApproxHead::apply(num::Tape<float>& tape, num::Var<float> z) {
    num::Var<float> h = num::relu(num::add_rowvec(num::matmul(z, tape.param(w1)), tape.param(b1)));
    return num::add_rowvec(num::matmul(h, tape.param(w2)), tape.param(b2));
}

struct FinetuneConfig {
    std::size_t epochs = 5;
    double head_lr = 1e-3;
    double encoder_lr_scale = 0.1; // encoder trains at this fraction of head_lr
    int d_out = 128;
    std::size_t positives_topk = 20; // partner sampled from the anchor's true top-20
    std::size_t random_partners = 3;
    std::uint64_t seed = 42;
    unsigned threads = 1;
    enc::EncoderMode mode = enc::EncoderMode::kHierarchical;
};

struct FinetuneMetrics {
    double hr5 = 0.0;
    double hr20 = 0.0;
    double r5_20 = 0.0;
    double final_train_mse = 0.0;
    double gt_mean = 0.0; // training-set normalization constant
};

/// Fine-tune encoder (at a reduced rate) plus head to regress the measure's
/// pairwise distances, normalized by the training-set mean; evaluates
/// HR@5/HR@20/R5@20 over the test partition (each query ranks all other test
/// entries).
FinetuneMetrics finetune_approx(enc::EncoderNet<float>& net, ApproxHead& head,
                                const pipe::FeaturePipeline& pipeline,
                                const std::vector<data::RawTrajectory>& pool,
                                const std::vector<double>& gt_matrix,
                                const std::vector<std::size_t>& train_idx,
                                const std::vector<std::size_t>& test_idx,
                                const FinetuneConfig& cfg);

/// HR metrics for an arbitrary predicted-distance matrix against the ground
/// truth (both n x n over the same pool); used for oracle checks and for
/// baseline embeddings.
FinetuneMetrics ranking_metrics(const std::vector<double>& pred_matrix,
                                const std::vector<double>& gt_matrix,
                                const std::vector<std::size_t>& test_idx, std::size_t pool_size);

// ---------------------------------------------------------------------------
// Efficiency benchmark
// ---------------------------------------------------------------------------

struct EfficiencyConfig {
    std::size_t batch = 128;
    std::size_t batches = 100; // timed batches per mode
    std::size_t warmup = 2;
    std::size_t traj_len = 200;
    std::vector<std::size_t> scaling_workloads = {256, 512};
    std::uint64_t seed = 7;
    unsigned threads = 1;
};

struct EfficiencyReport {
    std::uint64_t flops_hier = 0;
    std::uint64_t flops_flat = 0;
    double latency_ms_hier = 0.0; // median per-batch wall clock
    double latency_ms_flat = 0.0;
    double throughput_hier = 0.0; // samples / second
    double throughput_flat = 0.0;
    std::vector<std::pair<std::size_t, double>> scaling; // workload -> seconds
};

EfficiencyReport bench_efficiency(enc::EncoderNet<float>& net,
                                  const pipe::FeaturePipeline& pipeline,
                                  const std::vector<data::RawTrajectory>& workload_pool,
                                  const EfficiencyConfig& cfg);

// ---------------------------------------------------------------------------
// Ablation drivers
// ---------------------------------------------------------------------------

enum class AblationVariant { kFull, kNoMse, kNoHse, kNoCga };

std::string ablation_name(AblationVariant v);

struct AblationSetup {
    feat::FeatureMode feature_mode = feat::FeatureMode::kFull;
    enc::EncoderMode encoder_mode = enc::EncoderMode::kHierarchical;
    moco::AugmentKind augment = moco::AugmentKind::kCga;
};

/// The single dimension each variant changes relative to the full model.
AblationSetup ablation_setup(AblationVariant v);

struct AblationRow {
    AblationVariant variant = AblationVariant::kFull;
    std::uint64_t seed = 0;
    double rank = 0.0;
};

/// Pretrain + evaluate each variant under each seed with otherwise identical
/// configuration.
std::vector<AblationRow> ablate(const std::vector<data::RawTrajectory>& train,
                                const std::vector<data::RawTrajectory>& val,
                                const std::vector<data::RawTrajectory>& bench_pool,
                                const pipe::FeaturePipeline& base_pipeline,
                                const enc::EncoderConfig& encoder_cfg,
                                const moco::MocoConfig& moco_cfg,
                                std::size_t bench_queries, std::size_t bench_db,
                                const std::vector<AblationVariant>& variants,
                                const std::vector<std::uint64_t>& seeds);

} // namespace movsem::eval

#endif // MOVSEM_TASKS_HPP
