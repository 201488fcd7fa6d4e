#include "movsem/tasks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

namespace movsem::eval {

std::pair<data::RawTrajectory, data::RawTrajectory> odd_even_split(
    const data::RawTrajectory& traj) {
    if (traj.length() < 4) throw DataError("odd_even_split: need at least 4 points");
    data::RawTrajectory odd, even;
    odd.id = traj.id + "#a";
    even.id = traj.id + "#b";
    for (std::size_t i = 0; i < traj.length(); ++i) {
        (i % 2 == 0 ? odd : even).points.push_back(traj.points[i]);
    }
    return {std::move(odd), std::move(even)};
}

RetrievalBench build_retrieval_bench(const std::vector<data::RawTrajectory>& pool,
                                     std::size_t n_queries, std::size_t database_size,
                                     std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (pool[i].length() >= 4) eligible.push_back(i);
    }
    if (eligible.size() < n_queries) {
        throw DataError("build_retrieval_bench: pool has only " +
                        std::to_string(eligible.size()) + " eligible sources for " +
                        std::to_string(n_queries) + " queries");
    }
    if (database_size < n_queries) {
        throw DataError("build_retrieval_bench: database smaller than the query count");
    }
    Rng rng(seed_stream(seed, 0xbe9c));
    rng.shuffle(eligible);

    RetrievalBench bench;
    std::unordered_set<std::size_t> used;
    for (std::size_t q = 0; q < n_queries; ++q) {
        std::size_t src = eligible[q];
        used.insert(src);
        auto [odd, even] = odd_even_split(pool[src]);
        bench.queries.push_back(std::move(odd));
        bench.ground_truth.push_back(bench.database.size());
        bench.database.push_back(std::move(even));
    }
    // fillers: whole trajectories whose source is not a query source
    std::size_t need = database_size - n_queries;
    std::size_t cursor = n_queries;
    while (need > 0 && cursor < eligible.size()) {
        std::size_t src = eligible[cursor++];
        if (used.count(src)) continue;
        bench.database.push_back(pool[src]);
        --need;
    }
    if (need > 0) {
        throw DataError("build_retrieval_bench: pool too small to fill a database of " +
                        std::to_string(database_size));
    }
    return bench;
}

double mean_rank(std::span<const float> query_embeddings,
                 std::span<const float> database_embeddings, std::size_t dim,
                 const std::vector<std::size_t>& ground_truth,
                 std::vector<std::size_t>* ranks_out) {
    const std::size_t nq = query_embeddings.size() / dim;
    const std::size_t nd = database_embeddings.size() / dim;
    if (ground_truth.size() != nq) throw DataError("mean_rank: ground truth size mismatch");

    auto norm_of = [dim](std::span<const float> block, std::size_t i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            double v = block[i * dim + j];
            norm2 += v * v;
        }
        return std::sqrt(std::max(norm2, 1e-30));
    };
    std::vector<double> db_norm(nd);
    for (std::size_t i = 0; i < nd; ++i) db_norm[i] = norm_of(database_embeddings, i);

    double total = 0.0;
    if (ranks_out) ranks_out->assign(nq, 0);
    std::vector<double> sims(nd);
    for (std::size_t q = 0; q < nq; ++q) {
        double qn = norm_of(query_embeddings, q);
        for (std::size_t i = 0; i < nd; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                dot += static_cast<double>(query_embeddings[q * dim + j]) *
                       database_embeddings[i * dim + j];
            }
            sims[i] = dot / (qn * db_norm[i]);
        }
        std::size_t gt = ground_truth[q];
        if (gt >= nd) throw DataError("mean_rank: ground-truth index out of range");
        std::size_t rank = 1;
        for (std::size_t i = 0; i < nd; ++i) {
            if (sims[i] > sims[gt] || (sims[i] == sims[gt] && i < gt)) ++rank;
        }
        total += static_cast<double>(rank);
        if (ranks_out) (*ranks_out)[q] = rank;
    }
    return total / static_cast<double>(nq);
}

double bench_mean_rank(enc::EncoderNet<float>& net, const pipe::FeaturePipeline& pipeline,
                       const RetrievalBench& bench, enc::EncoderMode mode, unsigned threads) {
    std::vector<float> qe = moco::embed_all(net, pipeline, bench.queries, mode, threads);
    std::vector<float> de = moco::embed_all(net, pipeline, bench.database, mode, threads);
    return mean_rank(qe, de, static_cast<std::size_t>(net.config().d_h), bench.ground_truth);
}

std::vector<SweepRow> robustness_sweep(enc::EncoderNet<float>& net,
                                       const pipe::FeaturePipeline& pipeline,
                                       const RetrievalBench& bench, Perturbation kind,
                                       const std::vector<double>& rates, double distort_delta_m,
                                       std::uint64_t seed, enc::EncoderMode mode,
                                       unsigned threads) {
    std::vector<SweepRow> rows;
    for (double rate : rates) {
        RetrievalBench perturbed;
        perturbed.ground_truth = bench.ground_truth;
        auto apply = [&](const data::RawTrajectory& traj, std::uint64_t salt) {
            return kind == Perturbation::kDownsample
                       ? aug::downsample(traj, rate, seed_stream(seed, salt))
                       : aug::distort(traj, rate, distort_delta_m, seed_stream(seed, salt));
        };
        std::uint64_t salt = 0;
        for (const auto& t : bench.queries) perturbed.queries.push_back(apply(t, ++salt));
        for (const auto& t : bench.database) perturbed.database.push_back(apply(t, ++salt));
        rows.push_back({rate, bench_mean_rank(net, pipeline, perturbed, mode, threads)});
    }
    return rows;
}

double hr_at_k(const std::vector<std::size_t>& pred_ranking,
               const std::vector<std::size_t>& gt_ranking, std::size_t k) {
    if (k == 0 || k > pred_ranking.size() || k > gt_ranking.size()) {
        throw DataError("hr_at_k: k out of range");
    }
    std::unordered_set<std::size_t> gt_top(gt_ranking.begin(), gt_ranking.begin() + k);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < k; ++i) hits += gt_top.count(pred_ranking[i]);
    return static_cast<double>(hits) / static_cast<double>(k);
}

double r5_at_20(const std::vector<std::size_t>& pred_ranking,
                const std::vector<std::size_t>& gt_ranking) {
    if (pred_ranking.size() < 20 || gt_ranking.size() < 5) {
        throw DataError("r5_at_20: need >= 20 predictions and >= 5 ground-truth entries");
    }
    std::unordered_set<std::size_t> gt_top(gt_ranking.begin(), gt_ranking.begin() + 5);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < 20; ++i) hits += gt_top.count(pred_ranking[i]);
    return static_cast<double>(hits) / 5.0;
}

namespace {

// ascending-distance ranking of `candidates`, ties by index
std::vector<std::size_t> rank_by_distance(const std::vector<double>& matrix, std::size_t n,
                                          std::size_t query,
                                          const std::vector<std::size_t>& candidates) {
    std::vector<std::size_t> order = candidates;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double da = matrix[query * n + a], db = matrix[query * n + b];
        if (da != db) return da < db;
        return a < b;
    });
    return order;
}

} // namespace

FinetuneMetrics ranking_metrics(const std::vector<double>& pred_matrix,
                                const std::vector<double>& gt_matrix,
                                const std::vector<std::size_t>& test_idx, std::size_t pool_size) {
    FinetuneMetrics metrics;
    std::size_t n_queries = 0;
    for (std::size_t q : test_idx) {
        std::vector<std::size_t> candidates;
        for (std::size_t c : test_idx) {
            if (c != q) candidates.push_back(c);
        }
        if (candidates.size() < 20) continue;
        auto pred = rank_by_distance(pred_matrix, pool_size, q, candidates);
        auto gt = rank_by_distance(gt_matrix, pool_size, q, candidates);
        metrics.hr5 += hr_at_k(pred, gt, 5);
        metrics.hr20 += hr_at_k(pred, gt, 20);
        metrics.r5_20 += r5_at_20(pred, gt);
        ++n_queries;
    }
    if (n_queries == 0) throw DataError("ranking_metrics: no evaluable queries");
    metrics.hr5 /= static_cast<double>(n_queries);
    metrics.hr20 /= static_cast<double>(n_queries);
    metrics.r5_20 /= static_cast<double>(n_queries);
    return metrics;
}

FinetuneMetrics finetune_approx(enc::EncoderNet<float>& net, ApproxHead& head,
                                const pipe::FeaturePipeline& pipeline,
                                const std::vector<data::RawTrajectory>& pool,
                                const std::vector<double>& gt_matrix,
                                const std::vector<std::size_t>& train_idx,
                                const std::vector<std::size_t>& test_idx,
                                const FinetuneConfig& cfg) {
    const std::size_t n = pool.size();
    if (gt_matrix.size() != n * n) throw DataError("finetune_approx: matrix size mismatch");
    if (train_idx.size() < cfg.positives_topk + 1) {
        throw DataError("finetune_approx: training partition too small");
    }

    // normalization: mean ground-truth distance over training pairs
    double gt_sum = 0.0;
    std::size_t gt_n = 0;
    for (std::size_t a : train_idx) {
        for (std::size_t b : train_idx) {
            if (a == b) continue;
            gt_sum += gt_matrix[a * n + b];
            ++gt_n;
        }
    }
    double gt_mean = gt_n ? gt_sum / static_cast<double>(gt_n) : 0.0;
    if (gt_mean <= 0.0) gt_mean = 1.0; // degenerate all-zero target

    // per-anchor true top-k neighbor lists within the training partition
    std::unordered_map<std::size_t, std::vector<std::size_t>> topk;
    for (std::size_t a : train_idx) {
        std::vector<std::size_t> candidates;
        for (std::size_t b : train_idx) {
            if (b != a) candidates.push_back(b);
        }
        auto order = rank_by_distance(gt_matrix, n, a, candidates);
        order.resize(std::min(cfg.positives_topk, order.size()));
        topk.emplace(a, std::move(order));
    }

    std::vector<num::Parameter<float>*> enc_params = net.params();
    std::vector<num::Parameter<float>*> head_params = head.params();
    num::AdamConfig head_adam{cfg.head_lr, 0.9, 0.999, 1e-8};
    num::AdamConfig enc_adam{cfg.head_lr * cfg.encoder_lr_scale, 0.9, 0.999, 1e-8};

    double last_epoch_mse = 0.0;
    std::vector<std::size_t> anchors = train_idx;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(seed_stream(cfg.seed, 0xf17e, epoch));
        rng.shuffle(anchors);
        double epoch_loss = 0.0;
        std::size_t epoch_pairs = 0;
        for (std::size_t anchor : anchors) {
            // partners: one true near neighbor + random others
            std::vector<std::size_t> partners;
            const auto& near = topk.at(anchor);
            partners.push_back(near[rng.uniform_int(near.size())]);
            for (std::size_t r = 0; r < cfg.random_partners; ++r) {
                std::size_t pick = train_idx[rng.uniform_int(train_idx.size())];
                if (pick != anchor) partners.push_back(pick);
            }

            num::Tape<float> tape;
            feat::FeatureSequence fa = pipeline.featurize(pool[anchor]);
            num::Var<float> ha = head.apply(tape, net.encode(tape, fa, cfg.mode));
            num::Var<float> loss;
            bool first = true;
            for (std::size_t partner : partners) {
                feat::FeatureSequence fb = pipeline.featurize(pool[partner]);
                num::Var<float> hb = head.apply(tape, net.encode(tape, fb, cfg.mode));
                float target = static_cast<float>(gt_matrix[anchor * n + partner] / gt_mean);
                num::Var<float> pred = num::euclidean(ha, hb);
                num::Var<float> err =
                    num::sub(pred, tape.constant(1, 1, std::vector<float>{target}));
                num::Var<float> sq = num::square(err);
                loss = first ? sq : num::add(loss, sq);
                first = false;
            }
            loss = num::scale(loss, 1.0f / static_cast<float>(partners.size()));
            double loss_value = loss.value()[0];
            if (std::isnan(loss_value)) {
                throw NumericError("finetune_approx: NaN loss at epoch " +
                                   std::to_string(epoch + 1));
            }
            epoch_loss += loss_value;
            ++epoch_pairs;
            tape.backward(loss);
            tape.collect_param_grads();
            num::adam_step(head_params, head_adam);
            num::adam_step(enc_params, enc_adam);
        }
        last_epoch_mse = epoch_pairs ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0;
    }

    // evaluation: head-space pairwise distances over the test partition
    std::vector<std::size_t> all_eval = test_idx;
    std::vector<data::RawTrajectory> eval_trajs;
    eval_trajs.reserve(all_eval.size());
    for (std::size_t i : all_eval) eval_trajs.push_back(pool[i]);
    std::vector<float> z = moco::embed_all(net, pipeline, eval_trajs, cfg.mode, cfg.threads);
    // head forward (no grad)
    const int d_h = net.config().d_h;
    std::vector<double> pred_matrix(n * n, 0.0);
    std::vector<std::vector<float>> head_out(all_eval.size());
    for (std::size_t i = 0; i < all_eval.size(); ++i) {
        num::Tape<float> tape(false);
        num::Var<float> zi =
            tape.constant(1, d_h, std::span<const float>(z.data() + i * d_h,
                                                         static_cast<std::size_t>(d_h)));
        num::Var<float> hi = head.apply(tape, zi);
        head_out[i].assign(hi.value().begin(), hi.value().end());
    }
    for (std::size_t i = 0; i < all_eval.size(); ++i) {
        for (std::size_t j = i + 1; j < all_eval.size(); ++j) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < head_out[i].size(); ++k) {
                double d = static_cast<double>(head_out[i][k]) - head_out[j][k];
                d2 += d * d;
            }
            double dist = std::sqrt(d2);
            pred_matrix[all_eval[i] * n + all_eval[j]] = dist;
            pred_matrix[all_eval[j] * n + all_eval[i]] = dist;
        }
    }

    FinetuneMetrics metrics = ranking_metrics(pred_matrix, gt_matrix, test_idx, n);
    metrics.final_train_mse = last_epoch_mse;
    metrics.gt_mean = gt_mean;
    return metrics;
}

EfficiencyReport bench_efficiency(enc::EncoderNet<float>& net,
                                  const pipe::FeaturePipeline& pipeline,
                                  const std::vector<data::RawTrajectory>& workload_pool,
                                  const EfficiencyConfig& cfg) {
    if (workload_pool.empty()) throw DataError("bench_efficiency: empty workload");
    EfficiencyReport report;
    const auto& ecfg = net.config();
    report.flops_hier = enc::model_flops(ecfg, cfg.traj_len, enc::EncoderMode::kHierarchical);
    report.flops_flat = enc::model_flops(ecfg, cfg.traj_len, enc::EncoderMode::kFlat);

    // featurize once; timing covers the encoder forward only
    std::vector<feat::FeatureSequence> feats;
    feats.reserve(cfg.batch);
    for (std::size_t i = 0; i < cfg.batch; ++i) {
        feats.push_back(pipeline.featurize(workload_pool[i % workload_pool.size()]));
    }

    auto run_batch = [&](enc::EncoderMode mode) {
        for (const auto& f : feats) {
            num::Tape<float> tape(false);
            net.encode(tape, f, mode);
        }
    };
    auto time_mode = [&](enc::EncoderMode mode, double& latency_ms, double& throughput) {
        for (std::size_t w = 0; w < cfg.warmup; ++w) run_batch(mode);
        std::vector<double> times;
        times.reserve(cfg.batches);
        auto total_start = std::chrono::steady_clock::now();
        for (std::size_t b = 0; b < cfg.batches; ++b) {
            auto t0 = std::chrono::steady_clock::now();
            run_batch(mode);
            auto t1 = std::chrono::steady_clock::now();
            times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        auto total_end = std::chrono::steady_clock::now();
        std::sort(times.begin(), times.end());
        latency_ms = times[times.size() / 2];
        double total_s = std::chrono::duration<double>(total_end - total_start).count();
        throughput = static_cast<double>(cfg.batches * cfg.batch) / total_s;
    };
    time_mode(enc::EncoderMode::kHierarchical, report.latency_ms_hier, report.throughput_hier);
    time_mode(enc::EncoderMode::kFlat, report.latency_ms_flat, report.throughput_flat);

    // linear-scaling probe (hierarchical mode)
    for (std::size_t workload : cfg.scaling_workloads) {
        auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < workload; ++i) {
            num::Tape<float> tape(false);
            net.encode(tape, feats[i % feats.size()], enc::EncoderMode::kHierarchical);
        }
        auto t1 = std::chrono::steady_clock::now();
        report.scaling.emplace_back(workload, std::chrono::duration<double>(t1 - t0).count());
    }
    return report;
}

std::string ablation_name(AblationVariant v) {
    switch (v) {
        case AblationVariant::kFull: return "full";
        case AblationVariant::kNoMse: return "-mse";
        case AblationVariant::kNoHse: return "-hse";
        case AblationVariant::kNoCga: return "-cga";
    }
    return "?";
}

AblationSetup ablation_setup(AblationVariant v) {
    AblationSetup setup;
    switch (v) {
        case AblationVariant::kFull: break;
        case AblationVariant::kNoMse: setup.feature_mode = feat::FeatureMode::kCellOnly; break;
        case AblationVariant::kNoHse: setup.encoder_mode = enc::EncoderMode::kFlat; break;
        case AblationVariant::kNoCga: setup.augment = moco::AugmentKind::kRandomMask; break;
    }
    return setup;
}

std::vector<AblationRow> ablate(const std::vector<data::RawTrajectory>& train,
                                const std::vector<data::RawTrajectory>& val,
                                const std::vector<data::RawTrajectory>& bench_pool,
                                const pipe::FeaturePipeline& base_pipeline,
                                const enc::EncoderConfig& encoder_cfg,
                                const moco::MocoConfig& moco_cfg,
                                std::size_t bench_queries, std::size_t bench_db,
                                const std::vector<AblationVariant>& variants,
                                const std::vector<std::uint64_t>& seeds) {
    std::vector<AblationRow> rows;
    for (AblationVariant variant : variants) {
        AblationSetup setup = ablation_setup(variant);
        pipe::FeaturePipeline pipeline = base_pipeline;
        pipeline.mode = setup.feature_mode;
        enc::EncoderConfig ecfg = encoder_cfg;
        ecfg.d_in = static_cast<int>(pipeline.feature_dim());
        for (std::uint64_t seed : seeds) {
            moco::MocoConfig mcfg = moco_cfg;
            mcfg.seed = seed;
            mcfg.augment = setup.augment;
            mcfg.mode = setup.encoder_mode;
            enc::EncoderNet<float> net(ecfg);
            net.init(seed);
            moco::pretrain(net, train, val, pipeline, mcfg);
            RetrievalBench bench = build_retrieval_bench(bench_pool, bench_queries, bench_db, seed);
            double rank = bench_mean_rank(net, pipeline, bench, setup.encoder_mode,
                                          moco_cfg.threads);
            rows.push_back({variant, seed, rank});
        }
    }
    return rows;
}

} // namespace movsem::eval
