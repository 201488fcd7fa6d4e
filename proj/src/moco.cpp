#include "movsem/moco.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace movsem::moco {

MomentumQueue::MomentumQueue(std::size_t size, std::size_t dim, std::uint64_t seed)
    : size_(size), dim_(dim), values_(size * dim) {
    Rng rng(seed_stream(seed, 0x90e0e));
    for (std::size_t i = 0; i < size_; ++i) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
            double v = rng.normal();
            values_[i * dim_ + j] = static_cast<float>(v);
            norm2 += v * v;
        }
        float inv = static_cast<float>(1.0 / std::sqrt(std::max(norm2, 1e-12)));
        for (std::size_t j = 0; j < dim_; ++j) values_[i * dim_ + j] *= inv;
    }
}

void MomentumQueue::enqueue(std::span<const float> keys, std::size_t count) {
    if (count > size_) {
        throw ConfigError("MomentumQueue: batch of " + std::to_string(count) +
                          " exceeds queue size " + std::to_string(size_));
    }
    if (keys.size() != count * dim_) throw ShapeError("MomentumQueue: key block size mismatch");
    for (std::size_t i = 0; i < count; ++i) {
        std::copy_n(keys.data() + i * dim_, dim_, values_.data() + cursor_ * dim_);
        cursor_ = (cursor_ + 1) % size_;
    }
}

void momentum_update(std::vector<num::Parameter<float>*> key_params,
                     std::vector<num::Parameter<float>*> query_params, double momentum) {
    if (key_params.size() != query_params.size()) {
        throw ShapeError("momentum_update: parameter list size mismatch");
    }
    float m = static_cast<float>(momentum);
    for (std::size_t i = 0; i < key_params.size(); ++i) {
        auto& key = key_params[i]->value;
        const auto& query = query_params[i]->value;
        if (key.size() != query.size()) {
            throw ShapeError("momentum_update: shape mismatch at " + key_params[i]->name);
        }
        for (std::size_t j = 0; j < key.size(); ++j) {
            key[j] = m * key[j] + (1.0f - m) * query[j];
        }
    }
}

void MocoConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("moco: temperature must be > 0");
    if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("moco: momentum must be in (0,1)");
    if (batch < 1) throw ConfigError("moco: batch must be >= 1");
    if (batch > queue_size) throw ConfigError("moco: batch exceeds queue size");
    if (!(view_drop >= 0.0 && view_drop < 1.0)) throw ConfigError("moco: view_drop out of range");
    if (!(learning_rate > 0.0)) throw ConfigError("moco: learning rate must be > 0");
}

namespace {

aug::AugmentedView make_view(const data::RawTrajectory& traj, const aug::CurvatureProfile& profile,
                             const MocoConfig& cfg, std::size_t floor_len, std::uint64_t seed) {
    if (cfg.augment == AugmentKind::kCga) {
        return aug::cga_view(profile, cfg.view_drop, seed, floor_len);
    }
    return aug::random_point_mask(traj.length(), cfg.view_drop, seed, floor_len);
}

std::vector<float> normalized_or_throw(std::span<const float> z) {
    double norm2 = 0.0;
    for (float v : z) norm2 += static_cast<double>(v) * v;
    if (!(norm2 > 1e-24)) throw NumericError("pretrain: zero-norm key embedding");
    float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    std::vector<float> out(z.begin(), z.end());
    for (auto& v : out) v *= inv;
    return out;
}

// Per-item forward/backward work product.
struct ItemResult {
    double loss = 0.0;
    std::vector<float> key; // unit-norm key embedding
};

} // namespace

std::vector<float> embed(enc::EncoderNet<float>& net, const pipe::FeaturePipeline& pipeline,
                         const data::RawTrajectory& traj, enc::EncoderMode mode) {
    num::Tape<float> tape(false);
    feat::FeatureSequence feats = pipeline.featurize(traj);
    num::Var<float> z = net.encode(tape, feats, mode);
    return {z.value().begin(), z.value().end()};
}

std::vector<float> embed_all(enc::EncoderNet<float>& net, const pipe::FeaturePipeline& pipeline,
                             const std::vector<data::RawTrajectory>& trajs, enc::EncoderMode mode,
                             unsigned threads) {
    const int d = net.config().d_h;
    std::vector<float> out(trajs.size() * static_cast<std::size_t>(d));
    parallel_for(trajs.size(), threads, [&](std::size_t i) {
        std::vector<float> z = embed(net, pipeline, trajs[i], mode);
        std::copy(z.begin(), z.end(), out.begin() + i * static_cast<std::size_t>(d));
    });
    return out;
}

PretrainResult pretrain(enc::EncoderNet<float>& query,
                        const std::vector<data::RawTrajectory>& train,
                        const std::vector<data::RawTrajectory>& val,
                        const pipe::FeaturePipeline& pipeline, const MocoConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw DataError("pretrain: empty training set");

    const int d_h = query.config().d_h;
    const std::size_t floor_len = static_cast<std::size_t>(query.config().patch_len);

    enc::EncoderNet<float> key(query.config());
    key.copy_values_from(query);

    MomentumQueue queue(cfg.queue_size, static_cast<std::size_t>(d_h), cfg.seed);
    num::AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8};

    std::vector<num::Parameter<float>*> q_params = query.params();
    std::vector<num::Parameter<float>*> k_params = key.params();
    std::unordered_map<num::Parameter<float>*, std::size_t> param_index;
    for (std::size_t i = 0; i < q_params.size(); ++i) param_index[q_params[i]] = i;

    // curvature profiles are a pure function of the trajectory; compute once
    std::vector<aug::CurvatureProfile> train_profiles(train.size());
    parallel_for(train.size(), cfg.threads, [&](std::size_t i) {
        train_profiles[i] = aug::curvature_profile(feat::normalize(train[i], pipeline.region));
    });

    PretrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0;
    std::vector<std::vector<float>> best_values;
    auto snapshot = [&] {
        best_values.clear();
        for (auto* p : q_params) best_values.push_back(p->value);
    };
    snapshot();

    const unsigned workers = std::max(1u, cfg.threads);
    std::vector<std::vector<std::vector<float>>> grad_buckets(workers);
    for (auto& bucket : grad_buckets) {
        bucket.resize(q_params.size());
        for (std::size_t k = 0; k < q_params.size(); ++k) {
            bucket[k].assign(q_params[k]->size(), 0.0f);
        }
    }

    auto eval_item = [&](const data::RawTrajectory& traj, const aug::CurvatureProfile& profile,
                         std::uint64_t seed_a, std::uint64_t seed_b, bool with_grad,
                         unsigned worker) -> ItemResult {
        aug::AugmentedView view_q = make_view(traj, profile, cfg, floor_len, seed_a);
        aug::AugmentedView view_k = make_view(traj, profile, cfg, floor_len, seed_b);
        feat::FeatureSequence feats_q = pipeline.featurize_view(traj, view_q);
        feat::FeatureSequence feats_k = pipeline.featurize_view(traj, view_k);

        num::Tape<float> key_tape(false);
        num::Var<float> zk = key.encode(key_tape, feats_k, cfg.mode);
        ItemResult item;
        item.key = normalized_or_throw(zk.value());

        num::Tape<float> tape(with_grad);
        num::Var<float> zq = query.encode(tape, feats_q, cfg.mode);
        num::Var<float> loss =
            info_nce<float>(tape, zq, std::span<const float>(item.key), queue.data(),
                            static_cast<float>(cfg.temperature));
        item.loss = loss.value()[0];
        if (with_grad) {
            tape.backward(loss);
            auto& bucket = grad_buckets[worker];
            tape.visit_param_grads([&](num::Parameter<float>* p, std::span<const float> g) {
                auto& acc = bucket[param_index.at(p)];
                for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
            });
        }
        return item;
    };

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(seed_stream(cfg.seed, 0xe90c, epoch));
        shuffle_rng.shuffle(order);
        std::size_t steps = (train.size() + cfg.batch - 1) / cfg.batch;
        for (std::size_t step = 0; step < steps; ++step) {
            std::size_t lo = step * cfg.batch;
            std::size_t hi = std::min(train.size(), lo + cfg.batch);
            std::size_t bsz = hi - lo;

            std::vector<ItemResult> items(bsz);
            parallel_for(bsz, cfg.threads, [&](std::size_t b) {
                // worker id must match parallel_for's chunking for the
                // fixed-order gradient reduction below
                std::size_t chunk = (bsz + workers - 1) / workers;
                unsigned worker = static_cast<unsigned>(b / chunk);
                std::size_t idx = order[lo + b];
                std::uint64_t sa = seed_stream(cfg.seed, epoch * 1000003 + step, idx, 1);
                std::uint64_t sb = seed_stream(cfg.seed, epoch * 1000003 + step, idx, 2);
                items[b] = eval_item(train[idx], train_profiles[idx], sa, sb, true, worker);
            });

            // deterministic reduction: per-worker buckets in worker order
            float inv_b = 1.0f / static_cast<float>(bsz);
            for (unsigned w = 0; w < workers; ++w) {
                for (std::size_t k = 0; k < q_params.size(); ++k) {
                    auto& acc = grad_buckets[w][k];
                    auto& dst = q_params[k]->grad;
                    for (std::size_t i = 0; i < acc.size(); ++i) {
                        dst[i] += acc[i] * inv_b;
                        acc[i] = 0.0f;
                    }
                }
            }

            double batch_loss = 0.0;
            for (const auto& item : items) batch_loss += item.loss;
            batch_loss /= static_cast<double>(bsz);
            if (std::isnan(batch_loss)) {
                throw NumericError("pretrain: NaN loss at epoch " + std::to_string(epoch + 1) +
                                   " step " + std::to_string(step + 1));
            }

            num::adam_step(q_params, adam);
            momentum_update(k_params, q_params, cfg.momentum);
            std::vector<float> keys(bsz * static_cast<std::size_t>(d_h));
            for (std::size_t b = 0; b < bsz; ++b) {
                std::copy(items[b].key.begin(), items[b].key.end(),
                          keys.begin() + b * static_cast<std::size_t>(d_h));
            }
            queue.enqueue(keys, bsz);
            result.log.push_back({epoch + 1, static_cast<long>(step + 1), batch_loss,
                                  cfg.learning_rate});
        }

        // validation with epoch-independent view seeds so epochs compare
        double vloss = 0.0;
        if (!val.empty()) {
            std::vector<double> losses(val.size());
            parallel_for(val.size(), cfg.threads, [&](std::size_t i) {
                aug::CurvatureProfile profile =
                    aug::curvature_profile(feat::normalize(val[i], pipeline.region));
                std::uint64_t sa = seed_stream(cfg.seed, 0x7a1, i, 1);
                std::uint64_t sb = seed_stream(cfg.seed, 0x7a1, i, 2);
                losses[i] = eval_item(val[i], profile, sa, sb, false, 0).loss;
            });
            vloss = std::accumulate(losses.begin(), losses.end(), 0.0) /
                    static_cast<double>(losses.size());
        } else {
            // no validation set: fall back to the epoch's mean training loss
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& row : result.log) {
                if (row.epoch == epoch + 1 && row.step > 0) {
                    sum += row.loss;
                    ++n;
                }
            }
            vloss = n ? sum / static_cast<double>(n) : 0.0;
        }
        result.val_loss.push_back(vloss);
        result.log.push_back({epoch + 1, -1, vloss, cfg.learning_rate});
        result.epochs_run = epoch + 1;

        if (vloss < best_val - 1e-6) {
            best_val = vloss;
            result.best_epoch = epoch;
            bad_epochs = 0;
            snapshot();
        } else if (++bad_epochs >= cfg.patience) {
            break;
        }
    }

    for (std::size_t k = 0; k < q_params.size(); ++k) q_params[k]->value = best_values[k];
    return result;
}

} // namespace movsem::moco
