#ifndef UDAKIT_CONTRASTIVE_HPP
#define UDAKIT_CONTRASTIVE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "udakit/augmentation.hpp"
#include "udakit/encoder.hpp"
#include "udakit/errors.hpp"
#include "udakit/rng.hpp"
#include "udakit/segmentation.hpp"
#include "udakit/types.hpp"

namespace udakit {

struct TrainConfig {
    double temperature = 0.1;
    double learning_rate = 1e-2;
    double dropout_rate = 0.1;
    int steps = 100;
    int batch_segments = 16;
    std::uint64_t rng_seed = 0;

    void validate() const {
        if (temperature <= 0.0) throw ConfigError("temperature must be > 0");
        if (learning_rate < 0.0) throw ConfigError("learning_rate must be >= 0");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
            throw ConfigError("dropout_rate must be in [0, 1)");
        }
        if (steps < 0) throw ConfigError("steps must be >= 0");
        if (batch_segments < 2) throw ConfigError("batch_segments must be >= 2");
    }
};

using Embedding = std::array<double, kEmbedDim>;

struct SegmentEmbedding {
    Embedding vector{};
    std::uint32_t segment_id = 0;
    int view_id = 0;
};

// ---------------------------------------------------------------------------
// Segment pooling: head-1 per member point, dropout, coordinatewise max.

struct PoolCache {
    std::vector<std::size_t> members;   // indices into the feature matrix
    std::vector<double> masked;         // members x kPoolDim, post-dropout head-1 outputs
    std::array<std::size_t, kPoolDim> argmax{};  // row index into members
    std::array<double, kPoolDim> pooled{};
};

/// dropout_mask holds one multiplier per (member, coordinate): 0 for dropped
/// units, 1/(1-rate) for kept ones (all 1 when not training). Ties in the max
/// go to the earliest member.
inline PoolCache pool_segment_cached(std::span<const double> features,
                                     const std::vector<std::size_t>& member_indices,
                                     const EncoderParams& params,
                                     std::span<const double> dropout_mask) {
    if (member_indices.empty()) throw EmptySegment("pool_segment: no member points");
    if (dropout_mask.size() != member_indices.size() * kPoolDim) {
        throw LengthMismatch("pool_segment: dropout mask size mismatch");
    }
    PoolCache cache;
    cache.members = member_indices;
    cache.masked.resize(member_indices.size() * kPoolDim);
    auto h1w = params.head1_w();
    auto h1b = params.head1_b();
    for (std::size_t m = 0; m < member_indices.size(); ++m) {
        const double* f = features.data() + member_indices[m] * kFeatureDim;
        double* row = cache.masked.data() + m * kPoolDim;
        for (std::size_t o = 0; o < kPoolDim; ++o) {
            double acc = h1b[o];
            for (std::size_t k = 0; k < kFeatureDim; ++k) acc += h1w[o * kFeatureDim + k] * f[k];
            row[o] = acc * dropout_mask[m * kPoolDim + o];
        }
    }
    for (std::size_t o = 0; o < kPoolDim; ++o) {
        std::size_t best = 0;
        double best_v = cache.masked[o];
        for (std::size_t m = 1; m < member_indices.size(); ++m) {
            double v = cache.masked[m * kPoolDim + o];
            if (v > best_v) {
                best_v = v;
                best = m;
            }
        }
        cache.argmax[o] = best;
        cache.pooled[o] = best_v;
    }
    return cache;
}

inline std::array<double, kPoolDim> pool_segment(std::span<const double> features,
                                                 const std::vector<std::size_t>& member_indices,
                                                 const EncoderParams& params,
                                                 std::span<const double> dropout_mask) {
    return pool_segment_cached(features, member_indices, params, dropout_mask).pooled;
}

/// Gradient of the pooled vector back to head-1 weights and member features.
/// d_features must span the full feature matrix the pool read from.
inline void pool_backward(std::span<const double> features, const PoolCache& cache,
                          const EncoderParams& params, std::span<const double> dropout_mask,
                          const std::array<double, kPoolDim>& d_pooled,
                          EncoderParams& grad, std::span<double> d_features) {
    auto h1w = params.head1_w();
    auto gh1w = grad.head1_w();
    auto gh1b = grad.head1_b();
    for (std::size_t o = 0; o < kPoolDim; ++o) {
        if (d_pooled[o] == 0.0) continue;
        std::size_t m = cache.argmax[o];
        std::size_t point = cache.members[m];
        double dh = d_pooled[o] * dropout_mask[m * kPoolDim + o];
        if (dh == 0.0) continue;
        gh1b[o] += dh;
        const double* f = features.data() + point * kFeatureDim;
        double* df = d_features.data() + point * kFeatureDim;
        for (std::size_t k = 0; k < kFeatureDim; ++k) {
            gh1w[o * kFeatureDim + k] += dh * f[k];
            df[k] += h1w[o * kFeatureDim + k] * dh;
        }
    }
}

// ---------------------------------------------------------------------------
// Projection head 2 + normalization.

struct EmbedCache {
    std::array<double, kPoolDim> pooled{};
    Embedding raw{};         // head-2 output before normalization
    double norm = 0.0;
    Embedding normalized{};
};

inline EmbedCache embed_segment(const std::array<double, kPoolDim>& pooled,
                                const EncoderParams& params) {
    EmbedCache cache;
    cache.pooled = pooled;
    auto h2w = params.head2_w();
    auto h2b = params.head2_b();
    for (std::size_t o = 0; o < kEmbedDim; ++o) {
        double acc = h2b[o];
        for (std::size_t k = 0; k < kPoolDim; ++k) acc += h2w[o * kPoolDim + k] * pooled[k];
        cache.raw[o] = acc;
    }
    double sq = 0.0;
    for (double v : cache.raw) sq += v * v;
    cache.norm = std::sqrt(sq);
    if (cache.norm > 0.0) {
        for (std::size_t o = 0; o < kEmbedDim; ++o) cache.normalized[o] = cache.raw[o] / cache.norm;
    } else {
        cache.normalized = cache.raw;  // zero vector stays zero
    }
    return cache;
}

inline void embed_backward(const EmbedCache& cache, const EncoderParams& params,
                           const Embedding& d_normalized, EncoderParams& grad,
                           std::array<double, kPoolDim>& d_pooled) {
    // Through x/||x||: de = (d - n (n . d)) / ||x||.
    double r = std::max(cache.norm, 1e-300);
    double dot = 0.0;
    for (std::size_t o = 0; o < kEmbedDim; ++o) dot += cache.normalized[o] * d_normalized[o];
    Embedding d_raw;
    for (std::size_t o = 0; o < kEmbedDim; ++o) {
        d_raw[o] = (d_normalized[o] - cache.normalized[o] * dot) / r;
    }
    auto h2w = params.head2_w();
    auto gh2w = grad.head2_w();
    auto gh2b = grad.head2_b();
    d_pooled.fill(0.0);
    for (std::size_t o = 0; o < kEmbedDim; ++o) {
        if (d_raw[o] == 0.0) continue;
        gh2b[o] += d_raw[o];
        for (std::size_t k = 0; k < kPoolDim; ++k) {
            gh2w[o * kPoolDim + k] += d_raw[o] * cache.pooled[k];
            d_pooled[k] += h2w[o * kPoolDim + k] * d_raw[o];
        }
    }
}

// ---------------------------------------------------------------------------
// InfoNCE.

struct InfoNceResult {
    double loss = 0.0;
    std::vector<Embedding> grad_anchors;
    std::vector<Embedding> grad_positives;
};

/// loss_i = -log( exp(a_i.p_i / tau) / sum_j exp(a_i.p_j / tau) ), averaged
/// over anchors; negatives are the other positives in the batch. Gradients
/// are exact.
inline InfoNceResult info_nce_loss(const std::vector<Embedding>& anchors,
                                   const std::vector<Embedding>& positives, double tau) {
    if (tau <= 0.0) throw ConfigError("info_nce_loss: tau must be > 0");
    if (anchors.size() != positives.size()) {
        throw LengthMismatch("info_nce_loss: anchor/positive count mismatch");
    }
    const std::size_t batch = anchors.size();
    if (batch < 2) {
        throw InsufficientBatch("info_nce_loss needs >= 2 pairs, got " + std::to_string(batch));
    }
    InfoNceResult result;
    result.grad_anchors.assign(batch, Embedding{});
    result.grad_positives.assign(batch, Embedding{});

    std::vector<double> sims(batch * batch);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < batch; ++j) {
            double dot = 0.0;
            for (std::size_t k = 0; k < kEmbedDim; ++k) dot += anchors[i][k] * positives[j][k];
            sims[i * batch + j] = dot / tau;
        }
    }

    double total = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* row = sims.data() + i * batch;
        double row_max = row[0];
        for (std::size_t j = 1; j < batch; ++j) row_max = std::max(row_max, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < batch; ++j) sum += std::exp(row[j] - row_max);
        total += std::log(sum) + row_max - row[i];
        // dL/ds_ij = (softmax_ij - [i==j]) / batch
        for (std::size_t j = 0; j < batch; ++j) {
            double softmax = std::exp(row[j] - row_max) / sum;
            double ds = (softmax - (i == j ? 1.0 : 0.0)) * inv_batch / tau;
            for (std::size_t k = 0; k < kEmbedDim; ++k) {
                result.grad_anchors[i][k] += ds * positives[j][k];
                result.grad_positives[j][k] += ds * anchors[i][k];
            }
        }
    }
    result.loss = total * inv_batch;
    return result;
}

// ---------------------------------------------------------------------------
// Cross-entropy over per-point logits.

struct CrossEntropyResult {
    double loss = 0.0;
    std::vector<double> grad_logits;  // same shape as logits
};

/// Mean over non-ignored points of -log softmax(logits)[label]. Ignored
/// points contribute zero loss and zero gradient.
inline CrossEntropyResult cross_entropy_loss(const std::vector<double>& logits,
                                             std::size_t num_classes, const LabelArray& labels,
                                             std::uint16_t ignore_id) {
    if (num_classes == 0) throw ConfigError("cross_entropy_loss: num_classes must be > 0");
    if (logits.size() != labels.size() * num_classes) {
        throw LengthMismatch("cross_entropy_loss: logit rows do not match label count");
    }
    CrossEntropyResult result;
    result.grad_logits.assign(logits.size(), 0.0);

    std::size_t supervised = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::uint16_t sem = labels.semantic(i);
        if (sem == ignore_id) continue;
        if (sem >= num_classes) throw UnmappedClass(sem, i);
        ++supervised;
    }
    if (supervised == 0) throw AllIgnored("cross_entropy_loss: no supervised points");

    const double inv = 1.0 / static_cast<double>(supervised);
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        std::uint16_t sem = labels.semantic(i);
        if (sem == ignore_id) continue;
        const double* row = logits.data() + i * num_classes;
        double* grow = result.grad_logits.data() + i * num_classes;
        double row_max = row[0];
        for (std::size_t c = 1; c < num_classes; ++c) row_max = std::max(row_max, row[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) sum += std::exp(row[c] - row_max);
        total += std::log(sum) + row_max - row[sem];
        for (std::size_t c = 0; c < num_classes; ++c) {
            double softmax = std::exp(row[c] - row_max) / sum;
            grow[c] = (softmax - (c == sem ? 1.0 : 0.0)) * inv;
        }
    }
    result.loss = total * inv;
    return result;
}

// ---------------------------------------------------------------------------
// Pre-training step.

namespace detail {

struct ViewBatch {
    std::vector<std::vector<std::size_t>> members;  // per segment, view-point indices
    std::vector<std::vector<double>> masks;         // per segment, members x kPoolDim
};

inline std::vector<double> draw_dropout_mask(Rng& rng, std::size_t members, double rate) {
    std::vector<double> mask(members * kPoolDim);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : mask) v = rng.uniform() >= rate ? keep_scale : 0.0;
    return mask;
}

}  // namespace detail

/// Forward pass of one pre-training step: augment into two views, encode,
/// pool the segments that survive in both views, embed, InfoNCE. When `grad`
/// is non-null the full parameter gradient is accumulated into it.
inline double pretrain_forward(const PointCloud& cloud, const SegmentAssignment& assignment,
                               const EncoderParams& params, const AugmentationSpec& aug_spec,
                               const TrainConfig& config, std::uint64_t step_seed,
                               EncoderParams* grad = nullptr) {
    config.validate();
    if (assignment.size() != cloud.size()) {
        throw LengthMismatch("pretrain: assignment length does not match cloud");
    }
    if (assignment.segment_count() < 2) {
        throw InsufficientBatch("pretrain: scene has fewer than 2 segments");
    }

    AugmentationSpec spec = aug_spec;
    spec.rng_seed = derive_seed(step_seed, 0);
    ViewPair views = make_view_pair(cloud, spec);

    // Use the batch_segments largest segments (ids are size-ordered).
    const std::uint32_t batch_cap =
        static_cast<std::uint32_t>(std::min<std::size_t>(assignment.segment_count(),
                                                         static_cast<std::size_t>(config.batch_segments)));
    std::vector<std::int32_t> seg_of(cloud.size(), -1);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (assignment.tags[i] < batch_cap) seg_of[i] = static_cast<std::int32_t>(assignment.tags[i]);
    }
    auto collect = [&](const std::vector<std::size_t>& map) {
        std::vector<std::vector<std::size_t>> members(batch_cap);
        for (std::size_t j = 0; j < map.size(); ++j) {
            std::int32_t k = seg_of[map[j]];
            if (k >= 0) members[static_cast<std::size_t>(k)].push_back(j);
        }
        return members;
    };
    auto members_a = collect(views.map_a);
    auto members_b = collect(views.map_b);

    std::vector<std::uint32_t> survivors;
    for (std::uint32_t k = 0; k < batch_cap; ++k) {
        if (!members_a[k].empty() && !members_b[k].empty()) survivors.push_back(k);
    }
    if (survivors.size() < 2) {
        throw InsufficientBatch("pretrain: fewer than 2 segments survive both views");
    }

    EncodeCache enc_a = encode_points_cached(views.view_a, params);
    EncodeCache enc_b = encode_points_cached(views.view_b, params);

    Rng dropout_rng(derive_seed(step_seed, 1));
    const std::size_t batch = survivors.size();
    std::vector<std::vector<double>> masks_a(batch), masks_b(batch);
    std::vector<PoolCache> pools_a(batch), pools_b(batch);
    std::vector<EmbedCache> emb_a(batch), emb_b(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        std::uint32_t k = survivors[s];
        masks_a[s] = detail::draw_dropout_mask(dropout_rng, members_a[k].size(),
                                               config.dropout_rate);
        pools_a[s] = pool_segment_cached(enc_a.features, members_a[k], params, masks_a[s]);
        emb_a[s] = embed_segment(pools_a[s].pooled, params);
    }
    for (std::size_t s = 0; s < batch; ++s) {
        std::uint32_t k = survivors[s];
        masks_b[s] = detail::draw_dropout_mask(dropout_rng, members_b[k].size(),
                                               config.dropout_rate);
        pools_b[s] = pool_segment_cached(enc_b.features, members_b[k], params, masks_b[s]);
        emb_b[s] = embed_segment(pools_b[s].pooled, params);
    }

    std::vector<Embedding> anchors(batch), positives(batch);
    for (std::size_t s = 0; s < batch; ++s) {
        anchors[s] = emb_a[s].normalized;
        positives[s] = emb_b[s].normalized;
    }
    InfoNceResult nce = info_nce_loss(anchors, positives, config.temperature);

    if (grad) {
        std::vector<double> dfeat_a(enc_a.features.size(), 0.0);
        std::vector<double> dfeat_b(enc_b.features.size(), 0.0);
        std::array<double, kPoolDim> d_pooled;
        for (std::size_t s = 0; s < batch; ++s) {
            embed_backward(emb_a[s], params, nce.grad_anchors[s], *grad, d_pooled);
            pool_backward(enc_a.features, pools_a[s], params, masks_a[s], d_pooled, *grad,
                          dfeat_a);
            embed_backward(emb_b[s], params, nce.grad_positives[s], *grad, d_pooled);
            pool_backward(enc_b.features, pools_b[s], params, masks_b[s], d_pooled, *grad,
                          dfeat_b);
        }
        encoder_backward(views.view_a, enc_a, params, dfeat_a, *grad);
        encoder_backward(views.view_b, enc_b, params, dfeat_b, *grad);
    }
    return nce.loss;
}

/// One gradient-descent step on all encoder parameters. Returns the loss
/// measured before the update.
inline double pretrain_step(const PointCloud& cloud, const SegmentAssignment& assignment,
                            EncoderParams& params, const AugmentationSpec& aug_spec,
                            const TrainConfig& config, std::uint64_t step_seed) {
    EncoderParams grad;
    double loss = pretrain_forward(cloud, assignment, params, aug_spec, config, step_seed, &grad);
    for (std::size_t i = 0; i < params.data.size(); ++i) {
        params.data[i] -= config.learning_rate * grad.data[i];
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Fine-tuning step (encoder MLP + fresh linear classifier, heads unused).

inline double finetune_forward(const PointCloud& cloud, const LabelArray& pseudo_labels,
                               const EncoderParams& params, const ClassifierParams& classifier,
                               std::uint16_t ignore_id, EncoderParams* grad_params = nullptr,
                               ClassifierParams* grad_classifier = nullptr) {
    if (pseudo_labels.size() != cloud.size()) {
        throw LengthMismatch("finetune: label count does not match cloud");
    }
    const std::size_t num_classes = classifier.num_classes;
    EncodeCache enc = encode_points_cached(cloud, params);

    std::vector<double> logits(cloud.size() * num_classes);
    auto cw = classifier.w();
    auto cb = classifier.b();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double* f = enc.features.data() + i * kFeatureDim;
        double* row = logits.data() + i * num_classes;
        for (std::size_t c = 0; c < num_classes; ++c) {
            double acc = cb[c];
            for (std::size_t k = 0; k < kFeatureDim; ++k) acc += cw[c * kFeatureDim + k] * f[k];
            row[c] = acc;
        }
    }

    CrossEntropyResult ce = cross_entropy_loss(logits, num_classes, pseudo_labels, ignore_id);

    if (grad_params && grad_classifier) {
        std::vector<double> dfeat(enc.features.size(), 0.0);
        auto gw = grad_classifier->w();
        auto gb = grad_classifier->b();
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const double* dlogit = ce.grad_logits.data() + i * num_classes;
            const double* f = enc.features.data() + i * kFeatureDim;
            double* df = dfeat.data() + i * kFeatureDim;
            for (std::size_t c = 0; c < num_classes; ++c) {
                if (dlogit[c] == 0.0) continue;
                gb[c] += dlogit[c];
                for (std::size_t k = 0; k < kFeatureDim; ++k) {
                    gw[c * kFeatureDim + k] += dlogit[c] * f[k];
                    df[k] += cw[c * kFeatureDim + k] * dlogit[c];
                }
            }
        }
        encoder_backward(cloud, enc, params, dfeat, *grad_params);
    }
    return ce.loss;
}

inline double finetune_step(const PointCloud& cloud, const LabelArray& pseudo_labels,
                            EncoderParams& params, ClassifierParams& classifier,
                            const TrainConfig& config, std::uint16_t ignore_id) {
    config.validate();
    EncoderParams grad_params;
    ClassifierParams grad_classifier(classifier.num_classes);
    double loss = finetune_forward(cloud, pseudo_labels, params, classifier, ignore_id,
                                   &grad_params, &grad_classifier);
    for (std::size_t i = 0; i < params.data.size(); ++i) {
        params.data[i] -= config.learning_rate * grad_params.data[i];
    }
    for (std::size_t i = 0; i < classifier.data.size(); ++i) {
        classifier.data[i] -= config.learning_rate * grad_classifier.data[i];
    }
    return loss;
}

/// Per-point argmax class prediction with the linear head.
inline LabelArray classify_points(const PointCloud& cloud, const EncoderParams& params,
                                  const ClassifierParams& classifier) {
    std::vector<double> features = encode_points(cloud, params);
    LabelArray out;
    out.values.resize(cloud.size());
    auto cw = classifier.w();
    auto cb = classifier.b();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double* f = features.data() + i * kFeatureDim;
        std::size_t best = 0;
        double best_v = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classifier.num_classes; ++c) {
            double acc = cb[c];
            for (std::size_t k = 0; k < kFeatureDim; ++k) acc += cw[c * kFeatureDim + k] * f[k];
            if (acc > best_v) {
                best_v = acc;
                best = c;
            }
        }
        out.values[i] = pack_label(static_cast<std::uint16_t>(best));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loops. Scans are cycled in list order; the per-step seed is
// derived from the config seed and the global step index, so a run resumed
// at start_step reproduces the tail of an uninterrupted run exactly.

struct PretrainScan {
    PointCloud cloud;
    SegmentAssignment assignment;
};

struct FinetuneScan {
    PointCloud cloud;
    LabelArray labels;
};

inline std::vector<double> run_pretraining(const std::vector<PretrainScan>& scans,
                                           EncoderParams& params, const AugmentationSpec& aug,
                                           const TrainConfig& config, int start_step = 0,
                                           bool skip_bad = false) {
    config.validate();
    if (scans.empty()) throw ConfigError("run_pretraining: no scans");
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(config.steps));
    for (int t = 0; t < config.steps; ++t) {
        const std::uint64_t global = static_cast<std::uint64_t>(start_step + t);
        const PretrainScan& scan = scans[global % scans.size()];
        std::uint64_t step_seed = derive_seed(config.rng_seed, global);
        try {
            losses.push_back(pretrain_step(scan.cloud, scan.assignment, params, aug, config,
                                           step_seed));
        } catch (const InsufficientBatch&) {
            if (!skip_bad) throw;
            losses.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return losses;
}

inline std::vector<double> run_finetuning(const std::vector<FinetuneScan>& scans,
                                          EncoderParams& params, ClassifierParams& classifier,
                                          const TrainConfig& config, std::uint16_t ignore_id,
                                          int start_step = 0, bool skip_bad = false) {
    config.validate();
    if (scans.empty()) throw ConfigError("run_finetuning: no scans");
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(config.steps));
    for (int t = 0; t < config.steps; ++t) {
        const std::uint64_t global = static_cast<std::uint64_t>(start_step + t);
        const FinetuneScan& scan = scans[global % scans.size()];
        try {
            losses.push_back(finetune_step(scan.cloud, scan.labels, params, classifier, config,
                                           ignore_id));
        } catch (const AllIgnored&) {
            if (!skip_bad) throw;
            losses.push_back(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return losses;
}

}  // namespace udakit

#endif
