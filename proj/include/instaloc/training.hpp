// Triplet-loss training of the point-set embedding: analytic backpropagation
// through the pooling and affine layers, Adam updates, and the
// precision/recall sweep used to evaluate descriptor separability.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "instaloc/embedding.hpp"
#include "instaloc/random.hpp"
#include "instaloc/triplets.hpp"

namespace instaloc {

/// max{ d(a,p) - d(a,n) + margin, 0 } with d the Euclidean norm.
inline double triplet_loss(const Descriptor& a, const Descriptor& p, const Descriptor& n,
                           double margin) {
    return std::max(descriptor_distance(a, p) - descriptor_distance(a, n) + margin, 0.0);
}

struct TrainConfig {
    double margin = 1.0;
    double learning_rate = 0.001;
    int epochs = 30;
    int batch_size = 32;
    double point_dropout = 0.2;   // fraction of points removed per instance
    double jitter_sigma = 0.01;   // meters, Gaussian position noise
    bool augment_yaw = true;      // random yaw per instance
    uint64_t seed = 0;

    void validate() const {
        if (margin <= 0.0) throw std::invalid_argument("TrainConfig: margin must be > 0");
        if (learning_rate < 0.0) throw std::invalid_argument("TrainConfig: learning_rate < 0");
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
        if (point_dropout < 0.0 || point_dropout >= 1.0)
            throw std::invalid_argument("TrainConfig: point_dropout out of [0, 1)");
        if (jitter_sigma < 0.0) throw std::invalid_argument("TrainConfig: jitter_sigma < 0");
    }
};

namespace detail {

struct PreparedInstance {
    std::vector<double> features;
    size_t n_points = 0;
};

/// Augment + center + featurize one instance for a training step.
inline PreparedInstance prepare_instance(const ObjectInstance& inst, const TrainConfig& cfg,
                                         Rng& rng) {
    std::vector<Point3> pts = inst.points.points;
    if (cfg.point_dropout > 0.0 && pts.size() > 1) {
        const size_t keep = std::max<size_t>(
            1, pts.size() - static_cast<size_t>(std::floor(cfg.point_dropout *
                                                           static_cast<double>(pts.size()))));
        for (size_t i = 0; i < keep; ++i) {
            const size_t j = i + static_cast<size_t>(rng.uniform_index(pts.size() - i));
            std::swap(pts[i], pts[j]);
        }
        pts.resize(keep);
    }
    if (cfg.jitter_sigma > 0.0)
        for (auto& p : pts) p += rng.gaussian_vec3(cfg.jitter_sigma);
    const Point3 c = centroid_of(pts);
    for (auto& p : pts) p = p - c;
    if (cfg.augment_yaw) {
        const Rotation r = Rotation::yaw(rng.uniform(0.0, 2.0 * kPi));
        for (auto& p : pts) p = r.apply(p);
    }
    PreparedInstance out;
    out.n_points = pts.size();
    out.features = instance_features(pts, inst.cls);
    return out;
}

inline std::vector<double> make_dropout_mask(size_t n, double rate, Rng& rng) {
    std::vector<double> mask(n, 1.0);
    if (rate <= 0.0) return mask;
    const double scale = 1.0 / (1.0 - rate);
    for (auto& v : mask) v = rng.uniform() < rate ? 0.0 : scale;
    return mask;
}

/// Forward a/p/n, accumulate the triplet-loss gradient into `grad` (when
/// non-null and the loss is active). Returns the loss.
inline double triplet_step(const EmbeddingModel& model, const PreparedInstance& a,
                           const PreparedInstance& p, const PreparedInstance& n, double margin,
                           std::vector<double>* grad,
                           const std::vector<double>* mask_a = nullptr,
                           const std::vector<double>* mask_p = nullptr,
                           const std::vector<double>* mask_n = nullptr) {
    ForwardCache ca, cp, cn;
    const std::vector<double> fa = forward_embedding(model, a.features, a.n_points, &ca, mask_a);
    const std::vector<double> fp = forward_embedding(model, p.features, p.n_points, &cp, mask_p);
    const std::vector<double> fn = forward_embedding(model, n.features, n.n_points, &cn, mask_n);

    const size_t d = fa.size();
    std::vector<double> diff_ap(d), diff_an(d);
    double d_ap2 = 0.0, d_an2 = 0.0;
    for (size_t i = 0; i < d; ++i) {
        diff_ap[i] = fa[i] - fp[i];
        diff_an[i] = fa[i] - fn[i];
        d_ap2 += diff_ap[i] * diff_ap[i];
        d_an2 += diff_an[i] * diff_an[i];
    }
    const double d_ap = std::sqrt(d_ap2);
    const double d_an = std::sqrt(d_an2);
    const double loss = d_ap - d_an + margin;
    if (loss <= 0.0) return 0.0;
    if (!grad) return loss;

    constexpr double kEps = 1e-12;
    std::vector<double> da(d, 0.0), dp(d, 0.0), dn(d, 0.0);
    if (d_ap > kEps)
        for (size_t i = 0; i < d; ++i) {
            da[i] += diff_ap[i] / d_ap;
            dp[i] -= diff_ap[i] / d_ap;
        }
    if (d_an > kEps)
        for (size_t i = 0; i < d; ++i) {
            da[i] -= diff_an[i] / d_an;
            dn[i] += diff_an[i] / d_an;
        }
    backward_embedding(model, ca, da, *grad, mask_a);
    backward_embedding(model, cp, dp, *grad, mask_p);
    backward_embedding(model, cn, dn, *grad, mask_n);
    return loss;
}

}  // namespace detail

/// Loss and parameter gradient for one triplet with no augmentation and
/// dropout off. The entry point for finite-difference checks.
inline double triplet_loss_and_gradients(const EmbeddingModel& model, const ObjectInstance& a,
                                         const ObjectInstance& p, const ObjectInstance& n,
                                         double margin, std::vector<double>& grad) {
    grad.assign(model.param_count(), 0.0);
    auto prep = [](const ObjectInstance& inst) {
        detail::PreparedInstance out;
        const std::vector<Point3> centered = normalize_instance(inst);
        out.n_points = centered.size();
        out.features = instance_features(centered, inst.cls);
        return out;
    };
    return detail::triplet_step(model, prep(a), prep(p), prep(n), margin, &grad);
}

struct AdamOptimizer {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m, v;
    int64_t t = 0;

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean triplet loss per epoch
};

/// Minimizes the mean triplet loss over the samples with Adam. Deterministic
/// for a fixed seed; aborts on a non-finite loss.
inline TrainResult train(EmbeddingModel& model, const std::vector<TripletSample>& triplets,
                         const TrainConfig& cfg) {
    cfg.validate();
    model.validate();
    if (triplets.empty()) throw std::invalid_argument("train: no triplets");

    std::vector<double> params = get_params(model);
    AdamOptimizer adam;
    adam.lr = cfg.learning_rate;
    Rng rng(hash_combine(0x7ea11ULL, cfg.seed));

    TrainResult result;
    std::vector<size_t> order(triplets.size());
    std::iota(order.begin(), order.end(), 0);
    const size_t mask_dim = model.head_layers.back().w.size() / static_cast<size_t>(
                                model.head_layers.back().out);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng = rng.fork(static_cast<uint64_t>(epoch));
        erng.shuffle(order);
        double loss_sum = 0.0;
        std::vector<double> grad(params.size());
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::fill(grad.begin(), grad.end(), 0.0);
            for (size_t s = start; s < end; ++s) {
                const TripletSample& sample = triplets[order[s]];
                const auto pa = detail::prepare_instance(sample.anchor, cfg, erng);
                const auto pp = detail::prepare_instance(sample.positive, cfg, erng);
                const auto pn = detail::prepare_instance(sample.negative, cfg, erng);
                const bool use_dropout = model.dropout_rate > 0.0;
                const auto ma = detail::make_dropout_mask(mask_dim, model.dropout_rate, erng);
                const auto mp = detail::make_dropout_mask(mask_dim, model.dropout_rate, erng);
                const auto mn = detail::make_dropout_mask(mask_dim, model.dropout_rate, erng);
                const double loss =
                    detail::triplet_step(model, pa, pp, pn, cfg.margin, &grad,
                                         use_dropout ? &ma : nullptr, use_dropout ? &mp : nullptr,
                                         use_dropout ? &mn : nullptr);
                if (!std::isfinite(loss))
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(epoch) + ", sample " +
                                             std::to_string(order[s]));
                loss_sum += loss;
            }
            const double inv_batch = 1.0 / static_cast<double>(end - start);
            for (auto& g : grad) g *= inv_batch;
            adam.step(params, grad);
            set_params(model, params);
        }
        result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Precision / recall over triplet pairs
// ---------------------------------------------------------------------------

struct PrPoint {
    double threshold = 0.0;
    double precision = 1.0;
    double recall = 0.0;
};

/// Each triplet contributes one positive pair (a,p) and one negative pair
/// (a,n); a pair is classified same-object when the descriptor distance is
/// <= threshold. One curve point per distinct distance, plus threshold 0.
inline std::vector<PrPoint> descriptor_pr_curve(
    const std::function<Descriptor(const ObjectInstance&)>& describe,
    const std::vector<TripletSample>& test) {
    if (test.empty()) throw std::invalid_argument("descriptor_pr_curve: no test triplets");
    std::vector<double> pos, neg;
    for (const auto& t : test) {
        const Descriptor a = describe(t.anchor);
        pos.push_back(descriptor_distance(a, describe(t.positive)));
        neg.push_back(descriptor_distance(a, describe(t.negative)));
    }
    std::vector<double> thresholds;
    thresholds.push_back(0.0);
    thresholds.insert(thresholds.end(), pos.begin(), pos.end());
    thresholds.insert(thresholds.end(), neg.begin(), neg.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    std::vector<double> pos_sorted = pos, neg_sorted = neg;
    std::sort(pos_sorted.begin(), pos_sorted.end());
    std::sort(neg_sorted.begin(), neg_sorted.end());
    auto count_leq = [](const std::vector<double>& v, double t) {
        return static_cast<size_t>(std::upper_bound(v.begin(), v.end(), t) - v.begin());
    };

    std::vector<PrPoint> curve;
    for (const double t : thresholds) {
        const size_t tp = count_leq(pos_sorted, t);
        const size_t fp = count_leq(neg_sorted, t);
        PrPoint pt;
        pt.threshold = t;
        pt.precision = (tp + fp) == 0 ? 1.0
                                      : static_cast<double>(tp) / static_cast<double>(tp + fp);
        pt.recall = static_cast<double>(tp) / static_cast<double>(pos.size());
        curve.push_back(pt);
    }
    return curve;
}

struct ThresholdChoice {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Threshold maximizing F1 on a validation set; the default decision
/// threshold for same-object classification.
inline ThresholdChoice best_threshold_by_f1(const std::vector<PrPoint>& curve) {
    ThresholdChoice best;
    for (const auto& pt : curve) {
        const double denom = pt.precision + pt.recall;
        const double f1 = denom > 0.0 ? 2.0 * pt.precision * pt.recall / denom : 0.0;
        if (f1 > best.f1) {
            best.f1 = f1;
            best.threshold = pt.threshold;
            best.precision = pt.precision;
            best.recall = pt.recall;
        }
    }
    return best;
}

}  // namespace instaloc
