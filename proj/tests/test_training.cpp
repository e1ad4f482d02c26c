#include <catch2/catch_amalgamated.hpp>

#include "instaloc/training.hpp"
#include "test_helpers.hpp"

using namespace instaloc;
using instaloc::testing::random_points;

namespace {

Descriptor desc(std::vector<double> v) {
    Descriptor d;
    d.values = std::move(v);
    return d;
}

/// Synthetic triplets: positives are noisy rigid copies of the anchor,
/// negatives are independent shapes, half of them of the same class.
std::vector<TripletSample> synthetic_triplets(size_t count, uint64_t seed) {
    Rng rng(seed);
    std::vector<TripletSample> out;
    for (size_t i = 0; i < count; ++i) {
        const auto cls = static_cast<SemanticClass>(rng.uniform_index(kSemanticClassCount));
        std::vector<Point3> base = random_points(rng, 40 + rng.uniform_index(40), 1.0);
        const Vec3 scale{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.2, 2.0)};
        for (auto& p : base) p = {p.x * scale.x, p.y * scale.y, p.z * scale.z};

        std::vector<Point3> pos = base;
        const Rotation r = Rotation::yaw(rng.uniform(0.0, 2 * kPi));
        for (auto& p : pos) p = r.apply(p) + rng.gaussian_vec3(0.01);

        const auto neg_cls = rng.uniform() < 0.5
                                 ? cls
                                 : static_cast<SemanticClass>(rng.uniform_index(13));
        std::vector<Point3> neg = random_points(rng, 40 + rng.uniform_index(40), 1.0);
        const Vec3 nscale{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.2, 2.0)};
        for (auto& p : neg) p = {p.x * nscale.x, p.y * nscale.y, p.z * nscale.z};

        TripletSample t;
        t.anchor = make_instance(base, cls, static_cast<int32_t>(2 * i));
        t.positive = make_instance(pos, cls, static_cast<int32_t>(2 * i));
        t.negative = make_instance(neg, neg_cls, static_cast<int32_t>(2 * i + 1));
        out.push_back(std::move(t));
    }
    return out;
}

/// Minimum |preactivation| across a/p/n forwards; large values mean the
/// parameter point is safely away from the ReLU kinks.
double min_kink_distance(const EmbeddingModel& model, const TripletSample& t) {
    double min_abs = std::numeric_limits<double>::max();
    for (const ObjectInstance* inst : {&t.anchor, &t.positive, &t.negative}) {
        ForwardCache cache;
        const auto centered = normalize_instance(*inst);
        forward_embedding(model, instance_features(centered, inst->cls), centered.size(), &cache);
        for (const auto& layer : cache.point_pre)
            for (const double z : layer) min_abs = std::min(min_abs, std::abs(z));
        for (size_t f = 0; f + 1 < cache.head_pre.size(); ++f)
            for (const double z : cache.head_pre[f]) min_abs = std::min(min_abs, std::abs(z));
    }
    return min_abs;
}

}  // namespace

TEST_CASE("triplet loss matches the formula exactly", "[training]") {
    SECTION("specified cases") {
        const Descriptor a = desc({0, 0}), n2 = desc({2, 0});
        CHECK(triplet_loss(a, a, n2, 1.0) == 0.0);  // 0 - 2 + 1 < 0

        const Descriptor p = desc({0.5, 0});
        CHECK(triplet_loss(a, p, a, 1.0) == Catch::Approx(1.5));  // d(a,n)=0

        const Descriptor n1 = desc({1.0, 0});
        CHECK(triplet_loss(a, p, n1, 1.0) == Catch::Approx(0.5));
    }
    SECTION("random triples against direct evaluation") {
        Rng rng(61);
        for (int i = 0; i < 100; ++i) {
            Descriptor a, p, n;
            for (int k = 0; k < 16; ++k) {
                a.values.push_back(rng.uniform(-2, 2));
                p.values.push_back(rng.uniform(-2, 2));
                n.values.push_back(rng.uniform(-2, 2));
            }
            const double m = rng.uniform(0.1, 2.0);
            const double expected =
                std::max(descriptor_distance(a, p) - descriptor_distance(a, n) + m, 0.0);
            CHECK(std::abs(triplet_loss(a, p, n, m) - expected) < 1e-12);
            CHECK(triplet_loss(a, p, n, m) >= 0.0);
            const bool zero = triplet_loss(a, p, n, m) == 0.0;
            const bool satisfied =
                descriptor_distance(a, p) + m <= descriptor_distance(a, n);
            CHECK(zero == satisfied);
        }
    }
}

TEST_CASE("analytic gradients match central finite differences", "[training][gradcheck]") {
    Rng rng(62);
    const double step = 1e-5;
    int checked = 0;
    while (checked < 5) {
        const EmbeddingModel model = make_embedding_model(8, rng.next(), {12, 16}, {12}, 0.0);
        const auto triplets = synthetic_triplets(1, rng.next());
        const TripletSample& t = triplets[0];
        if (min_kink_distance(model, t) < 1e-3) continue;

        std::vector<double> grad;
        const double loss = triplet_loss_and_gradients(model, t.anchor, t.positive, t.negative,
                                                       1.0, grad);
        if (loss < 0.05) continue;  // need an active hinge

        const std::vector<double> params = get_params(model);
        for (int probe = 0; probe < 3; ++probe) {
            const size_t i = rng.uniform_index(params.size());
            EmbeddingModel m2 = model;
            std::vector<double> p2 = params;
            p2[i] = params[i] + step;
            set_params(m2, p2);
            std::vector<double> dummy;
            const double up = triplet_loss_and_gradients(m2, t.anchor, t.positive, t.negative,
                                                         1.0, dummy);
            p2[i] = params[i] - step;
            set_params(m2, p2);
            const double down = triplet_loss_and_gradients(m2, t.anchor, t.positive, t.negative,
                                                           1.0, dummy);
            const double fd = (up - down) / (2 * step);
            const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
            CHECK(std::abs(fd - grad[i]) / scale < 1e-4);
        }
        ++checked;
    }
}

TEST_CASE("training reduces the loss", "[training][slow]") {
    const auto triplets = synthetic_triplets(50, 63);
    EmbeddingModel model = make_embedding_model(16, 1);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 5;
    const TrainResult r = train(model, triplets, cfg);
    REQUIRE(r.epoch_loss.size() == 30);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    for (const double l : r.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("zero learning rate leaves the model unchanged", "[training]") {
    const auto triplets = synthetic_triplets(10, 64);
    EmbeddingModel model = make_embedding_model(16, 2, {16, 32, 64}, {32}, 0.0);
    const std::vector<double> before = get_params(model);

    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 4;
    cfg.point_dropout = 0.0;
    cfg.jitter_sigma = 0.0;
    cfg.augment_yaw = false;
    const TrainResult r = train(model, triplets, cfg);

    CHECK(get_params(model) == before);
    for (size_t e = 1; e < r.epoch_loss.size(); ++e)
        CHECK(r.epoch_loss[e] == Catch::Approx(r.epoch_loss[0]).margin(1e-12));
}

TEST_CASE("training is deterministic for a fixed seed", "[training]") {
    const auto triplets = synthetic_triplets(12, 65);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 9;
    EmbeddingModel a = make_embedding_model(16, 4);
    EmbeddingModel b = make_embedding_model(16, 4);
    const TrainResult ra = train(a, triplets, cfg);
    const TrainResult rb = train(b, triplets, cfg);
    CHECK(get_params(a) == get_params(b));
    CHECK(ra.epoch_loss == rb.epoch_loss);
}

TEST_CASE("non-finite loss aborts with a diagnostic", "[training]") {
    const auto triplets = synthetic_triplets(4, 66);
    EmbeddingModel model = make_embedding_model(16, 5);
    model.head_layers.back().b[0] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK_THROWS_WITH(train(model, triplets, cfg),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("precision/recall sweep conventions", "[training]") {
    const auto triplets = synthetic_triplets(64, 67);
    const auto curve = descriptor_pr_curve(
        [](const ObjectInstance& inst) { return geometric_descriptor(inst); }, triplets);
    REQUIRE(curve.size() >= 3);

    CHECK(curve.front().threshold == 0.0);
    CHECK(curve.front().recall == 0.0);

    const PrPoint& last = curve.back();
    CHECK(last.recall == Catch::Approx(1.0));
    CHECK(last.precision == Catch::Approx(0.5));

    for (size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].recall >= curve[i - 1].recall);
}

TEST_CASE("perfect separation admits a clean threshold", "[training]") {
    // embed positives near the anchor and negatives far away
    std::vector<TripletSample> triplets;
    Rng rng(68);
    for (int i = 0; i < 20; ++i) {
        std::vector<Point3> base = random_points(rng, 30, 0.5);
        std::vector<Point3> far = random_points(rng, 30, 0.5);
        for (auto& p : far) p = p * 8.0;  // very different spread
        TripletSample t;
        t.anchor = make_instance(base, SemanticClass::chair, 1);
        t.positive = make_instance(base, SemanticClass::chair, 1);  // identical
        t.negative = make_instance(far, SemanticClass::chair, 2);
        triplets.push_back(std::move(t));
    }
    const auto curve = descriptor_pr_curve(
        [](const ObjectInstance& inst) { return geometric_descriptor(inst); }, triplets);
    bool clean = false;
    for (const auto& pt : curve)
        if (pt.precision == 1.0 && pt.recall == 1.0) clean = true;
    CHECK(clean);

    const ThresholdChoice best = best_threshold_by_f1(curve);
    CHECK(best.f1 == Catch::Approx(1.0));
}
