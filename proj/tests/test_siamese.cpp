#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "synthsiam/encoder.hpp"
#include "synthsiam/siamese.hpp"
#include "test_support.hpp"

using namespace synthsiam;

namespace {

Document machine_doc(const std::string& id, const std::string& text) {
    PromptMeta meta;
    meta.variant = "directly_use_requirement";
    meta.level = 1;
    return Document::generated(id, text, "mock", meta);
}

// Encoder with hand-planted embeddings so pair distances are exact.
class PlantedEncoder final : public TextEncoder {
public:
    void plant(const std::string& text, std::vector<double> v) {
        table_[normalize_text(text)] = std::move(v);
    }
    FeatureVector encode(std::string_view text) const override {
        return FeatureVector{table_.at(normalize_text(text))};
    }
    std::size_t dimension() const override { return 2; }
    EncoderMode mode() const override { return EncoderMode::Eval; }
    void set_mode(EncoderMode) override {}
    std::string backend_name() const override { return "planted"; }
    void save(const std::filesystem::path&) const override {}

private:
    std::map<std::string, std::vector<double>> table_;
};

// Decorator scaling every embedding by a positive factor.
class ScaledEncoder final : public TextEncoder {
public:
    ScaledEncoder(const TextEncoder& base, double factor) : base_(base), factor_(factor) {}
    FeatureVector encode(std::string_view text) const override {
        FeatureVector v = base_.encode(text);
        for (double& x : v.values) x *= factor_;
        return v;
    }
    std::size_t dimension() const override { return base_.dimension(); }
    EncoderMode mode() const override { return base_.mode(); }
    void set_mode(EncoderMode) override {}
    std::string backend_name() const override { return "scaled"; }
    void save(const std::filesystem::path&) const override {}

private:
    const TextEncoder& base_;
    double factor_;
};

std::vector<Document> small_machine_docs(std::size_t n, std::uint64_t seed) {
    return testsupport::mock_documents(n, seed);
}

} // namespace

TEST_CASE("contrastive loss matches hand substitution") {
    CHECK(contrastive_loss(0.0, PairLabel::Same) == 0.0);
    CHECK(contrastive_loss(2.0, PairLabel::Different) == 0.0);
    CHECK(contrastive_loss(1.0, PairLabel::Same) == 1.0);
    CHECK(contrastive_loss(0.5, PairLabel::Different) == 2.25);
    CHECK_THROWS_AS(contrastive_loss(-0.1, PairLabel::Same), InvalidArgument);
    CHECK_THROWS_AS(contrastive_loss(2.1, PairLabel::Same), InvalidArgument);
}

TEST_CASE("contrastive loss is bounded and monotone on a 201-point grid") {
    double prev_same = -1.0;
    double prev_diff = 5.0;
    for (int k = 0; k <= 200; ++k) {
        const double d = 2.0 * static_cast<double>(k) / 200.0;
        const double same = contrastive_loss(d, PairLabel::Same);
        const double diff = contrastive_loss(d, PairLabel::Different);
        CHECK(same >= 0.0);
        CHECK(same <= 4.0);
        CHECK(diff >= 0.0);
        CHECK(diff <= 4.0);
        CHECK(same > prev_same);
        CHECK(diff < prev_diff);
        prev_same = same;
        prev_diff = diff;
    }
}

TEST_CASE("build_pairs constructs one pair per query") {
    const auto humans = testsupport::fixture_documents(2);
    const auto machines = small_machine_docs(2, 3);
    const auto pool = small_machine_docs(3, 4);

    const auto pairs = build_pairs(humans, machines, pool, 7);
    REQUIRE(pairs.size() == 4);
    std::size_t same = 0, different = 0;
    for (const auto& p : pairs) {
        CHECK(p.reference.source.is_generated());
        if (p.label == PairLabel::Same) {
            ++same;
            CHECK(p.query.source.is_generated());
            CHECK(p.query.id != p.reference.id);
        } else {
            ++different;
            CHECK(p.query.source.is_human());
        }
    }
    CHECK(same == 2);
    CHECK(different == 2);
}

TEST_CASE("build_pairs is deterministic per seed") {
    const auto humans = testsupport::fixture_documents(6);
    const auto machines = small_machine_docs(6, 3);
    const auto pool = small_machine_docs(5, 4);
    const auto a = build_pairs(humans, machines, pool, 42);
    const auto b = build_pairs(humans, machines, pool, 42);
    const auto c = build_pairs(humans, machines, pool, 43);
    REQUIRE(a.size() == b.size());
    bool all_equal = true;
    bool any_diff_from_c = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        all_equal = all_equal && a[i].query.id == b[i].query.id &&
                    a[i].reference.id == b[i].reference.id && a[i].label == b[i].label;
        any_diff_from_c = any_diff_from_c || a[i].query.id != c[i].query.id ||
                          a[i].reference.id != c[i].reference.id;
    }
    CHECK(all_equal);
    CHECK(any_diff_from_c);
}

TEST_CASE("build_pairs never pairs a generated query with itself") {
    const auto humans = testsupport::fixture_documents(1);
    const auto pool = small_machine_docs(3, 4);
    const std::vector<Document> queries(pool.begin(), pool.end()); // queries inside the pool
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        for (const auto& p : build_pairs(humans, queries, pool, seed)) {
            if (p.label == PairLabel::Same) CHECK(p.query.id != p.reference.id);
        }
    }
}

TEST_CASE("build_pairs guards") {
    const auto humans = testsupport::fixture_documents(2);
    const auto machines = small_machine_docs(2, 3);
    CHECK_THROWS_AS(build_pairs({}, machines, machines, 1), InvalidArgument);
    CHECK_THROWS_AS(build_pairs(humans, machines, {}, 1), InvalidArgument);
    CHECK_THROWS_AS(build_pairs(humans, machines, humans, 1), InvalidArgument);

    // pool containing only the query itself
    const std::vector<Document> one = {machines[0]};
    CHECK_THROWS_AS(build_pairs(humans, one, one, 1), InvalidArgument);
}

TEST_CASE("analytic gradient of mean pair loss matches finite differences") {
    const auto humans = testsupport::fixture_documents(8);
    const auto machines = small_machine_docs(8, 9);
    const auto pool = small_machine_docs(4, 10);
    auto pairs = build_pairs(humans, machines, pool, 5);
    pairs.resize(16);

    ToyEncoder encoder(16, 21);
    const LossGrad analytic = siamese_loss_and_gradient(encoder, pairs);

    auto loss_at = [&]() { return siamese_loss_and_gradient(encoder, pairs).loss; };
    auto& params = encoder.parameters();
    double max_rel = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double h = 1e-5;
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss_at();
        params[i] = saved - h;
        const double down = loss_at();
        params[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(fd - analytic.grad[i]) /
                           std::max(1e-5, std::abs(fd) + std::abs(analytic.grad[i]));
        max_rel = std::max(max_rel, rel);
    }
    CHECK(max_rel <= 1e-4);
}

TEST_CASE("training reduces loss and is deterministic") {
    const auto humans = testsupport::fixture_documents(40);
    const auto machines = small_machine_docs(40, 9);
    const auto pool = small_machine_docs(6, 10);
    const auto pairs = build_pairs(humans, machines, pool, 5);

    TrainConfig config;
    config.epochs = 6;
    config.batch_size = 16;
    config.learning_rate = 0.02;
    config.seed = 3;

    ToyEncoder a(32, 7);
    const TrainingHistory ha = train_siamese(a, pairs, config);
    REQUIRE(ha.epochs.size() == 6);
    CHECK(ha.epochs.back().mean_loss < ha.epochs.front().mean_loss);
    CHECK(a.mode() == EncoderMode::Eval);

    ToyEncoder b(32, 7);
    const TrainingHistory hb = train_siamese(b, pairs, config);
    for (std::size_t e = 0; e < 6; ++e) {
        CHECK(ha.epochs[e].mean_loss == hb.epochs[e].mean_loss);
    }

    ToyEncoder c(32, 7);
    CHECK_THROWS_AS(train_siamese(c, {}, config), InvalidArgument);
}

TEST_CASE("training writes per-epoch checkpoints") {
    testsupport::TempDir tmp("ckpt");
    const auto humans = testsupport::fixture_documents(8);
    const auto machines = small_machine_docs(8, 9);
    const auto pairs = build_pairs(humans, machines, machines, 5);

    TrainConfig config;
    config.epochs = 2;
    config.batch_size = 8;
    config.learning_rate = 0.02;
    config.checkpoint_dir = tmp.path() / "checkpoints";

    ToyEncoder encoder(16, 7);
    train_siamese(encoder, pairs, config);
    CHECK(std::filesystem::exists(config.checkpoint_dir / "epoch_000" / "weights.bin"));
    CHECK(std::filesystem::exists(config.checkpoint_dir / "epoch_001" / "config.json"));
    const json history = detail::read_json_file(config.checkpoint_dir / "history.json");
    CHECK(history["epochs"].size() == 2);
}

TEST_CASE("separable mock corpus reaches high held-out pair accuracy") {
    const auto exp = testsupport::make_mock_experiment(60, 0.8, 19);
    TrainConfig config;
    config.epochs = 10;
    config.batch_size = 16;
    config.learning_rate = 0.02;
    config.seed = 3;

    ToyEncoder encoder(64, 7);
    const auto held_pairs =
        build_pairs(exp.held_human, exp.held_machine, exp.references, 111);
    train_siamese_resampled(encoder, exp.train_human, exp.train_machine, exp.references,
                            config);
    const double accuracy = pair_accuracy(encoder, held_pairs, kDefaultThreshold);
    CHECK(accuracy >= 0.90);
}

TEST_CASE("detect applies the decision rule") {
    ToyEncoder encoder(16, 3);
    encoder.set_mode(EncoderMode::Eval);
    const auto query = Document::human("q", "identical text body");
    const auto ref_same = machine_doc("r1", "identical text body");
    const auto ref_other = machine_doc("r2", "completely unrelated words");

    const Verdict self = detect(encoder, query, {ref_same}, 1.0);
    CHECK(self.distance == 0.0);
    CHECK(self.is_machine);
    CHECK(self.reference_count == 1);
    CHECK(self.to_json()["decision"] == "Machine");

    // far reference with a tiny threshold: Human
    const Verdict far = detect(encoder, query, {ref_other}, 0.05);
    if (far.distance >= 0.05) CHECK_FALSE(far.is_machine);

    // mean aggregation over both references
    const Verdict mixed = detect(encoder, query, {ref_same, ref_other}, 1.0);
    const double expected =
        0.5 * (cosine_distance(encoder.encode(query.text), encoder.encode(ref_same.text)) +
               cosine_distance(encoder.encode(query.text), encoder.encode(ref_other.text)));
    CHECK(mixed.distance == Catch::Approx(expected).margin(1e-15));

    const Verdict nearest =
        detect(encoder, query, {ref_same, ref_other}, 1.0, DistanceAggregation::Min);
    CHECK(nearest.distance == 0.0);
}

TEST_CASE("detect validates its contract") {
    ToyEncoder encoder(16, 3);
    const auto query = Document::human("q", "some text");
    const auto ref = machine_doc("r", "machine text");
    CHECK_THROWS_AS(detect(encoder, query, {ref}, 1.0), Error); // train mode
    encoder.set_mode(EncoderMode::Eval);
    CHECK_THROWS_AS(detect(encoder, query, {}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(detect(encoder, query, {query}, 1.0), InvalidArgument); // human ref
    CHECK_THROWS_AS(detect(encoder, query, {ref}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(detect(encoder, query, {ref}, 2.0), InvalidArgument);
}

TEST_CASE("detect decision is invariant under positive embedding scaling") {
    ToyEncoder base(32, 5);
    base.set_mode(EncoderMode::Eval);
    std::vector<Document> references;
    for (auto& doc : small_machine_docs(4, 6)) references.push_back(doc);

    detail::SplitMix64 rng(17);
    const auto queries = testsupport::fixture_documents(10);
    for (const auto& query : queries) {
        const double tau = 0.2 + 1.6 * rng.uniform();
        const Verdict plain = detect(base, query, references, tau);
        for (const double alpha : {0.25, 3.0, 40.0}) {
            const ScaledEncoder scaled(base, alpha);
            const Verdict v = detect(scaled, query, references, tau);
            CHECK(v.is_machine == plain.is_machine);
            CHECK(v.distance == Catch::Approx(plain.distance).margin(1e-9));
        }
    }
}

TEST_CASE("detect distance is invariant under reference permutation") {
    ToyEncoder encoder(32, 5);
    encoder.set_mode(EncoderMode::Eval);
    auto references = small_machine_docs(6, 6);
    const auto query = testsupport::fixture_documents(1)[0];

    const Verdict original = detect(encoder, query, references, 1.0);
    detail::SplitMix64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        rng.shuffle(references);
        const Verdict shuffled = detect(encoder, query, references, 1.0);
        CHECK(shuffled.distance == Catch::Approx(original.distance).margin(1e-12));
        CHECK(shuffled.is_machine == original.is_machine);
    }
}

TEST_CASE("raising the threshold never flips Machine to Human") {
    ToyEncoder encoder(32, 5);
    encoder.set_mode(EncoderMode::Eval);
    const auto references = small_machine_docs(4, 6);
    const auto queries = testsupport::fixture_documents(20);
    for (const auto& query : queries) {
        bool was_machine = false;
        for (double tau = 0.1; tau < 2.0; tau += 0.1) {
            const bool is_machine = detect(encoder, query, references, tau).is_machine;
            if (was_machine) CHECK(is_machine);
            was_machine = is_machine;
        }
    }
}

TEST_CASE("calibrate_threshold separates planted distance clusters") {
    PlantedEncoder encoder;
    const auto plant_query = [&](const std::string& id, double d) {
        const double c = 1.0 - d;
        encoder.plant(id, {c, std::sqrt(std::max(0.0, 1.0 - c * c))});
    };
    encoder.plant("ref", {1.0, 0.0});
    plant_query("s1", 0.1);
    plant_query("s2", 0.2);
    plant_query("d1", 1.8);
    plant_query("d2", 1.9);

    const auto ref = machine_doc("ref", "ref");
    std::vector<TrainingPair> pairs = {
        {machine_doc("s1", "s1"), ref, PairLabel::Same},
        {machine_doc("s2", "s2"), ref, PairLabel::Same},
        {Document::human("d1", "d1"), ref, PairLabel::Different},
        {Document::human("d2", "d2"), ref, PairLabel::Different},
    };
    // perfect separation; tie broken toward 1.0
    CHECK(calibrate_threshold(encoder, pairs, 0.1) == 1.0);

    std::vector<TrainingPair> single_label = {pairs[0], pairs[1]};
    CHECK_THROWS_AS(calibrate_threshold(encoder, single_label, 0.1), InvalidArgument);
    CHECK_THROWS_AS(calibrate_threshold(encoder, pairs, 0.2), InvalidArgument);
    CHECK_THROWS_AS(calibrate_threshold(encoder, pairs, 0.0), InvalidArgument);
}

TEST_CASE("calibrate_threshold equals an exhaustive brute-force scan") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ToyEncoder encoder(32, seed);
        encoder.set_mode(EncoderMode::Eval);
        const auto humans = testsupport::fixture_documents(15, seed);
        const auto machines = small_machine_docs(15, seed + 100);
        const auto pool = small_machine_docs(4, seed + 200);
        const auto pairs = build_pairs(humans, machines, pool, seed);

        const double grid_step = 0.05;
        const double tau = calibrate_threshold(encoder, pairs, grid_step);

        // independent scan: recompute distances, evaluate every grid point
        std::vector<std::pair<double, PairLabel>> scored;
        std::size_t same_total = 0;
        for (const auto& p : pairs) {
            scored.emplace_back(cosine_distance(encoder.encode(p.query.text),
                                                encoder.encode(p.reference.text)),
                                p.label);
            same_total += p.label == PairLabel::Same ? 1 : 0;
        }
        double best_score = -1.0;
        double best_tau = 0.0;
        const int steps = static_cast<int>(std::llround(2.0 / grid_step)) - 1;
        for (int k = 1; k <= steps; ++k) {
            const double candidate = k * grid_step;
            std::size_t sc = 0, dc = 0;
            for (const auto& [d, label] : scored) {
                if (label == PairLabel::Same && d < candidate) ++sc;
                if (label == PairLabel::Different && d >= candidate) ++dc;
            }
            const double balanced =
                0.5 * (static_cast<double>(sc) / static_cast<double>(same_total) +
                       static_cast<double>(dc) /
                           static_cast<double>(scored.size() - same_total));
            if (balanced > best_score + 1e-12 ||
                (std::abs(balanced - best_score) <= 1e-12 &&
                 std::abs(candidate - 1.0) < std::abs(best_tau - 1.0) - 1e-12)) {
                best_score = balanced;
                best_tau = candidate;
            }
        }
        CHECK(tau == best_tau);
    }
}

TEST_CASE("training history serializes and restores") {
    TrainingHistory history;
    history.epochs.push_back(EpochStats{0, 1.5, std::nullopt});
    history.epochs.push_back(EpochStats{1, 0.75, 0.9});
    history.threshold = 0.95;
    const TrainingHistory restored = TrainingHistory::from_json(history.to_json());
    REQUIRE(restored.epochs.size() == 2);
    CHECK(restored.epochs[1].mean_loss == 0.75);
    CHECK(restored.epochs[1].val_accuracy == 0.9);
    CHECK(restored.epochs[0].val_accuracy == std::nullopt);
    CHECK(restored.threshold == 0.95);
}
