#pragma once

// The reference-based Siamese detector: teacher/student pair construction,
// the margin-2 contrastive objective, the training loop, threshold
// calibration, and query/reference detection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/corpus.hpp"
#include "synthsiam/detail/rng.hpp"
#include "synthsiam/encoder.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/optim.hpp"

namespace synthsiam {

// Same: both texts machine-generated. Different: human query vs machine
// reference. The loss uses s = 1 for Same, s = 0 for Different, so Same pairs
// are pulled toward distance 0 and Different pairs pushed toward 2.
enum class PairLabel { Same, Different };

inline double label_value(PairLabel label) {
    return label == PairLabel::Same ? 1.0 : 0.0;
}

inline std::string pair_label_name(PairLabel label) {
    return label == PairLabel::Same ? "same" : "different";
}

struct TrainingPair {
    Document query;
    Document reference;
    PairLabel label = PairLabel::Different;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    std::string optimizer = "adam";
    std::filesystem::path checkpoint_dir; // empty = no checkpoints

    // Structural constant of the loss: the maximum cosine distance. Not
    // tunable; Different pairs are pushed toward this margin.
    static constexpr double kMargin = 2.0;

    void validate() const {
        if (epochs == 0) throw InvalidArgument("epochs must be >= 1");
        if (batch_size == 0) throw InvalidArgument("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
    }
};

// Default decision threshold: the midpoint of the distance range, used when no
// calibration set is supplied.
inline constexpr double kDefaultThreshold = 1.0;

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> val_accuracy;
};

struct TrainingHistory {
    std::vector<EpochStats> epochs;
    std::optional<double> threshold; // set by calibration

    json to_json() const {
        json epochs_json = json::array();
        for (const auto& e : epochs) {
            json j{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
            if (e.val_accuracy.has_value()) j["val_accuracy"] = *e.val_accuracy;
            epochs_json.push_back(std::move(j));
        }
        json out{{"epochs", std::move(epochs_json)}};
        if (threshold.has_value()) out["threshold"] = *threshold;
        return out;
    }

    static TrainingHistory from_json(const json& j) {
        TrainingHistory h;
        for (const auto& e : j.value("epochs", json::array())) {
            EpochStats s;
            s.epoch = e.value("epoch", 0u);
            s.mean_loss = e.value("mean_loss", 0.0);
            if (e.contains("val_accuracy")) s.val_accuracy = e["val_accuracy"].get<double>();
            h.epochs.push_back(s);
        }
        if (j.contains("threshold")) h.threshold = j["threshold"].get<double>();
        return h;
    }
};

// One Different pair per human document and one Same pair per generated
// document, references drawn uniformly (seeded) from the pool excluding the
// query itself; the combined list is shuffled deterministically.
inline std::vector<TrainingPair> build_pairs(const std::vector<Document>& human,
                                             const std::vector<Document>& generated,
                                             const std::vector<Document>& reference_pool,
                                             std::uint64_t seed) {
    if (human.empty() || generated.empty()) {
        throw InvalidArgument("build_pairs requires non-empty human and generated lists");
    }
    if (reference_pool.empty()) {
        throw InvalidArgument("reference pool is empty");
    }
    for (const auto& ref : reference_pool) {
        if (!ref.source.is_generated()) {
            throw InvalidArgument("reference pool document '" + ref.id +
                                  "' is not machine-generated");
        }
    }
    detail::SplitMix64 rng(seed);
    std::vector<TrainingPair> pairs;
    pairs.reserve(human.size() + generated.size());
    for (const auto& doc : human) {
        const std::size_t idx = rng.uniform_index(reference_pool.size());
        pairs.push_back(TrainingPair{doc, reference_pool[idx], PairLabel::Different});
    }
    for (const auto& doc : generated) {
        std::size_t idx = rng.uniform_index(reference_pool.size());
        if (reference_pool[idx].id == doc.id) {
            if (reference_pool.size() == 1) {
                throw InvalidArgument("reference pool contains only the query '" + doc.id +
                                      "' itself");
            }
            // Re-draw uniformly over the remaining pool entries.
            const std::size_t offset = 1 + rng.uniform_index(reference_pool.size() - 1);
            idx = (idx + offset) % reference_pool.size();
        }
        pairs.push_back(TrainingPair{doc, reference_pool[idx], PairLabel::Same});
    }
    rng.shuffle(pairs);
    return pairs;
}

// L = s * d^2 + (1 - s) * (2 - d)^2 with s = 1 for Same, 0 for Different.
inline double contrastive_loss(double distance, PairLabel label) {
    if (!(distance >= 0.0 && distance <= TrainConfig::kMargin)) {
        throw InvalidArgument("distance " + std::to_string(distance) +
                              " outside [0, 2]");
    }
    const double s = label_value(label);
    const double push = TrainConfig::kMargin - distance;
    return s * distance * distance + (1.0 - s) * push * push;
}

inline double contrastive_loss_ddist(double distance, PairLabel label) {
    const double s = label_value(label);
    return 2.0 * s * distance - 2.0 * (1.0 - s) * (TrainConfig::kMargin - distance);
}

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean contrastive loss over `pairs` and its gradient with respect to the
// encoder parameters. Gradients flow through both towers (shared weights).
inline LossGrad siamese_loss_and_gradient(TrainableTextEncoder& encoder,
                                          std::span<const TrainingPair> pairs) {
    if (pairs.empty()) {
        throw InvalidArgument("cannot compute loss over zero pairs");
    }
    LossGrad out;
    out.grad.assign(encoder.parameter_count(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(pairs.size());

    for (const auto& pair : pairs) {
        EncodeBackprop tq = encoder.encode_traced(pair.query.text);
        EncodeBackprop tr = encoder.encode_traced(pair.reference.text);
        const auto& x = tq.embedding.values;
        const auto& y = tr.embedding.values;

        double dot = 0.0, nx2 = 0.0, ny2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            dot += x[i] * y[i];
            nx2 += x[i] * x[i];
            ny2 += y[i] * y[i];
        }
        if (nx2 == 0.0 || ny2 == 0.0) {
            throw Error("zero-norm embedding during training");
        }
        const double nx = std::sqrt(nx2);
        const double ny = std::sqrt(ny2);
        const double cosine = dot / (nx * ny);
        const double distance = std::clamp(1.0 - cosine, 0.0, TrainConfig::kMargin);

        out.loss += contrastive_loss(distance, pair.label) * inv_n;
        const double upstream = contrastive_loss_ddist(distance, pair.label) * inv_n;

        // d distance / d x = -(y / (|x||y|) - cos * x / |x|^2), same with roles
        // swapped for y.
        std::vector<double> gx(x.size()), gy(y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            gx[i] = -upstream * (y[i] / (nx * ny) - cosine * x[i] / nx2);
            gy[i] = -upstream * (x[i] / (nx * ny) - cosine * y[i] / ny2);
        }
        tq.backward(gx, out.grad);
        tr.backward(gy, out.grad);
    }
    return out;
}

// Fraction of pairs whose thresholded distance matches the label
// (predicted Same iff d < threshold).
inline double pair_accuracy(const TextEncoder& encoder,
                            const std::vector<TrainingPair>& pairs, double threshold) {
    if (pairs.empty()) {
        throw InvalidArgument("cannot score zero pairs");
    }
    std::size_t correct = 0;
    for (const auto& pair : pairs) {
        const double d =
            cosine_distance(encoder.encode(pair.query.text), encoder.encode(pair.reference.text));
        const bool predicted_same = d < threshold;
        if (predicted_same == (pair.label == PairLabel::Same)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

namespace detail {

inline void write_checkpoint(const TrainableTextEncoder& encoder,
                             const TrainingHistory& history,
                             const std::filesystem::path& dir, std::size_t epoch) {
    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%03zu", epoch);
    encoder.save(dir / name);
    write_json_file(dir / "history.json", history.to_json());
}

} // namespace detail

// Minimizes mean contrastive loss over seeded shuffled mini-batches. The
// encoder is left frozen in eval mode. Validation accuracy, when a validation
// set is supplied, is pair accuracy at the default threshold.
inline TrainingHistory train_siamese(TrainableTextEncoder& encoder,
                                     const std::vector<TrainingPair>& pairs,
                                     const TrainConfig& config,
                                     const std::vector<TrainingPair>* validation = nullptr) {
    if (pairs.empty()) {
        throw InvalidArgument("cannot train on an empty pair list");
    }
    config.validate();
    encoder.set_mode(EncoderMode::Train);
    const auto optimizer = make_optimizer(config.optimizer, config.learning_rate);
    TrainingHistory history;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        detail::SplitMix64 rng(detail::mix_seeds(config.seed, epoch));
        std::vector<std::size_t> order = rng.sample_indices(pairs.size(), pairs.size());

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<TrainingPair> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) batch.push_back(pairs[order[k]]);

            LossGrad lg = siamese_loss_and_gradient(encoder, batch);
            if (!std::isfinite(lg.loss)) {
                throw Error("non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting at " + std::to_string(start));
            }
            optimizer->step(encoder.parameters(), lg.grad);
            loss_sum += lg.loss * static_cast<double>(batch.size());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(pairs.size());
        if (validation != nullptr && !validation->empty()) {
            stats.val_accuracy = pair_accuracy(encoder, *validation, kDefaultThreshold);
        }
        history.epochs.push_back(stats);

        if (!config.checkpoint_dir.empty()) {
            detail::write_checkpoint(encoder, history, config.checkpoint_dir, epoch);
        }
    }
    encoder.set_mode(EncoderMode::Eval);
    return history;
}

// Training variant that rebuilds pairs each epoch with a reseeded reference
// draw: cheap data augmentation over the reference pool, same label balance.
inline TrainingHistory train_siamese_resampled(
    TrainableTextEncoder& encoder, const std::vector<Document>& human,
    const std::vector<Document>& generated, const std::vector<Document>& reference_pool,
    const TrainConfig& config, const std::vector<TrainingPair>* validation = nullptr) {
    config.validate();
    encoder.set_mode(EncoderMode::Train);
    const auto optimizer = make_optimizer(config.optimizer, config.learning_rate);
    TrainingHistory history;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const std::vector<TrainingPair> pairs =
            build_pairs(human, generated, reference_pool,
                        detail::mix_seeds(config.seed, epoch));

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < pairs.size(); start += config.batch_size) {
            const std::size_t end = std::min(pairs.size(), start + config.batch_size);
            const std::span<const TrainingPair> batch(pairs.data() + start, end - start);
            LossGrad lg = siamese_loss_and_gradient(encoder, batch);
            if (!std::isfinite(lg.loss)) {
                throw Error("non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch starting at " + std::to_string(start));
            }
            optimizer->step(encoder.parameters(), lg.grad);
            loss_sum += lg.loss * static_cast<double>(batch.size());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(pairs.size());
        if (validation != nullptr && !validation->empty()) {
            stats.val_accuracy = pair_accuracy(encoder, *validation, kDefaultThreshold);
        }
        history.epochs.push_back(stats);

        if (!config.checkpoint_dir.empty()) {
            detail::write_checkpoint(encoder, history, config.checkpoint_dir, epoch);
        }
    }
    encoder.set_mode(EncoderMode::Eval);
    return history;
}

enum class DistanceAggregation { Mean, Min };

inline DistanceAggregation aggregation_from_name(std::string_view name) {
    if (name == "mean") return DistanceAggregation::Mean;
    if (name == "min") return DistanceAggregation::Min;
    throw InvalidArgument("unknown aggregation '" + std::string(name) + "'");
}

struct Verdict {
    double distance = 0.0;
    double threshold = kDefaultThreshold;
    bool is_machine = false;
    std::size_t reference_count = 0;

    json to_json() const {
        return json{{"distance", distance},
                    {"threshold", threshold},
                    {"decision", is_machine ? "Machine" : "Human"},
                    {"reference_count", reference_count}};
    }
};

// Query-vs-references detection: distance is the aggregate cosine distance
// from the query embedding to the reference embeddings; Machine iff
// distance < threshold.
inline Verdict detect(const TextEncoder& encoder, const Document& query,
                      const std::vector<Document>& references, double threshold,
                      DistanceAggregation aggregation = DistanceAggregation::Mean) {
    if (references.empty()) {
        throw InvalidArgument("detect requires at least one reference document");
    }
    for (const auto& ref : references) {
        if (!ref.source.is_generated()) {
            throw InvalidArgument("reference '" + ref.id + "' is not machine-generated");
        }
    }
    if (!(threshold > 0.0 && threshold < TrainConfig::kMargin)) {
        throw InvalidArgument("threshold must lie in (0, 2)");
    }
    if (encoder.mode() != EncoderMode::Eval) {
        throw Error("detect requires an encoder in eval mode");
    }
    const FeatureVector fq = encoder.encode(query.text);
    double aggregate = (aggregation == DistanceAggregation::Min)
                           ? std::numeric_limits<double>::infinity()
                           : 0.0;
    for (const auto& ref : references) {
        const double d = cosine_distance(fq, encoder.encode(ref.text));
        if (aggregation == DistanceAggregation::Min) {
            aggregate = std::min(aggregate, d);
        } else {
            aggregate += d;
        }
    }
    if (aggregation == DistanceAggregation::Mean) {
        aggregate /= static_cast<double>(references.size());
    }
    Verdict v;
    v.distance = aggregate;
    v.threshold = threshold;
    v.is_machine = aggregate < threshold;
    v.reference_count = references.size();
    return v;
}

// Grid search over tau in {step, 2*step, ..., 2 - step} maximizing balanced
// accuracy on the validation pairs; ties break toward 1.0, then toward the
// smaller tau.
inline double calibrate_threshold(const TextEncoder& encoder,
                                  const std::vector<TrainingPair>& validation_pairs,
                                  double grid_step) {
    if (!(grid_step > 0.0 && grid_step <= 0.1)) {
        throw InvalidArgument("grid_step must lie in (0, 0.1]");
    }
    std::size_t same_count = 0;
    std::vector<std::pair<double, PairLabel>> scored;
    scored.reserve(validation_pairs.size());
    for (const auto& pair : validation_pairs) {
        const double d = cosine_distance(encoder.encode(pair.query.text),
                                         encoder.encode(pair.reference.text));
        scored.emplace_back(d, pair.label);
        if (pair.label == PairLabel::Same) ++same_count;
    }
    if (same_count == 0 || same_count == scored.size()) {
        throw InvalidArgument("calibration requires both Same and Different pairs");
    }

    const auto steps = static_cast<std::size_t>(
        std::llround(TrainConfig::kMargin / grid_step)) - 1;
    double best_tau = grid_step;
    double best_score = -1.0;
    for (std::size_t k = 1; k <= steps; ++k) {
        const double tau = static_cast<double>(k) * grid_step;
        std::size_t same_correct = 0, diff_correct = 0;
        for (const auto& [d, label] : scored) {
            const bool predicted_same = d < tau;
            if (label == PairLabel::Same && predicted_same) ++same_correct;
            if (label == PairLabel::Different && !predicted_same) ++diff_correct;
        }
        const double balanced =
            0.5 * (static_cast<double>(same_correct) / static_cast<double>(same_count) +
                   static_cast<double>(diff_correct) /
                       static_cast<double>(scored.size() - same_count));
        const bool better =
            balanced > best_score + 1e-12 ||
            (std::abs(balanced - best_score) <= 1e-12 &&
             std::abs(tau - 1.0) < std::abs(best_tau - 1.0) - 1e-12);
        if (better) {
            best_score = balanced;
            best_tau = tau;
        }
    }
    return best_tau;
}

} // namespace synthsiam
