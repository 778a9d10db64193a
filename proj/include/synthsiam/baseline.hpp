#pragma once

// Single-input comparison model (encoder + three-layer classifier head) and
// the adapter contract for scoring external detectors with the same harness.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/corpus.hpp"
#include "synthsiam/detail/rng.hpp"
#include "synthsiam/encoder.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/optim.hpp"
#include "synthsiam/siamese.hpp" // TrainConfig, TrainingHistory

namespace synthsiam {

// Encoder followed by fully-connected D -> hidden -> hidden -> 2 with ReLU
// between layers; output is a softmax probability pair (human, machine).
class SingleInputClassifier {
public:
    SingleInputClassifier(std::shared_ptr<TrainableTextEncoder> encoder,
                          std::uint64_t seed, std::size_t hidden = 0)
        : encoder_(std::move(encoder)) {
        if (encoder_ == nullptr) {
            throw InvalidArgument("classifier requires an encoder");
        }
        dim_ = encoder_->dimension();
        hidden_ = hidden != 0 ? hidden : std::max<std::size_t>(2, dim_ / 2);
        init_head(seed);
    }

    const TrainableTextEncoder& encoder() const { return *encoder_; }
    TrainableTextEncoder& encoder() { return *encoder_; }
    std::size_t hidden_size() const { return hidden_; }
    bool trained() const { return trained_; }
    void mark_trained() { trained_ = true; }

    std::vector<double>& head_parameters() { return head_; }
    const std::vector<double>& head_parameters() const { return head_; }

    // (p_human, p_machine); nonnegative, sums to 1.
    std::array<double, 2> predict_proba(const std::string& text) const {
        if (!trained_) {
            throw Error("classifier has not been trained");
        }
        const FeatureVector e = encoder_->encode(text);
        return head_forward(e.values).probs;
    }

    double predict_machine_probability(const std::string& text) const {
        return predict_proba(text)[1];
    }

    struct HeadTrace {
        std::vector<double> input; // embedding
        std::vector<double> z1, a1, z2, a2, z3;
        std::array<double, 2> probs{};
    };

    HeadTrace head_forward(const std::vector<double>& embedding) const {
        HeadTrace t;
        t.input = embedding;
        const Layout lo = layout();
        t.z1 = affine(head_.data() + lo.w1, head_.data() + lo.b1, embedding, hidden_, dim_);
        t.a1 = relu(t.z1);
        t.z2 = affine(head_.data() + lo.w2, head_.data() + lo.b2, t.a1, hidden_, hidden_);
        t.a2 = relu(t.z2);
        t.z3 = affine(head_.data() + lo.w3, head_.data() + lo.b3, t.a2, 2, hidden_);
        const double m = std::max(t.z3[0], t.z3[1]);
        const double e0 = std::exp(t.z3[0] - m);
        const double e1 = std::exp(t.z3[1] - m);
        t.probs = {e0 / (e0 + e1), e1 / (e0 + e1)};
        return t;
    }

    // Cross-entropy gradient for one example; accumulates into grad buffers
    // (head layout below, encoder flat params) scaled by `weight`. Returns the
    // gradient with respect to the embedding.
    std::vector<double> head_backward(const HeadTrace& t, bool is_machine, double weight,
                                      std::vector<double>& grad_head) const {
        const Layout lo = layout();
        std::array<double, 2> dz3 = t.probs;
        dz3[is_machine ? 1 : 0] -= 1.0;
        dz3[0] *= weight;
        dz3[1] *= weight;

        std::vector<double> da2(hidden_, 0.0);
        for (std::size_t i = 0; i < 2; ++i) {
            const double g = dz3[i];
            grad_head[lo.b3 + i] += g;
            for (std::size_t j = 0; j < hidden_; ++j) {
                grad_head[lo.w3 + i * hidden_ + j] += g * t.a2[j];
                da2[j] += g * head_[lo.w3 + i * hidden_ + j];
            }
        }
        std::vector<double> dz2(hidden_);
        for (std::size_t i = 0; i < hidden_; ++i) dz2[i] = t.z2[i] > 0.0 ? da2[i] : 0.0;

        std::vector<double> da1(hidden_, 0.0);
        for (std::size_t i = 0; i < hidden_; ++i) {
            const double g = dz2[i];
            grad_head[lo.b2 + i] += g;
            for (std::size_t j = 0; j < hidden_; ++j) {
                grad_head[lo.w2 + i * hidden_ + j] += g * t.a1[j];
                da1[j] += g * head_[lo.w2 + i * hidden_ + j];
            }
        }
        std::vector<double> dz1(hidden_);
        for (std::size_t i = 0; i < hidden_; ++i) dz1[i] = t.z1[i] > 0.0 ? da1[i] : 0.0;

        std::vector<double> dinput(dim_, 0.0);
        for (std::size_t i = 0; i < hidden_; ++i) {
            const double g = dz1[i];
            grad_head[lo.b1 + i] += g;
            for (std::size_t j = 0; j < dim_; ++j) {
                grad_head[lo.w1 + i * dim_ + j] += g * t.input[j];
                dinput[j] += g * head_[lo.w1 + i * dim_ + j];
            }
        }
        return dinput;
    }

    void save(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        encoder_->save(dir / "encoder");
        detail::write_json_file(dir / "head.json", json{{"hidden", hidden_},
                                                        {"dimension", dim_},
                                                        {"trained", trained_},
                                                        {"activation", "relu"},
                                                        {"parameter_count", head_.size()}});
        detail::write_raw_doubles(dir / "head.bin", head_);
    }

    static SingleInputClassifier load(const std::filesystem::path& dir,
                                      std::shared_ptr<TrainableTextEncoder> encoder) {
        const json j = detail::read_json_file(dir / "head.json");
        SingleInputClassifier model(std::move(encoder), 0, j.at("hidden").get<std::size_t>());
        if (model.dim_ != j.at("dimension").get<std::size_t>()) {
            throw IoError("classifier head dimension mismatch in '" + dir.string() + "'");
        }
        model.head_ = detail::read_raw_doubles(dir / "head.bin", model.head_.size());
        model.trained_ = j.value("trained", false);
        return model;
    }

private:
    struct Layout {
        std::size_t w1, b1, w2, b2, w3, b3, total;
    };

    Layout layout() const {
        Layout lo{};
        lo.w1 = 0;
        lo.b1 = lo.w1 + hidden_ * dim_;
        lo.w2 = lo.b1 + hidden_;
        lo.b2 = lo.w2 + hidden_ * hidden_;
        lo.w3 = lo.b2 + hidden_;
        lo.b3 = lo.w3 + 2 * hidden_;
        lo.total = lo.b3 + 2;
        return lo;
    }

    void init_head(std::uint64_t seed) {
        const Layout lo = layout();
        head_.assign(lo.total, 0.0);
        detail::SplitMix64 rng(seed);
        const auto fill = [&](std::size_t offset, std::size_t rows, std::size_t cols) {
            const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
            for (std::size_t i = 0; i < rows * cols; ++i) {
                head_[offset + i] = rng.normal(0.0, scale);
            }
        };
        fill(lo.w1, hidden_, dim_);
        fill(lo.w2, hidden_, hidden_);
        fill(lo.w3, 2, hidden_);
    }

    static std::vector<double> affine(const double* w, const double* b,
                                      const std::vector<double>& x, std::size_t rows,
                                      std::size_t cols) {
        std::vector<double> out(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = b[i];
            const double* row = w + i * cols;
            for (std::size_t j = 0; j < cols; ++j) acc += row[j] * x[j];
            out[i] = acc;
        }
        return out;
    }

    static std::vector<double> relu(const std::vector<double>& x) {
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
        return out;
    }

    std::shared_ptr<TrainableTextEncoder> encoder_;
    std::size_t dim_ = 0;
    std::size_t hidden_ = 0;
    std::vector<double> head_;
    bool trained_ = false;
};

struct BaselineLossGrad {
    double loss = 0.0;
    std::vector<double> grad_head;
    std::vector<double> grad_encoder;
};

// Mean cross-entropy over `docs` (label = provenance) and its gradients.
inline BaselineLossGrad baseline_loss_and_gradient(SingleInputClassifier& model,
                                                   std::span<const Document> docs) {
    if (docs.empty()) {
        throw InvalidArgument("cannot compute loss over zero documents");
    }
    BaselineLossGrad out;
    out.grad_head.assign(model.head_parameters().size(), 0.0);
    out.grad_encoder.assign(model.encoder().parameter_count(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(docs.size());
    for (const auto& doc : docs) {
        EncodeBackprop trace = model.encoder().encode_traced(doc.text);
        const auto head = model.head_forward(trace.embedding.values);
        const bool is_machine = doc.source.is_generated();
        const double p = std::max(head.probs[is_machine ? 1 : 0], 1e-12);
        out.loss += -std::log(p) * inv_n;
        const auto grad_embedding =
            model.head_backward(head, is_machine, inv_n, out.grad_head);
        trace.backward(grad_embedding, out.grad_encoder);
    }
    return out;
}

// Fraction of documents classified correctly at the 0.5 cutoff.
inline double baseline_accuracy(const SingleInputClassifier& model,
                                const std::vector<Document>& docs) {
    if (docs.empty()) {
        throw InvalidArgument("cannot score zero documents");
    }
    std::size_t correct = 0;
    for (const auto& doc : docs) {
        const bool predicted = model.predict_machine_probability(doc.text) >= 0.5;
        if (predicted == doc.source.is_generated()) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(docs.size());
}

// Cross-entropy training of head and encoder end to end; deterministic given
// the config seed with the toy encoder.
inline TrainingHistory train_baseline(SingleInputClassifier& model,
                                      const std::vector<Document>& docs,
                                      const TrainConfig& config,
                                      const std::vector<Document>* validation = nullptr) {
    config.validate();
    bool has_human = false, has_machine = false;
    for (const auto& doc : docs) {
        (doc.source.is_generated() ? has_machine : has_human) = true;
    }
    if (!has_human || !has_machine) {
        throw InvalidArgument("baseline training requires both classes");
    }
    model.encoder().set_mode(EncoderMode::Train);
    const auto head_opt = make_optimizer(config.optimizer, config.learning_rate);
    const auto enc_opt = make_optimizer(config.optimizer, config.learning_rate);
    model.mark_trained(); // predictions are defined from the first step on
    TrainingHistory history;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        detail::SplitMix64 rng(detail::mix_seeds(config.seed, epoch));
        std::vector<std::size_t> order = rng.sample_indices(docs.size(), docs.size());

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<Document> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) batch.push_back(docs[order[k]]);

            BaselineLossGrad lg = baseline_loss_and_gradient(model, batch);
            if (!std::isfinite(lg.loss)) {
                throw Error("non-finite baseline loss at epoch " + std::to_string(epoch));
            }
            head_opt->step(model.head_parameters(), lg.grad_head);
            enc_opt->step(model.encoder().parameters(), lg.grad_encoder);
            loss_sum += lg.loss * static_cast<double>(batch.size());
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / static_cast<double>(docs.size());
        if (validation != nullptr && !validation->empty()) {
            model.encoder().set_mode(EncoderMode::Eval);
            stats.val_accuracy = baseline_accuracy(model, *validation);
            model.encoder().set_mode(EncoderMode::Train);
        }
        history.epochs.push_back(stats);

        if (!config.checkpoint_dir.empty()) {
            char name[32];
            std::snprintf(name, sizeof(name), "epoch_%03zu", epoch);
            model.save(config.checkpoint_dir / name);
            detail::write_json_file(config.checkpoint_dir / "history.json",
                                    history.to_json());
        }
    }
    model.encoder().set_mode(EncoderMode::Eval);
    return history;
}

inline double predict_baseline(const SingleInputClassifier& model, const std::string& text) {
    return model.predict_machine_probability(text);
}

// External-detector contract: probability in [0, 1] that `text` is
// machine-generated.
class DetectorAdapter {
public:
    virtual ~DetectorAdapter() = default;
    virtual double score(const std::string& text) = 0;
    virtual std::string name() const = 0;
};

class ConstantScoreAdapter final : public DetectorAdapter {
public:
    explicit ConstantScoreAdapter(double score = 0.5) : score_(score) {}
    double score(const std::string&) override { return score_; }
    std::string name() const override { return "constant"; }

private:
    double score_;
};

// Runs a configured executable with the query text on stdin; the executable
// must print JSON {"score": <float in [0,1]>} on stdout.
class ExecAdapter final : public DetectorAdapter {
public:
    explicit ExecAdapter(std::string command) : command_(std::move(command)) {
        if (command_.empty()) {
            throw InvalidArgument("exec adapter requires a command");
        }
    }

    double score(const std::string& text) override {
        const auto tmp = std::filesystem::temp_directory_path() /
                         ("synthsiam-adapter-" + detail::sha256_hex(text).substr(0, 16) +
                          ".txt");
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) {
                throw IoError("cannot write adapter input '" + tmp.string() + "'");
            }
            out << text;
        }
        const std::string cmd = command_ + " < '" + tmp.string() + "'";
        FILE* pipe = popen(cmd.c_str(), "r");
        if (pipe == nullptr) {
            std::filesystem::remove(tmp);
            throw Error("failed to launch adapter command '" + command_ + "'");
        }
        std::string output;
        char buf[256];
        while (std::fgets(buf, sizeof(buf), pipe) != nullptr) output += buf;
        const int status = pclose(pipe);
        std::filesystem::remove(tmp);
        if (status != 0) {
            throw Error("adapter command exited with status " + std::to_string(status));
        }
        return parse_score(output, command_);
    }

    std::string name() const override { return "exec:" + command_; }

    static double parse_score(const std::string& output, const std::string& origin) {
        json j;
        try {
            j = json::parse(output);
        } catch (const json::exception& e) {
            throw Error("adapter '" + origin + "' returned invalid JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("score") || !j["score"].is_number()) {
            throw Error("adapter '" + origin + "' response lacks a numeric 'score'");
        }
        const double score = j["score"].get<double>();
        if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
            throw Error("adapter '" + origin + "' score outside [0, 1]");
        }
        return score;
    }

private:
    std::string command_;
};

} // namespace synthsiam
