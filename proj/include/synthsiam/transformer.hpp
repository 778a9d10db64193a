#pragma once

// Trainable transformer text encoder: wordpiece tokenization, token+position
// embeddings, post-LN self-attention blocks, mean pooling over final-layer
// token states. Checkpoints use a self-describing directory format so
// operator-exported weights can be loaded for evaluation or fine-tuning.

// resolv.h (dragged in by networking headers such as httplib's) defines a
// `_res` macro that corrupts Eigen's parameter names; neutralize it first.
#ifdef _res
#undef _res
#endif
#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "synthsiam/detail/rng.hpp"
#include "synthsiam/encoder.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/text.hpp"

namespace synthsiam {

struct TransformerConfig {
    std::size_t hidden = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t ffn_dim = 256;
    std::size_t max_positions = 128;
    std::vector<std::string> vocab; // token id = index; must contain unk_token
    std::string unk_token = "[UNK]";
    bool lowercase = true;

    void validate() const {
        if (hidden == 0 || heads == 0 || layers == 0 || ffn_dim == 0 || max_positions == 0) {
            throw InvalidArgument("transformer config has a zero-sized field");
        }
        if (hidden % heads != 0) {
            throw InvalidArgument("hidden size must be divisible by head count");
        }
        if (vocab.empty()) {
            throw InvalidArgument("transformer config has an empty vocabulary");
        }
    }
};

class TransformerEncoder final : public TrainableTextEncoder {
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MapMat = Eigen::Map<RowMatrix>;
    using ConstMapMat = Eigen::Map<const RowMatrix>;

    static constexpr double kLayerNormEps = 1e-5;

public:
    static std::unique_ptr<TransformerEncoder> random_init(TransformerConfig config,
                                                           std::uint64_t seed) {
        auto enc = std::unique_ptr<TransformerEncoder>(
            new TransformerEncoder(std::move(config)));
        detail::SplitMix64 rng(seed);
        for (const auto& t : enc->tensors_) {
            double* p = enc->params_.data() + t.offset;
            const std::size_t n = t.rows * t.cols;
            if (t.name.find("ln") != std::string::npos) {
                // gamma tensors end in _g, beta in _b
                const double fill = (t.name.back() == 'g') ? 1.0 : 0.0;
                for (std::size_t i = 0; i < n; ++i) p[i] = fill;
            } else if (t.name.find("_b") != std::string::npos && t.cols == 1) {
                for (std::size_t i = 0; i < n; ++i) p[i] = 0.0;
            } else {
                for (std::size_t i = 0; i < n; ++i) p[i] = rng.normal(0.0, 0.02);
            }
        }
        return enc;
    }

    FeatureVector encode(std::string_view text) const override {
        Trace trace;
        return forward(tokenize_to_ids(text), trace, /*keep_trace=*/false);
    }

    EncodeBackprop encode_traced(std::string_view text) override {
        auto trace = std::make_shared<Trace>();
        EncodeBackprop out;
        out.embedding = forward(tokenize_to_ids(text), *trace, /*keep_trace=*/true);
        out.backward = [this, trace](const std::vector<double>& grad_embedding,
                                     std::vector<double>& grad_params) {
            backward(*trace, grad_embedding, grad_params);
        };
        return out;
    }

    std::size_t dimension() const override { return config_.hidden; }
    EncoderMode mode() const override { return mode_; }
    void set_mode(EncoderMode mode) override { mode_ = mode; }
    std::string backend_name() const override { return "transformer"; }

    std::size_t parameter_count() const override { return params_.size(); }
    std::vector<double>& parameters() override { return params_; }
    const std::vector<double>& parameters() const override { return params_; }

    const TransformerConfig& config() const { return config_; }

    void save(const std::filesystem::path& dir) const override {
        std::filesystem::create_directories(dir);
        json tensor_table = json::array();
        for (const auto& t : tensors_) {
            tensor_table.push_back(json{{"name", t.name},
                                        {"rows", t.rows},
                                        {"cols", t.cols},
                                        {"offset", t.offset}});
        }
        detail::write_json_file(dir / "config.json",
                                json{{"backend", "transformer"},
                                     {"format", "synthsiam-encoder-v1"},
                                     {"precision", "float64-le"},
                                     {"dimension", config_.hidden},
                                     {"heads", config_.heads},
                                     {"layers", config_.layers},
                                     {"ffn_dim", config_.ffn_dim},
                                     {"max_positions", config_.max_positions},
                                     {"activation", "relu"},
                                     {"pooling", "mean"},
                                     {"lowercase", config_.lowercase},
                                     {"unk_token", config_.unk_token},
                                     {"vocab", config_.vocab},
                                     {"parameter_count", params_.size()},
                                     {"tensors", tensor_table}});
        detail::write_raw_doubles(dir / "weights.bin", params_);
    }

    static std::unique_ptr<TransformerEncoder> load(const std::filesystem::path& dir) {
        const json j = detail::read_json_file(dir / "config.json");
        if (j.value("backend", "") != "transformer") {
            throw IoError("'" + dir.string() + "' is not a transformer checkpoint");
        }
        TransformerConfig config;
        config.hidden = j.at("dimension").get<std::size_t>();
        config.heads = j.at("heads").get<std::size_t>();
        config.layers = j.at("layers").get<std::size_t>();
        config.ffn_dim = j.at("ffn_dim").get<std::size_t>();
        config.max_positions = j.at("max_positions").get<std::size_t>();
        config.lowercase = j.value("lowercase", true);
        config.unk_token = j.value("unk_token", "[UNK]");
        config.vocab = j.at("vocab").get<std::vector<std::string>>();
        auto enc = std::unique_ptr<TransformerEncoder>(
            new TransformerEncoder(std::move(config)));
        enc->params_ = detail::read_raw_doubles(dir / "weights.bin", enc->params_.size());
        enc->set_mode(EncoderMode::Eval);
        return enc;
    }

    // Greedy longest-match wordpiece over whitespace words; unknown pieces map
    // to the unk token. Sequences beyond max_positions are tail-truncated.
    std::vector<int> tokenize_to_ids(std::string_view text) const {
        const auto words = tokenize_words(text);
        if (words.empty()) {
            throw InvalidArgument("cannot encode text with no tokens");
        }
        std::vector<int> ids;
        for (const auto& word : words) {
            std::size_t start = 0;
            bool first = true;
            while (start < word.size()) {
                std::size_t end = word.size();
                int match = -1;
                while (end > start) {
                    std::string piece = first ? word.substr(start, end - start)
                                              : "##" + word.substr(start, end - start);
                    if (const auto it = vocab_index_.find(piece); it != vocab_index_.end()) {
                        match = it->second;
                        break;
                    }
                    --end;
                }
                if (match < 0) {
                    ids.push_back(unk_id_);
                    break; // rest of the word is unknown
                }
                ids.push_back(match);
                start = end;
                first = false;
            }
        }
        if (ids.size() > config_.max_positions) {
            log_warn("input of " + std::to_string(ids.size()) +
                     " tokens truncated to max_positions=" +
                     std::to_string(config_.max_positions));
            ids.resize(config_.max_positions);
        }
        return ids;
    }

private:
    struct TensorSpec {
        std::string name;
        std::size_t rows;
        std::size_t cols;
        std::size_t offset;
    };

    struct LayerTrace {
        RowMatrix x_in, q, k, v, ctx, r1, x1, f1, g, r2, x2;
        std::vector<RowMatrix> attn; // per-head softmax probabilities
    };

    struct Trace {
        std::vector<int> ids;
        RowMatrix x0;
        std::vector<LayerTrace> layers;
    };

    explicit TransformerEncoder(TransformerConfig config) : config_(std::move(config)) {
        config_.validate();
        for (std::size_t i = 0; i < config_.vocab.size(); ++i) {
            vocab_index_.emplace(config_.vocab[i], static_cast<int>(i));
        }
        const auto unk = vocab_index_.find(config_.unk_token);
        if (unk == vocab_index_.end()) {
            throw InvalidArgument("vocabulary does not contain the unk token '" +
                                  config_.unk_token + "'");
        }
        unk_id_ = unk->second;
        build_tensor_table();
        params_.assign(total_params_, 0.0);
    }

    void add_tensor(const std::string& name, std::size_t rows, std::size_t cols) {
        tensor_index_.emplace(name, tensors_.size());
        tensors_.push_back(TensorSpec{name, rows, cols, total_params_});
        total_params_ += rows * cols;
    }

    void build_tensor_table() {
        const std::size_t H = config_.hidden;
        const std::size_t F = config_.ffn_dim;
        add_tensor("tok_emb", config_.vocab.size(), H);
        add_tensor("pos_emb", config_.max_positions, H);
        for (std::size_t l = 0; l < config_.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            add_tensor(p + "attn_wq", H, H);
            add_tensor(p + "attn_bq", H, 1);
            add_tensor(p + "attn_wk", H, H);
            add_tensor(p + "attn_bk", H, 1);
            add_tensor(p + "attn_wv", H, H);
            add_tensor(p + "attn_bv", H, 1);
            add_tensor(p + "attn_wo", H, H);
            add_tensor(p + "attn_bo", H, 1);
            add_tensor(p + "ln1_g", H, 1);
            add_tensor(p + "ln1_b", H, 1);
            add_tensor(p + "ffn_w1", H, F);
            add_tensor(p + "ffn_b1", F, 1);
            add_tensor(p + "ffn_w2", F, H);
            add_tensor(p + "ffn_b2", H, 1);
            add_tensor(p + "ln2_g", H, 1);
            add_tensor(p + "ln2_b", H, 1);
        }
    }

    ConstMapMat tensor(const std::string& name, const std::vector<double>& store) const {
        const auto& spec = tensors_[tensor_index(name)];
        return ConstMapMat(store.data() + spec.offset, spec.rows, spec.cols);
    }

    MapMat tensor_mut(const std::string& name, std::vector<double>& store) const {
        const auto& spec = tensors_[tensor_index(name)];
        return MapMat(store.data() + spec.offset, spec.rows, spec.cols);
    }

    std::size_t tensor_index(const std::string& name) const {
        const auto it = tensor_index_.find(name);
        if (it == tensor_index_.end()) {
            throw Error("unknown tensor '" + name + "'");
        }
        return it->second;
    }

    static void layer_norm_rows(const RowMatrix& x, ConstMapMat gamma, ConstMapMat beta,
                                RowMatrix& out) {
        out.resize(x.rows(), x.cols());
        const double n = static_cast<double>(x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double mu = x.row(r).mean();
            const double var = (x.row(r).array() - mu).square().sum() / n;
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            out.row(r) = (((x.row(r).array() - mu) * inv) * gamma.col(0).transpose().array() +
                          beta.col(0).transpose().array())
                             .matrix();
        }
    }

    // d(loss)/d(x) for y = LN(x)*gamma + beta, given dy and the LN input x.
    static void layer_norm_backward(const RowMatrix& x, ConstMapMat gamma,
                                    const RowMatrix& dy, RowMatrix& dx, MapMat dgamma,
                                    MapMat dbeta) {
        using RowArray = Eigen::Array<double, 1, Eigen::Dynamic>;
        dx.resize(x.rows(), x.cols());
        const double n = static_cast<double>(x.cols());
        const RowArray g = gamma.col(0).transpose().array();
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            const double mu = x.row(r).mean();
            const double var = (x.row(r).array() - mu).square().sum() / n;
            const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
            const RowArray xhat = (x.row(r).array() - mu) * inv;
            const RowArray dyr = dy.row(r).array();
            dgamma.col(0).array() += (dyr * xhat).transpose();
            dbeta.col(0).array() += dyr.transpose();
            const RowArray dxhat = dyr * g;
            const double sum_dxhat = dxhat.sum();
            const double sum_dxhat_xhat = (dxhat * xhat).sum();
            dx.row(r) =
                ((dxhat - sum_dxhat / n - xhat * (sum_dxhat_xhat / n)) * inv).matrix();
        }
    }

    FeatureVector forward(const std::vector<int>& ids, Trace& trace, bool keep_trace) const {
        const std::size_t H = config_.hidden;
        const std::size_t T = ids.size();
        const std::size_t heads = config_.heads;
        const std::size_t dh = H / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        const auto tok = tensor("tok_emb", params_);
        const auto pos = tensor("pos_emb", params_);

        RowMatrix x(T, H);
        for (std::size_t t = 0; t < T; ++t) {
            x.row(t) = tok.row(ids[t]) + pos.row(t);
        }
        if (keep_trace) {
            trace.ids = ids;
            trace.x0 = x;
            trace.layers.resize(config_.layers);
        }

        for (std::size_t l = 0; l < config_.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            const auto wq = tensor(p + "attn_wq", params_);
            const auto wk = tensor(p + "attn_wk", params_);
            const auto wv = tensor(p + "attn_wv", params_);
            const auto wo = tensor(p + "attn_wo", params_);
            const auto bq = tensor(p + "attn_bq", params_);
            const auto bk = tensor(p + "attn_bk", params_);
            const auto bv = tensor(p + "attn_bv", params_);
            const auto bo = tensor(p + "attn_bo", params_);

            RowMatrix q = x * wq;
            q.rowwise() += bq.col(0).transpose();
            RowMatrix k = x * wk;
            k.rowwise() += bk.col(0).transpose();
            RowMatrix v = x * wv;
            v.rowwise() += bv.col(0).transpose();

            RowMatrix ctx(T, H);
            std::vector<RowMatrix> attn(heads);
            for (std::size_t h = 0; h < heads; ++h) {
                const auto qh = q.middleCols(h * dh, dh);
                const auto kh = k.middleCols(h * dh, dh);
                const auto vh = v.middleCols(h * dh, dh);
                RowMatrix scores = qh * kh.transpose() * scale;
                for (Eigen::Index r = 0; r < scores.rows(); ++r) {
                    const double m = scores.row(r).maxCoeff();
                    scores.row(r) = (scores.row(r).array() - m).exp();
                    scores.row(r) /= scores.row(r).sum();
                }
                ctx.middleCols(h * dh, dh) = scores * vh;
                if (keep_trace) attn[h] = std::move(scores);
            }
            RowMatrix a = ctx * wo;
            a.rowwise() += bo.col(0).transpose();

            RowMatrix r1 = x + a;
            RowMatrix x1;
            layer_norm_rows(r1, tensor(p + "ln1_g", params_), tensor(p + "ln1_b", params_), x1);

            const auto w1 = tensor(p + "ffn_w1", params_);
            const auto w2 = tensor(p + "ffn_w2", params_);
            const auto b1 = tensor(p + "ffn_b1", params_);
            const auto b2 = tensor(p + "ffn_b2", params_);
            RowMatrix f1 = x1 * w1;
            f1.rowwise() += b1.col(0).transpose();
            RowMatrix g = f1.cwiseMax(0.0);
            RowMatrix f2 = g * w2;
            f2.rowwise() += b2.col(0).transpose();

            RowMatrix r2 = x1 + f2;
            RowMatrix x2;
            layer_norm_rows(r2, tensor(p + "ln2_g", params_), tensor(p + "ln2_b", params_), x2);

            if (keep_trace) {
                LayerTrace& lt = trace.layers[l];
                lt.x_in = x;
                lt.q = std::move(q);
                lt.k = std::move(k);
                lt.v = std::move(v);
                lt.attn = std::move(attn);
                lt.ctx = std::move(ctx);
                lt.r1 = std::move(r1);
                lt.x1 = x1;
                lt.f1 = std::move(f1);
                lt.g = std::move(g);
                lt.r2 = std::move(r2);
                lt.x2 = x2;
            }
            x = std::move(x2);
        }

        Eigen::VectorXd pooled = x.colwise().mean();
        std::vector<double> values(pooled.data(), pooled.data() + pooled.size());
        detail::validate_embedding(values, "transformer encoder");
        return FeatureVector{std::move(values)};
    }

    void backward(const Trace& trace, const std::vector<double>& grad_embedding,
                  std::vector<double>& grad_params) const {
        const std::size_t H = config_.hidden;
        const std::size_t T = trace.ids.size();
        const std::size_t heads = config_.heads;
        const std::size_t dh = H / heads;
        const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

        if (grad_params.size() != params_.size()) {
            throw InvalidArgument("gradient buffer size mismatch");
        }

        // Mean pooling: every token row receives grad / T.
        RowMatrix dx(T, H);
        const Eigen::Map<const Eigen::VectorXd> de(grad_embedding.data(),
                                                   static_cast<Eigen::Index>(H));
        for (std::size_t t = 0; t < T; ++t) {
            dx.row(t) = de.transpose() / static_cast<double>(T);
        }

        for (std::size_t l = config_.layers; l-- > 0;) {
            const LayerTrace& lt = trace.layers[l];
            const std::string p = "layer" + std::to_string(l) + ".";

            // LN2
            RowMatrix dr2;
            layer_norm_backward(lt.r2, tensor(p + "ln2_g", params_), dx, dr2,
                                tensor_mut(p + "ln2_g", grad_params),
                                tensor_mut(p + "ln2_b", grad_params));
            RowMatrix dx1 = dr2; // residual branch
            const RowMatrix& df2 = dr2;

            // FFN
            const auto w1 = tensor(p + "ffn_w1", params_);
            const auto w2 = tensor(p + "ffn_w2", params_);
            tensor_mut(p + "ffn_w2", grad_params) += lt.g.transpose() * df2;
            tensor_mut(p + "ffn_b2", grad_params).col(0) += df2.colwise().sum().transpose();
            RowMatrix dg = df2 * w2.transpose();
            RowMatrix df1 =
                dg.cwiseProduct((lt.f1.array() > 0.0).cast<double>().matrix());
            tensor_mut(p + "ffn_w1", grad_params) += lt.x1.transpose() * df1;
            tensor_mut(p + "ffn_b1", grad_params).col(0) += df1.colwise().sum().transpose();
            dx1 += df1 * w1.transpose();

            // LN1
            RowMatrix dr1;
            layer_norm_backward(lt.r1, tensor(p + "ln1_g", params_), dx1, dr1,
                                tensor_mut(p + "ln1_g", grad_params),
                                tensor_mut(p + "ln1_b", grad_params));
            RowMatrix dx_in = dr1; // residual branch
            const RowMatrix& da = dr1;

            // Output projection
            const auto wo = tensor(p + "attn_wo", params_);
            tensor_mut(p + "attn_wo", grad_params) += lt.ctx.transpose() * da;
            tensor_mut(p + "attn_bo", grad_params).col(0) += da.colwise().sum().transpose();
            RowMatrix dctx = da * wo.transpose();

            // Attention heads
            RowMatrix dq(T, H), dk(T, H), dv(T, H);
            for (std::size_t h = 0; h < heads; ++h) {
                const auto qh = lt.q.middleCols(h * dh, dh);
                const auto kh = lt.k.middleCols(h * dh, dh);
                const auto vh = lt.v.middleCols(h * dh, dh);
                const RowMatrix& probs = lt.attn[h];
                const auto dctx_h = dctx.middleCols(h * dh, dh);

                RowMatrix dprobs = dctx_h * vh.transpose();
                dv.middleCols(h * dh, dh) = probs.transpose() * dctx_h;

                RowMatrix dscores(T, T);
                for (Eigen::Index r = 0; r < dprobs.rows(); ++r) {
                    const double dot = dprobs.row(r).dot(probs.row(r));
                    dscores.row(r) =
                        ((dprobs.row(r).array() - dot) * probs.row(r).array()).matrix();
                }
                dq.middleCols(h * dh, dh) = dscores * kh * scale;
                dk.middleCols(h * dh, dh) = dscores.transpose() * qh * scale;
            }

            // Input projections
            const auto wq = tensor(p + "attn_wq", params_);
            const auto wk = tensor(p + "attn_wk", params_);
            const auto wv = tensor(p + "attn_wv", params_);
            tensor_mut(p + "attn_wq", grad_params) += lt.x_in.transpose() * dq;
            tensor_mut(p + "attn_bq", grad_params).col(0) += dq.colwise().sum().transpose();
            tensor_mut(p + "attn_wk", grad_params) += lt.x_in.transpose() * dk;
            tensor_mut(p + "attn_bk", grad_params).col(0) += dk.colwise().sum().transpose();
            tensor_mut(p + "attn_wv", grad_params) += lt.x_in.transpose() * dv;
            tensor_mut(p + "attn_bv", grad_params).col(0) += dv.colwise().sum().transpose();

            dx_in += dq * wq.transpose() + dk * wk.transpose() + dv * wv.transpose();
            dx = std::move(dx_in);
        }

        // Embeddings
        auto dtok = tensor_mut("tok_emb", grad_params);
        auto dpos = tensor_mut("pos_emb", grad_params);
        for (std::size_t t = 0; t < T; ++t) {
            dtok.row(trace.ids[t]) += dx.row(t);
            dpos.row(t) += dx.row(t);
        }
    }

    TransformerConfig config_;
    std::unordered_map<std::string, int> vocab_index_;
    int unk_id_ = 0;
    std::vector<TensorSpec> tensors_;
    std::unordered_map<std::string, std::size_t> tensor_index_;
    std::size_t total_params_ = 0;
    std::vector<double> params_;
    EncoderMode mode_ = EncoderMode::Train;
};

} // namespace synthsiam
