#pragma once

// Feature-extractor contract, the cosine-distance metric, and the
// deterministic bag-of-words toy backend used by tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/detail/hash.hpp"
#include "synthsiam/detail/log.hpp"
#include "synthsiam/detail/rng.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/text.hpp"

namespace synthsiam {

using json = nlohmann::json;

struct FeatureVector {
    std::vector<double> values;

    std::size_t dimension() const { return values.size(); }
};

// d(u, v) = 1 - (u.v)/(|u||v|), clamped to [0, 2] against floating-point drift.
inline double cosine_distance(const FeatureVector& fx, const FeatureVector& fy) {
    if (fx.dimension() != fy.dimension()) {
        throw InvalidArgument("cosine_distance: dimension mismatch (" +
                              std::to_string(fx.dimension()) + " vs " +
                              std::to_string(fy.dimension()) + ")");
    }
    if (fx.dimension() == 0) {
        throw InvalidArgument("cosine_distance: empty vectors");
    }
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < fx.values.size(); ++i) {
        const double a = fx.values[i];
        const double b = fy.values[i];
        if (!std::isfinite(a) || !std::isfinite(b)) {
            throw InvalidArgument("cosine_distance: non-finite entry");
        }
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if (nx == 0.0 || ny == 0.0) {
        throw InvalidArgument("cosine_distance: zero-norm input");
    }
    if (fx.values == fy.values) {
        return 0.0; // self-distance is exactly zero
    }
    double cosine = dot / (std::sqrt(nx) * std::sqrt(ny));
    if (cosine > 1.0) cosine = 1.0;
    if (cosine < -1.0) cosine = -1.0;
    return 1.0 - cosine;
}

enum class EncoderMode { Train, Eval };

class TextEncoder {
public:
    virtual ~TextEncoder() = default;

    // Pure in eval mode: identical text must produce a bit-identical vector.
    virtual FeatureVector encode(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
    virtual EncoderMode mode() const = 0;
    virtual void set_mode(EncoderMode mode) = 0;
    virtual std::string backend_name() const = 0;
    virtual void save(const std::filesystem::path& dir) const = 0;
};

// Forward pass plus a closure that pushes d(scalar)/d(embedding) back into a
// flat parameter-gradient buffer.
struct EncodeBackprop {
    FeatureVector embedding;
    std::function<void(const std::vector<double>& grad_embedding,
                       std::vector<double>& grad_params)>
        backward;
};

class TrainableTextEncoder : public TextEncoder {
public:
    virtual std::size_t parameter_count() const = 0;
    virtual std::vector<double>& parameters() = 0;
    virtual const std::vector<double>& parameters() const = 0;
    virtual EncodeBackprop encode_traced(std::string_view text) = 0;
};

namespace detail {

inline void validate_embedding(const std::vector<double>& values, std::string_view backend) {
    double norm2 = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(std::string(backend) + " produced a non-finite embedding");
        }
        norm2 += v * v;
    }
    if (norm2 == 0.0) {
        throw Error(std::string(backend) + " produced a zero-norm embedding");
    }
}

inline void write_raw_doubles(const std::filesystem::path& path,
                              const std::vector<double>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

inline std::vector<double> read_raw_doubles(const std::filesystem::path& path,
                                            std::size_t expected_count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    std::vector<double> data(expected_count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(expected_count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != expected_count * sizeof(double)) {
        throw IoError("weight file '" + path.string() + "' is truncated");
    }
    return data;
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return json::parse(in);
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << j.dump(2) << '\n';
}

} // namespace detail

// Deterministic bag-of-words backend: tokens are feature-hashed into D
// buckets, counts L2-normalized, then mapped through a trainable D x D linear
// map initialized from `seed`.
class ToyEncoder final : public TrainableTextEncoder {
public:
    static constexpr std::size_t kMinDimension = 8;

    ToyEncoder(std::size_t dimension, std::uint64_t seed)
        : dimension_(dimension), init_seed_(seed) {
        if (dimension < kMinDimension) {
            throw InvalidArgument("toy encoder dimension must be >= 8");
        }
        detail::SplitMix64 rng(seed);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dimension));
        weights_.resize(dimension * dimension);
        for (double& w : weights_) w = rng.normal(0.0, scale);
    }

    static std::size_t token_bucket(std::string_view token, std::size_t dimension) {
        return static_cast<std::size_t>(detail::fnv1a64(token) % dimension);
    }

    // L2-normalized hashed token counts.
    std::vector<double> hashed_features(std::string_view text) const {
        const auto tokens = tokenize_words(text);
        if (tokens.empty()) {
            throw InvalidArgument("cannot encode text with no tokens");
        }
        std::vector<double> h(dimension_, 0.0);
        for (const auto& tok : tokens) h[token_bucket(tok, dimension_)] += 1.0;
        double norm = 0.0;
        for (double v : h) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : h) v /= norm;
        return h;
    }

    FeatureVector encode(std::string_view text) const override {
        return FeatureVector{project(hashed_features(text))};
    }

    EncodeBackprop encode_traced(std::string_view text) override {
        auto features = hashed_features(text);
        EncodeBackprop trace;
        trace.embedding = FeatureVector{project(features)};
        const std::size_t dim = dimension_;
        trace.backward = [features = std::move(features), dim](
                             const std::vector<double>& grad_embedding,
                             std::vector<double>& grad_params) {
            for (std::size_t i = 0; i < dim; ++i) {
                const double g = grad_embedding[i];
                if (g == 0.0) continue;
                double* row = grad_params.data() + i * dim;
                for (std::size_t j = 0; j < dim; ++j) row[j] += g * features[j];
            }
        };
        return trace;
    }

    std::size_t dimension() const override { return dimension_; }
    EncoderMode mode() const override { return mode_; }
    void set_mode(EncoderMode mode) override { mode_ = mode; }
    std::string backend_name() const override { return "toy"; }

    std::size_t parameter_count() const override { return weights_.size(); }
    std::vector<double>& parameters() override { return weights_; }
    const std::vector<double>& parameters() const override { return weights_; }

    void save(const std::filesystem::path& dir) const override {
        std::filesystem::create_directories(dir);
        detail::write_json_file(dir / "config.json",
                                json{{"backend", "toy"},
                                     {"format", "synthsiam-encoder-v1"},
                                     {"precision", "float64-le"},
                                     {"dimension", dimension_},
                                     {"init_seed", init_seed_},
                                     {"parameter_count", weights_.size()}});
        detail::write_raw_doubles(dir / "weights.bin", weights_);
    }

    static std::unique_ptr<ToyEncoder> load(const std::filesystem::path& dir) {
        const json config = detail::read_json_file(dir / "config.json");
        if (config.value("backend", "") != "toy") {
            throw IoError("'" + dir.string() + "' is not a toy encoder checkpoint");
        }
        auto encoder = std::make_unique<ToyEncoder>(config.at("dimension").get<std::size_t>(),
                                                    config.value("init_seed", 0ull));
        encoder->weights_ =
            detail::read_raw_doubles(dir / "weights.bin", encoder->parameter_count());
        encoder->set_mode(EncoderMode::Eval);
        return encoder;
    }

private:
    std::vector<double> project(const std::vector<double>& features) const {
        std::vector<double> out(dimension_, 0.0);
        for (std::size_t i = 0; i < dimension_; ++i) {
            const double* row = weights_.data() + i * dimension_;
            double acc = 0.0;
            for (std::size_t j = 0; j < dimension_; ++j) acc += row[j] * features[j];
            out[i] = acc;
        }
        detail::validate_embedding(out, "toy encoder");
        return out;
    }

    std::size_t dimension_;
    std::uint64_t init_seed_;
    EncoderMode mode_ = EncoderMode::Train;
    std::vector<double> weights_; // row-major D x D
};

inline std::unique_ptr<ToyEncoder> toy_encoder(std::size_t dimension, std::uint64_t seed) {
    return std::make_unique<ToyEncoder>(dimension, seed);
}

} // namespace synthsiam
