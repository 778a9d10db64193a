#pragma once

// Generation client contract, deterministic mock backend, persistent response
// cache, retry policy, and ordered batch generation.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/detail/hash.hpp"
#include "synthsiam/detail/log.hpp"
#include "synthsiam/detail/rng.hpp"
#include "synthsiam/detail/sha256.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/prompts.hpp"

namespace synthsiam {

struct GenerationParams {
    double temperature = 0.7;
    int max_tokens = 256;
    std::optional<std::uint64_t> seed; // honored by the mock, advisory for remote backends

    void validate() const {
        if (temperature < 0.0) {
            throw InvalidArgument("temperature must be >= 0");
        }
        if (max_tokens < 16) {
            throw InvalidArgument("max_tokens must be >= 16");
        }
    }

    json to_json() const {
        json j{{"temperature", temperature}, {"max_tokens", max_tokens}};
        if (seed.has_value()) j["seed"] = *seed;
        return j;
    }

    static GenerationParams from_json(const json& j) {
        GenerationParams p;
        p.temperature = j.value("temperature", 0.7);
        p.max_tokens = j.value("max_tokens", 256);
        if (j.contains("seed") && !j["seed"].is_null()) {
            p.seed = j["seed"].get<std::uint64_t>();
        }
        return p;
    }
};

class GenerationClient {
public:
    virtual ~GenerationClient() = default;

    // Returns the completion text. Must be safe for concurrent calls up to the
    // batch concurrency limit; failures are reported by throwing.
    virtual std::string complete(const std::string& prompt, const GenerationParams& params) = 0;
    virtual const std::string& model_id() const = 0;
};

inline std::string cache_key(const std::string& model_id, const std::string& prompt,
                             const GenerationParams& params) {
    std::string material = model_id;
    material.push_back('\x1f');
    material += prompt;
    material.push_back('\x1f');
    material += params.to_json().dump();
    return detail::sha256_hex(material);
}

struct GenerationRecord {
    std::string cache_key;
    std::string model_id;
    std::string prompt;
    GenerationParams params;
    std::string output_text;
    std::string created_at; // ISO-8601 UTC
    std::optional<PromptMeta> prompt_meta;

    json to_json() const {
        json j{{"cache_key", cache_key}, {"model_id", model_id},   {"prompt", prompt},
               {"params", params.to_json()}, {"output_text", output_text},
               {"created_at", created_at}};
        if (prompt_meta.has_value()) j["prompt_meta"] = prompt_meta->to_json();
        return j;
    }

    static GenerationRecord from_json(const json& j) {
        GenerationRecord r;
        r.cache_key = j.at("cache_key").get<std::string>();
        r.model_id = j.at("model_id").get<std::string>();
        r.prompt = j.at("prompt").get<std::string>();
        r.params = GenerationParams::from_json(j.at("params"));
        r.output_text = j.at("output_text").get<std::string>();
        r.created_at = j.value("created_at", "");
        if (j.contains("prompt_meta")) r.prompt_meta = PromptMeta::from_json(j["prompt_meta"]);
        return r;
    }
};

namespace detail {

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace detail

// Directory of JSON records, one file per hex cache key. Writes are
// serialized and staged through a temp file so concurrent readers never see
// partial records.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::optional<GenerationRecord> lookup(const std::string& key) const {
        const auto path = record_path(key);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        std::stringstream buf;
        buf << in.rdbuf();
        try {
            return GenerationRecord::from_json(json::parse(buf.str()));
        } catch (const json::exception& e) {
            throw IoError("corrupt cache record '" + path.string() + "': " + e.what());
        }
    }

    void store(const GenerationRecord& record) {
        std::lock_guard<std::mutex> lock(mu_);
        const auto path = record_path(record.cache_key);
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) {
                throw IoError("cannot write cache record '" + tmp + "'");
            }
            out << record.to_json().dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path);
    }

private:
    std::filesystem::path record_path(const std::string& key) const {
        return dir_ / (key + ".json");
    }

    std::filesystem::path dir_;
    mutable std::mutex mu_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
};

struct GenerateOptions {
    RetryPolicy retry;
    ResponseCache* cache = nullptr;
};

namespace detail {

// Pseudo-words the mock backend draws from. Disjoint from ordinary English so
// mock output is distributionally separable from human fixture text.
inline const std::vector<std::string>& machine_vocabulary() {
    static const std::vector<std::string> words = {
        "synthara",   "quantivex",  "modulith",   "parametron", "veximal",
        "tokenoid",   "gradexis",   "lattivue",   "embedrix",   "corpulon",
        "neuraxim",   "softmaxia",  "logitron",   "tensorix",   "optimere",
        "batchanor",  "epochile",   "lossivar",   "marginox",   "cosinade",
        "vectorun",   "promptex",   "decodance",  "samplitude", "entropix",
        "perplexon",  "attentia",   "encodral",   "pretrantor", "finetule",
        "weightor",   "biasment",   "layerade",   "normalux",   "activra",
        "dropoutal",  "pooliverse", "stridexon",  "kernelith",  "convolara",
        "recurrion",  "statefulx",  "hiddenore",  "outputrix",  "inputralt",
        "featurion",  "densival",   "sparsemax",  "residuon",   "skipliamo",
        "transfolux", "headspanor", "querivast",  "keynamode",  "valuetron",
        "scoriform",  "maskivar",   "padtoken",   "truncatals", "windowexa",
        "contextrum", "documint",   "abstraxon",  "sectionure", "paragraphe",
        "sentivault", "wordanese",  "subworden",  "charmatrix", "bytegalore",
    };
    return words;
}

} // namespace detail

// Deterministic mock backend: completions are a pseudo-random sequence of
// machine-vocabulary words keyed by (generator seed, prompt, params seed).
class MockGenerator final : public GenerationClient {
public:
    explicit MockGenerator(std::uint64_t seed, std::string model_id = "mock")
        : seed_(seed), model_id_(std::move(model_id)) {}

    std::string complete(const std::string& prompt, const GenerationParams& params) override {
        params.validate();
        const Inflight guard(*this);
        std::uint64_t stream = detail::mix_seeds(seed_, detail::fnv1a64(prompt));
        if (params.seed.has_value()) stream = detail::mix_seeds(stream, *params.seed);
        detail::SplitMix64 rng(stream);

        const auto& vocab = detail::machine_vocabulary();
        const std::size_t word_count = 60 + rng.uniform_index(41); // 60..100 words
        std::string out;
        std::size_t sentence_len = 0;
        std::size_t sentence_target = 8 + rng.uniform_index(7);
        bool sentence_start = true;
        for (std::size_t i = 0; i < word_count; ++i) {
            std::string word = vocab[rng.uniform_index(vocab.size())];
            if (sentence_start) {
                word[0] = static_cast<char>(word[0] - 'a' + 'A');
                sentence_start = false;
            }
            if (!out.empty()) out.push_back(' ');
            out += word;
            if (++sentence_len >= sentence_target && i + 1 < word_count) {
                out.push_back('.');
                sentence_len = 0;
                sentence_target = 8 + rng.uniform_index(7);
                sentence_start = true;
            }
        }
        out.push_back('.');
        return out;
    }

    const std::string& model_id() const override { return model_id_; }

    std::size_t call_count() const { return calls_.load(); }
    std::size_t max_in_flight() const { return max_in_flight_.load(); }

private:
    struct Inflight {
        explicit Inflight(const MockGenerator& g) : gen(g) {
            gen.calls_.fetch_add(1);
            const std::size_t now = gen.in_flight_.fetch_add(1) + 1;
            std::size_t seen = gen.max_in_flight_.load();
            while (now > seen && !gen.max_in_flight_.compare_exchange_weak(seen, now)) {
            }
        }
        ~Inflight() { gen.in_flight_.fetch_sub(1); }
        const MockGenerator& gen;
    };

    std::uint64_t seed_;
    std::string model_id_;
    mutable std::atomic<std::size_t> calls_{0};
    mutable std::atomic<std::size_t> in_flight_{0};
    mutable std::atomic<std::size_t> max_in_flight_{0};
};

inline std::unique_ptr<MockGenerator> mock_generator(std::uint64_t seed,
                                                     std::string model_id = "mock") {
    return std::make_unique<MockGenerator>(seed, std::move(model_id));
}

namespace detail {

inline std::string generated_document_id(const std::string& key, const PromptMeta& meta) {
    std::string material = key;
    material.push_back('\x1f');
    material += meta.variant;
    material.push_back('\x1f');
    material += std::to_string(meta.level);
    material.push_back('\x1f');
    material += meta.source_doc_id;
    material.push_back('\x1f');
    material += meta.derivation;
    return "gen-" + sha256_hex(material).substr(0, 16);
}

} // namespace detail

// Produces a Generated document for one prompt. Cache hits bypass the client;
// misses are retried with exponential backoff and persisted before returning.
inline Document generate_document(GenerationClient& client, const PromptSpec& spec,
                                  const GenerationParams& params,
                                  const GenerateOptions& options = {}) {
    if (spec.rendered.empty()) {
        throw InvalidArgument("prompt spec has empty rendered text");
    }
    params.validate();
    const PromptMeta meta = spec.meta();
    const std::string key = cache_key(client.model_id(), spec.rendered, params);
    if (options.cache != nullptr) {
        if (const auto hit = options.cache->lookup(key); hit.has_value()) {
            return Document::generated(detail::generated_document_id(key, meta),
                                       hit->output_text, client.model_id(), meta);
        }
    }

    std::string last_error;
    std::chrono::milliseconds backoff = options.retry.initial_backoff;
    const int attempts = std::max(1, options.retry.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(static_cast<long long>(
                static_cast<double>(backoff.count()) * options.retry.multiplier));
        }
        std::string output;
        try {
            output = client.complete(spec.rendered, params);
        } catch (const std::exception& e) {
            last_error = e.what();
            continue;
        }
        if (output.empty()) {
            last_error = "backend returned an empty completion";
            continue;
        }
        if (options.cache != nullptr) {
            GenerationRecord record;
            record.cache_key = key;
            record.model_id = client.model_id();
            record.prompt = spec.rendered;
            record.params = params;
            record.output_text = output;
            record.created_at = detail::utc_timestamp();
            record.prompt_meta = meta;
            options.cache->store(record);
        }
        return Document::generated(detail::generated_document_id(key, meta), output,
                                   client.model_id(), meta);
    }
    throw GenerationError("generation failed after " + std::to_string(attempts) +
                          " attempts (" + client.model_id() + "): " + last_error);
}

struct BatchFailure {
    std::size_t index = 0;
    std::string message;
};

struct BatchResult {
    std::vector<Document> documents;    // successes, in input order
    std::vector<BatchFailure> failures; // failed items, ascending index

    bool complete() const { return failures.empty(); }
};

// Generates specs with at most `concurrency_limit` in-flight requests.
// Per-item failures are collected; throws only when every item failed.
inline BatchResult generate_batch(GenerationClient& client,
                                  const std::vector<PromptSpec>& specs,
                                  const GenerationParams& params,
                                  const GenerateOptions& options, int concurrency_limit) {
    if (concurrency_limit < 1) {
        throw InvalidArgument("concurrency_limit must be >= 1");
    }
    std::vector<std::optional<Document>> slots(specs.size());
    std::vector<std::optional<BatchFailure>> errors(specs.size());
    std::atomic<std::size_t> next{0};

    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(concurrency_limit), specs.size());
    auto work = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            try {
                slots[i] = generate_document(client, specs[i], params, options);
            } catch (const std::exception& e) {
                errors[i] = BatchFailure{i, e.what()};
            }
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    BatchResult result;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (slots[i].has_value()) {
            result.documents.push_back(std::move(*slots[i]));
        } else if (errors[i].has_value()) {
            result.failures.push_back(std::move(*errors[i]));
        }
    }
    if (!specs.empty() && result.documents.empty()) {
        throw GenerationError("all " + std::to_string(specs.size()) +
                              " batch items failed; first error: " +
                              result.failures.front().message);
    }
    return result;
}

} // namespace synthsiam
