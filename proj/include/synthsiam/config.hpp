#pragma once

// Run configuration for the CLI: one JSON tree, explicit seeds, all artifact
// paths derived from a single run directory.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/encoder.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/generation.hpp"
#include "synthsiam/siamese.hpp"

namespace synthsiam {

struct CorpusSettings {
    std::string input;                       // arXiv-style JSONL
    std::string filter_category;             // empty = no filter
    std::array<double, 3> split{0.8, 0.1, 0.1};
};

struct GeneratorSettings {
    std::string backend = "mock"; // mock | http
    std::string model_id = "mock";
    std::uint64_t seed = 1;
    std::string endpoint;
    std::string credential_env = "SYNTHSIAM_API_KEY";
};

struct EncoderSettings {
    std::string backend = "toy"; // toy | transformer
    std::size_t dimension = 64;
    std::uint64_t seed = 3;
    std::string checkpoint; // load instead of fresh-init when set
};

struct TrainSettings {
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    double learning_rate = 0.05;
    std::string optimizer = "adam";
    std::uint64_t seed = 5;
    bool resample_references = true;
    std::size_t trainset_count = 40;  // generated training documents
    std::size_t valset_count = 12;    // generated validation documents
    std::size_t reference_count = 8;  // teacher reference articles
};

struct DetectSettings {
    double threshold = kDefaultThreshold;
    std::string aggregation = "mean";
    double calibration_grid_step = 0.05;
};

struct EvalSettings {
    std::size_t per_class = 5;
    std::size_t per_cell = 5;
    std::size_t grid_per_cell = 3;
    std::uint64_t seed = 13;
    std::vector<std::string> formats{"markdown", "csv"};
};

struct AdapterSettings {
    std::string command;  // executable reading text on stdin, printing {"score": x}
    std::string endpoint; // or HTTP scoring service
};

struct RunConfig {
    std::filesystem::path run_dir = "runs/default";
    std::uint64_t seed = 7;
    std::string templates; // registry file; empty = builtin registry
    CorpusSettings corpus;
    GeneratorSettings generator;
    std::vector<GeneratorSettings> extra_generators;
    EncoderSettings encoder;
    TrainSettings train;
    DetectSettings detect;
    EvalSettings eval;
    GenerationParams params;
    std::map<std::string, AdapterSettings> adapters;

    std::filesystem::path corpus_path() const { return run_dir / "corpus" / "human.jsonl"; }
    std::filesystem::path cache_dir() const { return run_dir / "cache"; }
    std::filesystem::path checkpoints_dir() const { return run_dir / "checkpoints"; }
    std::filesystem::path final_encoder_dir() const { return checkpoints_dir() / "final"; }
    std::filesystem::path baseline_dir() const { return run_dir / "baseline"; }
    std::filesystem::path references_path() const {
        return run_dir / "generated" / "references.jsonl";
    }
    std::filesystem::path trainset_path() const {
        return run_dir / "generated" / "trainset.jsonl";
    }
    std::filesystem::path valset_path() const {
        return run_dir / "generated" / "valset.jsonl";
    }
    std::filesystem::path suite_dir(const std::string& kind) const {
        return run_dir / "suites" / kind;
    }
    std::filesystem::path reports_dir() const { return run_dir / "reports"; }
    std::filesystem::path manifest_path() const { return run_dir / "MANIFEST.json"; }

    static RunConfig from_json(const json& j) {
        RunConfig c;
        c.run_dir = j.value("run_dir", std::string("runs/default"));
        c.seed = j.value("seed", 7ull);
        c.templates = j.value("templates", "");
        if (j.contains("corpus")) {
            const auto& s = j["corpus"];
            c.corpus.input = s.value("input", "");
            c.corpus.filter_category = s.value("filter_category", "");
            if (s.contains("split")) {
                const auto split = s["split"].get<std::vector<double>>();
                if (split.size() != 3) {
                    throw InvalidArgument("corpus.split must have 3 entries");
                }
                c.corpus.split = {split[0], split[1], split[2]};
            }
        }
        if (j.contains("generator")) c.generator = generator_from_json(j["generator"]);
        for (const auto& g : j.value("extra_generators", json::array())) {
            c.extra_generators.push_back(generator_from_json(g));
        }
        if (j.contains("encoder")) {
            const auto& s = j["encoder"];
            c.encoder.backend = s.value("backend", "toy");
            c.encoder.dimension = s.value("dimension", 64u);
            c.encoder.seed = s.value("seed", 3ull);
            c.encoder.checkpoint = s.value("checkpoint", "");
        }
        if (j.contains("train")) {
            const auto& s = j["train"];
            c.train.epochs = s.value("epochs", 20u);
            c.train.batch_size = s.value("batch_size", 16u);
            c.train.learning_rate = s.value("learning_rate", 0.05);
            c.train.optimizer = s.value("optimizer", "adam");
            c.train.seed = s.value("seed", 5ull);
            c.train.resample_references = s.value("resample_references", true);
            c.train.trainset_count = s.value("trainset_count", 40u);
            c.train.valset_count = s.value("valset_count", 12u);
            c.train.reference_count = s.value("reference_count", 8u);
        }
        if (j.contains("detect")) {
            const auto& s = j["detect"];
            c.detect.threshold = s.value("threshold", kDefaultThreshold);
            c.detect.aggregation = s.value("aggregation", "mean");
            c.detect.calibration_grid_step = s.value("calibration_grid_step", 0.05);
        }
        if (j.contains("eval")) {
            const auto& s = j["eval"];
            c.eval.per_class = s.value("per_class", 5u);
            c.eval.per_cell = s.value("per_cell", 5u);
            c.eval.grid_per_cell = s.value("grid_per_cell", 3u);
            c.eval.seed = s.value("seed", 13ull);
            c.eval.formats = s.value("formats", std::vector<std::string>{"markdown", "csv"});
        }
        if (j.contains("params")) c.params = GenerationParams::from_json(j["params"]);
        for (const auto& [name, a] : j.value("adapters", json::object()).items()) {
            AdapterSettings settings;
            settings.command = a.value("command", "");
            settings.endpoint = a.value("endpoint", "");
            c.adapters[name] = settings;
        }
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        return from_json(detail::read_json_file(path));
    }

    json to_json() const {
        json adapters_json = json::object();
        for (const auto& [name, a] : adapters) {
            adapters_json[name] = json{{"command", a.command}, {"endpoint", a.endpoint}};
        }
        json extra = json::array();
        for (const auto& g : extra_generators) extra.push_back(generator_to_json(g));
        return json{
            {"run_dir", run_dir.string()},
            {"seed", seed},
            {"templates", templates},
            {"corpus", json{{"input", corpus.input},
                            {"filter_category", corpus.filter_category},
                            {"split", std::vector<double>{corpus.split[0], corpus.split[1],
                                                          corpus.split[2]}}}},
            {"generator", generator_to_json(generator)},
            {"extra_generators", std::move(extra)},
            {"encoder", json{{"backend", encoder.backend},
                             {"dimension", encoder.dimension},
                             {"seed", encoder.seed},
                             {"checkpoint", encoder.checkpoint}}},
            {"train", json{{"epochs", train.epochs},
                           {"batch_size", train.batch_size},
                           {"learning_rate", train.learning_rate},
                           {"optimizer", train.optimizer},
                           {"seed", train.seed},
                           {"resample_references", train.resample_references},
                           {"trainset_count", train.trainset_count},
                           {"valset_count", train.valset_count},
                           {"reference_count", train.reference_count}}},
            {"detect", json{{"threshold", detect.threshold},
                            {"aggregation", detect.aggregation},
                            {"calibration_grid_step", detect.calibration_grid_step}}},
            {"eval", json{{"per_class", eval.per_class},
                          {"per_cell", eval.per_cell},
                          {"grid_per_cell", eval.grid_per_cell},
                          {"seed", eval.seed},
                          {"formats", eval.formats}}},
            {"params", params.to_json()},
            {"adapters", std::move(adapters_json)}};
    }

private:
    static GeneratorSettings generator_from_json(const json& j) {
        GeneratorSettings g;
        g.backend = j.value("backend", "mock");
        g.model_id = j.value("model_id", "mock");
        g.seed = j.value("seed", 1ull);
        g.endpoint = j.value("endpoint", "");
        g.credential_env = j.value("credential_env", "SYNTHSIAM_API_KEY");
        return g;
    }

    static json generator_to_json(const GeneratorSettings& g) {
        return json{{"backend", g.backend},
                    {"model_id", g.model_id},
                    {"seed", g.seed},
                    {"endpoint", g.endpoint},
                    {"credential_env", g.credential_env}};
    }
};

// MANIFEST.json helpers: the manifest accumulates per-step records so every
// artifact in a run directory is traceable to config, seeds, and hashes.
inline json read_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return json::object();
    return detail::read_json_file(path);
}

inline void update_manifest(const std::filesystem::path& path, const std::string& section,
                            json value) {
    json manifest = read_manifest(path);
    manifest[section] = std::move(value);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    detail::write_json_file(path, manifest);
}

} // namespace synthsiam
