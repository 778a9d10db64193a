#pragma once

// Generalization test suites (level / scenario / model / grid), the detector
// harness, and report emission shaped after the paper's accuracy tables.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "synthsiam/baseline.hpp"
#include "synthsiam/corpus.hpp"
#include "synthsiam/detail/rng.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/generation.hpp"
#include "synthsiam/prompt_grid.hpp"
#include "synthsiam/prompts.hpp"
#include "synthsiam/siamese.hpp"

namespace synthsiam {

enum class SuiteKind { Level, Scenario, Model, Grid };

inline std::string suite_kind_name(SuiteKind kind) {
    switch (kind) {
        case SuiteKind::Level: return "level";
        case SuiteKind::Scenario: return "scenario";
        case SuiteKind::Model: return "model";
        case SuiteKind::Grid: return "grid";
    }
    throw InvalidArgument("unknown suite kind");
}

inline SuiteKind suite_kind_from_name(std::string_view name) {
    if (name == "level") return SuiteKind::Level;
    if (name == "scenario") return SuiteKind::Scenario;
    if (name == "model") return SuiteKind::Model;
    if (name == "grid") return SuiteKind::Grid;
    throw InvalidArgument("unknown suite kind '" + std::string(name) + "'");
}

enum class TrueLabel { Human, Machine };

struct SuiteEntry {
    Document doc;
    TrueLabel label = TrueLabel::Human;
};

struct SuiteCell {
    std::string key;
    std::vector<SuiteEntry> entries;
};

struct SuiteProvenance {
    std::string kind;
    std::uint64_t seed = 0;
    std::string registry_hash;
    std::vector<std::string> generator_model_ids;
    std::size_t per_cell = 0;
    json extra = json::object(); // e.g. teacher source ids for the scenario suite

    json to_json() const {
        return json{{"kind", kind},
                    {"seed", seed},
                    {"registry_hash", registry_hash},
                    {"generator_model_ids", generator_model_ids},
                    {"per_cell", per_cell},
                    {"extra", extra}};
    }

    static SuiteProvenance from_json(const json& j) {
        SuiteProvenance p;
        p.kind = j.value("kind", "");
        p.seed = j.value("seed", 0ull);
        p.registry_hash = j.value("registry_hash", "");
        p.generator_model_ids =
            j.value("generator_model_ids", std::vector<std::string>{});
        p.per_cell = j.value("per_cell", 0u);
        p.extra = j.value("extra", json::object());
        return p;
    }

    std::string hash() const { return detail::sha256_hex(to_json().dump()); }
};

struct TestSuite {
    SuiteKind kind = SuiteKind::Level;
    std::vector<SuiteCell> cells; // canonical order
    SuiteProvenance provenance;

    const SuiteCell* find_cell(const std::string& key) const {
        for (const auto& c : cells) {
            if (c.key == key) return &c;
        }
        return nullptr;
    }

    std::size_t total_documents() const {
        std::size_t n = 0;
        for (const auto& c : cells) n += c.entries.size();
        return n;
    }

    void save(const std::filesystem::path& dir) const;
    static TestSuite load(const std::filesystem::path& dir);
};

struct SuiteBuildOptions {
    GenerationParams params;
    GenerateOptions generate;
    const TemplateRegistry* registry = nullptr;
    SummaryMode summary_mode = SummaryMode::Extractive;
    int concurrency = 1;
};

namespace detail {

inline std::string sanitize_key(const std::string& key) {
    std::string out = key;
    for (char& c : out) {
        if (c == '/' || c == ' ' || c == ':') c = '_';
    }
    return out;
}

// per `count` distinct documents from `eligible`, seeded shuffle order.
inline std::vector<const Document*> sample_documents(const Corpus& corpus,
                                                     const std::vector<std::size_t>& eligible,
                                                     std::size_t count, SplitMix64& rng,
                                                     const std::string& what) {
    if (eligible.size() < count) {
        throw InvalidArgument("suite needs " + std::to_string(count) + " " + what +
                              ", corpus supplies " + std::to_string(eligible.size()));
    }
    std::vector<std::size_t> order(eligible);
    rng.shuffle(order);
    order.resize(count);
    std::vector<const Document*> out;
    out.reserve(count);
    for (std::size_t i : order) out.push_back(&corpus.documents()[i]);
    return out;
}

inline std::vector<std::size_t> all_human_indices(const Corpus& corpus) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus.documents()[i].source.is_human()) out.push_back(i);
    }
    return out;
}

// Renders one generated cell: DUR-or-variant prompts at `level` from the given
// content-source documents, then generates them as a batch.
inline std::vector<Document> generate_cell(const Corpus& corpus,
                                           const std::vector<const Document*>& sources,
                                           TemplateVariant variant, ContentLevel level,
                                           GenerationClient& generator,
                                           const SuiteBuildOptions& options,
                                           SplitMix64& rng) {
    const TemplateRegistry& registry = registry_or_builtin(options.registry);
    Summarizer summarizer;
    if (options.summary_mode == SummaryMode::Generative) {
        summarizer =
            generative_summarizer(generator, registry, options.params, options.generate);
    }
    std::vector<PromptSpec> specs;
    specs.reserve(sources.size());
    for (const Document* doc : sources) {
        ContentPayload payload = derive_content(*doc, level, summarizer);
        if (variant == TemplateVariant::ManyToOne) {
            payload.auxiliary_texts = sample_auxiliary_texts(corpus, *doc, rng);
        }
        if (variant == TemplateVariant::DoubleGpt) {
            payload = double_gpt_rewrite(generator, registry, payload, options.params,
                                         options.generate);
        }
        specs.push_back(render_prompt(registry, variant, payload));
    }
    BatchResult batch = generate_batch(generator, specs, options.params, options.generate,
                                       options.concurrency);
    if (!batch.failures.empty()) {
        throw GenerationError("suite cell generation had " +
                              std::to_string(batch.failures.size()) + " failures; first: " +
                              batch.failures.front().message);
    }
    return std::move(batch.documents);
}

inline SuiteProvenance make_provenance(SuiteKind kind, std::uint64_t seed,
                                       const SuiteBuildOptions& options,
                                       std::vector<std::string> model_ids,
                                       std::size_t per_cell) {
    SuiteProvenance p;
    p.kind = suite_kind_name(kind);
    p.seed = seed;
    p.registry_hash = registry_or_builtin(options.registry).version_hash();
    p.generator_model_ids = std::move(model_ids);
    p.per_cell = per_cell;
    return p;
}

} // namespace detail

// Level generalization (Table 2 shape): cells L1/L2/L3, each with per_class
// human and per_class generated documents, directly-use-requirement prompts.
inline TestSuite build_level_suite(const Corpus& human, GenerationClient& generator,
                                   std::size_t per_class, std::uint64_t seed,
                                   const SuiteBuildOptions& options = {}) {
    if (per_class == 0) throw InvalidArgument("per_class must be >= 1");
    TestSuite suite;
    suite.kind = SuiteKind::Level;
    suite.provenance = detail::make_provenance(SuiteKind::Level, seed, options,
                                               {generator.model_id()}, per_class);
    const auto humans = detail::all_human_indices(human);
    for (ContentLevel level : {ContentLevel::L1, ContentLevel::L2, ContentLevel::L3}) {
        detail::SplitMix64 rng(detail::mix_seeds(seed, level_number(level)));
        SuiteCell cell;
        cell.key = level_name(level);
        for (const Document* doc : detail::sample_documents(
                 human, humans, per_class, rng, "human documents for " + cell.key)) {
            cell.entries.push_back(SuiteEntry{*doc, TrueLabel::Human});
        }
        const auto eligible = detail::eligible_sources(
            human, level, TemplateVariant::DirectlyUseRequirement);
        const auto sources = detail::sample_documents(
            human, eligible, per_class, rng, "content sources for " + cell.key);
        for (Document& doc :
             detail::generate_cell(human, sources, TemplateVariant::DirectlyUseRequirement,
                                   level, generator, options, rng)) {
            cell.entries.push_back(SuiteEntry{std::move(doc), TrueLabel::Machine});
        }
        suite.cells.push_back(std::move(cell));
    }
    return suite;
}

// Scenario generalization (Table 3 shape): 4 template variants x
// {same, different} student content vs the teacher's level-1 topics.
inline TestSuite build_scenario_suite(const Corpus& human, GenerationClient& generator,
                                      std::size_t per_cell, std::uint64_t seed,
                                      const SuiteBuildOptions& options = {}) {
    if (per_cell == 0) throw InvalidArgument("per_cell must be >= 1");
    TestSuite suite;
    suite.kind = SuiteKind::Scenario;
    suite.provenance = detail::make_provenance(SuiteKind::Scenario, seed, options,
                                               {generator.model_id()}, per_cell);

    const auto humans = detail::all_human_indices(human);
    // The teacher's reference prompts are level-1 directly-use-requirement;
    // "same" cells reuse the teacher's content sources, "different" cells use
    // disjoint ones.
    detail::SplitMix64 teacher_rng(detail::mix_seeds(seed, 0x7eacULL));
    const auto teacher_eligible = detail::eligible_sources(
        human, ContentLevel::L1, TemplateVariant::DirectlyUseRequirement);
    const auto teacher_sources = detail::sample_documents(
        human, teacher_eligible, per_cell, teacher_rng, "teacher content sources");
    std::unordered_set<std::string> teacher_ids;
    json teacher_ids_json = json::array();
    for (const Document* doc : teacher_sources) {
        teacher_ids.insert(doc->id);
        teacher_ids_json.push_back(doc->id);
    }
    suite.provenance.extra["teacher_source_ids"] = teacher_ids_json;
    suite.provenance.extra["teacher_variant"] =
        variant_name(TemplateVariant::DirectlyUseRequirement);
    suite.provenance.extra["teacher_level"] = level_number(ContentLevel::L1);

    std::size_t cell_index = 0;
    for (TemplateVariant variant : kAllVariants) {
        for (const bool same_content : {true, false}) {
            detail::SplitMix64 rng(detail::mix_seeds(seed, 0x100 + cell_index++));
            SuiteCell cell;
            cell.key = variant_name(variant) +
                       (same_content ? "/same_content" : "/different_content");

            std::vector<const Document*> sources;
            if (same_content) {
                sources = teacher_sources;
            } else {
                const auto eligible =
                    detail::eligible_sources(human, ContentLevel::L1, variant);
                std::vector<std::size_t> disjoint;
                for (std::size_t i : eligible) {
                    if (!teacher_ids.contains(human.documents()[i].id)) {
                        disjoint.push_back(i);
                    }
                }
                sources = detail::sample_documents(human, disjoint, per_cell, rng,
                                                   "student content sources for " + cell.key);
            }

            for (const Document* doc : detail::sample_documents(
                     human, humans, per_cell, rng, "human documents for " + cell.key)) {
                cell.entries.push_back(SuiteEntry{*doc, TrueLabel::Human});
            }
            for (Document& doc : detail::generate_cell(human, sources, variant,
                                                       ContentLevel::L1, generator,
                                                       options, rng)) {
                cell.entries.push_back(SuiteEntry{std::move(doc), TrueLabel::Machine});
            }
            suite.cells.push_back(std::move(cell));
        }
    }
    return suite;
}

// Model generalization (Table 4 shape): generator x {L1, L2} cells.
inline TestSuite build_model_suite(const Corpus& human,
                                   const std::vector<GenerationClient*>& generators,
                                   std::size_t per_class, std::uint64_t seed,
                                   const SuiteBuildOptions& options = {}) {
    if (per_class == 0) throw InvalidArgument("per_class must be >= 1");
    if (generators.empty()) throw InvalidArgument("model suite needs >= 1 generator");
    std::vector<std::string> model_ids;
    std::unordered_set<std::string> unique_ids;
    for (const GenerationClient* g : generators) {
        if (g == nullptr) throw InvalidArgument("null generator");
        if (!unique_ids.insert(g->model_id()).second) {
            throw InvalidArgument("duplicate generator model_id '" + g->model_id() + "'");
        }
        model_ids.push_back(g->model_id());
    }
    TestSuite suite;
    suite.kind = SuiteKind::Model;
    suite.provenance =
        detail::make_provenance(SuiteKind::Model, seed, options, model_ids, per_class);

    const auto humans = detail::all_human_indices(human);
    std::size_t cell_index = 0;
    for (GenerationClient* generator : generators) {
        for (ContentLevel level : {ContentLevel::L1, ContentLevel::L2}) {
            detail::SplitMix64 rng(detail::mix_seeds(seed, 0x200 + cell_index++));
            SuiteCell cell;
            cell.key = generator->model_id() + "/" + level_name(level);
            for (const Document* doc : detail::sample_documents(
                     human, humans, per_class, rng, "human documents for " + cell.key)) {
                cell.entries.push_back(SuiteEntry{*doc, TrueLabel::Human});
            }
            const auto eligible = detail::eligible_sources(
                human, level, TemplateVariant::DirectlyUseRequirement);
            const auto sources = detail::sample_documents(
                human, eligible, per_class, rng, "content sources for " + cell.key);
            for (Document& doc : detail::generate_cell(
                     human, sources, TemplateVariant::DirectlyUseRequirement, level,
                     *generator, options, rng)) {
                cell.entries.push_back(SuiteEntry{std::move(doc), TrueLabel::Machine});
            }
            suite.cells.push_back(std::move(cell));
        }
    }
    return suite;
}

// Prompt grid (Table 1 shape): 16 machine-only cells, variant x level.
inline TestSuite build_grid_suite(const Corpus& human, GenerationClient& generator,
                                  std::size_t per_cell, std::uint64_t seed,
                                  const SuiteBuildOptions& options = {}) {
    TestSuite suite;
    suite.kind = SuiteKind::Grid;
    suite.provenance = detail::make_provenance(SuiteKind::Grid, seed, options,
                                               {generator.model_id()}, per_cell);
    GridOptions grid_options;
    grid_options.params = options.params;
    grid_options.generate = options.generate;
    grid_options.summary_mode = options.summary_mode;
    grid_options.registry = options.registry;
    const std::vector<PromptSpec> grid =
        build_prompt_grid(human, per_cell, seed, generator, grid_options);

    BatchResult batch = generate_batch(generator, grid, options.params, options.generate,
                                       options.concurrency);
    if (!batch.failures.empty()) {
        throw GenerationError("grid generation had " + std::to_string(batch.failures.size()) +
                              " failures; first: " + batch.failures.front().message);
    }

    std::size_t index = 0;
    for (TemplateVariant variant : kAllVariants) {
        for (ContentLevel level : kAllLevels) {
            SuiteCell cell;
            cell.key = variant_name(variant) + "/" + level_name(level);
            for (std::size_t k = 0; k < per_cell; ++k) {
                cell.entries.push_back(
                    SuiteEntry{std::move(batch.documents[index++]), TrueLabel::Machine});
            }
            suite.cells.push_back(std::move(cell));
        }
    }
    return suite;
}

inline void TestSuite::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir / "cells");
    json cell_list = json::array();
    for (const auto& cell : cells) {
        cell_list.push_back(json{{"key", cell.key}, {"count", cell.entries.size()}});
        std::ofstream out(dir / "cells" / (detail::sanitize_key(cell.key) + ".jsonl"),
                          std::ios::trunc);
        if (!out) {
            throw IoError("cannot write suite cell '" + cell.key + "'");
        }
        for (const auto& entry : cell.entries) {
            out << json{{"doc", document_to_json(entry.doc)},
                        {"label", entry.label == TrueLabel::Machine ? "machine" : "human"}}
                       .dump()
                << '\n';
        }
    }
    detail::write_json_file(dir / "suite.json",
                            json{{"kind", suite_kind_name(kind)}, {"cells", cell_list}});
    detail::write_json_file(dir / "provenance.json", provenance.to_json());
}

inline TestSuite TestSuite::load(const std::filesystem::path& dir) {
    const json meta = detail::read_json_file(dir / "suite.json");
    TestSuite suite;
    suite.kind = suite_kind_from_name(meta.at("kind").get<std::string>());
    suite.provenance =
        SuiteProvenance::from_json(detail::read_json_file(dir / "provenance.json"));
    for (const auto& cell_meta : meta.at("cells")) {
        SuiteCell cell;
        cell.key = cell_meta.at("key").get<std::string>();
        std::ifstream in(dir / "cells" / (detail::sanitize_key(cell.key) + ".jsonl"));
        if (!in) {
            throw IoError("missing suite cell file for '" + cell.key + "'");
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            cell.entries.push_back(SuiteEntry{
                document_from_json(j.at("doc")),
                j.at("label").get<std::string>() == "machine" ? TrueLabel::Machine
                                                              : TrueLabel::Human});
        }
        suite.cells.push_back(std::move(cell));
    }
    return suite;
}

// Harness-facing detector interface: every detector family (Siamese,
// single-input baseline, external adapter) is evaluated through it.
class Detector {
public:
    virtual ~Detector() = default;
    virtual std::string name() const = 0;
    virtual bool classify_machine(const Document& doc) const = 0;
};

class SiameseDetector final : public Detector {
public:
    SiameseDetector(const TextEncoder& encoder, std::vector<Document> references,
                    double threshold,
                    DistanceAggregation aggregation = DistanceAggregation::Mean)
        : encoder_(encoder),
          references_(std::move(references)),
          threshold_(threshold),
          aggregation_(aggregation) {
        if (references_.empty()) {
            throw InvalidArgument("siamese detector requires reference documents");
        }
        if (encoder_.mode() != EncoderMode::Eval) {
            throw Error("siamese detector requires an encoder in eval mode");
        }
    }

    std::string name() const override { return "siamese"; }

    bool classify_machine(const Document& doc) const override {
        return detect(encoder_, doc, references_, threshold_, aggregation_).is_machine;
    }

    Verdict verdict(const Document& doc) const {
        return detect(encoder_, doc, references_, threshold_, aggregation_);
    }

private:
    const TextEncoder& encoder_;
    std::vector<Document> references_;
    double threshold_;
    DistanceAggregation aggregation_;
};

class BaselineDetector final : public Detector {
public:
    explicit BaselineDetector(const SingleInputClassifier& model) : model_(model) {}
    std::string name() const override { return "baseline"; }
    bool classify_machine(const Document& doc) const override {
        return model_.predict_machine_probability(doc.text) >= 0.5;
    }

private:
    const SingleInputClassifier& model_;
};

class AdapterDetector final : public Detector {
public:
    explicit AdapterDetector(DetectorAdapter& adapter, double cutoff = 0.5)
        : adapter_(adapter), cutoff_(cutoff) {}
    std::string name() const override { return "adapter:" + adapter_.name(); }
    bool classify_machine(const Document& doc) const override {
        return adapter_.score(doc.text) >= cutoff_;
    }

private:
    DetectorAdapter& adapter_;
    double cutoff_;
};

// Harness-soundness stub: answers with the true provenance label.
class OracleDetector final : public Detector {
public:
    std::string name() const override { return "oracle"; }
    bool classify_machine(const Document& doc) const override {
        return doc.source.is_generated();
    }
};

struct CellAccuracy {
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t human_total = 0;
    std::size_t human_correct = 0;
    std::size_t machine_total = 0;
    std::size_t machine_correct = 0;

    double accuracy() const {
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
    std::optional<double> human_accuracy() const {
        if (human_total == 0) return std::nullopt;
        return static_cast<double>(human_correct) / static_cast<double>(human_total);
    }
    std::optional<double> machine_accuracy() const {
        if (machine_total == 0) return std::nullopt;
        return static_cast<double>(machine_correct) / static_cast<double>(machine_total);
    }
};

struct AccuracyReport {
    std::string detector_name;
    SuiteKind kind = SuiteKind::Level;
    std::vector<std::pair<std::string, CellAccuracy>> cells; // suite cell order
    SuiteProvenance provenance;

    const CellAccuracy* find_cell(const std::string& key) const {
        for (const auto& [k, v] : cells) {
            if (k == key) return &v;
        }
        return nullptr;
    }
};

// Per-cell pooled accuracy plus per-class accuracies. Pure: mutates neither
// the suite nor the detector.
inline AccuracyReport evaluate_detector(const Detector& detector, const TestSuite& suite) {
    AccuracyReport report;
    report.detector_name = detector.name();
    report.kind = suite.kind;
    report.provenance = suite.provenance;
    for (const auto& cell : suite.cells) {
        CellAccuracy acc;
        for (const auto& entry : cell.entries) {
            const bool truth = entry.label == TrueLabel::Machine;
            const bool predicted = detector.classify_machine(entry.doc);
            ++acc.total;
            if (truth) {
                ++acc.machine_total;
            } else {
                ++acc.human_total;
            }
            if (predicted == truth) {
                ++acc.correct;
                if (truth) {
                    ++acc.machine_correct;
                } else {
                    ++acc.human_correct;
                }
            }
        }
        report.cells.emplace_back(cell.key, acc);
    }
    return report;
}

enum class ReportFormat { Markdown, Csv };

inline ReportFormat report_format_from_name(std::string_view name) {
    if (name == "markdown" || name == "md") return ReportFormat::Markdown;
    if (name == "csv") return ReportFormat::Csv;
    throw InvalidArgument("unknown report format '" + std::string(name) + "'");
}

namespace detail {

inline std::string percent(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f%%", value * 100.0);
    return buf;
}

inline std::string fixed6(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", value);
    return buf;
}

inline std::string cell_percent(const AccuracyReport& report, const std::string& key) {
    const CellAccuracy* cell = report.find_cell(key);
    return cell != nullptr ? percent(cell->accuracy()) : "-";
}

inline const std::array<std::string, 4>& variant_headers() {
    static const std::array<std::string, 4> headers = {
        "Directly use requirement", "Another expression", "Double GPT", "Many -> one"};
    return headers;
}

inline const std::array<std::string, 4>& level_row_labels() {
    static const std::array<std::string, 4> labels = {
        "Level 0 (field name)", "Level 1 (title)", "Level 2 (summary of abstract)",
        "Level 3 (entire abstract)"};
    return labels;
}

} // namespace detail

inline std::string render_report_markdown(const AccuracyReport& report) {
    std::string out;
    out += "# " + suite_kind_name(report.kind) + " report\n\n";
    out += "- detector: " + report.detector_name + "\n";
    out += "- provenance hash: " + report.provenance.hash() + "\n";
    out += "- registry hash: " + report.provenance.registry_hash + "\n";
    out += "- seed: " + std::to_string(report.provenance.seed) + "\n\n";

    switch (report.kind) {
        case SuiteKind::Grid: {
            out += "| X level |";
            for (const auto& h : detail::variant_headers()) out += " " + h + " |";
            out += "\n|---|---|---|---|---|\n";
            for (ContentLevel level : kAllLevels) {
                out += "| " + detail::level_row_labels()[level_number(level)] + " |";
                for (TemplateVariant variant : kAllVariants) {
                    out += " " +
                           detail::cell_percent(report, variant_name(variant) + "/" +
                                                            level_name(level)) +
                           " |";
                }
                out += "\n";
            }
            break;
        }
        case SuiteKind::Level: {
            out += "| Level of the prompt | Accuracy | Human accuracy | Machine accuracy |\n";
            out += "|---|---|---|---|\n";
            for (const auto& [key, cell] : report.cells) {
                out += "| Level " + key.substr(1) + " | " + detail::percent(cell.accuracy()) +
                       " | " +
                       (cell.human_accuracy() ? detail::percent(*cell.human_accuracy()) : "-") +
                       " | " +
                       (cell.machine_accuracy() ? detail::percent(*cell.machine_accuracy())
                                                : "-") +
                       " |\n";
            }
            break;
        }
        case SuiteKind::Scenario: {
            out += "| Content of teacher's and student's prompt |";
            for (const auto& h : detail::variant_headers()) out += " " + h + " |";
            out += "\n|---|---|---|---|---|\n";
            for (const bool same : {true, false}) {
                out += same ? "| Same |" : "| Different |";
                for (TemplateVariant variant : kAllVariants) {
                    out += " " +
                           detail::cell_percent(
                               report, variant_name(variant) +
                                           (same ? "/same_content" : "/different_content")) +
                           " |";
                }
                out += "\n";
            }
            break;
        }
        case SuiteKind::Model: {
            out += "| Prompt level |";
            for (const auto& id : report.provenance.generator_model_ids) {
                out += " " + id + " |";
            }
            out += "\n|---|";
            for (std::size_t i = 0; i < report.provenance.generator_model_ids.size(); ++i) {
                out += "---|";
            }
            out += "\n";
            for (ContentLevel level : {ContentLevel::L1, ContentLevel::L2}) {
                out += "| Level " + std::to_string(level_number(level)) + " |";
                for (const auto& id : report.provenance.generator_model_ids) {
                    out += " " + detail::cell_percent(report, id + "/" + level_name(level)) +
                           " |";
                }
                out += "\n";
            }
            break;
        }
    }
    return out;
}

inline std::string render_report_csv(const AccuracyReport& report) {
    std::string out = "cell_key,total,correct,accuracy,human_total,human_correct,"
                      "machine_total,machine_correct\n";
    for (const auto& [key, cell] : report.cells) {
        out += key + "," + std::to_string(cell.total) + "," + std::to_string(cell.correct) +
               "," + detail::fixed6(cell.accuracy()) + "," + std::to_string(cell.human_total) +
               "," + std::to_string(cell.human_correct) + "," +
               std::to_string(cell.machine_total) + "," +
               std::to_string(cell.machine_correct) + "\n";
    }
    return out;
}

// Parses the CSV emitted above back into (key, counts) rows.
inline std::vector<std::pair<std::string, CellAccuracy>> parse_report_csv(
    const std::string& csv) {
    std::vector<std::pair<std::string, CellAccuracy>> out;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            fields.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                         : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (fields.size() != 8) {
            throw InvalidArgument("malformed report CSV row: " + line);
        }
        CellAccuracy cell;
        cell.total = std::stoul(fields[1]);
        cell.correct = std::stoul(fields[2]);
        cell.human_total = std::stoul(fields[4]);
        cell.human_correct = std::stoul(fields[5]);
        cell.machine_total = std::stoul(fields[6]);
        cell.machine_correct = std::stoul(fields[7]);
        out.emplace_back(fields[0], cell);
    }
    return out;
}

// Deterministic byte output for a given report.
inline void write_report(const AccuracyReport& report, ReportFormat format,
                         const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) {
        throw IoError("cannot write report '" + path.string() + "'");
    }
    out << (format == ReportFormat::Markdown ? render_report_markdown(report)
                                             : render_report_csv(report));
}

} // namespace synthsiam
